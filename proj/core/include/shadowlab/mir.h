// mir.h
//
// The miniature IR: programs made of functions, functions made of basic
// blocks, blocks made of instructions over 16 registers and an implicit
// stack pointer. Shadow-stack pseudo instructions share the same encoding so
// instrumented programs round-trip through the same printer and parser.
#ifndef SHADOWLAB_MIR_H_
#define SHADOWLAB_MIR_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace shadowlab::mir {

inline constexpr int kNumRegisters = 16;
inline constexpr std::int64_t kWordSize = 8;
// r0 carries return values and the observable result of a run.
inline constexpr int kReturnRegister = 0;

using BlockId = int;
using Reg = int;

enum class Opcode : std::uint8_t {
  kSpAdd,        // spadd k
  kSpMov,        // spmov r
  kMovI,         // movi r, imm
  kMovR,         // movr rd, rs
  kLeaSp,        // lea.sp r, off
  kBinOp,        // binop rd, rs   (rd <- rd + rs)
  kStoreSp,      // store.sp off[, rs]
  kStoreReg,     // store.reg r[, rs]
  kStoreGlobal,  // store.global g[, rs]
  kLoadSp,       // load.sp rd, off
  kLoadReg,      // load.reg rd, rs
  kCall,         // call f
  kICall,        // icall r
  kRet,
  kBr,           // br L
  kBrc,          // brc L1, L2
  kCorrupt,      // corrupt d, imm
  kHalt,
  kUnwind,       // unwind k   (longjmp-style: abandon k frames)
  // Shadow-stack pseudo instructions, legal only in instrumented programs.
  kSPush,        // spush[.d] h[, L]
  kSPop,         // spop [h]
  kRfPush,       // rfpush r
  kRfPop,        // rfpop r
};

std::string_view mnemonic(Opcode op);
bool is_terminator(Opcode op);
bool is_store(Opcode op);  // memory writes, including corrupt
bool is_shadow_op(Opcode op);
bool is_call(Opcode op);

struct Instr {
  Opcode op = Opcode::kHalt;
  Reg rd = -1;  // primary register operand
  Reg rs = -1;  // secondary register operand; value source for stores
  std::int64_t imm = 0;
  std::int64_t frame_depth = 0;  // corrupt only
  std::string sym;  // call target or global name
  BlockId target = -1;
  BlockId alt = -1;
  // spush.d: scratch registers come from dead registers (no save/restore).
  bool dead_scratch = false;
  // Source line, 0 when synthesized. Not part of structural equality.
  int line = 0;

  bool operator==(const Instr& other) const;

  // spush with a branch target is the transition-edge form.
  bool is_edge_push() const { return op == Opcode::kSPush && target >= 0; }

  static Instr SpAdd(std::int64_t k);
  static Instr SpMov(Reg r);
  static Instr MovI(Reg r, std::int64_t imm);
  static Instr MovR(Reg rd, Reg rs);
  static Instr LeaSp(Reg r, std::int64_t off);
  static Instr BinOp(Reg rd, Reg rs);
  static Instr StoreSp(std::int64_t off, Reg value = -1);
  static Instr StoreReg(Reg addr, Reg value = -1);
  static Instr StoreGlobal(std::string global, Reg value = -1);
  static Instr LoadSp(Reg rd, std::int64_t off);
  static Instr LoadReg(Reg rd, Reg rs);
  static Instr Call(std::string callee);
  static Instr ICall(Reg r);
  static Instr Ret();
  static Instr Br(BlockId target);
  static Instr Brc(BlockId if_true, BlockId if_false);
  static Instr Corrupt(std::int64_t depth, std::int64_t value);
  static Instr Halt();
  static Instr Unwind(std::int64_t frames);
  static Instr SPush(std::int64_t height, bool dead_scratch = false);
  static Instr SPushEdge(std::int64_t height, BlockId target,
                         bool dead_scratch = false);
  static Instr SPop(std::int64_t height = 0);
  static Instr RfPush(Reg r);
  static Instr RfPop(Reg r);
};

// Terminators plus the transition-edge push, which also ends its block.
bool is_control_transfer(const Instr& instr);

// Registers read and written by an instruction, as bit masks over r0..r15.
// Calls read every register (arguments are unknown) and clobber all but r0.
struct RegEffects {
  std::uint16_t uses = 0;
  std::uint16_t defs = 0;
};
RegEffects reg_effects(const Instr& instr);

struct Block {
  BlockId id = 0;
  std::vector<Instr> instrs;
  int line = 0;  // not part of structural equality

  bool operator==(const Block& other) const {
    return id == other.id && instrs == other.instrs;
  }

  const Instr* terminator() const;
  // Intra-procedural successors derived from the terminator, ascending and
  // de-duplicated. Blocks ending in ret, halt or unwind have none.
  std::vector<BlockId> successors() const;
  bool is_exit() const;  // ends in ret or halt
};

struct CallTarget {
  bool indirect = false;
  std::string callee;  // empty when indirect
  auto operator<=>(const CallTarget&) const = default;
};
std::set<CallTarget> call_targets(const Block& block);

struct Function {
  std::string name;
  std::map<BlockId, Block> blocks;
  BlockId entry_block = 0;
  int line = 0;

  bool operator==(const Function& other) const {
    return name == other.name && entry_block == other.entry_block &&
           blocks == other.blocks;
  }

  const Block& entry() const { return blocks.at(entry_block); }
  std::set<BlockId> exit_blocks() const;
  // Entry first, then the remaining blocks in ascending id order.
  std::vector<BlockId> block_order() const;
  bool has_calls() const;
  std::size_t instruction_count() const;
};

struct Program {
  std::vector<Function> functions;  // source order; icall indexes into it
  std::set<std::string> globals;
  std::string entry;
  bool adversarial = false;

  bool operator==(const Program& other) const = default;

  const Function* find(std::string_view name) const;
  Function* find(std::string_view name);
  std::optional<std::size_t> index_of(std::string_view name) const;
  const Function& entry_function() const { return *find(entry); }
};

struct CallGraph {
  std::vector<std::string> nodes;
  std::set<std::pair<std::string, std::string>> direct_edges;
  std::set<std::string> has_indirect_call;

  std::vector<std::string> callees(const std::string& fn) const;
};

CallGraph build_call_graph(const Program& program);

// Stable fingerprint of a program's structure (FNV-1a over its printed form).
std::uint64_t fingerprint(const Program& program);

}  // namespace shadowlab::mir

#endif  // SHADOWLAB_MIR_H_
