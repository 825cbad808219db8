#include "shadowlab/mir.h"

#include <algorithm>

#include "shadowlab/parser.h"

namespace shadowlab::mir {

namespace {

constexpr std::uint16_t kAllRegs = 0xFFFF;
constexpr std::uint16_t bit(Reg r) {
  return r < 0 ? 0 : static_cast<std::uint16_t>(1u << r);
}

}  // namespace

std::string_view mnemonic(Opcode op) {
  switch (op) {
    case Opcode::kSpAdd: return "spadd";
    case Opcode::kSpMov: return "spmov";
    case Opcode::kMovI: return "movi";
    case Opcode::kMovR: return "movr";
    case Opcode::kLeaSp: return "lea.sp";
    case Opcode::kBinOp: return "binop";
    case Opcode::kStoreSp: return "store.sp";
    case Opcode::kStoreReg: return "store.reg";
    case Opcode::kStoreGlobal: return "store.global";
    case Opcode::kLoadSp: return "load.sp";
    case Opcode::kLoadReg: return "load.reg";
    case Opcode::kCall: return "call";
    case Opcode::kICall: return "icall";
    case Opcode::kRet: return "ret";
    case Opcode::kBr: return "br";
    case Opcode::kBrc: return "brc";
    case Opcode::kCorrupt: return "corrupt";
    case Opcode::kHalt: return "halt";
    case Opcode::kUnwind: return "unwind";
    case Opcode::kSPush: return "spush";
    case Opcode::kSPop: return "spop";
    case Opcode::kRfPush: return "rfpush";
    case Opcode::kRfPop: return "rfpop";
  }
  return "?";
}

bool is_terminator(Opcode op) {
  switch (op) {
    case Opcode::kRet:
    case Opcode::kBr:
    case Opcode::kBrc:
    case Opcode::kHalt:
    case Opcode::kUnwind:
      return true;
    default:
      return false;
  }
}

bool is_store(Opcode op) {
  return op == Opcode::kStoreSp || op == Opcode::kStoreReg ||
         op == Opcode::kStoreGlobal || op == Opcode::kCorrupt;
}

bool is_shadow_op(Opcode op) {
  return op == Opcode::kSPush || op == Opcode::kSPop ||
         op == Opcode::kRfPush || op == Opcode::kRfPop;
}

bool is_call(Opcode op) { return op == Opcode::kCall || op == Opcode::kICall; }

bool Instr::operator==(const Instr& o) const {
  return op == o.op && rd == o.rd && rs == o.rs && imm == o.imm &&
         frame_depth == o.frame_depth && sym == o.sym && target == o.target && alt == o.alt &&
         dead_scratch == o.dead_scratch;
}

Instr Instr::SpAdd(std::int64_t k) {
  Instr i;
  i.op = Opcode::kSpAdd;
  i.imm = k;
  return i;
}
Instr Instr::SpMov(Reg r) {
  Instr i;
  i.op = Opcode::kSpMov;
  i.rd = r;
  return i;
}
Instr Instr::MovI(Reg r, std::int64_t imm) {
  Instr i;
  i.op = Opcode::kMovI;
  i.rd = r;
  i.imm = imm;
  return i;
}
Instr Instr::MovR(Reg rd, Reg rs) {
  Instr i;
  i.op = Opcode::kMovR;
  i.rd = rd;
  i.rs = rs;
  return i;
}
Instr Instr::LeaSp(Reg r, std::int64_t off) {
  Instr i;
  i.op = Opcode::kLeaSp;
  i.rd = r;
  i.imm = off;
  return i;
}
Instr Instr::BinOp(Reg rd, Reg rs) {
  Instr i;
  i.op = Opcode::kBinOp;
  i.rd = rd;
  i.rs = rs;
  return i;
}
Instr Instr::StoreSp(std::int64_t off, Reg value) {
  Instr i;
  i.op = Opcode::kStoreSp;
  i.imm = off;
  i.rs = value;
  return i;
}
Instr Instr::StoreReg(Reg addr, Reg value) {
  Instr i;
  i.op = Opcode::kStoreReg;
  i.rd = addr;
  i.rs = value;
  return i;
}
Instr Instr::StoreGlobal(std::string global, Reg value) {
  Instr i;
  i.op = Opcode::kStoreGlobal;
  i.sym = std::move(global);
  i.rs = value;
  return i;
}
Instr Instr::LoadSp(Reg rd, std::int64_t off) {
  Instr i;
  i.op = Opcode::kLoadSp;
  i.rd = rd;
  i.imm = off;
  return i;
}
Instr Instr::LoadReg(Reg rd, Reg rs) {
  Instr i;
  i.op = Opcode::kLoadReg;
  i.rd = rd;
  i.rs = rs;
  return i;
}
Instr Instr::Call(std::string callee) {
  Instr i;
  i.op = Opcode::kCall;
  i.sym = std::move(callee);
  return i;
}
Instr Instr::ICall(Reg r) {
  Instr i;
  i.op = Opcode::kICall;
  i.rd = r;
  return i;
}
Instr Instr::Ret() {
  Instr i;
  i.op = Opcode::kRet;
  return i;
}
Instr Instr::Br(BlockId target) {
  Instr i;
  i.op = Opcode::kBr;
  i.target = target;
  return i;
}
Instr Instr::Brc(BlockId if_true, BlockId if_false) {
  Instr i;
  i.op = Opcode::kBrc;
  i.target = if_true;
  i.alt = if_false;
  return i;
}
Instr Instr::Corrupt(std::int64_t depth, std::int64_t value) {
  Instr i;
  i.op = Opcode::kCorrupt;
  i.frame_depth = depth;
  i.imm = value;
  return i;
}
Instr Instr::Halt() {
  Instr i;
  i.op = Opcode::kHalt;
  return i;
}
Instr Instr::Unwind(std::int64_t frames) {
  Instr i;
  i.op = Opcode::kUnwind;
  i.imm = frames;
  return i;
}
Instr Instr::SPush(std::int64_t height, bool dead_scratch) {
  Instr i;
  i.op = Opcode::kSPush;
  i.imm = height;
  i.dead_scratch = dead_scratch;
  return i;
}
Instr Instr::SPushEdge(std::int64_t height, BlockId target, bool dead_scratch) {
  Instr i = SPush(height, dead_scratch);
  i.target = target;
  return i;
}
Instr Instr::SPop(std::int64_t height) {
  Instr i;
  i.op = Opcode::kSPop;
  i.imm = height;
  return i;
}
Instr Instr::RfPush(Reg r) {
  Instr i;
  i.op = Opcode::kRfPush;
  i.rd = r;
  return i;
}
Instr Instr::RfPop(Reg r) {
  Instr i;
  i.op = Opcode::kRfPop;
  i.rd = r;
  return i;
}

RegEffects reg_effects(const Instr& instr) {
  RegEffects e;
  switch (instr.op) {
    case Opcode::kSpMov:
      e.uses = bit(instr.rd);
      break;
    case Opcode::kMovI:
    case Opcode::kLeaSp:
    case Opcode::kLoadSp:
      e.defs = bit(instr.rd);
      break;
    case Opcode::kMovR:
    case Opcode::kLoadReg:
      e.uses = bit(instr.rs);
      e.defs = bit(instr.rd);
      break;
    case Opcode::kBinOp:
      e.uses = bit(instr.rd) | bit(instr.rs);
      e.defs = bit(instr.rd);
      break;
    case Opcode::kStoreSp:
    case Opcode::kStoreGlobal:
      e.uses = bit(instr.rs);
      break;
    case Opcode::kStoreReg:
      e.uses = bit(instr.rd) | bit(instr.rs);
      break;
    case Opcode::kCall:
    case Opcode::kICall:
      e.uses = kAllRegs;
      e.defs = static_cast<std::uint16_t>(kAllRegs & ~bit(kReturnRegister));
      break;
    case Opcode::kRet:
    case Opcode::kHalt:
      e.uses = bit(kReturnRegister);
      break;
    case Opcode::kUnwind:
      e.uses = kAllRegs;
      break;
    case Opcode::kRfPush:
      e.uses = bit(instr.rd);
      e.defs = bit(instr.rd);
      break;
    case Opcode::kRfPop:
      e.uses = bit(instr.rd);
      e.defs = bit(instr.rd);
      break;
    default:
      break;
  }
  return e;
}

bool is_control_transfer(const Instr& instr) {
  return is_terminator(instr.op) || instr.is_edge_push();
}

const Instr* Block::terminator() const {
  if (instrs.empty() || !is_control_transfer(instrs.back())) return nullptr;
  return &instrs.back();
}

std::vector<BlockId> Block::successors() const {
  std::vector<BlockId> out;
  const Instr* term = terminator();
  if (term == nullptr) return out;
  switch (term->op) {
    case Opcode::kBr:
      out.push_back(term->target);
      break;
    case Opcode::kBrc:
      out.push_back(term->target);
      out.push_back(term->alt);
      break;
    case Opcode::kSPush:
      out.push_back(term->target);
      break;
    default:
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool Block::is_exit() const {
  const Instr* term = terminator();
  return term != nullptr &&
         (term->op == Opcode::kRet || term->op == Opcode::kHalt);
}

std::set<CallTarget> call_targets(const Block& block) {
  std::set<CallTarget> out;
  for (const Instr& instr : block.instrs) {
    if (instr.op == Opcode::kCall) out.insert({false, instr.sym});
    if (instr.op == Opcode::kICall) out.insert({true, ""});
  }
  return out;
}

std::set<BlockId> Function::exit_blocks() const {
  std::set<BlockId> out;
  for (const auto& [id, block] : blocks) {
    if (block.is_exit()) out.insert(id);
  }
  return out;
}

std::vector<BlockId> Function::block_order() const {
  std::vector<BlockId> order;
  order.reserve(blocks.size());
  if (blocks.count(entry_block) != 0) order.push_back(entry_block);
  for (const auto& [id, block] : blocks) {
    if (id != entry_block) order.push_back(id);
  }
  return order;
}

bool Function::has_calls() const {
  for (const auto& [id, block] : blocks) {
    for (const Instr& instr : block.instrs) {
      if (is_call(instr.op)) return true;
    }
  }
  return false;
}

std::size_t Function::instruction_count() const {
  std::size_t n = 0;
  for (const auto& [id, block] : blocks) n += block.instrs.size();
  return n;
}

const Function* Program::find(std::string_view name) const {
  for (const Function& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

Function* Program::find(std::string_view name) {
  for (Function& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::optional<std::size_t> Program::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> CallGraph::callees(const std::string& fn) const {
  std::vector<std::string> out;
  for (auto it = direct_edges.lower_bound({fn, ""});
       it != direct_edges.end() && it->first == fn; ++it) {
    out.push_back(it->second);
  }
  return out;
}

CallGraph build_call_graph(const Program& program) {
  CallGraph g;
  for (const Function& f : program.functions) {
    g.nodes.push_back(f.name);
    for (const auto& [id, block] : f.blocks) {
      for (const Instr& instr : block.instrs) {
        if (instr.op == Opcode::kCall) g.direct_edges.insert({f.name, instr.sym});
        if (instr.op == Opcode::kICall) g.has_indirect_call.insert(f.name);
      }
    }
  }
  return g;
}

std::uint64_t fingerprint(const Program& program) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : print_program(program)) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace shadowlab::mir
