// analysis.h
//
// Intra-procedural analyses over a single function:
//   * stack heights of the stack pointer, every register and every store
//     destination, relative to the return-address slot (heights [0, 8) hold
//     the return address, locals live at negative heights);
//   * classification of every memory write as safe-stack, global or unsafe;
//   * register liveness, reported as the set of dead registers before each
//     instruction.
#ifndef SHADOWLAB_ANALYSIS_H_
#define SHADOWLAB_ANALYSIS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "shadowlab/lattice.h"
#include "shadowlab/mir.h"

namespace shadowlab::analysis {

using mir::BlockId;

struct InstrHeights {
  HeightValue sp;  // before the instruction executes
  std::array<HeightValue, mir::kNumRegisters> regs{};
  // Height of the written stack word; Bottom for instructions that do not
  // write memory and for global stores.
  HeightValue dest;
};

class HeightMap {
 public:
  const InstrHeights& at(BlockId block, std::size_t index) const {
    return instrs_.at(block).at(index);
  }
  const std::vector<InstrHeights>& block(BlockId block) const {
    return instrs_.at(block);
  }
  bool reached(BlockId block) const { return reached_.at(block); }
  // Stack-pointer height at the first instruction of a block.
  HeightValue entry_sp(BlockId block) const { return at(block, 0).sp; }
  const std::map<BlockId, std::vector<InstrHeights>>& blocks() const {
    return instrs_;
  }

 private:
  friend HeightMap stack_heights(const mir::Function& fn);
  std::map<BlockId, std::vector<InstrHeights>> instrs_;
  std::map<BlockId, bool> reached_;
};

// Forward fixpoint. At entry the stack pointer is at height 0 and no register
// holds a stack address. States from distinct paths merge variable-wise:
// equal values survive, anything else becomes Top.
HeightMap stack_heights(const mir::Function& fn);

// A one-word write at `height` cannot touch any return address.
constexpr bool is_safe_height(HeightValue height) {
  return height.is_concrete() && height.offset() <= -mir::kWordSize;
}

enum class WriteClass : std::uint8_t { kSafeStack, kGlobal, kUnsafe };
const char* to_string(WriteClass c);

struct WriteSummary {
  std::size_t stack = 0;
  std::size_t global = 0;
  std::size_t unsafe = 0;

  std::size_t total() const { return stack + global + unsafe; }
  double stack_pct() const;
  double global_pct() const;
  double unsafe_pct() const;
  WriteSummary& operator+=(const WriteSummary& o);
};

struct InstrPos {
  BlockId block = 0;
  std::size_t index = 0;
  auto operator<=>(const InstrPos&) const = default;
};

struct WriteClassification {
  std::map<InstrPos, WriteClass> classes;
  WriteSummary summary;

  WriteClass at(BlockId block, std::size_t index) const {
    return classes.at({block, index});
  }
};

WriteClassification classify_writes(const mir::Function& fn,
                                    const HeightMap& heights);

class LivenessMap {
 public:
  // Registers live immediately before the instruction, as a bit mask.
  std::uint16_t live_before(BlockId block, std::size_t index) const {
    return live_.at(block).at(index);
  }
  std::uint16_t dead_before(BlockId block, std::size_t index) const {
    return static_cast<std::uint16_t>(~live_before(block, index));
  }
  int dead_count(BlockId block, std::size_t index) const;
  std::vector<mir::Reg> dead_registers_at(BlockId block,
                                          std::size_t index) const;

 private:
  friend LivenessMap dead_registers(const mir::Function& fn);
  std::map<BlockId, std::vector<std::uint16_t>> live_;
};

// Backward may-liveness. Returns keep r0 live; calls read every register and
// clobber all but r0.
LivenessMap dead_registers(const mir::Function& fn);

// All three analyses for one function.
struct FunctionAnalysis {
  HeightMap heights;
  WriteClassification writes;
  LivenessMap liveness;
};

FunctionAnalysis analyze_function(const mir::Function& fn);

// Per-function analyses keyed by function name.
using ProgramAnalysis = std::map<std::string, FunctionAnalysis, std::less<>>;
ProgramAnalysis analyze_program(const mir::Program& program);

}  // namespace shadowlab::analysis

#endif  // SHADOWLAB_ANALYSIS_H_
