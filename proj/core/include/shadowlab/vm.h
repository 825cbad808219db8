// vm.h
//
// Deterministic small-step interpreter for (instrumented) MIR programs.
//
// The concrete stack grows down from kStackTop; `call` stores an opaque
// return cookie at the new stack top and `ret` transfers through whatever
// word it finds there. A non-cookie value sends control to the attacker sink
// and ends the run with UndetectedCorruption. The shadow region keeps a
// zeroed guard word below the first entry; `spop` walks down until it finds
// the return address or reaches the guard, which aborts.
//
// When analyses of the executed program are supplied, the interpreter also
// checks them against the run: every store with a concrete analyzed height
// must land at that height in its frame, no register may be read after the
// liveness analysis declared it dead without an intervening write, and every
// activation must leave the shadow stack as deep as it found it.
#ifndef SHADOWLAB_VM_H_
#define SHADOWLAB_VM_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shadowlab/analysis.h"
#include "shadowlab/lattice.h"
#include "shadowlab/mir.h"
#include "shadowlab/transform.h"

namespace shadowlab::vm {

using mir::BlockId;

inline constexpr std::uint64_t kStackTop = 0x7ff0'0000'0000ULL;
inline constexpr std::uint64_t kStackWords = 1 << 16;
inline constexpr std::uint64_t kHeapBase = 0x1000'0000ULL;
inline constexpr std::size_t kShadowCapacity = 4096;
inline constexpr std::uint64_t kCookieTag = 0xC0DE'0000'0000'0000ULL;
inline constexpr std::uint64_t kEntryCookie = kCookieTag | 0xFFFF'FFFFULL;
// Attack payloads carry this prefix; never a cookie and never zero.
inline constexpr std::uint64_t kAttackerTag = 0x0BAD'0000'0000'0000ULL;

struct ExecInput {
  std::vector<bool> decisions;  // consumed by `brc`; false once exhausted
  std::array<std::uint64_t, mir::kNumRegisters> registers{};
};

struct ExecOptions {
  std::uint64_t budget = 1'000'000;  // executed instructions, shadow ops included
  // Analyses of the executed program; enables the soundness checks.
  const analysis::ProgramAnalysis* analysis = nullptr;
  bool record_events = true;
};

enum class EventKind : std::uint8_t {
  kBlockEnter,
  kCall,
  kRet,
  kStore,
  kShadowPush,
  kShadowPop,
  kRegFramePush,
  kRegFramePop,
  kCorrupt,
  kUnwind,
  kAbort,
  kHalt,
};
const char* to_string(EventKind kind);

struct Event {
  EventKind kind = EventKind::kBlockEnter;
  std::uint32_t activation = 0;
  std::int32_t function = -1;  // index into Program::functions
  BlockId block = -1;
  std::uint32_t index = 0;
  std::uint64_t value = 0;  // stored word, return address, attack payload
  std::uint64_t addr = 0;   // store address
  // Store: runtime height in the frame. Shadow ops: height operand.
  std::int64_t height = 0;
  // Pop: entries discarded before the match. Unwind: frames abandoned.
  // Corrupt: frame depth. Call: the callee's activation id.
  std::int64_t count = 0;
  HeightValue analyzed;  // store: analyzed destination height
  std::int8_t write_class = -1;  // analysis::WriteClass, -1 if unknown
};

struct Counters {
  std::uint64_t steps = 0;
  std::uint64_t instructions = 0;  // program instructions, shadow ops excluded
  std::uint64_t memory_accesses = 0;
  std::uint64_t shadow_ops = 0;
  std::uint64_t shadow_instructions = 0;  // per the cost model
  std::uint64_t shadow_memory = 0;

  std::uint64_t total_instructions() const {
    return instructions + shadow_instructions;
  }
};

enum class ViolationKind : std::uint8_t { kHeight, kLiveness, kShadowBalance };
const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string detail;
};

struct Trace {
  std::vector<Event> events;
  Counters counters;
  std::vector<Violation> violations;
  bool unwound = false;
};

enum class OutcomeKind : std::uint8_t {
  kCompleted,
  kAborted,
  kUndetectedCorruption,
  kBudgetExhausted,
  kFault,
};
const char* to_string(OutcomeKind kind);

struct Location {
  std::int32_t function = -1;
  BlockId block = -1;
  std::uint32_t index = 0;
  bool operator==(const Location&) const = default;
};

struct Outcome {
  OutcomeKind kind = OutcomeKind::kFault;
  std::uint64_t r0 = 0;
  std::vector<std::pair<std::string, std::uint64_t>> global_stores;
  Location site;  // abort check, corrupted ret, or faulting instruction
  std::uint64_t expected = 0;  // UndetectedCorruption: the call's cookie
  std::uint64_t found = 0;     // UndetectedCorruption: value ret consumed
  std::string detail;

  bool completed() const { return kind == OutcomeKind::kCompleted; }
  // Completed with the same return value and global-store sequence.
  bool same_observable(const Outcome& o) const {
    return completed() && o.completed() && r0 == o.r0 &&
           global_stores == o.global_stores;
  }
};

struct ExecResult {
  Trace trace;
  Outcome outcome;
};

ExecResult execute(const mir::Program& program, const ExecInput& input,
                   const ExecOptions& options = {});

// Analyses the instrumented program and runs it with all checks enabled.
ExecResult execute_checked(const transform::InstrumentedProgram& ip,
                           const ExecInput& input, std::uint64_t budget);

// One event per line, followed by the outcome.
std::string trace_to_text(const mir::Program& program, const ExecResult& r);
std::string trace_to_json(const mir::Program& program, const ExecResult& r);

// Comma or whitespace separated 0/1 (or t/f) decisions.
std::vector<bool> parse_decisions(const std::string& text);

}  // namespace shadowlab::vm

#endif  // SHADOWLAB_VM_H_
