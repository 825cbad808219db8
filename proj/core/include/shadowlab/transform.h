// transform.h
//
// Shadow-stack instrumentation planning and materialization.
//
// Policy: safe function elision drops every RA-safe function; safe path
// elision clones the CFG of an unsafe function and moves the push onto the
// edges that first enter an unsafe block, so walks through safe blocks only
// run uninstrumented.
//
// Mechanism: a free register of a leaf holds its return address (register
// frame), straight-line leaf callees are inlined at direct call sites, and
// the entry push slides forward to a point with two dead scratch registers.
//
// A plan is computed against one program and applied to the same program;
// apply_plan rejects a plan whose program fingerprint or mode differs.
#ifndef SHADOWLAB_TRANSFORM_H_
#define SHADOWLAB_TRANSFORM_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shadowlab/analysis.h"
#include "shadowlab/mir.h"
#include "shadowlab/safety.h"

namespace shadowlab::transform {

using mir::BlockId;
using mir::Reg;

enum class Mode : std::uint8_t { kFull, kSfe, kPo, kMo, kLight, kElideAll };

inline constexpr std::array<Mode, 6> kAllModes = {
    Mode::kFull, Mode::kSfe, Mode::kPo, Mode::kMo, Mode::kLight,
    Mode::kElideAll};

std::string_view to_string(Mode mode);
// Accepts FULL, SFE, PO, MO, LIGHT and ELIDE-ALL (case-insensitive).
std::optional<Mode> parse_mode(std::string_view text);

constexpr bool elides_safe_functions(Mode m) {
  return m == Mode::kSfe || m == Mode::kPo || m == Mode::kLight;
}
constexpr bool lowers(Mode m) { return m == Mode::kPo || m == Mode::kLight; }
constexpr bool optimizes_mechanism(Mode m) {
  return m == Mode::kMo || m == Mode::kLight;
}

// Clone of block b is b + kCloneOffset; the k-th transition block is
// kTransitionBase + k. Source programs must keep block ids below
// kCloneOffset.
inline constexpr BlockId kCloneOffset = 1000;
inline constexpr BlockId kTransitionBase = 2000;
inline constexpr std::size_t kSafePathCap = std::size_t{1} << 16;

BlockId original_block(BlockId id);  // -1 for transition blocks
bool is_clone_block(BlockId id);
bool is_transition_block(BlockId id);

struct Cost {
  std::int64_t instructions = 0;
  std::int64_t memory = 0;

  Cost& operator+=(const Cost& o) {
    instructions += o.instructions;
    memory += o.memory;
    return *this;
  }
  friend Cost operator+(Cost a, const Cost& b) { return a += b; }
  friend Cost operator*(std::int64_t k, const Cost& c) {
    return {k * c.instructions, k * c.memory};
  }
  bool operator==(const Cost&) const = default;
};

inline constexpr Cost kPushCost{9, 6};
inline constexpr Cost kChasedPushCost{5, 4};
inline constexpr Cost kEdgePenalty{1, 0};
inline constexpr Cost kPopCost{11, 6};
inline constexpr Cost kPopUnwindStep{8, 4};  // per discarded shadow entry
inline constexpr Cost kRegFramePushCost{2, 2};
inline constexpr Cost kRegFramePopCost{3, 1};
// Register-frame mismatch: scratch saves plus the shadow-stack walk.
inline constexpr Cost kRegFrameSlowCost{10, 6};

Cost push_cost(bool dead_scratch, bool on_edge);

enum class ShadowOpKind : std::uint8_t {
  kPush,
  kPop,
  kRegFramePush,
  kRegFramePop
};
const char* to_string(ShadowOpKind kind);

enum class SiteKind : std::uint8_t { kEntry, kEdge, kExit, kInstr };

struct Site {
  SiteKind kind = SiteKind::kEntry;
  BlockId block = -1;
  BlockId to = -1;         // kEdge only
  std::size_t index = 0;   // kEntry / kInstr: insertion point in `block`
  bool operator==(const Site&) const = default;
};
std::string to_string(const Site& site);

struct ShadowOp {
  ShadowOpKind kind = ShadowOpKind::kPush;
  Site site;
  // Stack height at the site; the return address is at sp - entry_height.
  std::int64_t entry_height = 0;
  Reg reg = -1;  // register-frame ops
  bool dead_scratch = false;
  Cost cost;
  bool operator==(const ShadowOp&) const = default;
};

enum class FunctionMode : std::uint8_t {
  kElided,
  kFullEntryExit,
  kLowered,
  kRegFrame
};
const char* to_string(FunctionMode mode);

struct TransitionEdge {
  BlockId from = -1;
  BlockId to = -1;  // original unsafe block; the edge now enters its clone
  BlockId block = -1;  // transition block id
  std::int64_t height = 0;
  bool dead_scratch = false;
  bool operator==(const TransitionEdge&) const = default;
};

struct ClonedRegion {
  std::map<BlockId, BlockId> clone_of;  // original -> clone, surviving only
  std::set<BlockId> original_kept;      // original blocks still reachable
  std::vector<TransitionEdge> transitions;
  bool operator==(const ClonedRegion&) const = default;
};

struct InlinedCall {
  std::string caller;
  BlockId block = -1;
  std::size_t index = 0;  // position of the call in the source program
  std::string callee;
  bool padded = false;  // callee body wrapped in spadd -8 / spadd 8
  bool operator==(const InlinedCall&) const = default;
};

struct ChaseShift {
  Site original;
  Site shifted;
  std::size_t skipped = 0;  // instructions moved past
  std::int64_t ra_offset_adjust = 0;
  bool operator==(const ChaseShift&) const = default;
};

struct FunctionPlan {
  std::string name;
  FunctionMode mode = FunctionMode::kElided;
  std::vector<ShadowOp> ops;
  std::optional<ClonedRegion> region;
  std::vector<ChaseShift> chases;
  std::size_t safe_paths = 0;

  Cost static_cost() const;
  bool operator==(const FunctionPlan&) const = default;
};

struct InstrumentationPlan {
  Mode mode = Mode::kFull;
  std::uint64_t source_fingerprint = 0;
  // Applied to the source program before any shadow op; the per-function
  // plans refer to the inlined program.
  std::vector<InlinedCall> inlined_calls;
  std::uint64_t base_fingerprint = 0;
  std::map<std::string, FunctionPlan, std::less<>> functions;
  safety::SafetyResult safety;  // of the inlined program

  const FunctionPlan* find(std::string_view fn) const;
};

struct InstrumentedProgram {
  mir::Program program;  // with shadow pseudo instructions and clones
  mir::Program base;     // after inlining, before instrumentation
  InstrumentationPlan plan;
};

class PlanMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Functions that keep instrumentation: exactly the ones that are not
// RA-safe.
std::set<std::string> safe_function_elision(const mir::Program& program,
                                            const safety::SafetyResult& s);

// Entry-to-exit paths through RA-safe blocks in the SCC condensation of the
// safe subgraph reachable from the entry, saturating at kSafePathCap.
std::size_t count_safe_paths(const mir::Function& fn,
                             const safety::SafetyResult& s);

// Safe path elision for one unsafe function. Falls back to a full
// entry/exit plan when the entry block is unsafe, no safe path exists, or a
// transition target has no concrete entry height. With `liveness`, pushes
// on transition edges use dead scratch registers where two are available.
FunctionPlan lower_instrumentation(const mir::Function& fn,
                                   const safety::SafetyResult& s,
                                   const analysis::HeightMap& heights,
                                   const analysis::LivenessMap* liveness =
                                       nullptr);

// Push at the entry, pop before every exit terminator.
FunctionPlan full_entry_exit(const mir::Function& fn,
                             const analysis::HeightMap& heights);

// Register-frame candidate: a leaf with only `ret` exits, no unwinding and
// some register other than r0 never mentioned; the highest such register.
std::optional<Reg> register_frame_candidate(const mir::Function& fn);

// Slides the entry push forward within the entry block to the first point
// with at least two dead registers. Returns nullopt when no such point is
// reachable without crossing an unsafe store, a call, a terminator or an
// unknown stack height.
std::optional<ChaseShift> chase_entry_push(const mir::Function& fn,
                                           const analysis::FunctionAnalysis& a);

struct InlineResult {
  mir::Program program;
  std::vector<InlinedCall> calls;
};

// Leaf callees eligible for inlining: one block ending in `ret`, no calls,
// corrupt, unwinding, halts, spmov or shadow ops, and a balanced stack.
// Callees touching sp-relative memory are padded with a word for the
// missing return address and need a concrete caller height at the call.
bool is_inlinable(const mir::Function& callee);
InlineResult inline_leaf_calls(const mir::Program& program);
mir::Program apply_inlining(const mir::Program& program,
                            const std::vector<InlinedCall>& calls);

// Register frame or entry-push chasing for every function `instrumented`
// keeps, given the analyses of the program the plan applies to.
std::map<std::string, FunctionPlan, std::less<>> plan_mechanism(
    const mir::Program& program, const safety::SafetyResult& s,
    const analysis::ProgramAnalysis& analyses,
    const std::set<std::string>& instrumented);

InstrumentationPlan plan_instrumentation(const mir::Program& program,
                                         Mode mode);

// Throws PlanMismatch when the plan was computed for a different program or
// mode.
InstrumentedProgram apply_plan(const mir::Program& program,
                               const InstrumentationPlan& plan, Mode mode);

// plan_instrumentation followed by apply_plan.
InstrumentedProgram instrument(const mir::Program& program, Mode mode);

}  // namespace shadowlab::transform

#endif  // SHADOWLAB_TRANSFORM_H_
