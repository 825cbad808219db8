// campaign.h
//
// Runs a corpus under every instrumentation mode and checks the soundness
// and efficiency invariants on the resulting traces:
//   * soundness: no UndetectedCorruption under FULL, SFE, PO, MO or LIGHT;
//   * detection: every attack that lands uninstrumented aborts instead;
//   * exactly one check: a lowered activation that reaches an unsafe block
//     executes one push and one pop, push first, and every unsafe store in
//     it runs between them; safe-only activations execute no shadow op;
//   * monotonicity: shadow-op counts LIGHT <= PO <= SFE <= FULL per input;
//   * transparency: benign programs produce the uninstrumented outputs;
//   * the VM-side analysis checks (heights, liveness, shadow balance).
// ELIDE-ALL is the control: attacks must go undetected there.
#ifndef SHADOWLAB_CAMPAIGN_H_
#define SHADOWLAB_CAMPAIGN_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shadowlab/generator.h"
#include "shadowlab/mir.h"
#include "shadowlab/transform.h"
#include "shadowlab/vm.h"

namespace shadowlab::campaign {

struct CampaignCase {
  std::string name;
  mir::Program program;
  std::vector<vm::ExecInput> inputs;
};

std::vector<CampaignCase> build_corpus(const gen::GenConfig& config,
                                       std::size_t count,
                                       int inputs_per_program);

struct CampaignOptions {
  std::vector<transform::Mode> modes{transform::kAllModes.begin(),
                                     transform::kAllModes.end()};
  std::uint64_t budget = 200'000;
  std::size_t max_counterexamples = 8;
};

struct ModeStats {
  std::uint64_t executions = 0;
  std::uint64_t completed = 0;
  std::uint64_t aborted = 0;
  std::uint64_t undetected = 0;
  std::uint64_t budget_exhausted = 0;
  std::uint64_t faults = 0;
  // Summed over completed executions.
  std::uint64_t shadow_ops = 0;
  std::uint64_t shadow_instructions = 0;
  std::uint64_t total_instructions = 0;

  double overhead_ratio() const {
    return total_instructions == 0
               ? 0.0
               : static_cast<double>(shadow_instructions) /
                     static_cast<double>(total_instructions);
  }
};

struct PlanCoverage {
  std::uint64_t functions = 0;
  std::uint64_t elided = 0;
  std::uint64_t full = 0;
  std::uint64_t lowered = 0;
  std::uint64_t regframe = 0;
  std::uint64_t transitions = 0;
  std::uint64_t inlined_calls = 0;
  std::uint64_t chased = 0;  // entry pushes moved past >= 1 instruction
  std::uint64_t dead_scratch_pushes = 0;
};

struct Tally {
  std::uint64_t checked = 0;
  std::uint64_t violations = 0;
};

struct Counterexample {
  std::string invariant;
  std::string program;
  std::string mode;
  std::size_t input = 0;
  std::string detail;
  std::string trace;  // text trace of the offending execution
};

struct CampaignReport {
  std::uint64_t cases = 0;
  std::uint64_t executions = 0;
  std::uint64_t adversarial_executions = 0;  // sound modes only
  std::uint64_t detected = 0;                // sound-mode aborts on attacks
  std::uint64_t undetected = 0;              // sound-mode corruption
  std::uint64_t benign_aborts = 0;
  std::uint64_t control_executions = 0;      // adversarial, under ELIDE-ALL
  std::uint64_t control_undetected = 0;
  std::map<transform::Mode, ModeStats> per_mode;
  std::map<transform::Mode, PlanCoverage> coverage;
  std::map<std::string, Tally> invariants;
  // Same ladder as monotonicity, on shadow instructions instead of op
  // counts. Informational: a transition push costs one more than an entry
  // push, so PO can exceed SFE here.
  Tally cost_order;
  std::vector<Counterexample> counterexamples;

  double detection_rate() const;
  nlohmann::json to_json() const;
};

CampaignReport run_campaign(const std::vector<CampaignCase>& corpus,
                            const CampaignOptions& options = {});

struct InvariantResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Pass/fail for each campaign-level invariant. The ELIDE-ALL control is
// expected to show undetected corruption when the corpus is adversarial and
// the mode was run.
std::vector<InvariantResult> evaluate(const CampaignReport& report);

// Invariant names used as keys of CampaignReport::invariants.
inline constexpr const char* kSoundness = "validation_soundness";
inline constexpr const char* kDetection = "detection";
inline constexpr const char* kExactlyOne = "exactly_one_check";
inline constexpr const char* kSafeWalk = "safe_walk_freedom";
inline constexpr const char* kCoverage = "unsafe_store_coverage";
inline constexpr const char* kMonotonicity = "shadow_op_monotonicity";
inline constexpr const char* kTransparency = "transparency";
inline constexpr const char* kHeight = "height_soundness";
inline constexpr const char* kLiveness = "liveness_soundness";
inline constexpr const char* kBalance = "shadow_balance";

}  // namespace shadowlab::campaign

#endif  // SHADOWLAB_CAMPAIGN_H_
