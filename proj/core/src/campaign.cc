#include "shadowlab/campaign.h"

#include <algorithm>
#include <unordered_map>

#include "shadowlab/analysis.h"

namespace shadowlab::campaign {

using transform::FunctionMode;
using transform::Mode;
using vm::EventKind;
using vm::ExecResult;
using vm::OutcomeKind;

std::vector<CampaignCase> build_corpus(const gen::GenConfig& config,
                                       std::size_t count,
                                       int inputs_per_program) {
  std::vector<CampaignCase> corpus;
  corpus.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    CampaignCase c;
    c.name = gen::program_file_name(i);
    c.program = gen::generate_program(config, i);
    c.inputs = gen::generate_inputs(config, i, inputs_per_program);
    corpus.push_back(std::move(c));
  }
  return corpus;
}

double CampaignReport::detection_rate() const {
  const std::uint64_t landed = detected + undetected;
  return landed == 0 ? 1.0
                     : static_cast<double>(detected) / static_cast<double>(landed);
}

namespace {

constexpr Mode kLadder[] = {Mode::kLight, Mode::kPo, Mode::kSfe, Mode::kFull};

bool is_sound(Mode m) { return m != Mode::kElideAll; }

struct Activation {
  int pushes = 0;
  int pops = 0;
  bool pop_before_push = false;
  bool unsafe_visited = false;
  bool uncovered_store = false;
  bool ended = false;
};

struct ActivationFindings {
  std::string exactly_one;
  std::string safe_walk;
  std::string coverage;
};

class Runner {
 public:
  Runner(const CampaignOptions& options, CampaignReport& report)
      : options_(options), report_(report) {
    for (const char* name : {kSoundness, kDetection, kExactlyOne, kSafeWalk,
                             kCoverage, kMonotonicity, kTransparency, kHeight,
                             kLiveness, kBalance}) {
      report_.invariants[name];
    }
  }

  void run_case(const CampaignCase& c) {
    ++report_.cases;
    const bool adversarial = c.program.adversarial;

    std::vector<vm::Outcome> baseline;
    vm::ExecOptions plain;
    plain.budget = options_.budget;
    plain.record_events = false;
    for (const auto& input : c.inputs) {
      baseline.push_back(vm::execute(c.program, input, plain).outcome);
    }

    std::map<Mode, std::vector<ExecResult>> results;
    for (Mode mode : options_.modes) {
      const transform::InstrumentedProgram ip = transform::instrument(c.program, mode);
      record_coverage(mode, ip);
      const analysis::ProgramAnalysis analyses = analysis::analyze_program(ip.program);
      vm::ExecOptions checked;
      checked.budget = options_.budget;
      checked.analysis = &analyses;
      auto& mode_results = results[mode];
      for (std::size_t k = 0; k < c.inputs.size(); ++k) {
        ExecResult r = vm::execute(ip.program, c.inputs[k], checked);
        ++report_.executions;
        tally_outcome(mode, r);
        check_vm(c, ip, mode, k, r);
        check_activations(c, ip, mode, k, r);
        const vm::Outcome& base = baseline[k];
        if (is_sound(mode) && adversarial) check_attack(c, ip, mode, k, r, base);
        if (mode == Mode::kElideAll && adversarial) {
          ++report_.control_executions;
          if (r.outcome.kind == OutcomeKind::kUndetectedCorruption) {
            ++report_.control_undetected;
          }
        }
        if (!adversarial) check_transparency(c, ip, mode, k, r, base);
        // Keep only what the cross-mode checks need.
        r.trace.events.clear();
        r.trace.events.shrink_to_fit();
        mode_results.push_back(std::move(r));
      }
    }
    check_monotonicity(c, results);
  }

 private:
  void counterexample(const std::string& invariant, const CampaignCase& c,
                      Mode mode, std::size_t input, const std::string& detail,
                      const transform::InstrumentedProgram* ip,
                      const ExecResult* r) {
    if (report_.counterexamples.size() >= options_.max_counterexamples) return;
    Counterexample ce;
    ce.invariant = invariant;
    ce.program = c.name;
    ce.mode = std::string(transform::to_string(mode));
    ce.input = input;
    ce.detail = detail;
    if (ip != nullptr && r != nullptr) ce.trace = vm::trace_to_text(ip->program, *r);
    report_.counterexamples.push_back(std::move(ce));
  }

  void record_coverage(Mode mode, const transform::InstrumentedProgram& ip) {
    PlanCoverage& cov = report_.coverage[mode];
    cov.inlined_calls += ip.plan.inlined_calls.size();
    for (const auto& [name, fp] : ip.plan.functions) {
      ++cov.functions;
      switch (fp.mode) {
        case FunctionMode::kElided: ++cov.elided; break;
        case FunctionMode::kFullEntryExit: ++cov.full; break;
        case FunctionMode::kLowered: ++cov.lowered; break;
        case FunctionMode::kRegFrame: ++cov.regframe; break;
      }
      if (fp.region) cov.transitions += fp.region->transitions.size();
      cov.chased += fp.chases.size();
      for (const auto& op : fp.ops) {
        if (op.kind == transform::ShadowOpKind::kPush && op.dead_scratch) {
          ++cov.dead_scratch_pushes;
        }
      }
    }
  }

  void tally_outcome(Mode mode, const ExecResult& r) {
    ModeStats& s = report_.per_mode[mode];
    ++s.executions;
    switch (r.outcome.kind) {
      case OutcomeKind::kCompleted:
        ++s.completed;
        s.shadow_ops += r.trace.counters.shadow_ops;
        s.shadow_instructions += r.trace.counters.shadow_instructions;
        s.total_instructions += r.trace.counters.total_instructions();
        break;
      case OutcomeKind::kAborted: ++s.aborted; break;
      case OutcomeKind::kUndetectedCorruption: ++s.undetected; break;
      case OutcomeKind::kBudgetExhausted: ++s.budget_exhausted; break;
      case OutcomeKind::kFault: ++s.faults; break;
    }
  }

  void check_vm(const CampaignCase& c, const transform::InstrumentedProgram& ip,
                Mode mode, std::size_t k, const ExecResult& r) {
    bool seen[3] = {false, false, false};
    for (const vm::Violation& v : r.trace.violations) {
      seen[static_cast<int>(v.kind)] = true;
    }
    const char* names[3] = {kHeight, kLiveness, kBalance};
    for (int i = 0; i < 3; ++i) {
      Tally& t = report_.invariants[names[i]];
      ++t.checked;
      if (!seen[i]) continue;
      ++t.violations;
      for (const vm::Violation& v : r.trace.violations) {
        if (static_cast<int>(v.kind) == i) {
          counterexample(names[i], c, mode, k, v.detail, &ip, &r);
          break;
        }
      }
    }
  }

  void check_activations(const CampaignCase& c,
                    const transform::InstrumentedProgram& ip, Mode mode,
                    std::size_t k, const ExecResult& r) {
    std::vector<const transform::FunctionPlan*> lowered;
    bool any = false;
    for (const auto& fn : ip.program.functions) {
      const transform::FunctionPlan* fp = ip.plan.find(fn.name);
      bool is_lowered = fp != nullptr && fp->mode == FunctionMode::kLowered;
      lowered.push_back(is_lowered ? fp : nullptr);
      any = any || is_lowered;
    }
    if (!any) return;

    std::unordered_map<std::uint32_t, Activation> acts;
    std::unordered_map<std::uint32_t, std::int32_t> fn_of;
    for (const vm::Event& e : r.trace.events) {
      if (e.function < 0 || lowered[e.function] == nullptr) continue;
      Activation& a = acts[e.activation];
      fn_of[e.activation] = e.function;
      switch (e.kind) {
        case EventKind::kBlockEnter: {
          mir::BlockId orig = transform::original_block(e.block);
          if (orig >= 0 && !ip.plan.safety.ra_safe_block(
                               ip.program.functions[e.function].name, orig)) {
            a.unsafe_visited = true;
          }
          break;
        }
        case EventKind::kShadowPush:
          ++a.pushes;
          break;
        case EventKind::kShadowPop:
          if (a.pushes == 0) a.pop_before_push = true;
          ++a.pops;
          break;
        case EventKind::kStore:
          if (e.write_class == static_cast<std::int8_t>(analysis::WriteClass::kUnsafe) &&
              (a.pushes != 1 || a.pops != 0)) {
            a.uncovered_store = true;
          }
          break;
        case EventKind::kRet:
        case EventKind::kHalt:
          a.ended = true;
          break;
        default:
          break;
      }
    }

    Tally& one = report_.invariants[kExactlyOne];
    Tally& walk = report_.invariants[kSafeWalk];
    Tally& cover = report_.invariants[kCoverage];
    for (const auto& [id, a] : acts) {
      if (!a.ended) continue;
      const std::string where = ip.program.functions[fn_of[id]].name +
                                " activation #" + std::to_string(id);
      if (a.unsafe_visited) {
        ++one.checked;
        if (a.pushes != 1 || a.pops != 1 || a.pop_before_push) {
          ++one.violations;
          counterexample(kExactlyOne, c, mode, k,
                         where + ": " + std::to_string(a.pushes) + " pushes, " +
                             std::to_string(a.pops) + " pops",
                         &ip, &r);
        }
        ++cover.checked;
        if (a.uncovered_store) {
          ++cover.violations;
          counterexample(kCoverage, c, mode, k,
                         where + ": unsafe store outside push/pop", &ip, &r);
        }
      } else {
        ++walk.checked;
        if (a.pushes != 0 || a.pops != 0) {
          ++walk.violations;
          counterexample(kSafeWalk, c, mode, k,
                         where + ": shadow ops on a safe-only walk", &ip, &r);
        }
      }
    }
  }

  void check_attack(const CampaignCase& c,
                    const transform::InstrumentedProgram& ip, Mode mode,
                    std::size_t k, const ExecResult& r,
                    const vm::Outcome& base) {
    ++report_.adversarial_executions;
    Tally& sound = report_.invariants[kSoundness];
    ++sound.checked;
    if (r.outcome.kind == OutcomeKind::kUndetectedCorruption) {
      ++report_.undetected;
      ++sound.violations;
      counterexample(kSoundness, c, mode, k, "return through corrupted address",
                     &ip, &r);
    } else if (r.outcome.kind == OutcomeKind::kAborted) {
      ++report_.detected;
    }
    if (base.kind == OutcomeKind::kUndetectedCorruption) {
      Tally& det = report_.invariants[kDetection];
      ++det.checked;
      if (r.outcome.kind != OutcomeKind::kAborted) {
        ++det.violations;
        counterexample(kDetection, c, mode, k,
                       std::string("attack landed uninstrumented, outcome ") +
                           vm::to_string(r.outcome.kind),
                       &ip, &r);
      }
    }
  }

  void check_transparency(const CampaignCase& c,
                          const transform::InstrumentedProgram& ip, Mode mode,
                          std::size_t k, const ExecResult& r,
                          const vm::Outcome& base) {
    if (r.outcome.kind == OutcomeKind::kAborted) ++report_.benign_aborts;
    if (r.outcome.kind == OutcomeKind::kBudgetExhausted ||
        base.kind == OutcomeKind::kBudgetExhausted) {
      return;
    }
    Tally& t = report_.invariants[kTransparency];
    ++t.checked;
    const bool same = base.completed()
                          ? r.outcome.same_observable(base)
                          : r.outcome.kind == base.kind;
    if (!same) {
      ++t.violations;
      counterexample(kTransparency, c, mode, k,
                     std::string("uninstrumented ") + vm::to_string(base.kind) +
                         " r0=" + std::to_string(base.r0) + ", instrumented " +
                         vm::to_string(r.outcome.kind) +
                         " r0=" + std::to_string(r.outcome.r0),
                     &ip, &r);
    }
  }

  void check_monotonicity(const CampaignCase& c,
                          const std::map<Mode, std::vector<ExecResult>>& results) {
    std::vector<Mode> ladder;
    for (Mode m : kLadder) {
      if (results.count(m)) ladder.push_back(m);
    }
    if (ladder.size() < 2) return;
    Tally& t = report_.invariants[kMonotonicity];
    for (std::size_t k = 0; k < c.inputs.size(); ++k) {
      bool all_completed = true;
      for (Mode m : ladder) {
        all_completed = all_completed && results.at(m)[k].outcome.completed();
      }
      if (!all_completed) continue;
      ++t.checked;
      ++report_.cost_order.checked;
      for (std::size_t i = 0; i + 1 < ladder.size(); ++i) {
        const auto& lo = results.at(ladder[i])[k].trace.counters;
        const auto& hi = results.at(ladder[i + 1])[k].trace.counters;
        if (lo.shadow_instructions > hi.shadow_instructions) {
          ++report_.cost_order.violations;
        }
        if (lo.shadow_ops > hi.shadow_ops) {
          ++t.violations;
          counterexample(kMonotonicity, c, ladder[i], k,
                         std::string(transform::to_string(ladder[i])) + " ran " +
                             std::to_string(lo.shadow_ops) + " shadow ops, " +
                             std::string(transform::to_string(ladder[i + 1])) +
                             " ran " + std::to_string(hi.shadow_ops),
                         nullptr, nullptr);
          break;
        }
      }
    }
  }

  const CampaignOptions& options_;
  CampaignReport& report_;
};

nlohmann::json tally_json(const Tally& t) {
  return {{"checked", t.checked}, {"violations", t.violations}};
}

}  // namespace

CampaignReport run_campaign(const std::vector<CampaignCase>& corpus,
                            const CampaignOptions& options) {
  CampaignReport report;
  Runner runner(options, report);
  for (const CampaignCase& c : corpus) runner.run_case(c);
  return report;
}

nlohmann::json CampaignReport::to_json() const {
  using nlohmann::json;
  json modes = json::object();
  for (const auto& [mode, s] : per_mode) {
    modes[std::string(transform::to_string(mode))] = {
        {"executions", s.executions},
        {"completed", s.completed},
        {"aborted", s.aborted},
        {"undetected", s.undetected},
        {"budget_exhausted", s.budget_exhausted},
        {"faults", s.faults},
        {"shadow_ops", s.shadow_ops},
        {"shadow_instr", s.shadow_instructions},
        {"total_instr", s.total_instructions},
        {"overhead_ratio", s.overhead_ratio()}};
  }
  json cov = json::object();
  for (const auto& [mode, c] : coverage) {
    cov[std::string(transform::to_string(mode))] = {
        {"functions", c.functions},
        {"elided", c.elided},
        {"full", c.full},
        {"lowered", c.lowered},
        {"regframe", c.regframe},
        {"transitions", c.transitions},
        {"inlined_calls", c.inlined_calls},
        {"chased", c.chased},
        {"dead_scratch_pushes", c.dead_scratch_pushes}};
  }
  json inv = json::object();
  for (const auto& [name, t] : invariants) inv[name] = tally_json(t);
  json ces = json::array();
  for (const Counterexample& ce : counterexamples) {
    ces.push_back({{"invariant", ce.invariant},
                   {"program", ce.program},
                   {"mode", ce.mode},
                   {"input", ce.input},
                   {"detail", ce.detail}});
  }
  return {{"cases", cases},
          {"executions", executions},
          {"adversarial_executions", adversarial_executions},
          {"detected", detected},
          {"undetected", undetected},
          {"detection_rate", detection_rate()},
          {"benign_aborts", benign_aborts},
          {"control",
           {{"mode", "ELIDE-ALL"},
            {"executions", control_executions},
            {"undetected", control_undetected}}},
          {"per_mode", modes},
          {"coverage", cov},
          {"invariants", inv},
          {"shadow_instruction_order", tally_json(cost_order)},
          {"counterexamples", ces}};
}

std::vector<InvariantResult> evaluate(const CampaignReport& report) {
  std::vector<InvariantResult> out;
  for (const auto& [name, t] : report.invariants) {
    InvariantResult r;
    r.name = name;
    r.passed = t.violations == 0;
    r.detail = std::to_string(t.violations) + " violations in " +
               std::to_string(t.checked) + " checks";
    out.push_back(std::move(r));
  }
  if (report.control_executions > 0) {
    InvariantResult r;
    r.name = "elide_all_control";
    r.passed = report.control_undetected > 0;
    r.detail = std::to_string(report.control_undetected) +
               " undetected corruptions without instrumentation";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace shadowlab::campaign
