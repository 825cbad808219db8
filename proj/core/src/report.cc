#include "shadowlab/report.h"

#include <cstdio>
#include <sstream>

#include "shadowlab/safety.h"

namespace shadowlab::report {

using transform::FunctionMode;

FunctionStats& FunctionStats::operator+=(const FunctionStats& o) {
  functions += o.functions;
  sfe += o.sfe;
  spe += o.spe;
  rf += o.rf;
  return *this;
}

StatsReport& StatsReport::operator+=(const StatsReport& o) {
  programs += o.programs;
  functions += o.functions;
  writes += o.writes;
  return *this;
}

void StatsReport::add_overhead(const campaign::CampaignReport& campaign) {
  for (const auto& [mode, s] : campaign.per_mode) overhead[mode] = s.overhead_ratio();
}

StatsReport static_stats(const mir::Program& program) {
  StatsReport r;
  r.programs = 1;
  const transform::InstrumentationPlan plan =
      transform::plan_instrumentation(program, transform::Mode::kLight);
  for (const auto& [name, fp] : plan.functions) {
    ++r.functions.functions;
    switch (fp.mode) {
      case FunctionMode::kElided: ++r.functions.sfe; break;
      case FunctionMode::kLowered: ++r.functions.spe; break;
      case FunctionMode::kRegFrame: ++r.functions.rf; break;
      case FunctionMode::kFullEntryExit: break;
    }
  }
  for (const auto& [name, fa] : analysis::analyze_program(program)) {
    r.writes += fa.writes.summary;
  }
  return r;
}

nlohmann::json StatsReport::to_json() const {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& [mode, ratio] : overhead) {
    modes[std::string(transform::to_string(mode))] = ratio;
  }
  return {{"programs", programs},
          {"functions",
           {{"count", functions.functions},
            {"sfe", functions.sfe},
            {"spe", functions.spe},
            {"rf", functions.rf},
            {"sfe_pct", functions.sfe_pct()},
            {"spe_pct", functions.spe_pct()},
            {"rf_pct", functions.rf_pct()},
            {"total_pct", functions.total_pct()}}},
          {"writes",
           {{"total", writes.total()},
            {"stack_pct", writes.stack_pct()},
            {"global_pct", writes.global_pct()},
            {"unsafe_pct", writes.unsafe_pct()}}},
          {"overhead_ratio", modes}};
}

namespace {

template <typename... Args>
std::string fmt(const char* format, Args... args) {
  char buf[128];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

}  // namespace

std::string StatsReport::to_text() const {
  std::ostringstream os;
  os << "Function instrumentation (" << functions.functions << " functions)\n"
     << "  SFE%    SPE%    RF%     Total%\n"
     << fmt("  %-7.1f %-7.1f %-7.1f %.1f\n", functions.sfe_pct(),
            functions.spe_pct(), functions.rf_pct(), functions.total_pct())
     << "Memory writes (" << writes.total() << " stores)\n"
     << "  Stack%  Global% Unsafe%\n"
     << fmt("  %-7.1f %-7.1f %.1f\n", writes.stack_pct(), writes.global_pct(),
            writes.unsafe_pct());
  if (!overhead.empty()) {
    os << "Overhead ratio (shadow instr / total instr)\n";
    for (const auto& [mode, ratio] : overhead) {
      os << fmt("  %-10s %.4f\n", std::string(transform::to_string(mode)).c_str(),
                ratio);
    }
  }
  return os.str();
}

namespace {

struct Verdicts {
  safety::SafetyResult safety;
  std::map<std::string, std::size_t> safe_paths;
};

Verdicts compute_verdicts(const mir::Program& program) {
  Verdicts v;
  v.safety = safety::calculate_ra_safety(program, analysis::analyze_program(program));
  for (const mir::Function& fn : program.functions) {
    if (!v.safety.ra_safe_fn(fn.name)) {
      v.safe_paths[fn.name] = transform::count_safe_paths(fn, v.safety);
    }
  }
  return v;
}

const char* verdict(bool safe) { return safe ? "safe" : "unsafe"; }

}  // namespace

nlohmann::json analyze_json(const mir::Program& program) {
  const Verdicts v = compute_verdicts(program);
  nlohmann::json fns = nlohmann::json::object();
  nlohmann::json blocks = nlohmann::json::object();
  for (const mir::Function& fn : program.functions) {
    fns[fn.name] = verdict(v.safety.ra_safe_fn(fn.name));
    for (const auto& [id, block] : fn.blocks) {
      blocks[fn.name + ".b" + std::to_string(id)] =
          verdict(v.safety.ra_safe_block(fn.name, id));
    }
  }
  return {{"functions", fns},
          {"blocks", blocks},
          {"safe_paths", v.safe_paths},
          {"stats", static_stats(program).to_json()}};
}

std::string analyze_text(const mir::Program& program) {
  const Verdicts v = compute_verdicts(program);
  std::ostringstream os;
  for (const mir::Function& fn : program.functions) {
    const bool safe = v.safety.ra_safe_fn(fn.name);
    os << fn.name << ": " << verdict(safe);
    if (!safe) {
      os << " (safe paths " << v.safe_paths.at(fn.name) << "; unsafe blocks";
      for (const auto& [id, block] : fn.blocks) {
        if (!v.safety.ra_safe_block(fn.name, id)) os << " b" << id;
      }
      os << ")";
    }
    os << "\n";
  }
  os << "\n" << static_stats(program).to_text();
  return os.str();
}

}  // namespace shadowlab::report
