// report.h
//
// Machine-readable and tabular summaries of a program's analysis:
// per-function and per-block safety verdicts, function instrumentation
// statistics (how many functions each optimization handles under LIGHT),
// the memory write classification, and per-mode overhead ratios.
#ifndef SHADOWLAB_REPORT_H_
#define SHADOWLAB_REPORT_H_

#include <cstddef>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "shadowlab/analysis.h"
#include "shadowlab/campaign.h"
#include "shadowlab/mir.h"
#include "shadowlab/transform.h"

namespace shadowlab::report {

// Disjoint per-function categories: SFE counts functions whose
// instrumentation was elided, SPE lowered functions, RF register frames.
struct FunctionStats {
  std::size_t functions = 0;
  std::size_t sfe = 0;
  std::size_t spe = 0;
  std::size_t rf = 0;

  double sfe_pct() const { return pct(sfe); }
  double spe_pct() const { return pct(spe); }
  double rf_pct() const { return pct(rf); }
  double total_pct() const { return pct(sfe + spe + rf); }
  FunctionStats& operator+=(const FunctionStats& o);

 private:
  double pct(std::size_t n) const {
    return functions == 0 ? 0.0 : 100.0 * static_cast<double>(n) /
                                      static_cast<double>(functions);
  }
};

struct StatsReport {
  std::size_t programs = 0;
  FunctionStats functions;
  analysis::WriteSummary writes;
  std::map<transform::Mode, double> overhead;  // empty unless executed

  StatsReport& operator+=(const StatsReport& o);
  void add_overhead(const campaign::CampaignReport& campaign);
  nlohmann::json to_json() const;
  std::string to_text() const;
};

StatsReport static_stats(const mir::Program& program);

// {functions: {name: "safe"|"unsafe"}, blocks: {"fn.bN": ...},
//  safe_paths: {fn: n} for unsafe functions, stats: StatsReport}
nlohmann::json analyze_json(const mir::Program& program);

// Verdicts followed by the two tables.
std::string analyze_text(const mir::Program& program);

}  // namespace shadowlab::report

#endif  // SHADOWLAB_REPORT_H_
