#include "cli.h"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "CLI11.hpp"
#include "shadowlab/campaign.h"
#include "shadowlab/generator.h"
#include "shadowlab/parser.h"
#include "shadowlab/report.h"
#include "shadowlab/transform.h"
#include "shadowlab/validate.h"
#include "shadowlab/vm.h"

namespace shadowlab::cli {

namespace fs = std::filesystem;

namespace {

// Raised for conditions reported to the user with kUsage.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

mir::Program load_program(const fs::path& path,
                          mir::ValidateOptions options = {}) {
  const std::string text = read_file(path);
  mir::Program program;
  try {
    program = mir::parse_program(text);
  } catch (const mir::ParseError& e) {
    throw InputError(path.string() + ":" + std::to_string(e.line()) + ":" +
                     std::to_string(e.column()) + ": " + e.message());
  }
  const auto diags = mir::validate_program(program, options);
  if (!diags.empty()) {
    std::string msg;
    for (const auto& d : diags) {
      if (!msg.empty()) msg += "\n";
      msg += mir::format_diagnostic(path.string(), d);
    }
    throw InputError(msg);
  }
  return program;
}

transform::Mode mode_or_throw(const std::string& text) {
  auto mode = transform::parse_mode(text);
  if (!mode) throw InputError("unknown mode '" + text + "'");
  return *mode;
}

std::uint64_t effective_seed(std::uint64_t flag) {
  if (const char* env = std::getenv("SHADOWLAB_SEED"); env != nullptr && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw InputError(std::string("SHADOWLAB_SEED is not a number: ") + env);
    }
  }
  return flag;
}

struct GenFlags {
  std::uint64_t seed = 1;
  std::size_t count = 100;
  double attack_density = 0.0;
  int max_functions = 10;
  int max_blocks = 7;
  int max_instrs = 5;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Corpus seed (SHADOWLAB_SEED overrides)");
    cmd->add_option("--count", count, "Number of programs")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--attack-density", attack_density,
                    "Fraction of adversarial programs")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--max-functions", max_functions)->check(CLI::Range(3, 64));
    cmd->add_option("--max-blocks", max_blocks)->check(CLI::Range(1, 64));
    cmd->add_option("--max-instrs", max_instrs)->check(CLI::Range(1, 64));
  }

  gen::GenConfig config() const {
    gen::GenConfig c;
    c.seed = effective_seed(seed);
    c.attack_density = attack_density;
    c.max_functions = max_functions;
    c.min_functions = std::min(c.min_functions, max_functions);
    c.max_blocks = max_blocks;
    c.max_instrs = max_instrs;
    return c;
  }
};

int cmd_analyze(const fs::path& file, bool json, std::ostream& out) {
  const mir::Program program = load_program(file);
  if (json) {
    out << report::analyze_json(program).dump(2) << "\n";
  } else {
    out << report::analyze_text(program);
  }
  return kOk;
}

int cmd_instrument(const fs::path& file, const std::string& mode_text,
                   const fs::path& output, std::ostream& out) {
  const mir::Program program = load_program(file);
  const transform::InstrumentedProgram ip =
      transform::instrument(program, mode_or_throw(mode_text));
  const std::string text = mir::print_program(ip.program);
  if (output.empty() || output == "-") {
    out << text;
  } else {
    write_file_atomic(output, text);
  }
  return kOk;
}

struct RunFlags {
  std::string input;
  std::vector<std::string> regs;
  std::uint64_t budget = 1'000'000;
  std::string mode;
  bool trace = false;
  bool json = false;
};

int cmd_run(const fs::path& file, const RunFlags& f, std::ostream& out) {
  // Already instrumented programs run as they are.
  mir::ValidateOptions validate;
  validate.allow_shadow_ops = f.mode.empty();
  mir::Program program = load_program(file, validate);
  vm::ExecInput input;
  try {
    input.decisions = vm::parse_decisions(f.input);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  for (const std::string& r : f.regs) {
    const auto eq = r.find('=');
    int idx = -1;
    std::uint64_t value = 0;
    try {
      if (eq == std::string::npos || r.empty() || r[0] != 'r') throw InputError("");
      idx = std::stoi(r.substr(1, eq - 1));
      value = std::stoull(r.substr(eq + 1), nullptr, 0);
    } catch (const std::exception&) {
      throw InputError("bad register assignment '" + r + "', expected rN=value");
    }
    if (idx < 0 || idx >= mir::kNumRegisters) {
      throw InputError("register out of range in '" + r + "'");
    }
    input.registers[idx] = value;
  }

  vm::ExecResult result;
  if (f.mode.empty()) {
    vm::ExecOptions options;
    options.budget = f.budget;
    const analysis::ProgramAnalysis analyses = analysis::analyze_program(program);
    options.analysis = &analyses;
    result = vm::execute(program, input, options);
  } else {
    transform::InstrumentedProgram ip =
        transform::instrument(program, mode_or_throw(f.mode));
    result = vm::execute_checked(ip, input, f.budget);
    program = std::move(ip.program);
  }

  if (f.json) {
    out << vm::trace_to_json(program, result) << "\n";
  } else if (f.trace) {
    out << vm::trace_to_text(program, result);
  } else {
    const vm::Counters& c = result.trace.counters;
    out << "outcome " << vm::to_string(result.outcome.kind) << "\n"
        << "r0 " << result.outcome.r0 << "\n"
        << "instructions " << c.instructions << "\n"
        << "shadow_ops " << c.shadow_ops << "\n"
        << "shadow_instructions " << c.shadow_instructions << "\n"
        << "violations " << result.trace.violations.size() << "\n";
    if (!result.outcome.detail.empty()) out << "detail " << result.outcome.detail << "\n";
  }
  return result.outcome.kind == vm::OutcomeKind::kFault ? kFailure : kOk;
}

int cmd_gen(const GenFlags& flags, const fs::path& dir, std::ostream& out) {
  const gen::GenConfig config = flags.config();
  fs::create_directories(dir);
  std::size_t adversarial = 0;
  for (std::size_t i = 0; i < flags.count; ++i) {
    const mir::Program program = gen::generate_program(config, i);
    adversarial += program.adversarial ? 1 : 0;
    write_file_atomic(dir / gen::program_file_name(i), mir::print_program(program));
  }
  out << "wrote " << flags.count << " programs to " << dir.string() << " ("
      << adversarial << " adversarial, seed " << config.seed << ")\n";
  return kOk;
}

struct VerifyFlags {
  GenFlags gen;
  int inputs = 8;
  std::uint64_t budget = 200'000;
  std::vector<std::string> modes;
  fs::path report;
  fs::path cex_dir = "counterexamples";
  bool json = false;
};

void print_summary(const campaign::CampaignReport& r, std::ostream& out) {
  out << "cases " << r.cases << ", executions " << r.executions
      << ", adversarial executions " << r.adversarial_executions << "\n"
      << "detected " << r.detected << ", undetected " << r.undetected
      << ", detection rate " << r.detection_rate() << "\n"
      << "ELIDE-ALL undetected " << r.control_undetected << "\n";
  for (const auto& [mode, s] : r.per_mode) {
    out << "  " << transform::to_string(mode) << ": completed " << s.completed
        << ", aborted " << s.aborted << ", undetected " << s.undetected
        << ", budget " << s.budget_exhausted << ", overhead "
        << s.overhead_ratio() << "\n";
  }
  for (const auto& [mode, c] : r.coverage) {
    out << "  plans " << transform::to_string(mode) << ": elided " << c.elided
        << ", full " << c.full << ", lowered " << c.lowered << ", regframe "
        << c.regframe << ", transitions " << c.transitions << ", inlined "
        << c.inlined_calls << ", chased " << c.chased << "\n";
  }
}

int cmd_verify(const VerifyFlags& f, std::ostream& out, std::ostream& err) {
  gen::GenConfig config = f.gen.config();
  campaign::CampaignOptions options;
  options.budget = f.budget;
  if (!f.modes.empty()) {
    options.modes.clear();
    for (const std::string& m : f.modes) options.modes.push_back(mode_or_throw(m));
  }
  const auto corpus = campaign::build_corpus(config, f.gen.count, f.inputs);
  const campaign::CampaignReport report = campaign::run_campaign(corpus, options);
  const auto results = campaign::evaluate(report);

  if (!f.report.empty()) write_file_atomic(f.report, report.to_json().dump(2) + "\n");
  if (f.json) {
    out << report.to_json().dump(2) << "\n";
  } else {
    print_summary(report, out);
  }

  const bool control_only =
      std::all_of(options.modes.begin(), options.modes.end(),
                  [](transform::Mode m) { return m == transform::Mode::kElideAll; });
  bool ok = true;
  for (const auto& r : results) {
    const bool expected_failure = control_only && r.name == "elide_all_control";
    if (!f.json) {
      out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail
          << (expected_failure ? " (control, corruption expected)" : "") << "\n";
    }
    ok = ok && r.passed;
  }

  if (!report.counterexamples.empty()) {
    fs::create_directories(f.cex_dir);
    for (const auto& ce : report.counterexamples) {
      const fs::path p = f.cex_dir / (ce.invariant + "_" + ce.program + "_" +
                                      ce.mode + "_" + std::to_string(ce.input) +
                                      ".trace");
      write_file_atomic(p, "# " + ce.detail + "\n" + ce.trace);
      err << "counterexample (" << ce.invariant << "): " << p.string() << "\n";
    }
  }
  return ok ? kOk : kFailure;
}

int cmd_stats(const fs::path& dir, std::uint64_t seed, int inputs, bool json,
              std::ostream& out) {
  if (!fs::is_directory(dir)) throw InputError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mir") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  gen::GenConfig config;
  config.seed = effective_seed(seed);
  report::StatsReport stats;
  std::vector<campaign::CampaignCase> corpus;
  for (std::size_t i = 0; i < files.size(); ++i) {
    campaign::CampaignCase c;
    c.name = files[i].filename().string();
    c.program = load_program(files[i]);
    c.inputs = gen::generate_inputs(config, i, inputs);
    stats += report::static_stats(c.program);
    corpus.push_back(std::move(c));
  }
  if (inputs > 0 && !corpus.empty()) {
    stats.add_overhead(campaign::run_campaign(corpus));
  }
  if (json) {
    out << stats.to_json().dump(2) << "\n";
  } else {
    out << stats.programs << " programs\n" << stats.to_text();
  }
  return kOk;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw InputError("cannot write " + tmp.string());
    o << contents;
    o.flush();
    if (!o) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"shadowlab: shadow stack instrumentation over a miniature IR"};
  app.require_subcommand(1);

  fs::path file;
  bool json = false;
  auto* analyze = app.add_subcommand("analyze", "Safety verdicts and statistics");
  analyze->add_option("file", file, "MIR program")->required();
  analyze->add_flag("--json", json, "Machine-readable output");

  std::string mode;
  fs::path output;
  auto* instrument = app.add_subcommand("instrument", "Instrument a program");
  instrument->add_option("file", file)->required();
  instrument->add_option("--mode,-m", mode, "FULL|SFE|PO|MO|LIGHT|ELIDE-ALL")
      ->required();
  instrument->add_option("-o,--output", output, "Output file (default stdout)");

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Execute a program in the VM");
  run->add_option("file", file)->required();
  run->add_option("--input,-i", run_flags.input, "Branch decisions, e.g. 1,0,1");
  run->add_option("--reg", run_flags.regs, "Initial register, e.g. r1=7");
  run->add_option("--budget", run_flags.budget, "Step budget");
  run->add_option("--mode,-m", run_flags.mode, "Instrument before running");
  run->add_flag("--trace", run_flags.trace, "Print the event trace");
  run->add_flag("--json", run_flags.json, "Print the trace as JSON");

  GenFlags gen_flags;
  fs::path out_dir;
  auto* gen = app.add_subcommand("gen", "Generate a random corpus");
  gen_flags.add_to(gen);
  gen->add_option("--out", out_dir, "Output directory")->required();

  VerifyFlags verify_flags;
  verify_flags.gen.count = 1000;
  verify_flags.gen.attack_density = 0.5;
  auto* verify = app.add_subcommand("verify", "Run the verification campaign");
  verify_flags.gen.add_to(verify);
  verify->add_option("--inputs", verify_flags.inputs, "Inputs per program")
      ->check(CLI::PositiveNumber);
  verify->add_option("--budget", verify_flags.budget, "Step budget per run");
  verify->add_option("--mode,-m", verify_flags.modes, "Restrict to these modes");
  verify->add_option("--report", verify_flags.report, "Write the JSON report here");
  verify->add_option("--cex-dir", verify_flags.cex_dir,
                     "Directory for counterexample traces");
  verify->add_flag("--json", verify_flags.json, "Print the JSON report");

  fs::path stats_dir;
  std::uint64_t stats_seed = 1;
  int stats_inputs = 4;
  auto* stats = app.add_subcommand("stats", "Aggregate statistics over a corpus");
  stats->add_option("dir", stats_dir, "Directory of .mir files")->required();
  stats->add_option("--seed", stats_seed, "Input seed (SHADOWLAB_SEED overrides)");
  stats->add_option("--inputs", stats_inputs, "Inputs per program, 0 to skip runs")
      ->check(CLI::NonNegativeNumber);
  stats->add_flag("--json", json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*analyze) return cmd_analyze(file, json, out);
    if (*instrument) return cmd_instrument(file, mode, output, out);
    if (*run) return cmd_run(file, run_flags, out);
    if (*gen) return cmd_gen(gen_flags, out_dir, out);
    if (*verify) return cmd_verify(verify_flags, out, err);
    if (*stats) return cmd_stats(stats_dir, stats_seed, stats_inputs, json, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace shadowlab::cli
