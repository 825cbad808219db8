#include <benchmark/benchmark.h>

#include <vector>

#include "shadowlab/analysis.h"
#include "shadowlab/generator.h"
#include "shadowlab/safety.h"
#include "shadowlab/transform.h"
#include "shadowlab/vm.h"

namespace {

using namespace shadowlab;

std::vector<mir::Program> corpus(int functions) {
  gen::GenConfig cfg;
  cfg.seed = 42;
  cfg.min_functions = functions;
  cfg.max_functions = functions;
  cfg.recursion_probability = 0.3;
  std::vector<mir::Program> out;
  for (std::uint64_t i = 0; i < 32; ++i) out.push_back(gen::generate_program(cfg, i));
  return out;
}

void BM_Analysis(benchmark::State& state) {
  auto programs = corpus(static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(analysis::analyze_program(programs[i++ % programs.size()]));
  }
}
BENCHMARK(BM_Analysis)->Arg(4)->Arg(12);

void BM_RaSafety(benchmark::State& state) {
  auto programs = corpus(static_cast<int>(state.range(0)));
  std::vector<analysis::ProgramAnalysis> analyses;
  for (const auto& p : programs) analyses.push_back(analysis::analyze_program(p));
  std::size_t i = 0;
  for (auto _ : state) {
    const std::size_t k = i++ % programs.size();
    benchmark::DoNotOptimize(safety::calculate_ra_safety(programs[k], analyses[k]));
  }
}
BENCHMARK(BM_RaSafety)->Arg(4)->Arg(12);

void BM_Instrument(benchmark::State& state) {
  auto programs = corpus(8);
  const auto mode = transform::kAllModes[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(std::string(transform::to_string(mode)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(transform::instrument(programs[i++ % programs.size()], mode));
  }
}
BENCHMARK(BM_Instrument)->DenseRange(0, static_cast<int>(transform::kAllModes.size()) - 1);

void BM_Execute(benchmark::State& state) {
  auto programs = corpus(8);
  const auto mode = transform::kAllModes[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(std::string(transform::to_string(mode)));
  std::vector<transform::InstrumentedProgram> instrumented;
  for (const auto& p : programs) instrumented.push_back(transform::instrument(p, mode));
  gen::GenConfig cfg;
  cfg.seed = 42;
  auto inputs = gen::generate_inputs(cfg, 0, 4);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& ip = instrumented[i % instrumented.size()];
    benchmark::DoNotOptimize(vm::execute_checked(ip, inputs[i % inputs.size()], 200000));
    ++i;
  }
}
BENCHMARK(BM_Execute)->DenseRange(0, static_cast<int>(transform::kAllModes.size()) - 1);

}  // namespace

BENCHMARK_MAIN();
