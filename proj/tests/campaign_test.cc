#include <gtest/gtest.h>

#include "shadowlab/campaign.h"
#include "shadowlab/generator.h"
#include "shadowlab/parser.h"
#include "shadowlab/report.h"
#include "test_support.h"

namespace shadowlab {
namespace {

using transform::Mode;

bool has_corrupt(const mir::Program& p) {
  for (const auto& fn : p.functions)
    for (const auto& [id, b] : fn.blocks)
      for (const auto& in : b.instrs)
        if (in.op == mir::Opcode::kCorrupt) return true;
  return false;
}

TEST(Generator, Deterministic) {
  gen::GenConfig cfg;
  cfg.attack_density = 0.5;
  for (std::uint64_t i = 0; i < 10; ++i) {
    EXPECT_EQ(mir::print_program(gen::generate_program(cfg, i)),
              mir::print_program(gen::generate_program(cfg, i)));
  }
  cfg.seed = 2;
  EXPECT_NE(mir::print_program(gen::generate_program(cfg, 0)),
            mir::print_program(gen::generate_program(gen::GenConfig{}, 0)));
}

TEST(Generator, NoAttacksAtDensityZero) {
  gen::GenConfig cfg;
  for (std::uint64_t i = 0; i < 200; ++i) {
    auto p = gen::generate_program(cfg, i);
    EXPECT_FALSE(p.adversarial);
    EXPECT_FALSE(has_corrupt(p)) << i;
  }
}

TEST(Generator, DensityHalf) {
  gen::GenConfig cfg;
  cfg.attack_density = 0.5;
  int adversarial = 0;
  for (std::uint64_t i = 0; i < 400; ++i) {
    auto p = gen::generate_program(cfg, i);
    adversarial += p.adversarial;
    if (p.adversarial) {
      EXPECT_TRUE(has_corrupt(p)) << i;
    }
  }
  EXPECT_GT(adversarial, 160);
  EXPECT_LT(adversarial, 240);
}

TEST(Generator, RespectsBounds) {
  gen::GenConfig cfg;
  cfg.max_functions = 5;
  cfg.max_blocks = 3;
  for (std::uint64_t i = 0; i < 100; ++i) {
    auto p = gen::generate_program(cfg, i);
    EXPECT_LE(p.functions.size(), 5u);
    EXPECT_GE(p.functions.size(), 3u);
  }
}

TEST(Generator, MixesSafeAndUnsafeFunctions) {
  gen::GenConfig cfg;
  std::size_t safe = 0;
  std::size_t total = 0;
  std::size_t with_safe_path = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    auto p = gen::generate_program(cfg, i);
    auto s = safety::calculate_ra_safety(p, analysis::analyze_program(p));
    for (const auto& fn : p.functions) {
      ++total;
      if (s.ra_safe_fn(fn.name)) {
        ++safe;
      } else if (transform::count_safe_paths(fn, s) > 0) {
        ++with_safe_path;
      }
    }
  }
  EXPECT_GT(safe, total / 5);
  EXPECT_GT(with_safe_path, 0u);
}

TEST(Generator, InputsAreDeterministic) {
  gen::GenConfig cfg;
  auto a = gen::generate_inputs(cfg, 3, 5);
  auto b = gen::generate_inputs(cfg, 3, 5);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].decisions, b[i].decisions);
    EXPECT_EQ(a[i].registers, b[i].registers);
  }
  EXPECT_EQ(gen::program_file_name(7), "prog_0007.mir");
}

TEST(Campaign, BenignCorpusHasNoAborts) {
  gen::GenConfig cfg;
  cfg.seed = 4;
  auto report = campaign::run_campaign(campaign::build_corpus(cfg, 80, 4));
  EXPECT_EQ(report.benign_aborts, 0u);
  EXPECT_EQ(report.adversarial_executions, 0u);
  for (const auto& [mode, s] : report.per_mode) EXPECT_EQ(s.aborted, 0u);
  for (const auto& r : campaign::evaluate(report)) EXPECT_TRUE(r.passed) << r.name;
}

TEST(Campaign, AdversarialCorpus) {
  gen::GenConfig cfg;
  cfg.seed = 8;
  cfg.attack_density = 1.0;
  auto report = campaign::run_campaign(campaign::build_corpus(cfg, 80, 4));
  EXPECT_GT(report.adversarial_executions, 0u);
  EXPECT_EQ(report.undetected, 0u);
  EXPECT_GT(report.control_undetected, 0u);
  EXPECT_DOUBLE_EQ(report.detection_rate(), 1.0);
  for (const auto& r : campaign::evaluate(report)) EXPECT_TRUE(r.passed) << r.name;
}

TEST(Campaign, LightOnlyDetectsEverything) {
  gen::GenConfig cfg;
  cfg.seed = 12;
  cfg.attack_density = 1.0;
  campaign::CampaignOptions opts;
  opts.modes = {Mode::kLight};
  auto report = campaign::run_campaign(campaign::build_corpus(cfg, 60, 4), opts);
  EXPECT_EQ(report.invariants.at(campaign::kDetection).violations, 0u);
  EXPECT_GT(report.invariants.at(campaign::kDetection).checked, 0u);
}

TEST(Campaign, ReportJsonShape) {
  gen::GenConfig cfg;
  cfg.attack_density = 0.5;
  auto report = campaign::run_campaign(campaign::build_corpus(cfg, 10, 2));
  auto j = report.to_json();
  EXPECT_EQ(j["cases"], 10);
  for (const char* key : {"detected", "undetected", "per_mode", "invariants"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  for (const char* key : {"shadow_instr", "total_instr", "overhead_ratio"}) {
    EXPECT_TRUE(j["per_mode"]["FULL"].contains(key)) << key;
  }
  EXPECT_EQ(j.dump(), campaign::run_campaign(campaign::build_corpus(cfg, 10, 2))
                          .to_json()
                          .dump());
}

TEST(Report, FixtureAAnalyzeJson) {
  auto j = report::analyze_json(testing::load_fixture("fixture_a.mir"));
  EXPECT_EQ(j["functions"]["a"], "unsafe");
  EXPECT_EQ(j["functions"]["b"], "safe");
  EXPECT_EQ(j["functions"]["c"], "unsafe");
  EXPECT_EQ(j["blocks"]["f.b0"], "unsafe");
  // Canonical key order survives a re-serialization.
  EXPECT_EQ(nlohmann::json::parse(j.dump()).dump(), j.dump());
}

TEST(Report, FixtureBSafePaths) {
  auto j = report::analyze_json(testing::load_fixture("fixture_b.mir"));
  EXPECT_EQ(j["blocks"]["walk.b4"], "unsafe");
  EXPECT_EQ(j["blocks"]["walk.b3"], "safe");
  EXPECT_EQ(j["safe_paths"]["walk"], 2);
}

TEST(Report, AllGlobalWrites) {
  auto p = mir::parse_program(
      "#global g0 g1\nfn main { b0: store.global g0 store.global g1 halt }");
  auto s = report::static_stats(p);
  EXPECT_DOUBLE_EQ(s.writes.global_pct(), 100.0);
  EXPECT_EQ(s.writes.total(), 2u);
}

TEST(Report, CategoriesAreDisjoint) {
  gen::GenConfig cfg;
  report::StatsReport total;
  for (std::uint64_t i = 0; i < 100; ++i) total += report::static_stats(gen::generate_program(cfg, i));
  const auto& f = total.functions;
  EXPECT_LE(f.sfe + f.spe + f.rf, f.functions);
  EXPECT_NEAR(f.total_pct(), f.sfe_pct() + f.spe_pct() + f.rf_pct(), 1e-9);
  EXPECT_GT(f.sfe, 0u);
  EXPECT_GT(f.spe, 0u);
  EXPECT_GT(f.rf, 0u);
  EXPECT_EQ(total.programs, 100u);
}

}  // namespace
}  // namespace shadowlab
