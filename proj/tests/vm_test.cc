#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "shadowlab/parser.h"
#include "shadowlab/transform.h"
#include "shadowlab/vm.h"
#include "test_support.h"

namespace shadowlab {
namespace {

using transform::Mode;
using vm::EventKind;
using vm::OutcomeKind;

TEST(Vm, BenignFixtureACompletes) {
  auto p = testing::load_fixture("fixture_a.mir");
  vm::ExecInput in;
  in.registers[1] = 5;
  in.registers[2] = 9;
  auto r = vm::execute(p, in);
  EXPECT_EQ(r.outcome.kind, OutcomeKind::kCompleted);
  EXPECT_EQ(r.trace.counters.shadow_instructions, 0u);
  EXPECT_EQ(r.trace.counters.shadow_ops, 0u);
  // b runs twice and calls d twice each time.
  EXPECT_EQ(r.outcome.global_stores.size(), 4u);
  // 3 calls in a, 3 per run of b, 1 in c.
  EXPECT_EQ(testing::events_of(r.trace, EventKind::kCall).size(), 10u);
}

TEST(Vm, ArithmeticAndMemory) {
  auto p = mir::parse_program(
      "#global g\nfn main { b0: spadd -16 movi r1, 7 store.sp 8, r1 "
      "load.sp r2, 8 binop r2, r1 movi r3, 268435456 store.reg r3, r2 "
      "load.reg r0, r3 store.global g, r0 spadd 16 halt }");
  auto r = vm::execute(p, {});
  ASSERT_TRUE(r.outcome.completed());
  EXPECT_EQ(r.outcome.r0, 14u);
  ASSERT_EQ(r.outcome.global_stores.size(), 1u);
  EXPECT_EQ(r.outcome.global_stores[0].second, 14u);
}

TEST(Vm, DecisionsDriveBranches) {
  auto p = mir::parse_program(
      "fn main {\nb0: brc b1, b2\nb1: movi r0, 1\n halt\nb2: movi r0, 2\n halt }");
  vm::ExecInput in;
  in.decisions = {true};
  EXPECT_EQ(vm::execute(p, in).outcome.r0, 1u);
  in.decisions = {false};
  EXPECT_EQ(vm::execute(p, in).outcome.r0, 2u);
  in.decisions = {};
  EXPECT_EQ(vm::execute(p, in).outcome.r0, 2u);
}

TEST(Vm, BudgetExhaustion) {
  auto p = mir::parse_program("fn main {\nb0: br b1\nb1: brc b1, b2\nb2: halt }");
  vm::ExecInput in;
  in.decisions.assign(100, true);
  vm::ExecOptions opts;
  opts.budget = 50;
  EXPECT_EQ(vm::execute(p, in, opts).outcome.kind, OutcomeKind::kBudgetExhausted);
}

TEST(Vm, IndirectCall) {
  auto p = mir::parse_program(
      "#entry main\nfn main { b0: movi r4, 1 icall r4 halt }\n"
      "fn t { b0: movi r0, 77 ret }");
  auto r = vm::execute(p, {});
  ASSERT_TRUE(r.outcome.completed());
  EXPECT_EQ(r.outcome.r0, 77u);
}

TEST(Vm, CorruptionUndetectedWithoutInstrumentation) {
  auto p = testing::load_fixture("attack.mir");
  auto r = vm::execute(p, {});
  EXPECT_EQ(r.outcome.kind, OutcomeKind::kUndetectedCorruption);
  EXPECT_EQ(r.outcome.found, 3084u);
  EXPECT_EQ(r.outcome.expected & 0xFFFF000000000000ULL, vm::kCookieTag);
}

TEST(Vm, CorruptionAbortsAtPop) {
  auto p = testing::load_fixture("attack.mir");
  for (Mode m : {Mode::kFull, Mode::kSfe, Mode::kPo, Mode::kMo, Mode::kLight}) {
    auto ip = transform::instrument(p, m);
    auto r = vm::execute_checked(ip, {}, 1000);
    EXPECT_EQ(r.outcome.kind, OutcomeKind::kAborted) << transform::to_string(m);
    const auto victim = ip.program.index_of("victim");
    EXPECT_EQ(r.outcome.site.function, static_cast<std::int32_t>(*victim));
  }
  auto ip = transform::instrument(p, Mode::kFull);
  auto r = vm::execute_checked(ip, {}, 1000);
  auto pops = testing::events_of(r.trace, EventKind::kShadowPop);
  ASSERT_EQ(pops.size(), 1u);
  EXPECT_EQ(pops[0].count, -1);
}

TEST(Vm, ParentFrameCorruptionCaughtInAncestor) {
  auto p = mir::parse_program(
      "#entry main\n#adversarial true\nfn main { b0: call mid halt }\n"
      "fn mid { b0: call leaf ret }\n"
      "fn leaf { b0: corrupt 1, 2989 ret }");
  EXPECT_EQ(vm::execute(p, {}).outcome.kind, OutcomeKind::kUndetectedCorruption);
  auto ip = transform::instrument(p, Mode::kLight);
  auto r = vm::execute_checked(ip, {}, 1000);
  ASSERT_EQ(r.outcome.kind, OutcomeKind::kAborted);
  EXPECT_EQ(r.outcome.site.function,
            static_cast<std::int32_t>(*ip.program.index_of("mid")));
}

TEST(Vm, UnwindMatchesAfterK) {
  for (int k = 1; k <= 3; ++k) {
    auto p = testing::load_fixture("unwind_" + std::to_string(k) + ".mir");
    auto ip = transform::instrument(p, Mode::kFull);
    auto r = vm::execute_checked(ip, {}, 10000);
    ASSERT_EQ(r.outcome.kind, OutcomeKind::kCompleted) << k;
    auto pops = testing::events_of(r.trace, EventKind::kShadowPop);
    ASSERT_FALSE(pops.empty());
    EXPECT_EQ(pops.front().count, k);
    for (std::size_t i = 1; i < pops.size(); ++i) EXPECT_EQ(pops[i].count, 0);
    EXPECT_TRUE(r.trace.unwound);
    // The walk charges one unwind step per discarded entry.
    EXPECT_EQ(r.trace.counters.shadow_instructions,
              static_cast<std::uint64_t>(5 * 9 + (5 - k) * 11 + k * 8));
  }
}

TEST(Vm, RegisterFrameSlowPathUnwinds) {
  auto p = mir::parse_program(
      "#entry main\nfn main { b0: call a halt }\n"
      "fn a { b0: call b ret }\n"
      "fn b { b0: call c movi r0, 5 ret }\n"
      "fn c { b0: unwind 1 }");
  auto ip = transform::instrument(p, Mode::kMo);
  auto r = vm::execute_checked(ip, {}, 1000);
  ASSERT_TRUE(r.outcome.completed());
}

TEST(Vm, HeightChecksAgreeWithAnalysis) {
  auto p = testing::load_fixture("saves_then_reuse.mir");
  auto ip = transform::instrument(p, Mode::kLight);
  vm::ExecInput in;
  in.decisions = {true};
  auto r = vm::execute_checked(ip, in, 1000);
  ASSERT_TRUE(r.outcome.completed());
  int stores = 0;
  for (const auto& e : testing::events_of(r.trace, EventKind::kStore)) {
    if (e.analyzed.is_concrete()) {
      EXPECT_EQ(e.analyzed.offset(), e.height);
      ++stores;
    }
  }
  EXPECT_EQ(stores, 2);
  EXPECT_TRUE(r.trace.violations.empty());
}

TEST(Vm, HeightViolationIsReported) {
  // Analyses of a different frame layout.
  auto good = mir::parse_program("fn main { b0: spadd -16 store.sp 8 spadd 16 halt }");
  auto bad = mir::parse_program("fn main { b0: spadd -8 store.sp 8 spadd 8 halt }");
  auto analyses = analysis::analyze_program(good);
  vm::ExecOptions opts;
  opts.analysis = &analyses;
  auto r = vm::execute(bad, {}, opts);
  ASSERT_FALSE(r.trace.violations.empty());
  EXPECT_EQ(r.trace.violations[0].kind, vm::ViolationKind::kHeight);
}

TEST(Vm, ShadowStackUnderflowAborts) {
  auto p = mir::parse_program("fn main { b0: spop halt }");
  auto r = vm::execute(p, {});
  EXPECT_EQ(r.outcome.kind, OutcomeKind::kAborted);
}

TEST(Vm, TraceSerialization) {
  auto p = testing::load_fixture("fixture_b.mir");
  auto ip = transform::instrument(p, Mode::kPo);
  vm::ExecInput in;
  in.decisions = {true, true, false};
  auto r = vm::execute_checked(ip, in, 1000);
  auto text = vm::trace_to_text(ip.program, r);
  EXPECT_NE(text.find("spush"), std::string::npos);
  EXPECT_NE(text.find("outcome completed"), std::string::npos);
  auto j = nlohmann::json::parse(vm::trace_to_json(ip.program, r));
  EXPECT_EQ(j["outcome"]["kind"], "completed");
  EXPECT_FALSE(j["events"].empty());
}

TEST(Vm, ParseDecisions) {
  EXPECT_EQ(vm::parse_decisions("1,0 1"), (std::vector<bool>{true, false, true}));
  EXPECT_EQ(vm::parse_decisions("t f"), (std::vector<bool>{true, false}));
  EXPECT_TRUE(vm::parse_decisions("").empty());
  EXPECT_THROW(vm::parse_decisions("2"), std::invalid_argument);
}

TEST(Vm, Deterministic) {
  auto p = testing::load_fixture("fixture_a.mir");
  auto ip = transform::instrument(p, Mode::kLight);
  vm::ExecInput in;
  in.registers[1] = 3;
  EXPECT_EQ(vm::trace_to_text(ip.program, vm::execute_checked(ip, in, 1000)),
            vm::trace_to_text(ip.program, vm::execute_checked(ip, in, 1000)));
}

}  // namespace
}  // namespace shadowlab
