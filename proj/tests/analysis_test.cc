#include <gtest/gtest.h>

#include <bit>

#include "shadowlab/analysis.h"
#include "shadowlab/generator.h"
#include "shadowlab/parser.h"
#include "test_support.h"

namespace shadowlab {
namespace {

using analysis::WriteClass;

mir::Function only_function(const std::string& text) {
  return mir::parse_program(text).functions.at(0);
}

TEST(StackHeights, StoreBelowFrame) {
  auto fn = only_function("fn main { b0: spadd -16 store.sp 8 halt }");
  auto h = analysis::stack_heights(fn);
  EXPECT_EQ(h.at(0, 1).dest, HeightValue::Concrete(-8));
  EXPECT_EQ(h.at(0, 1).sp, HeightValue::Concrete(-16));
}

TEST(StackHeights, OffsetsCancelAtReturnAddress) {
  auto fn = only_function("fn main { b0: spadd -16 store.sp 16 halt }");
  EXPECT_EQ(analysis::stack_heights(fn).at(0, 1).dest, HeightValue::Concrete(0));
}

TEST(StackHeights, GrowingLoopGoesToTop) {
  auto fn = only_function(
      "fn main {\nb0: br b1\nb1: spadd -8\n brc b1, b2\nb2: store.sp 0\n ret }");
  auto h = analysis::stack_heights(fn);
  EXPECT_TRUE(h.at(2, 0).sp.is_top());
  EXPECT_TRUE(h.at(2, 0).dest.is_top());
}

TEST(StackHeights, RegisterHeightsThroughLea) {
  auto fn = only_function(
      "fn main { b0: spadd -24 lea.sp r3, 8 store.reg r3 spadd 24 ret }");
  auto h = analysis::stack_heights(fn);
  EXPECT_EQ(h.at(0, 2).regs[3], HeightValue::Concrete(-16));
  EXPECT_EQ(h.at(0, 2).dest, HeightValue::Concrete(-16));
}

TEST(StackHeights, LaunderedPointerIsTop) {
  auto fn = only_function(
      "fn main { b0: spadd -24 lea.sp r3, 8 movi r4, 0 binop r3, r4 "
      "store.reg r3 spadd 24 ret }");
  EXPECT_TRUE(analysis::stack_heights(fn).at(0, 4).dest.is_top());
}

TEST(StackHeights, MergeOfDifferentHeights) {
  auto fn = only_function(
      "fn main {\nb0: brc b1, b2\nb1: spadd -8\n br b3\nb2: spadd -16\n br b3\n"
      "b3: store.sp 0\n ret }");
  auto h = analysis::stack_heights(fn);
  EXPECT_TRUE(h.at(3, 0).sp.is_top());
}

TEST(StackHeights, SpMovFromSavedFrame) {
  auto fn = only_function(
      "fn main { b0: spadd -16 lea.sp r13, 0 spadd -8 spmov r13 store.sp 8 "
      "spadd 16 ret }");
  auto h = analysis::stack_heights(fn);
  EXPECT_EQ(h.at(0, 4).sp, HeightValue::Concrete(-16));
}

TEST(IsSafeHeight, Boundaries) {
  EXPECT_TRUE(analysis::is_safe_height(HeightValue::Concrete(-8)));
  EXPECT_TRUE(analysis::is_safe_height(HeightValue::Concrete(-64)));
  EXPECT_FALSE(analysis::is_safe_height(HeightValue::Concrete(0)));
  EXPECT_FALSE(analysis::is_safe_height(HeightValue::Concrete(-4)));
  EXPECT_FALSE(analysis::is_safe_height(HeightValue::Concrete(8)));
  EXPECT_FALSE(analysis::is_safe_height(HeightValue::Top()));
}

TEST(ClassifyWrites, Categories) {
  auto fn = only_function(
      "#global g0\nfn main { b0: spadd -16 store.sp 8 store.sp 16 "
      "store.global g0 movi r1, 268435456 store.reg r1 spadd 16 ret }");
  auto h = analysis::stack_heights(fn);
  auto w = analysis::classify_writes(fn, h);
  EXPECT_EQ(w.at(0, 1), WriteClass::kSafeStack);
  EXPECT_EQ(w.at(0, 2), WriteClass::kUnsafe);
  EXPECT_EQ(w.at(0, 3), WriteClass::kGlobal);
  EXPECT_EQ(w.at(0, 5), WriteClass::kUnsafe);
  EXPECT_EQ(w.summary.stack, 1u);
  EXPECT_EQ(w.summary.global, 1u);
  EXPECT_EQ(w.summary.unsafe, 2u);
  EXPECT_DOUBLE_EQ(w.summary.global_pct(), 25.0);
}

TEST(Liveness, DefBeforeUse) {
  auto fn = only_function("#global g\nfn main { b0: movi r1, 5 store.global g ret }");
  auto l = analysis::dead_registers(fn);
  EXPECT_FALSE(l.live_before(0, 0) & (1u << 1));
  EXPECT_FALSE(l.live_before(0, 2) & (1u << 1));
}

TEST(Liveness, EmptyFunction) {
  auto fn = only_function("fn main { b0: ret }");
  EXPECT_EQ(analysis::dead_registers(fn).dead_count(0, 0), 15);
}

TEST(Liveness, SavesThenReuse) {
  auto p = testing::load_fixture("saves_then_reuse.mir");
  const auto& fn = *p.find("saves");
  auto l = analysis::dead_registers(fn);
  EXPECT_EQ(l.dead_count(0, 0), 0);
  EXPECT_EQ(l.dead_count(0, 3), 2);
  EXPECT_EQ(l.dead_registers_at(0, 3), (std::vector<mir::Reg>{1, 2}));
}

// The fixpoint agrees with a per-register path search on generated code.
TEST(Liveness, MatchesPathSearch) {
  gen::GenConfig cfg;
  cfg.seed = 11;
  cfg.attack_density = 0.3;
  int checked = 0;
  for (std::uint64_t i = 0; i < 60; ++i) {
    mir::Program p = gen::generate_program(cfg, i);
    for (const auto& fn : p.functions) {
      auto l = analysis::dead_registers(fn);
      for (const auto& [id, block] : fn.blocks) {
        for (std::size_t k = 0; k < block.instrs.size(); ++k) {
          ASSERT_EQ(l.live_before(id, k), testing::search_live_before(fn, id, k))
              << "program " << i << " " << fn.name << ".b" << id << "[" << k << "]";
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(AnalyzeProgram, CoversEveryFunction) {
  auto p = testing::load_fixture("fixture_a.mir");
  auto a = analysis::analyze_program(p);
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(a.at("f").writes.summary.unsafe, 1u);
  EXPECT_EQ(a.at("e").writes.summary.stack, 1u);
}

}  // namespace
}  // namespace shadowlab
