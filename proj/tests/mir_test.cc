#include <gtest/gtest.h>

#include <set>
#include <string>

#include "shadowlab/generator.h"
#include "shadowlab/mir.h"
#include "shadowlab/parser.h"
#include "shadowlab/validate.h"
#include "test_support.h"

namespace shadowlab {
namespace {

using mir::Opcode;
using mir::parse_program;
using mir::validate_program;

std::set<std::string> reasons(const mir::Program& p) {
  std::set<std::string> out;
  for (const auto& d : validate_program(p)) out.insert(d.reason);
  return out;
}

TEST(Parser, MinimalProgram) {
  mir::Program p = parse_program("fn main { b0: halt }");
  ASSERT_EQ(p.functions.size(), 1u);
  EXPECT_EQ(p.functions[0].blocks.size(), 1u);
  EXPECT_EQ(p.entry, "main");
  EXPECT_TRUE(validate_program(p).empty());
}

TEST(Parser, FixtureAShape) {
  mir::Program p = testing::load_fixture("fixture_a.mir");
  EXPECT_EQ(p.functions.size(), 6u);
  int call_sites = 0;
  for (const auto& fn : p.functions)
    for (const auto& [id, b] : fn.blocks)
      for (const auto& in : b.instrs) call_sites += in.op == Opcode::kCall;
  EXPECT_EQ(call_sites, 7);
  EXPECT_TRUE(validate_program(p).empty());
}

TEST(Parser, DanglingTarget) {
  try {
    parse_program("fn main { b0: br b9 }");
    FAIL() << "expected ParseError";
  } catch (const mir::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown block b9"), std::string::npos);
  }
}

TEST(Parser, SyntaxErrorHasPosition) {
  try {
    parse_program("fn main {\nb0:\n  movi r1\n}");
    FAIL() << "expected ParseError";
  } catch (const mir::ParseError& e) {
    // Reported at the token where the operand was expected.
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(Parser, RoundTripFixtures) {
  for (const char* name : {"fixture_a.mir", "fixture_b.mir", "saves_then_reuse.mir",
                           "unwind_2.mir", "attack.mir"}) {
    mir::Program p = testing::load_fixture(name);
    mir::Program again = parse_program(mir::print_program(p));
    EXPECT_EQ(p, again) << name;
    EXPECT_EQ(mir::fingerprint(p), mir::fingerprint(again)) << name;
  }
}

TEST(Parser, RoundTripGenerated) {
  gen::GenConfig cfg;
  cfg.attack_density = 0.5;
  for (std::uint64_t i = 0; i < 200; ++i) {
    mir::Program p = gen::generate_program(cfg, i);
    EXPECT_EQ(parse_program(mir::print_program(p)), p) << i;
  }
}

TEST(Parser, ShadowOpsRoundTrip) {
  mir::Program p = parse_program(
      "fn main {\nb0:\n  spush.d -16\n  rfpush r9\n  brc b2000, b1\n"
      "b1:\n  rfpop r9\n  spop 8\n  halt\nb2000:\n  spush 0, b1\n}");
  EXPECT_EQ(parse_program(mir::print_program(p)), p);
  const auto& b0 = p.functions[0].blocks.at(0);
  EXPECT_TRUE(b0.instrs[0].dead_scratch);
  EXPECT_EQ(b0.instrs[0].imm, -16);
  EXPECT_TRUE(p.functions[0].blocks.at(2000).instrs[0].is_edge_push());
}

TEST(Validate, MidBlockTransfer) {
  mir::Program p = parse_program("fn main { b0: ret movi r1, 2 }");
  EXPECT_TRUE(reasons(p).count("mid-block control transfer"));
}

TEST(Validate, CorruptInBenignProgram) {
  mir::Program p = parse_program("fn main { b0: corrupt 0, 5 halt }");
  EXPECT_TRUE(reasons(p).count("adversarial instruction in benign program"));
  p.adversarial = true;
  EXPECT_TRUE(validate_program(p).empty());
}

TEST(Validate, ShadowOpsNeedOption) {
  mir::Program p = parse_program("fn main { b0: spush 0 spop halt }");
  EXPECT_FALSE(validate_program(p).empty());
  mir::ValidateOptions opts;
  opts.allow_shadow_ops = true;
  EXPECT_TRUE(validate_program(p, opts).empty());
}

TEST(Validate, UnreachableBlock) {
  mir::Program p = parse_program("fn main { b0: halt b1: halt }");
  EXPECT_TRUE(reasons(p).count("unreachable block"));
}

TEST(Validate, BranchToEntry) {
  mir::Program p = parse_program("fn main { b0: brc b0, b1 b1: halt }");
  EXPECT_TRUE(reasons(p).count("branch to the entry block"));
}

TEST(Validate, ReservedBlockIds) {
  mir::Program p = parse_program("fn main { b0: br b1000 b1000: halt }");
  EXPECT_TRUE(reasons(p).count("block id out of range"));
}

TEST(Validate, UndeclaredGlobal) {
  mir::Program p = parse_program("fn main { b0: store.global gx halt }");
  EXPECT_TRUE(reasons(p).count("undeclared global gx"));
}

TEST(CallGraph, FixtureAEdges) {
  mir::CallGraph g = mir::build_call_graph(testing::load_fixture("fixture_a.mir"));
  std::set<std::pair<std::string, std::string>> want = {
      {"a", "b"}, {"a", "c"}, {"b", "d"}, {"b", "e"}, {"c", "f"}};
  EXPECT_EQ(g.direct_edges, want);
  EXPECT_EQ(g.nodes.size(), 6u);
}

TEST(CallGraph, HaltOnlyIsIsolated) {
  mir::CallGraph g = mir::build_call_graph(parse_program("fn main { b0: halt }"));
  EXPECT_EQ(g.nodes, std::vector<std::string>{"main"});
  EXPECT_TRUE(g.direct_edges.empty());
}

TEST(CallGraph, MutualRecursionKeepsCycle) {
  mir::CallGraph g = mir::build_call_graph(parse_program(
      "#entry f\nfn f { b0: call g ret }\nfn g { b0: call f ret }"));
  std::set<std::pair<std::string, std::string>> want = {{"f", "g"}, {"g", "f"}};
  EXPECT_EQ(g.direct_edges, want);
}

TEST(CallGraph, IndirectCallsRecorded) {
  mir::CallGraph g = mir::build_call_graph(
      parse_program("fn main { b0: movi r2, 0 icall r2 halt }"));
  EXPECT_TRUE(g.has_indirect_call.count("main"));
}

TEST(Fingerprint, SensitiveToInstructions) {
  mir::Program a = parse_program("fn main { b0: movi r1, 1 halt }");
  mir::Program b = parse_program("fn main { b0: movi r1, 2 halt }");
  EXPECT_NE(mir::fingerprint(a), mir::fingerprint(b));
}

}  // namespace
}  // namespace shadowlab
