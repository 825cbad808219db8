// Shared helpers for the test binaries: fixture loading and reference
// implementations that recompute analysis results in a different way.
#ifndef SHADOWLAB_TESTS_TEST_SUPPORT_H_
#define SHADOWLAB_TESTS_TEST_SUPPORT_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shadowlab/analysis.h"
#include "shadowlab/lattice.h"
#include "shadowlab/mir.h"
#include "shadowlab/vm.h"

namespace shadowlab::testing {

std::string fixture_path(std::string_view name);
std::string read_fixture(std::string_view name);
mir::Program load_fixture(std::string_view name);

// Chaotic iteration of the block/function safety equations: every block is
// re-evaluated in a shuffled order until nothing changes.
struct OracleSafety {
  std::map<std::pair<std::string, mir::BlockId>, SafetyValue> blocks;
  std::map<std::string, SafetyValue> functions;
};
OracleSafety chaotic_ra_safety(const mir::Program& program,
                               const analysis::ProgramAnalysis& analyses,
                               std::uint64_t shuffle_seed);

// Counts entry-rooted paths to exits in the condensed safe subgraph by
// explicit enumeration. SCCs come from a transitive-closure matrix.
std::size_t enumerate_safe_paths(const mir::Function& fn,
                                 const std::function<bool(mir::BlockId)>& safe,
                                 std::size_t cap);

// Live registers before (block, index) by searching forward along every
// path for a use that is not preceded by a definition.
std::uint16_t search_live_before(const mir::Function& fn, mir::BlockId block,
                                 std::size_t index);

// Arbitrary call graphs (self calls, mutual recursion, indirect calls) with
// a mix of safe and unsafe stores; not meant to be executed.
mir::Program random_callgraph_program(std::uint64_t seed, int max_functions);

std::vector<vm::Event> events_of(const vm::Trace& trace, vm::EventKind kind);

// Counts shadow pseudo instructions in a function.
int count_shadow_ops(const mir::Function& fn);

}  // namespace shadowlab::testing

#endif  // SHADOWLAB_TESTS_TEST_SUPPORT_H_
