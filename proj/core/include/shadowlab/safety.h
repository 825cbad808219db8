// safety.h
//
// Return-address safety: a block is safe when none of its writes can reach a
// return address and none of its direct callees is unsafe; a function is safe
// when all of its blocks are. Indirect calls are always unsafe. Values are
// propagated bottom-up over the condensed call graph with a per-component
// worklist.
#ifndef SHADOWLAB_SAFETY_H_
#define SHADOWLAB_SAFETY_H_

#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shadowlab/analysis.h"
#include "shadowlab/lattice.h"
#include "shadowlab/mir.h"

namespace shadowlab::safety {

using mir::BlockId;

using BlockKey = std::pair<std::string, BlockId>;
using FunctionValues = std::map<std::string, SafetyValue, std::less<>>;

struct SafetyResult {
  std::map<BlockKey, SafetyValue> block_values;
  FunctionValues fn_values;

  SafetyValue block(std::string_view fn, BlockId id) const;
  SafetyValue function(std::string_view fn) const;
  bool ra_safe_fn(std::string_view fn) const {
    return is_ra_safe(function(fn));
  }
  bool ra_safe_block(std::string_view fn, BlockId id) const {
    return is_ra_safe(block(fn, id));
  }

  bool operator==(const SafetyResult&) const = default;
};

// Contribution of one store: True when it provably misses every return
// address (safe stack slot or global), False otherwise.
SafetyValue write_safety(const mir::Instr& instr,
                         const analysis::InstrHeights& heights);

// F_bb: d joined with the safety of every write in the block and the current
// value of every direct callee. Callees missing from `fn_values` are treated
// as unsafe; an indirect call joins False.
SafetyValue flow_block(const mir::Block& block,
                       const analysis::HeightMap& heights, SafetyValue d,
                       const FunctionValues& fn_values);

struct SccDag {
  std::vector<std::vector<std::string>> components;
  std::vector<std::set<int>> edges;  // caller component -> callee components
  // Every component appears after all components it calls.
  std::vector<int> postorder;
  std::map<std::string, int, std::less<>> component_of;
};

// Components are ordered bottom-up by their distance from the leaves of the
// condensation, ties broken by the smallest member name.
SccDag condense_sccs(const mir::CallGraph& graph);

SafetyResult calculate_ra_safety(const mir::Program& program,
                                 const analysis::ProgramAnalysis& analyses);

}  // namespace shadowlab::safety

#endif  // SHADOWLAB_SAFETY_H_
