#include "shadowlab/safety.h"

#include <algorithm>
#include <deque>

#include "shadowlab/graph.h"

namespace shadowlab::safety {

using mir::Instr;
using mir::Opcode;

SafetyValue SafetyResult::block(std::string_view fn, BlockId id) const {
  auto it = block_values.find({std::string(fn), id});
  return it == block_values.end() ? SafetyValue::kBottom : it->second;
}

SafetyValue SafetyResult::function(std::string_view fn) const {
  auto it = fn_values.find(fn);
  return it == fn_values.end() ? SafetyValue::kBottom : it->second;
}

SafetyValue write_safety(const Instr& instr,
                         const analysis::InstrHeights& heights) {
  if (instr.op == Opcode::kStoreGlobal) return SafetyValue::kTrue;
  return analysis::is_safe_height(heights.dest) ? SafetyValue::kTrue
                                                : SafetyValue::kFalse;
}

namespace {

template <typename CalleeValue>
SafetyValue flow_block_impl(const mir::Block& block,
                            const analysis::HeightMap& heights, SafetyValue d,
                            CalleeValue&& callee_value) {
  SafetyValue out = d;
  for (std::size_t i = 0; i < block.instrs.size(); ++i) {
    const Instr& instr = block.instrs[i];
    if (mir::is_store(instr.op)) {
      out = join(out, write_safety(instr, heights.at(block.id, i)));
    } else if (instr.op == Opcode::kCall) {
      out = join(out, callee_value(instr.sym));
    } else if (instr.op == Opcode::kICall) {
      out = join(out, SafetyValue::kFalse);
    }
  }
  return out;
}

}  // namespace

SafetyValue flow_block(const mir::Block& block,
                       const analysis::HeightMap& heights, SafetyValue d,
                       const FunctionValues& fn_values) {
  return flow_block_impl(block, heights, d, [&](const std::string& callee) {
    auto it = fn_values.find(callee);
    return it == fn_values.end() ? SafetyValue::kFalse : it->second;
  });
}

SccDag condense_sccs(const mir::CallGraph& graph) {
  SccDag dag;
  std::map<std::string, int, std::less<>> index;
  for (const auto& name : graph.nodes) {
    index.emplace(name, static_cast<int>(index.size()));
  }
  std::vector<std::string> names(index.size());
  for (const auto& [name, i] : index) names[i] = name;

  Adjacency succ(index.size());
  for (const auto& [caller, callee] : graph.direct_edges) {
    auto a = index.find(caller);
    auto b = index.find(callee);
    if (a != index.end() && b != index.end()) succ[a->second].push_back(b->second);
  }
  for (auto& s : succ) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }

  for (const auto& component : tarjan_scc(succ)) {
    std::vector<std::string> members;
    for (int node : component) members.push_back(names[node]);
    std::sort(members.begin(), members.end());
    int id = static_cast<int>(dag.components.size());
    for (const auto& m : members) dag.component_of[m] = id;
    dag.components.push_back(std::move(members));
  }
  dag.edges.resize(dag.components.size());
  for (const auto& [caller, callee] : graph.direct_edges) {
    auto a = dag.component_of.find(caller);
    auto b = dag.component_of.find(callee);
    if (a == dag.component_of.end() || b == dag.component_of.end()) continue;
    if (a->second != b->second) dag.edges[a->second].insert(b->second);
  }

  // Tarjan emits callees first, so one pass computes each component's
  // distance from the leaves.
  std::vector<int> level(dag.components.size(), 0);
  for (std::size_t c = 0; c < dag.components.size(); ++c) {
    for (int callee : dag.edges[c]) {
      level[c] = std::max(level[c], level[callee] + 1);
    }
  }
  dag.postorder.resize(dag.components.size());
  for (std::size_t c = 0; c < dag.components.size(); ++c) {
    dag.postorder[c] = static_cast<int>(c);
  }
  std::sort(dag.postorder.begin(), dag.postorder.end(), [&](int a, int b) {
    if (level[a] != level[b]) return level[a] < level[b];
    return dag.components[a].front() < dag.components[b].front();
  });
  return dag;
}

SafetyResult calculate_ra_safety(const mir::Program& program,
                                 const analysis::ProgramAnalysis& analyses) {
  SafetyResult result;
  for (const mir::Function& fn : program.functions) {
    result.fn_values[fn.name] = SafetyValue::kBottom;
    for (const auto& [id, block] : fn.blocks) {
      result.block_values[{fn.name, id}] = SafetyValue::kBottom;
    }
  }

  // Call-site blocks per callee: the inter-procedural predecessors that must
  // be revisited when any block of the callee changes.
  std::map<std::string, std::vector<BlockKey>, std::less<>> call_sites;
  for (const mir::Function& fn : program.functions) {
    for (const auto& [id, block] : fn.blocks) {
      for (const auto& target : mir::call_targets(block)) {
        if (!target.indirect) call_sites[target.callee].push_back({fn.name, id});
      }
    }
  }

  const SccDag dag = condense_sccs(mir::build_call_graph(program));
  for (int component : dag.postorder) {
    const auto& members = dag.components[component];
    auto in_component = [&](std::string_view name) {
      return std::binary_search(members.begin(), members.end(), name);
    };
    // Callees inside the component are still moving: read them as the join
    // of their current block values. Finished callees use their final value.
    auto callee_value = [&](const std::string& callee) {
      const mir::Function* fn = program.find(callee);
      if (fn == nullptr) return SafetyValue::kFalse;
      SafetyValue v = result.fn_values.at(callee);
      if (in_component(callee)) {
        for (const auto& [id, block] : fn->blocks) {
          v = join(v, result.block_values.at({callee, id}));
        }
      }
      return v;
    };

    std::deque<BlockKey> work;
    std::set<BlockKey> queued;
    for (const auto& name : members) {
      for (const auto& [id, block] : program.find(name)->blocks) {
        work.push_back({name, id});
        queued.insert({name, id});
      }
    }
    while (!work.empty()) {
      BlockKey key = work.front();
      work.pop_front();
      queued.erase(key);
      const mir::Function& fn = *program.find(key.first);
      SafetyValue& slot = result.block_values.at(key);
      SafetyValue updated =
          flow_block_impl(fn.blocks.at(key.second),
                          analyses.at(key.first).heights, slot, callee_value);
      if (updated == slot) continue;
      slot = updated;
      auto sites = call_sites.find(key.first);
      if (sites == call_sites.end()) continue;
      for (const BlockKey& site : sites->second) {
        if (in_component(site.first) && queued.insert(site).second) {
          work.push_back(site);
        }
      }
    }

    for (const auto& name : members) {
      const mir::Function& fn = *program.find(name);
      const auto& heights = analyses.at(name).heights;
      SafetyValue v = result.fn_values.at(name);
      for (const auto& [id, block] : fn.blocks) {
        v = join(v, flow_block_impl(block, heights,
                                    result.block_values.at({name, id}),
                                    callee_value));
      }
      result.fn_values[name] = v;
    }
  }
  return result;
}

}  // namespace shadowlab::safety
