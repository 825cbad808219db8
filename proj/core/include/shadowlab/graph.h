// graph.h
//
// Strongly connected components over small dense-index graphs, shared by the
// call-graph condensation and the safe-path counter.
#ifndef SHADOWLAB_GRAPH_H_
#define SHADOWLAB_GRAPH_H_

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

namespace shadowlab {

using Adjacency = std::vector<std::vector<int>>;

// Tarjan's algorithm, iterative. Components are emitted in reverse
// topological order: a component appears after every component it reaches.
// Nodes are visited in index order and successors in adjacency order, so the
// output is deterministic.
inline std::vector<std::vector<int>> tarjan_scc(const Adjacency& succ) {
  const int n = static_cast<int>(succ.size());
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  std::vector<std::vector<int>> components;
  int counter = 0;

  struct Frame {
    int node;
    std::size_t next_edge;
  };
  std::vector<Frame> call;

  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& top = call.back();
      const int v = top.node;
      if (top.next_edge < succ[v].size()) {
        const int w = succ[v][top.next_edge++];
        if (index[w] == -1) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        std::vector<int> component;
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          component.push_back(w);
        } while (w != v);
        std::sort(component.begin(), component.end());
        components.push_back(std::move(component));
      }
      call.pop_back();
      if (!call.empty()) {
        int parent = call.back().node;
        low[parent] = std::min(low[parent], low[v]);
      }
    }
  }
  return components;
}

}  // namespace shadowlab

#endif  // SHADOWLAB_GRAPH_H_
