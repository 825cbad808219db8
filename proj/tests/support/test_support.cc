#include "test_support.h"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "shadowlab/parser.h"
#include "shadowlab/validate.h"

#ifndef SHADOWLAB_FIXTURE_DIR
#error "SHADOWLAB_FIXTURE_DIR must be defined"
#endif

namespace shadowlab::testing {

using mir::BlockId;
using mir::Instr;
using mir::Opcode;

std::string fixture_path(std::string_view name) {
  return std::string(SHADOWLAB_FIXTURE_DIR) + "/" + std::string(name);
}

std::string read_fixture(std::string_view name) {
  std::ifstream in(fixture_path(name));
  if (!in) throw std::runtime_error("missing fixture " + std::string(name));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

mir::Program load_fixture(std::string_view name) {
  return mir::parse_program(read_fixture(name));
}

OracleSafety chaotic_ra_safety(const mir::Program& program,
                               const analysis::ProgramAnalysis& analyses,
                               std::uint64_t shuffle_seed) {
  OracleSafety o;
  std::vector<std::pair<const mir::Function*, BlockId>> all;
  for (const auto& fn : program.functions) {
    for (const auto& [id, block] : fn.blocks) {
      o.blocks[{fn.name, id}] = SafetyValue::kBottom;
      all.emplace_back(&fn, id);
    }
  }
  auto fn_value = [&](const std::string& name) {
    const mir::Function* fn = program.find(name);
    if (fn == nullptr) return SafetyValue::kFalse;
    SafetyValue v = SafetyValue::kBottom;
    for (const auto& [id, block] : fn->blocks) v = join(v, o.blocks[{name, id}]);
    return v;
  };

  std::mt19937_64 rng(shuffle_seed);
  bool changed = true;
  while (changed) {
    changed = false;
    std::shuffle(all.begin(), all.end(), rng);
    for (const auto& [fn, id] : all) {
      const auto& writes = analyses.at(fn->name).writes;
      const mir::Block& block = fn->blocks.at(id);
      SafetyValue v = SafetyValue::kBottom;
      for (std::size_t i = 0; i < block.instrs.size(); ++i) {
        const Instr& in = block.instrs[i];
        switch (in.op) {
          case Opcode::kStoreSp:
          case Opcode::kStoreReg:
          case Opcode::kStoreGlobal:
          case Opcode::kCorrupt:
            v = join(v, writes.at(id, i) == analysis::WriteClass::kUnsafe
                            ? SafetyValue::kFalse
                            : SafetyValue::kTrue);
            break;
          case Opcode::kCall:
            v = join(v, fn_value(in.sym));
            break;
          case Opcode::kICall:
            v = join(v, SafetyValue::kFalse);
            break;
          default:
            break;
        }
      }
      SafetyValue& slot = o.blocks[{fn->name, id}];
      if (slot != v) {
        slot = v;
        changed = true;
      }
    }
  }
  for (const auto& fn : program.functions) o.functions[fn.name] = fn_value(fn.name);
  return o;
}

std::size_t enumerate_safe_paths(const mir::Function& fn,
                                 const std::function<bool(BlockId)>& safe,
                                 std::size_t cap) {
  if (!safe(fn.entry_block)) return 0;
  std::vector<BlockId> nodes;
  for (const auto& [id, block] : fn.blocks) {
    if (safe(id)) nodes.push_back(id);
  }
  const std::size_t n = nodes.size();
  auto index = [&](BlockId id) {
    return static_cast<std::size_t>(std::find(nodes.begin(), nodes.end(), id) -
                                    nodes.begin());
  };
  // reach[i][j]: path of length >= 0 from i to j inside the safe subgraph.
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    reach[i][i] = true;
    for (BlockId s : fn.blocks.at(nodes[i]).successors()) {
      std::size_t j = index(s);
      if (j < n) reach[i][j] = true;
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;

  // Component representative: smallest mutually reachable node.
  std::vector<std::size_t> rep(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (reach[i][j] && reach[j][i]) {
        rep[i] = j;
        break;
      }
    }
  }
  std::map<std::size_t, std::set<std::size_t>> dag;
  std::set<std::size_t> exits;
  for (std::size_t i = 0; i < n; ++i) {
    if (fn.blocks.at(nodes[i]).is_exit()) exits.insert(rep[i]);
    for (BlockId s : fn.blocks.at(nodes[i]).successors()) {
      std::size_t j = index(s);
      if (j < n && rep[j] != rep[i]) dag[rep[i]].insert(rep[j]);
    }
  }

  std::size_t count = 0;
  std::function<void(std::size_t)> walk = [&](std::size_t c) {
    if (count >= cap) return;
    if (exits.count(c)) ++count;
    for (std::size_t next : dag[c]) walk(next);
  };
  walk(rep[index(fn.entry_block)]);
  return std::min(count, cap);
}

std::uint16_t search_live_before(const mir::Function& fn, BlockId block,
                                 std::size_t index) {
  std::uint16_t live = 0;
  for (int r = 0; r < mir::kNumRegisters; ++r) {
    const std::uint16_t bit = static_cast<std::uint16_t>(1u << r);
    std::set<std::pair<BlockId, std::size_t>> seen;
    std::vector<std::pair<BlockId, std::size_t>> stack{{block, index}};
    bool found = false;
    while (!stack.empty() && !found) {
      auto [b, i] = stack.back();
      stack.pop_back();
      if (!seen.insert({b, i}).second) continue;
      const mir::Block& blk = fn.blocks.at(b);
      const mir::RegEffects e = mir::reg_effects(blk.instrs[i]);
      if (e.uses & bit) {
        found = true;
      } else if (e.defs & bit) {
        continue;
      } else if (i + 1 < blk.instrs.size()) {
        stack.emplace_back(b, i + 1);
      } else {
        for (BlockId s : blk.successors()) stack.emplace_back(s, 0);
      }
    }
    if (found) live |= bit;
  }
  return live;
}

mir::Program random_callgraph_program(std::uint64_t seed, int max_functions) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  mir::Program p;
  p.globals = {"g0", "g1"};
  const int nfn = uniform(1, max_functions);
  for (int f = 0; f < nfn; ++f) {
    mir::Function fn;
    fn.name = "f" + std::to_string(f);
    fn.entry_block = 0;
    const int nblocks = uniform(1, 4);
    for (int b = 0; b < nblocks; ++b) {
      mir::Block block;
      block.id = b;
      const int ninstr = uniform(0, 4);
      for (int k = 0; k < ninstr; ++k) {
        switch (uniform(0, 9)) {
          case 0:
            block.instrs.push_back(Instr::SpAdd(-8 * uniform(1, 3)));
            break;
          case 1:
          case 2:
            block.instrs.push_back(Instr::StoreSp(8 * uniform(-1, 3), uniform(0, 15)));
            break;
          case 3:
            block.instrs.push_back(Instr::StoreGlobal(uniform(0, 1) ? "g0" : "g1"));
            break;
          case 4:
            block.instrs.push_back(Instr::MovI(3, 268435456));
            block.instrs.push_back(Instr::StoreReg(3, 1));
            break;
          case 5:
            block.instrs.push_back(Instr::LeaSp(4, -8 * uniform(0, 2)));
            block.instrs.push_back(Instr::StoreReg(4));
            break;
          case 6:
          case 7:
          case 8:
            block.instrs.push_back(Instr::Call("f" + std::to_string(uniform(0, nfn - 1))));
            break;
          default:
            if (uniform(0, 3) == 0) {
              block.instrs.push_back(Instr::ICall(5));
            } else {
              block.instrs.push_back(Instr::BinOp(uniform(0, 15), uniform(0, 15)));
            }
            break;
        }
      }
      if (b + 1 == nblocks) {
        block.instrs.push_back(Instr::Ret());
      } else if (b > 0 && uniform(0, 2) == 0) {
        block.instrs.push_back(Instr::Brc(uniform(1, b), b + 1));
      } else if (b + 2 < nblocks && uniform(0, 1) == 0) {
        block.instrs.push_back(Instr::Brc(uniform(b + 2, nblocks - 1), b + 1));
      } else {
        block.instrs.push_back(Instr::Br(b + 1));
      }
      fn.blocks.emplace(b, std::move(block));
    }
    p.functions.push_back(std::move(fn));
  }
  p.entry = "f0";
  auto diags = mir::validate_program(p);
  if (!diags.empty()) {
    throw std::logic_error("random program invalid: " + diags.front().reason);
  }
  return p;
}

std::vector<vm::Event> events_of(const vm::Trace& trace, vm::EventKind kind) {
  std::vector<vm::Event> out;
  for (const auto& e : trace.events) {
    if (e.kind == kind) out.push_back(e);
  }
  return out;
}

int count_shadow_ops(const mir::Function& fn) {
  int n = 0;
  for (const auto& [id, block] : fn.blocks) {
    for (const auto& in : block.instrs) n += mir::is_shadow_op(in.op) ? 1 : 0;
  }
  return n;
}

}  // namespace shadowlab::testing
