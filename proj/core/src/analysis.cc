#include "shadowlab/analysis.h"

#include <bit>
#include <deque>
#include <set>

namespace shadowlab {

std::string HeightValue::to_string() const {
  switch (kind_) {
    case Kind::kBottom: return "bottom";
    case Kind::kTop: return "top";
    case Kind::kConcrete: return std::to_string(offset_);
  }
  return "?";
}

const char* to_string(SafetyValue v) {
  switch (v) {
    case SafetyValue::kBottom: return "bottom";
    case SafetyValue::kTrue: return "true";
    case SafetyValue::kFalse: return "false";
    case SafetyValue::kTop: return "top";
  }
  return "?";
}

}  // namespace shadowlab

namespace shadowlab::analysis {

using mir::Function;
using mir::Instr;
using mir::Opcode;

namespace {

struct State {
  bool reached = false;
  HeightValue sp;
  std::array<HeightValue, mir::kNumRegisters> regs{};
};

HeightValue merge_value(HeightValue a, HeightValue b) {
  return a == b ? a : HeightValue::Top();
}

// Bottom on a reached path means "not a stack address", so it does not act as
// the identity here: a register that is a stack pointer on one path and an
// integer on another has no single height.
bool merge_into(State& into, const State& from) {
  if (!from.reached) return false;
  if (!into.reached) {
    into = from;
    return true;
  }
  bool changed = false;
  auto update = [&changed](HeightValue& slot, HeightValue incoming) {
    HeightValue merged = merge_value(slot, incoming);
    if (!(merged == slot)) {
      slot = merged;
      changed = true;
    }
  };
  update(into.sp, from.sp);
  for (int r = 0; r < mir::kNumRegisters; ++r) update(into.regs[r], from.regs[r]);
  return changed;
}

HeightValue store_destination(const Instr& instr, const State& s) {
  switch (instr.op) {
    case Opcode::kStoreSp:
      return s.sp.is_concrete() ? s.sp.shifted(instr.imm) : HeightValue::Top();
    case Opcode::kStoreReg:
      return s.regs[instr.rd].is_concrete() ? s.regs[instr.rd]
                                            : HeightValue::Top();
    case Opcode::kCorrupt:
      return HeightValue::Top();
    default:
      return HeightValue::Bottom();
  }
}

void transfer(const Instr& instr, State& s) {
  switch (instr.op) {
    case Opcode::kSpAdd:
      s.sp = s.sp.shifted(instr.imm);
      break;
    case Opcode::kSpMov:
      s.sp = s.regs[instr.rd].is_concrete() ? s.regs[instr.rd]
                                            : HeightValue::Top();
      break;
    case Opcode::kMovI:
      s.regs[instr.rd] = HeightValue::Bottom();
      break;
    case Opcode::kMovR:
      s.regs[instr.rd] = s.regs[instr.rs];
      break;
    case Opcode::kLeaSp:
      s.regs[instr.rd] =
          s.sp.is_concrete() ? s.sp.shifted(instr.imm) : HeightValue::Top();
      break;
    case Opcode::kBinOp:
      s.regs[instr.rd] =
          s.regs[instr.rd].is_bottom() && s.regs[instr.rs].is_bottom()
              ? HeightValue::Bottom()
              : HeightValue::Top();
      break;
    case Opcode::kLoadSp:
    case Opcode::kLoadReg:
    case Opcode::kRfPush:
    case Opcode::kRfPop:
      s.regs[instr.rd] = HeightValue::Top();
      break;
    case Opcode::kCall:
    case Opcode::kICall:
      for (auto& r : s.regs) r = HeightValue::Top();
      break;
    default:
      break;
  }
}

}  // namespace

HeightMap stack_heights(const Function& fn) {
  std::map<BlockId, State> in;
  for (const auto& [id, block] : fn.blocks) in[id] = State{};
  State& entry = in[fn.entry_block];
  entry.reached = true;
  entry.sp = HeightValue::Concrete(0);

  std::deque<BlockId> work{fn.entry_block};
  std::set<BlockId> queued{fn.entry_block};
  while (!work.empty()) {
    BlockId id = work.front();
    work.pop_front();
    queued.erase(id);
    const mir::Block& block = fn.blocks.at(id);
    State s = in.at(id);
    for (const Instr& instr : block.instrs) transfer(instr, s);
    for (BlockId succ : block.successors()) {
      auto it = in.find(succ);
      if (it == in.end()) continue;
      if (merge_into(it->second, s) && queued.insert(succ).second) {
        work.push_back(succ);
      }
    }
  }

  HeightMap map;
  for (const auto& [id, block] : fn.blocks) {
    State s = in.at(id);
    map.reached_[id] = s.reached;
    auto& records = map.instrs_[id];
    records.reserve(block.instrs.size());
    for (const Instr& instr : block.instrs) {
      InstrHeights rec;
      rec.sp = s.sp;
      rec.regs = s.regs;
      rec.dest = s.reached ? store_destination(instr, s) : HeightValue::Bottom();
      records.push_back(rec);
      if (s.reached) transfer(instr, s);
    }
  }
  return map;
}

const char* to_string(WriteClass c) {
  switch (c) {
    case WriteClass::kSafeStack: return "stack";
    case WriteClass::kGlobal: return "global";
    case WriteClass::kUnsafe: return "unsafe";
  }
  return "?";
}

namespace {
double pct(std::size_t part, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(part) /
                                static_cast<double>(total);
}
}  // namespace

double WriteSummary::stack_pct() const { return pct(stack, total()); }
double WriteSummary::global_pct() const { return pct(global, total()); }
double WriteSummary::unsafe_pct() const { return pct(unsafe, total()); }

WriteSummary& WriteSummary::operator+=(const WriteSummary& o) {
  stack += o.stack;
  global += o.global;
  unsafe += o.unsafe;
  return *this;
}

WriteClassification classify_writes(const Function& fn,
                                    const HeightMap& heights) {
  WriteClassification out;
  for (const auto& [id, block] : fn.blocks) {
    for (std::size_t i = 0; i < block.instrs.size(); ++i) {
      const Instr& instr = block.instrs[i];
      if (!mir::is_store(instr.op)) continue;
      WriteClass c;
      if (instr.op == Opcode::kStoreGlobal) {
        c = WriteClass::kGlobal;
        ++out.summary.global;
      } else if (is_safe_height(heights.at(id, i).dest)) {
        c = WriteClass::kSafeStack;
        ++out.summary.stack;
      } else {
        c = WriteClass::kUnsafe;
        ++out.summary.unsafe;
      }
      out.classes.emplace(InstrPos{id, i}, c);
    }
  }
  return out;
}

int LivenessMap::dead_count(BlockId block, std::size_t index) const {
  return std::popcount(dead_before(block, index));
}

std::vector<mir::Reg> LivenessMap::dead_registers_at(BlockId block,
                                                     std::size_t index) const {
  std::vector<mir::Reg> out;
  std::uint16_t dead = dead_before(block, index);
  for (int r = 0; r < mir::kNumRegisters; ++r) {
    if (dead & (1u << r)) out.push_back(r);
  }
  return out;
}

LivenessMap dead_registers(const Function& fn) {
  std::map<BlockId, std::vector<BlockId>> preds;
  for (const auto& [id, block] : fn.blocks) {
    for (BlockId succ : block.successors()) preds[succ].push_back(id);
  }
  std::map<BlockId, std::uint16_t> live_in;
  for (const auto& [id, block] : fn.blocks) live_in[id] = 0;

  auto block_live_in = [&](const mir::Block& block) {
    std::uint16_t live = 0;
    for (BlockId succ : block.successors()) {
      auto it = live_in.find(succ);
      if (it != live_in.end()) live |= it->second;
    }
    for (auto it = block.instrs.rbegin(); it != block.instrs.rend(); ++it) {
      mir::RegEffects e = mir::reg_effects(*it);
      live = static_cast<std::uint16_t>((live & ~e.defs) | e.uses);
    }
    return live;
  };

  std::deque<BlockId> work;
  std::set<BlockId> queued;
  for (auto it = fn.blocks.rbegin(); it != fn.blocks.rend(); ++it) {
    work.push_back(it->first);
    queued.insert(it->first);
  }
  while (!work.empty()) {
    BlockId id = work.front();
    work.pop_front();
    queued.erase(id);
    std::uint16_t live = block_live_in(fn.blocks.at(id));
    if (live != live_in[id]) {
      live_in[id] = live;
      for (BlockId p : preds[id]) {
        if (queued.insert(p).second) work.push_back(p);
      }
    }
  }

  LivenessMap map;
  for (const auto& [id, block] : fn.blocks) {
    std::vector<std::uint16_t> before(block.instrs.size());
    std::uint16_t live = 0;
    for (BlockId succ : block.successors()) {
      auto it = live_in.find(succ);
      if (it != live_in.end()) live |= it->second;
    }
    for (std::size_t k = block.instrs.size(); k-- > 0;) {
      mir::RegEffects e = mir::reg_effects(block.instrs[k]);
      live = static_cast<std::uint16_t>((live & ~e.defs) | e.uses);
      before[k] = live;
    }
    map.live_[id] = std::move(before);
  }
  return map;
}

FunctionAnalysis analyze_function(const Function& fn) {
  HeightMap heights = stack_heights(fn);
  WriteClassification writes = classify_writes(fn, heights);
  return {std::move(heights), std::move(writes), dead_registers(fn)};
}

ProgramAnalysis analyze_program(const mir::Program& program) {
  ProgramAnalysis out;
  for (const Function& fn : program.functions) {
    out.emplace(fn.name, analyze_function(fn));
  }
  return out;
}

}  // namespace shadowlab::analysis
