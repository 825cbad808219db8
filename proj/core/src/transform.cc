#include "shadowlab/transform.h"

#include <algorithm>
#include <cctype>
#include <deque>

#include "shadowlab/graph.h"

namespace shadowlab::transform {

using mir::Block;
using mir::Function;
using mir::Instr;
using mir::Opcode;
using mir::Program;

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kFull: return "FULL";
    case Mode::kSfe: return "SFE";
    case Mode::kPo: return "PO";
    case Mode::kMo: return "MO";
    case Mode::kLight: return "LIGHT";
    case Mode::kElideAll: return "ELIDE-ALL";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view text) {
  std::string upper;
  for (char c : text) {
    upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (upper == "ELIDE_ALL") upper = "ELIDE-ALL";
  for (Mode m : kAllModes) {
    if (to_string(m) == upper) return m;
  }
  return std::nullopt;
}

BlockId original_block(BlockId id) {
  if (id >= kTransitionBase) return -1;
  return id >= kCloneOffset ? id - kCloneOffset : id;
}
bool is_clone_block(BlockId id) {
  return id >= kCloneOffset && id < kTransitionBase;
}
bool is_transition_block(BlockId id) { return id >= kTransitionBase; }

Cost push_cost(bool dead_scratch, bool on_edge) {
  Cost c = dead_scratch ? kChasedPushCost : kPushCost;
  if (on_edge) c += kEdgePenalty;
  return c;
}

const char* to_string(ShadowOpKind kind) {
  switch (kind) {
    case ShadowOpKind::kPush: return "push";
    case ShadowOpKind::kPop: return "pop";
    case ShadowOpKind::kRegFramePush: return "rf-push";
    case ShadowOpKind::kRegFramePop: return "rf-pop";
  }
  return "?";
}

const char* to_string(FunctionMode mode) {
  switch (mode) {
    case FunctionMode::kElided: return "elided";
    case FunctionMode::kFullEntryExit: return "full";
    case FunctionMode::kLowered: return "lowered";
    case FunctionMode::kRegFrame: return "regframe";
  }
  return "?";
}

std::string to_string(const Site& site) {
  const std::string b = "b" + std::to_string(site.block);
  switch (site.kind) {
    case SiteKind::kEntry: return "entry " + b;
    case SiteKind::kEdge: return "edge " + b + "->b" + std::to_string(site.to);
    case SiteKind::kExit: return "exit " + b;
    case SiteKind::kInstr: return b + "[" + std::to_string(site.index) + "]";
  }
  return "?";
}

Cost FunctionPlan::static_cost() const {
  Cost total;
  for (const ShadowOp& op : ops) total += op.cost;
  return total;
}

const FunctionPlan* InstrumentationPlan::find(std::string_view fn) const {
  auto it = functions.find(fn);
  return it == functions.end() ? nullptr : &it->second;
}

std::set<std::string> safe_function_elision(const Program& program,
                                            const safety::SafetyResult& s) {
  std::set<std::string> out;
  for (const Function& fn : program.functions) {
    if (!s.ra_safe_fn(fn.name)) out.insert(fn.name);
  }
  return out;
}

std::size_t count_safe_paths(const Function& fn,
                             const safety::SafetyResult& s) {
  auto safe = [&](BlockId id) { return s.ra_safe_block(fn.name, id); };
  if (!safe(fn.entry_block)) return 0;

  std::map<BlockId, int> index;
  std::vector<BlockId> nodes;
  std::deque<BlockId> work{fn.entry_block};
  index[fn.entry_block] = 0;
  nodes.push_back(fn.entry_block);
  while (!work.empty()) {
    BlockId id = work.front();
    work.pop_front();
    for (BlockId succ : fn.blocks.at(id).successors()) {
      if (!fn.blocks.count(succ) || !safe(succ) || index.count(succ)) continue;
      index[succ] = static_cast<int>(nodes.size());
      nodes.push_back(succ);
      work.push_back(succ);
    }
  }

  Adjacency succ(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (BlockId t : fn.blocks.at(nodes[i]).successors()) {
      auto it = index.find(t);
      if (it != index.end()) succ[i].push_back(it->second);
    }
  }
  const auto components = tarjan_scc(succ);
  std::vector<int> component_of(nodes.size());
  for (std::size_t c = 0; c < components.size(); ++c) {
    for (int n : components[c]) component_of[n] = static_cast<int>(c);
  }
  // Components come sinks first, so every successor is finished before its
  // predecessors.
  std::vector<std::size_t> paths(components.size(), 0);
  for (std::size_t c = 0; c < components.size(); ++c) {
    std::set<int> next;
    std::size_t total = 0;
    for (int n : components[c]) {
      if (fn.blocks.at(nodes[n]).is_exit()) total = 1;
      for (int m : succ[n]) {
        if (component_of[m] != static_cast<int>(c)) next.insert(component_of[m]);
      }
    }
    for (int m : next) total = std::min(kSafePathCap, total + paths[m]);
    paths[c] = total;
  }
  return paths[component_of[0]];
}

namespace {

std::int64_t pop_height(const Block& block, const analysis::HeightMap& heights) {
  const Instr* term = block.terminator();
  if (term == nullptr || term->op != Opcode::kHalt) return 0;
  HeightValue sp = heights.at(block.id, block.instrs.size() - 1).sp;
  return sp.is_concrete() ? sp.offset() : 0;
}

ShadowOp make_pop(BlockId block, std::int64_t height) {
  ShadowOp op;
  op.kind = ShadowOpKind::kPop;
  op.site = {SiteKind::kExit, block, -1, 0};
  op.entry_height = height;
  op.cost = kPopCost;
  return op;
}

// Original blocks reachable after redirecting the transition edges, and the
// clones reachable through the transition blocks.
ClonedRegion build_region(const Function& fn,
                          std::vector<TransitionEdge> transitions) {
  ClonedRegion region;
  region.transitions = std::move(transitions);
  std::map<std::pair<BlockId, BlockId>, BlockId> redirect;
  for (const auto& t : region.transitions) redirect[{t.from, t.to}] = t.block;

  std::set<BlockId> seen_original{fn.entry_block};
  std::set<BlockId> seen_clone;
  std::deque<std::pair<BlockId, bool>> work{{fn.entry_block, false}};
  while (!work.empty()) {
    auto [id, clone] = work.front();
    work.pop_front();
    for (BlockId succ : fn.blocks.at(id).successors()) {
      if (!clone) {
        auto r = redirect.find({id, succ});
        if (r != redirect.end()) {
          if (seen_clone.insert(succ).second) work.push_back({succ, true});
          continue;
        }
        if (seen_original.insert(succ).second) work.push_back({succ, false});
      } else if (seen_clone.insert(succ).second) {
        work.push_back({succ, true});
      }
    }
  }
  region.original_kept = std::move(seen_original);
  for (BlockId id : seen_clone) region.clone_of[id] = id + kCloneOffset;
  return region;
}

FunctionPlan elided_plan(const Function& fn) {
  FunctionPlan plan;
  plan.name = fn.name;
  plan.mode = FunctionMode::kElided;
  return plan;
}

}  // namespace

FunctionPlan full_entry_exit(const Function& fn,
                             const analysis::HeightMap& heights) {
  FunctionPlan plan;
  plan.name = fn.name;
  plan.mode = FunctionMode::kFullEntryExit;
  ShadowOp push;
  push.kind = ShadowOpKind::kPush;
  push.site = {SiteKind::kEntry, fn.entry_block, -1, 0};
  push.cost = kPushCost;
  plan.ops.push_back(push);
  for (BlockId exit : fn.exit_blocks()) {
    plan.ops.push_back(make_pop(exit, pop_height(fn.blocks.at(exit), heights)));
  }
  return plan;
}

FunctionPlan lower_instrumentation(const Function& fn,
                                   const safety::SafetyResult& s,
                                   const analysis::HeightMap& heights,
                                   const analysis::LivenessMap* liveness) {
  auto safe = [&](BlockId id) { return s.ra_safe_block(fn.name, id); };
  const std::size_t paths = count_safe_paths(fn, s);
  auto fallback = [&] {
    FunctionPlan plan = full_entry_exit(fn, heights);
    plan.safe_paths = paths;
    return plan;
  };
  if (!safe(fn.entry_block) || paths == 0) return fallback();

  std::vector<TransitionEdge> transitions;
  std::set<BlockId> visited;
  std::function<void(BlockId)> visit = [&](BlockId u) {
    visited.insert(u);
    for (BlockId v : fn.blocks.at(u).successors()) {
      if (!safe(v)) {
        TransitionEdge t;
        t.from = u;
        t.to = v;
        t.block = kTransitionBase + static_cast<BlockId>(transitions.size());
        transitions.push_back(t);
      } else if (!visited.count(v)) {
        visit(v);
      }
    }
  };
  visit(fn.entry_block);

  for (TransitionEdge& t : transitions) {
    if (!heights.reached(t.to)) return fallback();
    HeightValue h = heights.entry_sp(t.to);
    if (!h.is_concrete()) return fallback();
    t.height = h.offset();
    t.dead_scratch = liveness != nullptr && liveness->dead_count(t.to, 0) >= 2;
  }

  FunctionPlan plan;
  plan.name = fn.name;
  plan.mode = FunctionMode::kLowered;
  plan.safe_paths = paths;
  plan.region = build_region(fn, std::move(transitions));
  for (const TransitionEdge& t : plan.region->transitions) {
    ShadowOp push;
    push.kind = ShadowOpKind::kPush;
    push.site = {SiteKind::kEdge, t.from, t.to, 0};
    push.entry_height = t.height;
    push.dead_scratch = t.dead_scratch;
    push.cost = push_cost(t.dead_scratch, /*on_edge=*/true);
    plan.ops.push_back(push);
  }
  for (const auto& [original, clone] : plan.region->clone_of) {
    const Block& block = fn.blocks.at(original);
    if (block.is_exit()) plan.ops.push_back(make_pop(clone, pop_height(block, heights)));
  }
  return plan;
}

std::optional<Reg> register_frame_candidate(const Function& fn) {
  std::uint32_t mentioned = 0;
  for (const auto& [id, block] : fn.blocks) {
    for (const Instr& instr : block.instrs) {
      if (mir::is_call(instr.op) || instr.op == Opcode::kUnwind ||
          instr.op == Opcode::kHalt || mir::is_shadow_op(instr.op)) {
        return std::nullopt;
      }
      if (instr.rd >= 0) mentioned |= 1u << instr.rd;
      if (instr.rs >= 0) mentioned |= 1u << instr.rs;
    }
  }
  for (Reg r = mir::kNumRegisters - 1; r > mir::kReturnRegister; --r) {
    if (!(mentioned & (1u << r))) return r;
  }
  return std::nullopt;
}

std::optional<ChaseShift> chase_entry_push(const Function& fn,
                                           const analysis::FunctionAnalysis& a) {
  const Block& entry = fn.entry();
  for (std::size_t i = 0; i < entry.instrs.size(); ++i) {
    HeightValue sp = a.heights.at(entry.id, i).sp;
    if (!sp.is_concrete()) return std::nullopt;
    if (a.liveness.dead_count(entry.id, i) >= 2) {
      ChaseShift shift;
      shift.original = {SiteKind::kEntry, entry.id, -1, 0};
      shift.shifted = {i == 0 ? SiteKind::kEntry : SiteKind::kInstr, entry.id,
                       -1, i};
      shift.skipped = i;
      shift.ra_offset_adjust = -sp.offset();
      return shift;
    }
    const Instr& instr = entry.instrs[i];
    if (mir::is_control_transfer(instr) || mir::is_call(instr.op) ||
        mir::is_shadow_op(instr.op)) {
      return std::nullopt;
    }
    if (mir::is_store(instr.op) &&
        a.writes.at(entry.id, i) == analysis::WriteClass::kUnsafe) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

namespace {

FunctionPlan register_frame_plan(const Function& fn, Reg reg) {
  FunctionPlan plan;
  plan.name = fn.name;
  plan.mode = FunctionMode::kRegFrame;
  ShadowOp push;
  push.kind = ShadowOpKind::kRegFramePush;
  push.site = {SiteKind::kEntry, fn.entry_block, -1, 0};
  push.reg = reg;
  push.cost = kRegFramePushCost;
  plan.ops.push_back(push);
  for (BlockId exit : fn.exit_blocks()) {
    ShadowOp pop;
    pop.kind = ShadowOpKind::kRegFramePop;
    pop.site = {SiteKind::kExit, exit, -1, 0};
    pop.reg = reg;
    pop.cost = kRegFramePopCost;
    plan.ops.push_back(pop);
  }
  return plan;
}

FunctionPlan mechanism_plan(const Function& fn,
                            const analysis::FunctionAnalysis& a) {
  if (auto reg = register_frame_candidate(fn)) return register_frame_plan(fn, *reg);
  FunctionPlan plan = full_entry_exit(fn, a.heights);
  if (auto shift = chase_entry_push(fn, a)) {
    ShadowOp& push = plan.ops.front();
    push.site = shift->shifted;
    push.entry_height = -shift->ra_offset_adjust;
    push.dead_scratch = true;
    push.cost = kChasedPushCost;
    if (shift->skipped > 0) plan.chases.push_back(*shift);
  }
  return plan;
}

bool uses_stack_pointer(const Function& fn) {
  for (const auto& [id, block] : fn.blocks) {
    for (const Instr& instr : block.instrs) {
      switch (instr.op) {
        case Opcode::kSpAdd:
        case Opcode::kLeaSp:
        case Opcode::kStoreSp:
        case Opcode::kLoadSp:
          return true;
        default:
          break;
      }
    }
  }
  return false;
}

}  // namespace

bool is_inlinable(const Function& callee) {
  if (callee.blocks.size() != 1) return false;
  const Block& block = callee.entry();
  const Instr* term = block.terminator();
  if (term == nullptr || term->op != Opcode::kRet) return false;
  for (const Instr& instr : block.instrs) {
    switch (instr.op) {
      case Opcode::kCall:
      case Opcode::kICall:
      case Opcode::kCorrupt:
      case Opcode::kUnwind:
      case Opcode::kHalt:
      case Opcode::kSpMov:
        return false;
      default:
        if (mir::is_shadow_op(instr.op)) return false;
    }
  }
  analysis::HeightMap heights = analysis::stack_heights(callee);
  return heights.at(block.id, block.instrs.size() - 1).sp ==
         HeightValue::Concrete(0);
}

Program apply_inlining(const Program& program,
                       const std::vector<InlinedCall>& calls) {
  Program out = program;
  // Splice from the back of each block so earlier indices stay valid.
  std::vector<InlinedCall> ordered = calls;
  std::sort(ordered.begin(), ordered.end(),
            [](const InlinedCall& a, const InlinedCall& b) {
              if (a.caller != b.caller) return a.caller < b.caller;
              if (a.block != b.block) return a.block < b.block;
              return a.index > b.index;
            });
  for (const InlinedCall& call : ordered) {
    Function* caller = out.find(call.caller);
    const Function* callee = program.find(call.callee);
    if (caller == nullptr || callee == nullptr || !caller->blocks.count(call.block)) {
      throw PlanMismatch("inlined call refers to a missing function or block");
    }
    auto& instrs = caller->blocks.at(call.block).instrs;
    if (call.index >= instrs.size() || instrs[call.index].op != Opcode::kCall ||
        instrs[call.index].sym != call.callee) {
      throw PlanMismatch("inlined call site " + call.caller + ".b" +
                         std::to_string(call.block) + "[" +
                         std::to_string(call.index) + "] is not a call to " +
                         call.callee);
    }
    std::vector<Instr> body;
    if (call.padded) body.push_back(Instr::SpAdd(-mir::kWordSize));
    const auto& callee_instrs = callee->entry().instrs;
    body.insert(body.end(), callee_instrs.begin(), callee_instrs.end() - 1);
    if (call.padded) body.push_back(Instr::SpAdd(mir::kWordSize));
    for (Instr& i : body) i.line = 0;
    instrs.erase(instrs.begin() + static_cast<std::ptrdiff_t>(call.index));
    instrs.insert(instrs.begin() + static_cast<std::ptrdiff_t>(call.index),
                  body.begin(), body.end());
  }
  return out;
}

InlineResult inline_leaf_calls(const Program& program) {
  InlineResult result;
  std::map<std::string, bool, std::less<>> eligible;
  for (const Function& fn : program.functions) eligible[fn.name] = is_inlinable(fn);
  for (const Function& fn : program.functions) {
    std::optional<analysis::HeightMap> heights;
    for (const auto& [id, block] : fn.blocks) {
      for (std::size_t i = 0; i < block.instrs.size(); ++i) {
        const Instr& instr = block.instrs[i];
        if (instr.op != Opcode::kCall) continue;
        auto it = eligible.find(instr.sym);
        if (it == eligible.end() || !it->second) continue;
        const Function& callee = *program.find(instr.sym);
        const bool padded = uses_stack_pointer(callee);
        if (padded) {
          if (!heights) heights = analysis::stack_heights(fn);
          if (!heights->at(id, i).sp.is_concrete()) continue;
        }
        result.calls.push_back({fn.name, id, i, instr.sym, padded});
      }
    }
  }
  result.program = apply_inlining(program, result.calls);
  return result;
}

std::map<std::string, FunctionPlan, std::less<>> plan_mechanism(
    const Program& program, const safety::SafetyResult& /*s*/,
    const analysis::ProgramAnalysis& analyses,
    const std::set<std::string>& instrumented) {
  std::map<std::string, FunctionPlan, std::less<>> out;
  for (const Function& fn : program.functions) {
    if (!instrumented.count(fn.name)) continue;
    out.emplace(fn.name, mechanism_plan(fn, analyses.at(fn.name)));
  }
  return out;
}

InstrumentationPlan plan_instrumentation(const Program& program, Mode mode) {
  InstrumentationPlan plan;
  plan.mode = mode;
  plan.source_fingerprint = mir::fingerprint(program);

  Program base = program;
  if (optimizes_mechanism(mode)) {
    InlineResult inlined = inline_leaf_calls(program);
    base = std::move(inlined.program);
    plan.inlined_calls = std::move(inlined.calls);
  }
  plan.base_fingerprint = mir::fingerprint(base);

  const analysis::ProgramAnalysis analyses = analysis::analyze_program(base);
  plan.safety = safety::calculate_ra_safety(base, analyses);
  std::set<std::string> instrumented;
  if (mode != Mode::kElideAll) {
    if (elides_safe_functions(mode)) {
      instrumented = safe_function_elision(base, plan.safety);
    } else {
      for (const Function& fn : base.functions) instrumented.insert(fn.name);
    }
  }

  for (const Function& fn : base.functions) {
    const analysis::FunctionAnalysis& a = analyses.at(fn.name);
    FunctionPlan fp;
    if (!instrumented.count(fn.name)) {
      fp = elided_plan(fn);
    } else if (lowers(mode)) {
      fp = lower_instrumentation(
          fn, plan.safety, a.heights,
          optimizes_mechanism(mode) ? &a.liveness : nullptr);
      if (fp.mode != FunctionMode::kLowered && optimizes_mechanism(mode)) {
        std::size_t paths = fp.safe_paths;
        fp = mechanism_plan(fn, a);
        fp.safe_paths = paths;
      }
    } else if (optimizes_mechanism(mode)) {
      fp = mechanism_plan(fn, a);
    } else {
      fp = full_entry_exit(fn, a.heights);
    }
    if (fp.mode == FunctionMode::kElided || !lowers(mode)) {
      fp.safe_paths = count_safe_paths(fn, plan.safety);
    }
    plan.functions.emplace(fn.name, std::move(fp));
  }
  return plan;
}

namespace {

void retarget(Instr& term, BlockId from, BlockId to) {
  if (term.target == from) term.target = to;
  if (term.alt == from) term.alt = to;
}

Block& block_for(Function& fn, BlockId id) {
  auto it = fn.blocks.find(id);
  if (it == fn.blocks.end()) {
    throw PlanMismatch("plan refers to missing block " + fn.name + ".b" +
                       std::to_string(id));
  }
  return it->second;
}

void build_lowered_blocks(Function& fn, const ClonedRegion& region) {
  std::map<BlockId, Block> blocks;
  for (BlockId id : region.original_kept) {
    Block block = block_for(fn, id);
    Instr& term = block.instrs.back();
    for (const TransitionEdge& t : region.transitions) {
      if (t.from == id) retarget(term, t.to, t.block);
    }
    blocks.emplace(id, std::move(block));
  }
  for (const auto& [original, clone_id] : region.clone_of) {
    Block clone = block_for(fn, original);
    clone.id = clone_id;
    Instr& term = clone.instrs.back();
    if (term.target >= 0) term.target += kCloneOffset;
    if (term.alt >= 0) term.alt += kCloneOffset;
    blocks.emplace(clone_id, std::move(clone));
  }
  for (const TransitionEdge& t : region.transitions) {
    if (!region.original_kept.count(t.from) || !region.clone_of.count(t.to)) {
      throw PlanMismatch("transition edge outside the lowered region");
    }
    Block block;
    block.id = t.block;
    block.instrs.push_back(
        Instr::SPushEdge(t.height, t.to + kCloneOffset, t.dead_scratch));
    blocks.emplace(t.block, std::move(block));
  }
  fn.blocks = std::move(blocks);
}

void apply_function_plan(Function& fn, const FunctionPlan& plan) {
  if (plan.mode == FunctionMode::kElided) return;
  if (plan.mode == FunctionMode::kLowered) {
    if (!plan.region) throw PlanMismatch("lowered plan without a region");
    build_lowered_blocks(fn, *plan.region);
  }
  // Exit ops go in before the terminator first; entry ops are inserted at
  // indices no larger than the terminator's, so both stay valid.
  for (const ShadowOp& op : plan.ops) {
    if (op.site.kind != SiteKind::kExit) continue;
    Block& block = block_for(fn, op.site.block);
    if (!block.is_exit()) {
      throw PlanMismatch("exit op on non-exit block " + fn.name + ".b" +
                         std::to_string(block.id));
    }
    Instr shadow = op.kind == ShadowOpKind::kRegFramePop
                       ? Instr::RfPop(op.reg)
                       : Instr::SPop(op.entry_height);
    block.instrs.insert(block.instrs.end() - 1, shadow);
  }
  for (const ShadowOp& op : plan.ops) {
    if (op.site.kind != SiteKind::kEntry && op.site.kind != SiteKind::kInstr) continue;
    Block& block = block_for(fn, op.site.block);
    if (op.site.index >= block.instrs.size()) {
      throw PlanMismatch("entry op index out of range in " + fn.name);
    }
    Instr shadow = op.kind == ShadowOpKind::kRegFramePush
                       ? Instr::RfPush(op.reg)
                       : Instr::SPush(op.entry_height, op.dead_scratch);
    block.instrs.insert(
        block.instrs.begin() + static_cast<std::ptrdiff_t>(op.site.index), shadow);
  }
}

}  // namespace

InstrumentedProgram apply_plan(const Program& program,
                               const InstrumentationPlan& plan, Mode mode) {
  if (plan.mode != mode) {
    throw PlanMismatch("plan was computed for mode " +
                       std::string(to_string(plan.mode)) + ", not " +
                       std::string(to_string(mode)));
  }
  if (mir::fingerprint(program) != plan.source_fingerprint) {
    throw PlanMismatch("stale plan: program fingerprint differs");
  }
  InstrumentedProgram out;
  out.base = apply_inlining(program, plan.inlined_calls);
  if (mir::fingerprint(out.base) != plan.base_fingerprint) {
    throw PlanMismatch("stale plan: inlined program fingerprint differs");
  }
  out.program = out.base;
  for (Function& fn : out.program.functions) {
    const FunctionPlan* fp = plan.find(fn.name);
    if (fp == nullptr) throw PlanMismatch("no plan for function " + fn.name);
    apply_function_plan(fn, *fp);
  }
  out.plan = plan;
  return out;
}

InstrumentedProgram instrument(const Program& program, Mode mode) {
  return apply_plan(program, plan_instrumentation(program, mode), mode);
}

}  // namespace shadowlab::transform
