#include "shadowlab/vm.h"

#include <cctype>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "shadowlab/parser.h"

namespace shadowlab::vm {

using mir::Block;
using mir::Function;
using mir::Instr;
using mir::Opcode;
using mir::Program;

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kBlockEnter: return "enter";
    case EventKind::kCall: return "call";
    case EventKind::kRet: return "ret";
    case EventKind::kStore: return "store";
    case EventKind::kShadowPush: return "spush";
    case EventKind::kShadowPop: return "spop";
    case EventKind::kRegFramePush: return "rfpush";
    case EventKind::kRegFramePop: return "rfpop";
    case EventKind::kCorrupt: return "corrupt";
    case EventKind::kUnwind: return "unwind";
    case EventKind::kAbort: return "abort";
    case EventKind::kHalt: return "halt";
  }
  return "?";
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kHeight: return "height";
    case ViolationKind::kLiveness: return "liveness";
    case ViolationKind::kShadowBalance: return "shadow-balance";
  }
  return "?";
}

const char* to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::kCompleted: return "completed";
    case OutcomeKind::kAborted: return "aborted";
    case OutcomeKind::kUndetectedCorruption: return "undetected-corruption";
    case OutcomeKind::kBudgetExhausted: return "budget-exhausted";
    case OutcomeKind::kFault: return "fault";
  }
  return "?";
}

namespace {

constexpr std::uint64_t kStackLimit = kStackTop - kStackWords * mir::kWordSize;
constexpr std::size_t kMaxViolations = 64;

struct Frame {
  std::int32_t fn = 0;
  std::uint64_t origin = 0;
  std::uint64_t cookie = 0;
  BlockId ret_block = -1;  // call site in the caller
  std::uint32_t ret_index = 0;
  std::uint32_t activation = 0;
  std::size_t shadow_depth = 0;
  std::uint16_t poisoned = 0;
};

std::uint64_t cookie_for(std::int32_t fn, BlockId block, std::uint32_t index) {
  return kCookieTag | (static_cast<std::uint64_t>(fn & 0xFFFF) << 32) |
         (static_cast<std::uint64_t>(block & 0xFFFF) << 16) | (index & 0xFFFF);
}

void charge(Counters& c, const transform::Cost& cost) {
  c.shadow_instructions += static_cast<std::uint64_t>(cost.instructions);
  c.shadow_memory += static_cast<std::uint64_t>(cost.memory);
  c.memory_accesses += static_cast<std::uint64_t>(cost.memory);
}

class Machine {
 public:
  Machine(const Program& program, const ExecInput& input,
          const ExecOptions& options)
      : program_(program), input_(input), options_(options) {
    for (std::size_t i = 0; i < program.functions.size(); ++i) {
      index_.emplace(program.functions[i].name, static_cast<std::int32_t>(i));
      const analysis::FunctionAnalysis* fa = nullptr;
      if (options.analysis != nullptr) {
        auto it = options.analysis->find(program.functions[i].name);
        if (it != options.analysis->end()) fa = &it->second;
      }
      analyses_.push_back(fa);
    }
    regs_ = input.registers;
    shadow_.assign(kShadowCapacity + 1, 0);
  }

  ExecResult run() {
    auto entry = index_.find(program_.entry);
    if (entry == index_.end()) {
      fault("missing entry function");
      return std::move(result_);
    }
    sp_ = kStackTop - mir::kWordSize;
    mem_[sp_] = kEntryCookie;
    Frame root;
    root.fn = entry->second;
    root.origin = sp_;
    root.cookie = kEntryCookie;
    root.shadow_depth = top_;
    frames_.push_back(root);
    enter(program_.functions[root.fn].entry_block);
    while (!done_) step();
    return std::move(result_);
  }

 private:
  const Function& function() const { return program_.functions[frames_.back().fn]; }

  Location here() const {
    return {frames_.empty() ? -1 : frames_.back().fn,
            block_ == nullptr ? -1 : block_->id, pc_};
  }

  Event event(EventKind kind) const {
    Event e;
    e.kind = kind;
    Location loc = here();
    e.activation = frames_.empty() ? 0 : frames_.back().activation;
    e.function = loc.function;
    e.block = loc.block;
    e.index = loc.index;
    return e;
  }

  void record(const Event& e) {
    if (options_.record_events) result_.trace.events.push_back(e);
  }

  void violation(ViolationKind kind, std::string detail) {
    if (result_.trace.violations.size() < kMaxViolations) {
      result_.trace.violations.push_back({kind, std::move(detail)});
    }
  }

  std::string where() const {
    return function().name + ".b" + std::to_string(block_->id) + "[" +
           std::to_string(pc_) + "]";
  }

  void finish(OutcomeKind kind) {
    result_.outcome.kind = kind;
    result_.outcome.r0 = regs_[mir::kReturnRegister];
    if (result_.outcome.site.function < 0) result_.outcome.site = here();
    done_ = true;
  }

  void fault(std::string detail) {
    result_.outcome.detail = std::move(detail);
    finish(OutcomeKind::kFault);
  }

  void enter(BlockId id) {
    const Function& fn = function();
    auto it = fn.blocks.find(id);
    if (it == fn.blocks.end()) {
      fault("branch to missing block b" + std::to_string(id));
      return;
    }
    block_ = &it->second;
    pc_ = 0;
    if (options_.record_events) record(event(EventKind::kBlockEnter));
  }

  std::uint64_t load(std::uint64_t addr) {
    ++result_.trace.counters.memory_accesses;
    auto it = mem_.find(addr);
    return it == mem_.end() ? 0 : it->second;
  }

  void store(std::uint64_t addr, std::uint64_t value) {
    ++result_.trace.counters.memory_accesses;
    mem_[addr] = value;
  }

  std::uint64_t value_of(mir::Reg r) const { return r < 0 ? 0 : regs_[r]; }

  void memory_write(const Instr& in, std::uint64_t addr) {
    std::uint64_t value = value_of(in.rs);
    store(addr, value);
    const Frame& frame = frames_.back();
    Event e = event(EventKind::kStore);
    e.addr = addr;
    e.value = value;
    e.height = static_cast<std::int64_t>(addr - frame.origin);
    if (const auto* fa = analyses_[frame.fn]) {
      e.analyzed = fa->heights.at(block_->id, pc_).dest;
      e.write_class = static_cast<std::int8_t>(fa->writes.at(block_->id, pc_));
      if (e.analyzed.is_concrete() && e.analyzed.offset() != e.height) {
        violation(ViolationKind::kHeight,
                  where() + ": analyzed height " + e.analyzed.to_string() +
                      ", runtime height " + std::to_string(e.height));
      }
    }
    record(e);
  }

  // Walks the shadow stack down from the top looking for `ra`. Returns the
  // number of discarded entries, or nullopt when the guard is reached.
  std::optional<std::int64_t> shadow_match(std::uint64_t ra) {
    std::int64_t k = 0;
    while (top_ > 0) {
      --top_;
      if (top_ == 0) return std::nullopt;  // guard word
      if (shadow_[top_] == ra) return k;
      ++k;
    }
    return std::nullopt;
  }

  void abort_run() {
    record(event(EventKind::kAbort));
    finish(OutcomeKind::kAborted);
  }

  void call(std::int32_t callee) {
    if (sp_ - mir::kWordSize < kStackLimit) {
      fault("stack overflow");
      return;
    }
    Frame frame;
    frame.fn = callee;
    frame.ret_block = block_->id;
    frame.ret_index = pc_;
    frame.cookie = cookie_for(frames_.back().fn, block_->id, pc_);
    frame.activation = ++next_activation_;
    frame.shadow_depth = top_;
    sp_ -= mir::kWordSize;
    store(sp_, frame.cookie);
    frame.origin = sp_;
    Event e = event(EventKind::kCall);
    e.value = frame.cookie;
    e.count = frame.activation;
    record(e);
    frames_.push_back(frame);
    enter(program_.functions[callee].entry_block);
  }

  // Continue after the call instruction that created `child`.
  void resume_after(const Frame& child) {
    Frame& caller = frames_.back();
    caller.poisoned &= static_cast<std::uint16_t>(
        ~mir::reg_effects(Instr::Call("")).defs);
    const Function& fn = function();
    block_ = &fn.blocks.at(child.ret_block);
    pc_ = child.ret_index + 1;
  }

  void step() {
    Counters& counters = result_.trace.counters;
    if (counters.steps >= options_.budget) {
      finish(OutcomeKind::kBudgetExhausted);
      return;
    }
    if (pc_ >= block_->instrs.size()) {
      fault("fell off the end of block b" + std::to_string(block_->id));
      return;
    }
    const Instr& in = block_->instrs[pc_];
    ++counters.steps;
    if (mir::is_shadow_op(in.op)) {
      ++counters.shadow_ops;
    } else {
      ++counters.instructions;
    }

    Frame& frame = frames_.back();
    const mir::RegEffects effects = mir::reg_effects(in);
    if (const auto* fa = analyses_[frame.fn]) {
      frame.poisoned |= fa->liveness.dead_before(block_->id, pc_);
      if (std::uint16_t bad = effects.uses & frame.poisoned) {
        violation(ViolationKind::kLiveness,
                  where() + ": reads dead register mask " + std::to_string(bad));
      }
    }

    bool advance = true;
    switch (in.op) {
      case Opcode::kSpAdd:
        sp_ += static_cast<std::uint64_t>(in.imm);
        break;
      case Opcode::kSpMov:
        sp_ = regs_[in.rd];
        break;
      case Opcode::kMovI:
        regs_[in.rd] = static_cast<std::uint64_t>(in.imm);
        break;
      case Opcode::kMovR:
        regs_[in.rd] = regs_[in.rs];
        break;
      case Opcode::kLeaSp:
        regs_[in.rd] = sp_ + static_cast<std::uint64_t>(in.imm);
        break;
      case Opcode::kBinOp:
        regs_[in.rd] += regs_[in.rs];
        break;
      case Opcode::kStoreSp:
        memory_write(in, sp_ + static_cast<std::uint64_t>(in.imm));
        break;
      case Opcode::kStoreReg:
        memory_write(in, regs_[in.rd]);
        break;
      case Opcode::kStoreGlobal: {
        std::uint64_t value = value_of(in.rs);
        ++counters.memory_accesses;
        result_.outcome.global_stores.emplace_back(in.sym, value);
        Event e = event(EventKind::kStore);
        e.value = value;
        e.analyzed = HeightValue::Bottom();
        e.write_class = static_cast<std::int8_t>(analysis::WriteClass::kGlobal);
        record(e);
        break;
      }
      case Opcode::kLoadSp:
        regs_[in.rd] = load(sp_ + static_cast<std::uint64_t>(in.imm));
        break;
      case Opcode::kLoadReg:
        regs_[in.rd] = load(regs_[in.rs]);
        break;
      case Opcode::kCall: {
        auto it = index_.find(in.sym);
        if (it == index_.end()) {
          fault("call to unknown function " + in.sym);
          return;
        }
        frame.poisoned &= static_cast<std::uint16_t>(~effects.uses);
        call(it->second);
        return;
      }
      case Opcode::kICall: {
        std::uint64_t n = program_.functions.size();
        frame.poisoned &= static_cast<std::uint16_t>(~effects.uses);
        call(static_cast<std::int32_t>(regs_[in.rd] % n));
        return;
      }
      case Opcode::kRet: {
        std::uint64_t ra = load(sp_);
        Event e = event(EventKind::kRet);
        e.value = ra;
        record(e);
        if (ra != frame.cookie) {
          result_.outcome.expected = frame.cookie;
          result_.outcome.found = ra;
          result_.outcome.detail = "ret through corrupted return address";
          finish(OutcomeKind::kUndetectedCorruption);
          return;
        }
        if (!result_.trace.unwound && top_ != frame.shadow_depth) {
          violation(ViolationKind::kShadowBalance,
                    where() + ": shadow depth " + std::to_string(top_) +
                        " at ret, " + std::to_string(frame.shadow_depth) +
                        " at call");
        }
        sp_ += mir::kWordSize;
        Frame child = frame;
        frames_.pop_back();
        if (frames_.empty()) {
          block_ = nullptr;
          finish(OutcomeKind::kCompleted);
          return;
        }
        resume_after(child);
        return;
      }
      case Opcode::kBr:
        enter(in.target);
        return;
      case Opcode::kBrc: {
        bool taken = decision_ < input_.decisions.size() &&
                     input_.decisions[decision_];
        ++decision_;
        enter(taken ? in.target : in.alt);
        return;
      }
      case Opcode::kCorrupt: {
        Event e = event(EventKind::kCorrupt);
        e.count = in.frame_depth;
        e.value = static_cast<std::uint64_t>(in.imm);
        if (in.frame_depth >= 0 &&
            static_cast<std::size_t>(in.frame_depth) < frames_.size()) {
          const Frame& target = frames_[frames_.size() - 1 - in.frame_depth];
          e.addr = target.origin;
          store(target.origin, static_cast<std::uint64_t>(in.imm));
        }
        record(e);
        break;
      }
      case Opcode::kHalt:
        record(event(EventKind::kHalt));
        finish(OutcomeKind::kCompleted);
        return;
      case Opcode::kUnwind: {
        const std::size_t k = static_cast<std::size_t>(in.imm);
        if (in.imm < 1 || k >= frames_.size()) {
          fault("unwind past the entry function");
          return;
        }
        Event e = event(EventKind::kUnwind);
        e.count = in.imm;
        record(e);
        Frame child = frames_[frames_.size() - k];
        frames_.resize(frames_.size() - k);
        sp_ = child.origin + mir::kWordSize;
        result_.trace.unwound = true;
        resume_after(child);
        return;
      }
      case Opcode::kSPush: {
        std::uint64_t ra = load(sp_ - static_cast<std::uint64_t>(in.imm));
        if (top_ >= kShadowCapacity) {
          fault("shadow stack overflow");
          return;
        }
        shadow_[top_++] = ra;
        charge(counters, transform::push_cost(in.dead_scratch, in.is_edge_push()));
        Event e = event(EventKind::kShadowPush);
        e.value = ra;
        e.height = in.imm;
        record(e);
        if (in.is_edge_push()) {
          enter(in.target);
          return;
        }
        break;
      }
      case Opcode::kSPop: {
        std::uint64_t ra = load(sp_ - static_cast<std::uint64_t>(in.imm));
        auto k = shadow_match(ra);
        charge(counters, transform::kPopCost +
                             (k ? *k : 0) * transform::kPopUnwindStep);
        Event e = event(EventKind::kShadowPop);
        e.value = ra;
        e.height = in.imm;
        e.count = k ? *k : -1;
        record(e);
        if (!k) {
          abort_run();
          return;
        }
        break;
      }
      case Opcode::kRfPush:
        scratch_ = regs_[in.rd];
        regs_[in.rd] = load(sp_);
        charge(counters, transform::kRegFramePushCost);
        {
          Event e = event(EventKind::kRegFramePush);
          e.value = regs_[in.rd];
          record(e);
        }
        break;
      case Opcode::kRfPop: {
        std::uint64_t ra = load(sp_);
        Event e = event(EventKind::kRegFramePop);
        e.value = ra;
        transform::Cost cost = transform::kRegFramePopCost;
        if (regs_[in.rd] != ra) {
          auto k = shadow_match(ra);
          cost += transform::kRegFrameSlowCost +
                  (k ? *k : 0) * transform::kPopUnwindStep;
          charge(counters, cost);
          e.count = k ? *k : -1;
          record(e);
          if (!k) {
            abort_run();
            return;
          }
        } else {
          charge(counters, cost);
          record(e);
        }
        regs_[in.rd] = scratch_;
        break;
      }
    }
    if (done_) return;
    frames_.back().poisoned &= static_cast<std::uint16_t>(~effects.defs);
    if (advance) ++pc_;
  }

  const Program& program_;
  const ExecInput& input_;
  const ExecOptions& options_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<const analysis::FunctionAnalysis*> analyses_;

  std::array<std::uint64_t, mir::kNumRegisters> regs_{};
  std::uint64_t sp_ = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> mem_;
  std::vector<Frame> frames_;
  std::vector<std::uint64_t> shadow_;
  std::size_t top_ = 1;  // shadow_[0] is the zeroed guard
  std::uint64_t scratch_ = 0;
  std::uint32_t next_activation_ = 0;
  std::size_t decision_ = 0;

  const Block* block_ = nullptr;
  std::uint32_t pc_ = 0;
  bool done_ = false;
  ExecResult result_;
};

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::string fn_name(const Program& program, std::int32_t fn) {
  if (fn < 0 || static_cast<std::size_t>(fn) >= program.functions.size()) return "?";
  return program.functions[fn].name;
}

std::string location_text(const Program& program, std::int32_t fn,
                          BlockId block, std::uint32_t index) {
  return fn_name(program, fn) + ".b" + std::to_string(block) + "[" +
         std::to_string(index) + "]";
}

const char* class_name(std::int8_t c) {
  if (c < 0) return "unknown";
  return analysis::to_string(static_cast<analysis::WriteClass>(c));
}

}  // namespace

ExecResult execute(const Program& program, const ExecInput& input,
                   const ExecOptions& options) {
  Machine machine(program, input, options);
  return machine.run();
}

ExecResult execute_checked(const transform::InstrumentedProgram& ip,
                           const ExecInput& input, std::uint64_t budget) {
  const analysis::ProgramAnalysis analyses = analysis::analyze_program(ip.program);
  ExecOptions options;
  options.budget = budget;
  options.analysis = &analyses;
  return execute(ip.program, input, options);
}

std::string trace_to_text(const Program& program, const ExecResult& r) {
  std::ostringstream os;
  for (const Event& e : r.trace.events) {
    os << to_string(e.kind) << " #" << e.activation << " "
       << location_text(program, e.function, e.block, e.index);
    switch (e.kind) {
      case EventKind::kCall:
        os << " callee=#" << e.count << " cookie=" << hex(e.value);
        break;
      case EventKind::kRet:
        os << " ra=" << hex(e.value);
        break;
      case EventKind::kStore:
        os << " class=" << class_name(e.write_class);
        if (e.write_class != static_cast<std::int8_t>(analysis::WriteClass::kGlobal)) {
          os << " addr=" << hex(e.addr) << " height=" << e.height
             << " analyzed=" << e.analyzed.to_string();
        }
        os << " value=" << hex(e.value);
        break;
      case EventKind::kShadowPush:
        os << " h=" << e.height << " ra=" << hex(e.value);
        break;
      case EventKind::kShadowPop:
      case EventKind::kRegFramePop:
        os << " ra=" << hex(e.value) << " matched_after=" << e.count;
        break;
      case EventKind::kRegFramePush:
        os << " ra=" << hex(e.value);
        break;
      case EventKind::kCorrupt:
        os << " depth=" << e.count << " value=" << hex(e.value);
        break;
      case EventKind::kUnwind:
        os << " frames=" << e.count;
        break;
      default:
        break;
    }
    os << "\n";
  }
  const Outcome& o = r.outcome;
  os << "outcome " << to_string(o.kind);
  switch (o.kind) {
    case OutcomeKind::kCompleted:
      os << " r0=" << o.r0 << " global_stores=" << o.global_stores.size();
      break;
    case OutcomeKind::kAborted:
      os << " at " << location_text(program, o.site.function, o.site.block,
                                    o.site.index);
      break;
    case OutcomeKind::kUndetectedCorruption:
      os << " at " << location_text(program, o.site.function, o.site.block,
                                    o.site.index)
         << " expected=" << hex(o.expected) << " found=" << hex(o.found);
      break;
    default:
      if (!o.detail.empty()) os << " " << o.detail;
      break;
  }
  os << "\n";
  const Counters& c = r.trace.counters;
  os << "counters instructions=" << c.instructions
     << " shadow_ops=" << c.shadow_ops
     << " shadow_instructions=" << c.shadow_instructions
     << " memory_accesses=" << c.memory_accesses << "\n";
  for (const Violation& v : r.trace.violations) {
    os << "violation " << to_string(v.kind) << " " << v.detail << "\n";
  }
  return os.str();
}

std::string trace_to_json(const Program& program, const ExecResult& r) {
  using nlohmann::json;
  json events = json::array();
  for (const Event& e : r.trace.events) {
    json j = {{"kind", to_string(e.kind)},
              {"activation", e.activation},
              {"function", fn_name(program, e.function)},
              {"block", e.block},
              {"index", e.index}};
    switch (e.kind) {
      case EventKind::kCall:
        j["callee_activation"] = e.count;
        j["cookie"] = e.value;
        break;
      case EventKind::kRet:
      case EventKind::kRegFramePush:
        j["ra"] = e.value;
        break;
      case EventKind::kStore:
        j["class"] = class_name(e.write_class);
        j["addr"] = e.addr;
        j["height"] = e.height;
        j["analyzed"] = e.analyzed.to_string();
        j["value"] = e.value;
        break;
      case EventKind::kShadowPush:
        j["h"] = e.height;
        j["ra"] = e.value;
        break;
      case EventKind::kShadowPop:
      case EventKind::kRegFramePop:
        j["ra"] = e.value;
        j["matched_after"] = e.count;
        break;
      case EventKind::kCorrupt:
        j["depth"] = e.count;
        j["value"] = e.value;
        break;
      case EventKind::kUnwind:
        j["frames"] = e.count;
        break;
      default:
        break;
    }
    events.push_back(std::move(j));
  }
  const Outcome& o = r.outcome;
  json globals = json::array();
  for (const auto& [name, value] : o.global_stores) globals.push_back({name, value});
  json outcome = {{"kind", to_string(o.kind)},
                  {"r0", o.r0},
                  {"global_stores", globals},
                  {"site", location_text(program, o.site.function, o.site.block,
                                         o.site.index)}};
  if (o.kind == OutcomeKind::kUndetectedCorruption) {
    outcome["expected"] = o.expected;
    outcome["found"] = o.found;
  }
  if (!o.detail.empty()) outcome["detail"] = o.detail;
  const Counters& c = r.trace.counters;
  json violations = json::array();
  for (const Violation& v : r.trace.violations) {
    violations.push_back({{"kind", to_string(v.kind)}, {"detail", v.detail}});
  }
  json out = {{"events", events},
              {"outcome", outcome},
              {"counters",
               {{"steps", c.steps},
                {"instructions", c.instructions},
                {"memory_accesses", c.memory_accesses},
                {"shadow_ops", c.shadow_ops},
                {"shadow_instructions", c.shadow_instructions},
                {"shadow_memory", c.shadow_memory}}},
              {"violations", violations}};
  return out.dump(2);
}

std::vector<bool> parse_decisions(const std::string& text) {
  std::vector<bool> out;
  for (char c : text) {
    if (c == '1' || c == 't' || c == 'T') {
      out.push_back(true);
    } else if (c == '0' || c == 'f' || c == 'F') {
      out.push_back(false);
    } else if (c != ',' && !std::isspace(static_cast<unsigned char>(c))) {
      throw std::invalid_argument(std::string("bad decision character '") + c + "'");
    }
  }
  return out;
}

}  // namespace shadowlab::vm
