#include "shadowlab/generator.h"

#include <algorithm>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "shadowlab/validate.h"

namespace shadowlab::gen {

using mir::Block;
using mir::BlockId;
using mir::Function;
using mir::Instr;
using mir::Program;
using mir::Reg;

namespace {

constexpr int kNumGlobals = 3;
constexpr Reg kFramePointer = 13;
constexpr std::uint32_t kInputSalt = 0x1A9u;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t index,
                         std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32), salt};
  return std::mt19937_64(seq);
}

struct FnSpec {
  std::string name;
  int level = 0;
  bool safe = false;
  bool leaf = false;
  bool single_block = false;
  bool hosts_attack = false;
};

class Builder {
 public:
  Builder(const GenConfig& config, std::uint64_t index)
      : config_(config), rng_(make_rng(config.seed, index, 0)) {}

  Program build() {
    const int n = uniform(std::max(1, config_.min_functions),
                          std::max(config_.min_functions, config_.max_functions));
    specs_.push_back({"main", 0, false, false, false, false});
    for (int i = 1; i < n; ++i) {
      FnSpec s;
      s.name = "f" + std::to_string(i);
      s.level = uniform(1, std::max(1, std::min(config_.max_call_depth, n - 1)));
      if (chance(config_.inline_fraction)) {
        s.single_block = true;
        s.leaf = true;
        s.safe = chance(0.7);
      } else {
        s.safe = chance(config_.safe_fraction);
        s.leaf = chance(config_.leaf_fraction);
      }
      specs_.push_back(s);
    }

    Program program;
    program.entry = "main";
    program.adversarial = chance(config_.attack_density);
    if (program.adversarial) {
      std::vector<int> hosts{0};
      for (int i = 1; i < n; ++i) {
        if (!specs_[i].safe && !specs_[i].single_block) hosts.push_back(i);
      }
      std::shuffle(hosts.begin(), hosts.end(), rng_);
      const int count = std::min<int>(uniform(1, 2), static_cast<int>(hosts.size()));
      for (int i = 0; i < count; ++i) specs_[hosts[i]].hosts_attack = true;
    }
    for (int g = 0; g < kNumGlobals; ++g) program.globals.insert("g" + std::to_string(g));
    for (int i = 0; i < n; ++i) {
      program.functions.push_back(specs_[i].single_block ? single_block_leaf(i)
                                                        : general(i));
    }
    return program;
  }

 private:
  bool chance(double p) {
    return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng_);
  }
  int uniform(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }
  Reg reg() { return uniform(1, 12); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
  }
  std::string global() { return "g" + std::to_string(uniform(0, kNumGlobals - 1)); }
  std::int64_t heap_address() {
    return static_cast<std::int64_t>(vm::kHeapBase) + 8 * uniform(0, 63);
  }

  // Direct callees keep the level order; safe functions only call safe ones.
  std::vector<int> callees_of(int f) const {
    std::vector<int> out;
    for (std::size_t g = 1; g < specs_.size(); ++g) {
      if (specs_[g].level > specs_[f].level && (!specs_[f].safe || specs_[g].safe)) {
        out.push_back(static_cast<int>(g));
      }
    }
    return out;
  }
  std::vector<int> recursive_targets(int f) const {
    std::vector<int> out;
    for (std::size_t g = 1; g < specs_.size(); ++g) {
      const FnSpec& s = specs_[g];
      if (s.level <= specs_[f].level && !s.single_block && !s.leaf &&
          (!specs_[f].safe || s.safe)) {
        out.push_back(static_cast<int>(g));
      }
    }
    return out;
  }

  Function single_block_leaf(int f) {
    const FnSpec& spec = specs_[f];
    Block b;
    b.id = 0;
    auto& in = b.instrs;
    if (!spec.safe) {
      in.push_back(Instr::MovI(3, heap_address()));
      in.push_back(Instr::StoreReg(3, 1));
      in.push_back(Instr::MovR(0, 1));
    } else {
      switch (uniform(0, 2)) {
        case 0:
          in.push_back(Instr::MovR(0, 1));
          in.push_back(Instr::BinOp(0, 2));
          break;
        case 1:
          in.push_back(Instr::SpAdd(-16));
          in.push_back(Instr::StoreSp(8, 1));
          in.push_back(Instr::LoadSp(0, 8));
          in.push_back(Instr::BinOp(0, 2));
          in.push_back(Instr::SpAdd(16));
          break;
        default:
          in.push_back(Instr::StoreGlobal(global(), 1));
          in.push_back(Instr::MovR(0, 2));
          break;
      }
    }
    in.push_back(Instr::Ret());
    Function fn;
    fn.name = spec.name;
    fn.entry_block = 0;
    fn.blocks.emplace(0, std::move(b));
    return fn;
  }

  void unsafe_write(std::vector<Instr>& out, std::int64_t frame) {
    if (frame >= 8 && chance(0.5)) {
      // A frame slot reached through a pointer the analysis cannot follow.
      Reg a = reg();
      Reg z = reg();
      while (z == a) z = reg();
      out.push_back(Instr::LeaSp(a, 8 * uniform(0, static_cast<int>(frame / 8) - 1)));
      out.push_back(Instr::MovI(z, 0));
      out.push_back(Instr::BinOp(a, z));
      out.push_back(Instr::StoreReg(a, reg()));
    } else {
      Reg a = reg();
      out.push_back(Instr::MovI(a, heap_address()));
      out.push_back(Instr::StoreReg(a, reg()));
    }
  }

  Function general(int f) {
    const FnSpec& spec = specs_[f];
    const std::vector<int> callees = spec.leaf ? std::vector<int>{} : callees_of(f);
    const std::vector<int> recursive =
        spec.leaf ? std::vector<int>{} : recursive_targets(f);
    const int nblocks = uniform(1, std::max(1, config_.max_blocks));
    const std::int64_t frame = 8 * uniform(0, 4);
    const bool grow_loop = !spec.safe && spec.leaf && frame > 0 && nblocks > 1 &&
                           chance(0.4);
    int calls_left = config_.max_calls_per_function;
    const int unsafe_block =
        spec.safe ? -1 : (nblocks > 1 && chance(0.8) ? uniform(1, nblocks - 1) : 0);
    const int attack_block = spec.hosts_attack ? uniform(0, nblocks - 1) : -1;

    Function fn;
    fn.name = spec.name;
    fn.entry_block = 0;
    BlockId next_extra = nblocks;
    bool grow_placed = false;
    bool has_call = false;

    for (int i = 0; i < nblocks; ++i) {
      Block b;
      b.id = i;
      auto& in = b.instrs;
      if (i == 0) {
        if (frame > 0) in.push_back(Instr::SpAdd(-frame));
        if (grow_loop) in.push_back(Instr::LeaSp(kFramePointer, 0));
      }
      std::vector<std::int64_t> written;
      const int items = uniform(0, std::max(0, config_.max_instrs));
      for (int k = 0; k < items; ++k) {
        const int roll = uniform(0, 99);
        if (roll < 15) {
          in.push_back(Instr::MovI(reg(), uniform(0, 100)));
        } else if (roll < 25) {
          in.push_back(Instr::MovR(reg(), reg()));
        } else if (roll < 35) {
          in.push_back(Instr::BinOp(reg(), reg()));
        } else if (roll < 48) {
          in.push_back(Instr::StoreGlobal(global(), reg()));
        } else if (roll < 66 && frame > 0) {
          std::int64_t off = 8 * uniform(0, static_cast<int>(frame / 8) - 1);
          in.push_back(Instr::StoreSp(off, reg()));
          written.push_back(off);
        } else if (roll < 74 && !written.empty()) {
          in.push_back(Instr::LoadSp(reg(), pick(written)));
        } else if (roll < 88 && !callees.empty() && calls_left > 0) {
          if (chance(0.5)) in.push_back(Instr::MovI(1, uniform(0, 50)));
          in.push_back(Instr::Call(specs_[pick(callees)].name));
          --calls_left;
          has_call = true;
        } else if (!spec.safe && !callees.empty() && calls_left > 0 &&
                   chance(config_.icall_probability)) {
          Reg r = reg();
          in.push_back(Instr::MovI(r, pick(callees)));
          in.push_back(Instr::ICall(r));
          --calls_left;
          has_call = true;
        } else if (!spec.safe && chance(0.3)) {
          unsafe_write(in, frame);
        } else {
          in.push_back(Instr::MovI(reg(), uniform(0, 100)));
        }
      }
      if (i == unsafe_block) unsafe_write(in, frame);
      if (i == attack_block) {
        in.push_back(Instr::Corrupt(
            uniform(0, 2),
            static_cast<std::int64_t>(vm::kAttackerTag |
                                      static_cast<std::uint64_t>(uniform(1, 0xFFFF)))));
      }
      if (i == nblocks - 1 && !has_call && !callees.empty()) {
        in.push_back(Instr::Call(specs_[pick(callees)].name));
        has_call = true;
      }

      std::vector<Block> extra;
      if (i == nblocks - 1) {
        if (chance(0.7)) in.push_back(Instr::MovR(0, reg()));
        if (frame > 0) in.push_back(Instr::SpAdd(frame));
        in.push_back(f == 0 && chance(0.2) ? Instr::Halt() : Instr::Ret());
      } else {
        const BlockId next = i + 1;
        if (chance(config_.loop_probability) && i >= 1) {
          in.push_back(Instr::Brc(uniform(1, i), next));
        } else if (grow_loop && !grow_placed) {
          // Stack-growing loop: sp is unknown inside, restored from r13.
          grow_placed = true;
          Block loop;
          loop.id = next_extra++;
          loop.instrs.push_back(Instr::SpAdd(-8));
          loop.instrs.push_back(Instr::StoreSp(0, reg()));
          Block restore;
          restore.id = next_extra++;
          restore.instrs.push_back(Instr::SpMov(kFramePointer));
          restore.instrs.push_back(Instr::Br(next));
          loop.instrs.push_back(Instr::Brc(loop.id, restore.id));
          in.push_back(Instr::Brc(loop.id, next));
          extra.push_back(std::move(loop));
          extra.push_back(std::move(restore));
        } else if (!recursive.empty() && chance(config_.recursion_probability)) {
          Block rec;
          rec.id = next_extra++;
          rec.instrs.push_back(Instr::MovI(1, uniform(0, 50)));
          rec.instrs.push_back(Instr::Call(specs_[pick(recursive)].name));
          rec.instrs.push_back(Instr::Br(next));
          in.push_back(Instr::Brc(rec.id, next));
          extra.push_back(std::move(rec));
          has_call = true;
        } else if (i + 2 <= nblocks - 1 && chance(0.4)) {
          in.push_back(Instr::Brc(uniform(i + 2, nblocks - 1), next));
        } else {
          in.push_back(Instr::Br(next));
        }
      }
      fn.blocks.emplace(b.id, std::move(b));
      for (Block& e : extra) fn.blocks.emplace(e.id, std::move(e));
    }
    return fn;
  }

  const GenConfig& config_;
  std::mt19937_64 rng_;
  std::vector<FnSpec> specs_;
};

}  // namespace

Program generate_program(const GenConfig& config, std::uint64_t index) {
  Program program = Builder(config, index).build();
  auto diags = mir::validate_program(program);
  if (!diags.empty()) {
    throw std::logic_error("generated program " + std::to_string(index) +
                           " is invalid: " + diags.front().function + ".b" +
                           std::to_string(diags.front().block) + ": " +
                           diags.front().reason);
  }
  return program;
}

std::vector<vm::ExecInput> generate_inputs(const GenConfig& config,
                                           std::uint64_t index, int count) {
  std::mt19937_64 rng = make_rng(config.seed, index, kInputSalt);
  std::vector<vm::ExecInput> out;
  for (int c = 0; c < count; ++c) {
    vm::ExecInput input;
    const int n = std::uniform_int_distribution<int>(0, config.max_decisions)(rng);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < n; ++i) input.decisions.push_back(coin(rng));
    std::uniform_int_distribution<int> value(0, 1000);
    for (int r = 1; r <= 12; ++r) input.registers[r] = static_cast<std::uint64_t>(value(rng));
    out.push_back(std::move(input));
  }
  return out;
}

std::string program_file_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "prog_%04llu.mir",
                static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace shadowlab::gen
