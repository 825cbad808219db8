#include "shadowlab/validate.h"

#include <set>

namespace shadowlab::mir {

namespace {

bool reg_ok(Reg r) { return r >= 0 && r < kNumRegisters; }
bool optional_reg_ok(Reg r) { return r == -1 || reg_ok(r); }

bool operands_ok(const Instr& i) {
  switch (i.op) {
    case Opcode::kSpMov:
    case Opcode::kMovI:
    case Opcode::kLeaSp:
    case Opcode::kLoadSp:
    case Opcode::kICall:
    case Opcode::kRfPush:
    case Opcode::kRfPop:
      return reg_ok(i.rd);
    case Opcode::kMovR:
    case Opcode::kBinOp:
    case Opcode::kLoadReg:
      return reg_ok(i.rd) && reg_ok(i.rs);
    case Opcode::kStoreSp:
    case Opcode::kStoreGlobal:
      return optional_reg_ok(i.rs);
    case Opcode::kStoreReg:
      return reg_ok(i.rd) && optional_reg_ok(i.rs);
    default:
      return true;
  }
}

}  // namespace

std::vector<Diagnostic> validate_program(const Program& program,
                                         ValidateOptions options) {
  std::vector<Diagnostic> out;
  auto report = [&out](const std::string& fn, BlockId block, int line,
                       std::string reason) {
    out.push_back({fn, block, std::move(reason), line});
  };

  if (program.find(program.entry) == nullptr) {
    report("", -1, 0, "entry function '" + program.entry + "' does not exist");
  }
  std::set<std::string> names;
  for (const Function& fn : program.functions) {
    if (!names.insert(fn.name).second) {
      report(fn.name, -1, fn.line, "duplicate function name");
    }
  }

  for (const Function& fn : program.functions) {
    if (fn.blocks.count(fn.entry_block) == 0) {
      report(fn.name, fn.entry_block, fn.line, "entry block does not exist");
      continue;
    }
    for (const auto& [id, block] : fn.blocks) {
      if (!options.allow_shadow_ops && (id < 0 || id > kMaxSourceBlockId)) {
        report(fn.name, id, block.line, "block id out of range");
      }
      if (block.instrs.empty()) {
        report(fn.name, id, block.line, "empty block");
        continue;
      }
      for (std::size_t k = 0; k < block.instrs.size(); ++k) {
        const Instr& instr = block.instrs[k];
        const bool last = k + 1 == block.instrs.size();
        if (is_control_transfer(instr) && !last) {
          report(fn.name, id, instr.line, "mid-block control transfer");
        }
        if (!operands_ok(instr)) {
          report(fn.name, id, instr.line, "register index out of range");
        }
        if (instr.op == Opcode::kCorrupt && !program.adversarial) {
          report(fn.name, id, instr.line,
                 "adversarial instruction in benign program");
        }
        if (is_shadow_op(instr.op) && !options.allow_shadow_ops) {
          report(fn.name, id, instr.line,
                 "shadow pseudo instruction in uninstrumented program");
        }
        if (instr.op == Opcode::kCall && program.find(instr.sym) == nullptr) {
          report(fn.name, id, instr.line,
                 "call to unknown function " + instr.sym);
        }
        if (instr.op == Opcode::kStoreGlobal &&
            program.globals.count(instr.sym) == 0) {
          report(fn.name, id, instr.line, "undeclared global " + instr.sym);
        }
        if (instr.op == Opcode::kUnwind && instr.imm < 1) {
          report(fn.name, id, instr.line, "unwind frame count must be >= 1");
        }
      }
      if (block.terminator() == nullptr) {
        report(fn.name, id, block.instrs.back().line,
               "block does not end with a control transfer");
      }
      for (BlockId succ : block.successors()) {
        if (fn.blocks.count(succ) == 0) {
          report(fn.name, id, block.instrs.back().line,
                 "unknown block b" + std::to_string(succ));
        }
        if (succ == fn.entry_block) {
          report(fn.name, id, block.instrs.back().line,
                 "branch to the entry block");
        }
      }
    }

    // Reachability from the entry block.
    std::set<BlockId> seen{fn.entry_block};
    std::vector<BlockId> work{fn.entry_block};
    while (!work.empty()) {
      BlockId b = work.back();
      work.pop_back();
      for (BlockId succ : fn.blocks.at(b).successors()) {
        if (fn.blocks.count(succ) != 0 && seen.insert(succ).second) {
          work.push_back(succ);
        }
      }
    }
    for (const auto& [id, block] : fn.blocks) {
      if (seen.count(id) == 0) {
        report(fn.name, id, block.line, "unreachable block");
      }
    }
  }
  return out;
}

std::string format_diagnostic(const std::string& file, const Diagnostic& d) {
  std::string where = d.function.empty() ? "" : d.function;
  if (d.block >= 0) where += ".b" + std::to_string(d.block);
  return file + ":" + std::to_string(d.line) + ": " +
         (where.empty() ? "" : where + ": ") + d.reason;
}

}  // namespace shadowlab::mir
