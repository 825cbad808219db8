// generator.h
//
// Seeded random MIR programs for the verification campaign.
//
// Functions are assigned call levels and direct calls only go to deeper
// levels, except for recursive calls, which sit in blocks entered through
// the true edge of a `brc`. Loops likewise close only through true edges,
// and every false edge moves forward, so a run terminates once its input
// decisions are exhausted. Unsafe writes are harmless at runtime (heap
// addresses, or frame slots reached through laundered pointers); only the
// `corrupt` instructions of adversarial programs touch return addresses.
#ifndef SHADOWLAB_GENERATOR_H_
#define SHADOWLAB_GENERATOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "shadowlab/mir.h"
#include "shadowlab/vm.h"

namespace shadowlab::gen {

struct GenConfig {
  std::uint64_t seed = 1;
  int min_functions = 3;
  int max_functions = 10;
  int max_blocks = 7;
  int max_instrs = 5;  // body instructions per block, before the terminator
  int max_call_depth = 6;
  int max_calls_per_function = 3;
  double leaf_fraction = 0.3;
  double loop_probability = 0.3;
  double safe_fraction = 0.4;
  double inline_fraction = 0.15;  // single-block leaf helpers
  double icall_probability = 0.1;
  double recursion_probability = 0.1;
  double attack_density = 0.0;  // fraction of adversarial programs
  int max_decisions = 24;
};

// Program `index` of the corpus described by `config`; depends only on
// (config, index).
mir::Program generate_program(const GenConfig& config, std::uint64_t index);

// Inputs for program `index`: random decisions and argument registers.
std::vector<vm::ExecInput> generate_inputs(const GenConfig& config,
                                           std::uint64_t index, int count);

// `prog_0007.mir`
std::string program_file_name(std::uint64_t index);

}  // namespace shadowlab::gen

#endif  // SHADOWLAB_GENERATOR_H_
