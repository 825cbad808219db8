// validate.h
//
// Structural checks over a parsed program. Diagnostics are the result; an
// empty list means every program, function and block invariant holds.
#ifndef SHADOWLAB_VALIDATE_H_
#define SHADOWLAB_VALIDATE_H_

#include <string>
#include <vector>

#include "shadowlab/mir.h"

namespace shadowlab::mir {

struct Diagnostic {
  std::string function;  // empty for program-level diagnostics
  BlockId block = -1;
  std::string reason;
  int line = 0;

  bool operator==(const Diagnostic&) const = default;
};

// Larger ids are reserved for clones and transition blocks.
inline constexpr BlockId kMaxSourceBlockId = 999;

struct ValidateOptions {
  // Accept the shadow pseudo instructions and block ids emitted by
  // instrumentation.
  bool allow_shadow_ops = false;
};

std::vector<Diagnostic> validate_program(const Program& program,
                                         ValidateOptions options = {});

// `file:line: message`, the rendering used by the command-line tool.
std::string format_diagnostic(const std::string& file, const Diagnostic& d);

}  // namespace shadowlab::mir

#endif  // SHADOWLAB_VALIDATE_H_
