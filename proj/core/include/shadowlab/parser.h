// parser.h
//
// Text format for MIR programs.
//
//   #entry main
//   #adversarial false
//   #global counter
//   fn main {
//   b0:
//     spadd -16
//     store.sp 8, r1
//     call helper
//     spadd 16
//     ret
//   }
//
// One instruction per line (`;` may separate instructions on one line),
// `//` starts a comment. Block labels are `bN:`; the first block listed is
// the function entry.
#ifndef SHADOWLAB_PARSER_H_
#define SHADOWLAB_PARSER_H_

#include <stdexcept>
#include <string>
#include <string_view>

#include "shadowlab/mir.h"

namespace shadowlab::mir {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, const std::string& message);

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  int line_;
  int column_;
  std::string message_;
};

// Throws ParseError on syntax errors, duplicate functions or block ids,
// branches to unknown blocks and calls to unknown functions.
Program parse_program(std::string_view text);

std::string print_instr(const Instr& instr);
std::string print_program(const Program& program);

}  // namespace shadowlab::mir

#endif  // SHADOWLAB_PARSER_H_
