#include "shadowlab/parser.h"

#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

namespace shadowlab::mir {

ParseError::ParseError(int line, int column, const std::string& message)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) +
                         ": " + message),
      line_(line),
      column_(column),
      message_(message) {}

namespace {

enum class TokKind { kIdent, kNumber, kDirective, kPunct, kEnd };

struct Token {
  TokKind kind = TokKind::kEnd;
  std::string text;
  std::int64_t value = 0;
  int line = 0;
  int column = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space_and_comments();
      Token tok;
      tok.line = line_;
      tok.column = column_;
      if (pos_ >= text_.size()) {
        out.push_back(tok);
        return out;
      }
      char c = text_[pos_];
      if (c == '#') {
        advance();
        tok.kind = TokKind::kDirective;
        tok.text = "#" + read_word();
      } else if (is_word_start(c)) {
        tok.kind = TokKind::kIdent;
        tok.text = read_word();
      } else if (c == '-' || c == '+' ||
                 std::isdigit(static_cast<unsigned char>(c))) {
        tok.kind = TokKind::kNumber;
        tok.text = read_number_text();
        tok.value = parse_number(tok);
      } else if (c == '{' || c == '}' || c == ':' || c == ',' || c == ';') {
        tok.kind = TokKind::kPunct;
        tok.text = std::string(1, c);
        advance();
      } else {
        throw ParseError(line_, column_,
                         std::string("unexpected character '") + c + "'");
      }
      out.push_back(std::move(tok));
    }
  }

 private:
  static bool is_word_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '.';
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_space_and_comments() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && pos_ + 1 < text_.size() &&
                 text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else {
        return;
      }
    }
  }

  std::string read_word() {
    std::string out;
    while (pos_ < text_.size() && is_word_char(text_[pos_])) {
      out.push_back(text_[pos_]);
      advance();
    }
    return out;
  }

  std::string read_number_text() {
    std::string out;
    if (text_[pos_] == '-' || text_[pos_] == '+') {
      out.push_back(text_[pos_]);
      advance();
    }
    while (pos_ < text_.size() &&
           std::isalnum(static_cast<unsigned char>(text_[pos_]))) {
      out.push_back(text_[pos_]);
      advance();
    }
    return out;
  }

  static std::int64_t parse_number(const Token& tok) {
    std::string_view s = tok.text;
    bool negative = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
      negative = s[0] == '-';
      s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      base = 16;
      s.remove_prefix(2);
    }
    std::uint64_t magnitude = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), magnitude,
                                     base);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw ParseError(tok.line, tok.column,
                       "malformed number '" + tok.text + "'");
    }
    auto value = static_cast<std::int64_t>(magnitude);
    return negative ? -value : value;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

struct PendingRef {
  std::string function;
  int line;
  int column;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Program run() {
    Program program;
    std::optional<std::string> entry;
    while (peek().kind != TokKind::kEnd) {
      const Token& tok = peek();
      if (tok.kind == TokKind::kDirective) {
        parse_directive(program, entry);
      } else if (tok.kind == TokKind::kIdent && tok.text == "fn") {
        parse_function(program);
      } else {
        fail(tok, "expected 'fn' or a directive, found '" + tok.text + "'");
      }
    }
    for (const auto& [callee, ref] : calls_) {
      if (program.find(callee) == nullptr) {
        throw ParseError(ref.line, ref.column,
                         "call to unknown function " + callee);
      }
    }
    if (entry) {
      program.entry = *entry;
    } else if (program.find("main") != nullptr) {
      program.entry = "main";
    } else if (!program.functions.empty()) {
      program.entry = program.functions.front().name;
    }
    return program;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  [[noreturn]] static void fail(const Token& tok, const std::string& msg) {
    throw ParseError(tok.line, tok.column, msg);
  }
  bool is_punct(const Token& tok, char c) const {
    return tok.kind == TokKind::kPunct && tok.text.size() == 1 &&
           tok.text[0] == c;
  }
  void expect_punct(char c) {
    const Token& tok = next();
    if (!is_punct(tok, c)) {
      fail(tok, std::string("expected '") + c + "', found '" +
                    (tok.kind == TokKind::kEnd ? "end of input" : tok.text) +
                    "'");
    }
  }
  std::string expect_ident(const char* what) {
    const Token& tok = next();
    if (tok.kind != TokKind::kIdent) {
      fail(tok, std::string("expected ") + what);
    }
    return tok.text;
  }
  std::int64_t expect_number(const char* what) {
    const Token& tok = next();
    if (tok.kind != TokKind::kNumber) fail(tok, std::string("expected ") + what);
    return tok.value;
  }
  Reg expect_reg() {
    const Token& tok = next();
    if (tok.kind != TokKind::kIdent || tok.text.size() < 2 ||
        tok.text[0] != 'r') {
      fail(tok, "expected register, found '" + tok.text + "'");
    }
    int value = 0;
    std::string_view digits(tok.text);
    digits.remove_prefix(1);
    auto [ptr, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
      fail(tok, "expected register, found '" + tok.text + "'");
    }
    if (value < 0 || value >= kNumRegisters) {
      fail(tok, "register index out of range: " + tok.text);
    }
    return value;
  }
  static std::optional<BlockId> label_id(const std::string& text) {
    if (text.size() < 2 || text[0] != 'b') return std::nullopt;
    int value = 0;
    auto [ptr, ec] =
        std::from_chars(text.data() + 1, text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || value < 0) {
      return std::nullopt;
    }
    return value;
  }
  BlockId expect_label() {
    const Token& tok = next();
    auto id = tok.kind == TokKind::kIdent ? label_id(tok.text) : std::nullopt;
    if (!id) fail(tok, "expected block label, found '" + tok.text + "'");
    branch_refs_.push_back({*id, tok.line, tok.column});
    return *id;
  }
  bool accept_comma() {
    if (is_punct(peek(), ',')) {
      next();
      return true;
    }
    return false;
  }

  void parse_directive(Program& program, std::optional<std::string>& entry) {
    const Token tok = next();
    if (tok.text == "#entry") {
      entry = expect_ident("function name after #entry");
    } else if (tok.text == "#adversarial") {
      std::string v = expect_ident("true or false after #adversarial");
      if (v != "true" && v != "false") {
        fail(tok, "#adversarial expects true or false");
      }
      program.adversarial = v == "true";
    } else if (tok.text == "#global") {
      if (peek().kind != TokKind::kIdent || peek().line != tok.line) {
        fail(tok, "#global expects at least one name");
      }
      while (peek().kind == TokKind::kIdent && peek().line == tok.line) {
        program.globals.insert(next().text);
      }
    } else {
      fail(tok, "unknown directive " + tok.text);
    }
  }

  void parse_function(Program& program) {
    next();  // fn
    const Token& name_tok = peek();
    Function fn;
    fn.name = expect_ident("function name");
    fn.line = name_tok.line;
    if (program.find(fn.name) != nullptr) {
      fail(name_tok, "duplicate function " + fn.name);
    }
    expect_punct('{');
    branch_refs_.clear();
    bool first = true;
    while (!is_punct(peek(), '}')) {
      const Token& label_tok = next();
      auto id = label_tok.kind == TokKind::kIdent ? label_id(label_tok.text)
                                                  : std::nullopt;
      if (!id) {
        fail(label_tok, label_tok.kind == TokKind::kEnd
                            ? "unterminated function " + fn.name
                            : "expected block label, found '" +
                                  label_tok.text + "'");
      }
      expect_punct(':');
      if (fn.blocks.count(*id) != 0) {
        fail(label_tok, "duplicate block b" + std::to_string(*id));
      }
      Block block;
      block.id = *id;
      block.line = label_tok.line;
      while (true) {
        const Token& t = peek();
        if (is_punct(t, ';')) {
          next();
          continue;
        }
        if (is_punct(t, '}') || t.kind == TokKind::kEnd) break;
        if (t.kind == TokKind::kIdent && is_punct(peek(1), ':') &&
            label_id(t.text)) {
          break;
        }
        block.instrs.push_back(parse_instr());
      }
      if (first) fn.entry_block = *id;
      first = false;
      fn.blocks.emplace(*id, std::move(block));
    }
    const Token& close = next();
    if (fn.blocks.empty()) fail(close, "function " + fn.name + " has no blocks");
    for (const auto& ref : branch_refs_) {
      if (fn.blocks.count(ref.id) == 0) {
        throw ParseError(ref.line, ref.column,
                         "unknown block b" + std::to_string(ref.id));
      }
    }
    program.functions.push_back(std::move(fn));
  }

  Instr parse_instr() {
    const Token tok = next();
    if (tok.kind != TokKind::kIdent) {
      fail(tok, "expected instruction, found '" + tok.text + "'");
    }
    const std::string& m = tok.text;
    Instr instr;
    if (m == "spadd") {
      instr = Instr::SpAdd(expect_number("stack adjustment"));
    } else if (m == "spmov") {
      instr = Instr::SpMov(expect_reg());
    } else if (m == "movi") {
      Reg r = expect_reg();
      expect_punct(',');
      instr = Instr::MovI(r, expect_number("immediate"));
    } else if (m == "movr") {
      Reg rd = expect_reg();
      expect_punct(',');
      instr = Instr::MovR(rd, expect_reg());
    } else if (m == "lea.sp") {
      Reg r = expect_reg();
      expect_punct(',');
      instr = Instr::LeaSp(r, expect_number("offset"));
    } else if (m == "binop") {
      Reg rd = expect_reg();
      expect_punct(',');
      instr = Instr::BinOp(rd, expect_reg());
    } else if (m == "store.sp") {
      std::int64_t off = expect_number("offset");
      instr = Instr::StoreSp(off, accept_comma() ? expect_reg() : -1);
    } else if (m == "store.reg") {
      Reg addr = expect_reg();
      instr = Instr::StoreReg(addr, accept_comma() ? expect_reg() : -1);
    } else if (m == "store.global") {
      std::string g = expect_ident("global name");
      instr = Instr::StoreGlobal(g, accept_comma() ? expect_reg() : -1);
    } else if (m == "load.sp") {
      Reg rd = expect_reg();
      expect_punct(',');
      instr = Instr::LoadSp(rd, expect_number("offset"));
    } else if (m == "load.reg") {
      Reg rd = expect_reg();
      expect_punct(',');
      instr = Instr::LoadReg(rd, expect_reg());
    } else if (m == "call") {
      const Token& t = peek();
      instr = Instr::Call(expect_ident("function name"));
      calls_.emplace(instr.sym, PendingRef{instr.sym, t.line, t.column});
    } else if (m == "icall") {
      instr = Instr::ICall(expect_reg());
    } else if (m == "ret") {
      instr = Instr::Ret();
    } else if (m == "br") {
      instr = Instr::Br(expect_label());
    } else if (m == "brc") {
      BlockId t = expect_label();
      expect_punct(',');
      instr = Instr::Brc(t, expect_label());
    } else if (m == "corrupt") {
      std::int64_t depth = expect_number("frame depth");
      expect_punct(',');
      std::int64_t value = expect_number("value");
      if (depth < 0) fail(tok, "corrupt frame depth must be non-negative");
      instr = Instr::Corrupt(depth, value);
    } else if (m == "halt") {
      instr = Instr::Halt();
    } else if (m == "unwind") {
      std::int64_t k = expect_number("frame count");
      if (k < 1) fail(tok, "unwind expects a positive frame count");
      instr = Instr::Unwind(k);
    } else if (m == "spush" || m == "spush.d") {
      std::int64_t h = expect_number("stack height");
      bool dead = m == "spush.d";
      instr = accept_comma() ? Instr::SPushEdge(h, expect_label(), dead)
                             : Instr::SPush(h, dead);
    } else if (m == "spop") {
      std::int64_t h = 0;
      if (peek().kind == TokKind::kNumber && peek().line == tok.line) {
        h = next().value;
      }
      instr = Instr::SPop(h);
    } else if (m == "rfpush") {
      instr = Instr::RfPush(expect_reg());
    } else if (m == "rfpop") {
      instr = Instr::RfPop(expect_reg());
    } else {
      fail(tok, "unknown instruction '" + m + "'");
    }
    instr.line = tok.line;
    return instr;
  }

  struct BranchRef {
    BlockId id;
    int line;
    int column;
  };

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<BranchRef> branch_refs_;
  std::multimap<std::string, PendingRef> calls_;
};

}  // namespace

Program parse_program(std::string_view text) {
  return Parser(Lexer(text).run()).run();
}

std::string print_instr(const Instr& i) {
  std::ostringstream os;
  os << mnemonic(i.op);
  auto reg = [](Reg r) { return "r" + std::to_string(r); };
  auto label = [](BlockId b) { return "b" + std::to_string(b); };
  switch (i.op) {
    case Opcode::kSpAdd:
      os << ' ' << i.imm;
      break;
    case Opcode::kSpMov:
    case Opcode::kICall:
    case Opcode::kRfPush:
    case Opcode::kRfPop:
      os << ' ' << reg(i.rd);
      break;
    case Opcode::kMovI:
    case Opcode::kLeaSp:
    case Opcode::kLoadSp:
      os << ' ' << reg(i.rd) << ", " << i.imm;
      break;
    case Opcode::kMovR:
    case Opcode::kBinOp:
    case Opcode::kLoadReg:
      os << ' ' << reg(i.rd) << ", " << reg(i.rs);
      break;
    case Opcode::kStoreSp:
      os << ' ' << i.imm;
      if (i.rs >= 0) os << ", " << reg(i.rs);
      break;
    case Opcode::kStoreReg:
      os << ' ' << reg(i.rd);
      if (i.rs >= 0) os << ", " << reg(i.rs);
      break;
    case Opcode::kStoreGlobal:
      os << ' ' << i.sym;
      if (i.rs >= 0) os << ", " << reg(i.rs);
      break;
    case Opcode::kCall:
      os << ' ' << i.sym;
      break;
    case Opcode::kBr:
      os << ' ' << label(i.target);
      break;
    case Opcode::kBrc:
      os << ' ' << label(i.target) << ", " << label(i.alt);
      break;
    case Opcode::kCorrupt:
      os << ' ' << i.frame_depth << ", " << i.imm;
      break;
    case Opcode::kUnwind:
      os << ' ' << i.imm;
      break;
    case Opcode::kSPush:
      if (i.dead_scratch) os << ".d";
      os << ' ' << i.imm;
      if (i.target >= 0) os << ", " << label(i.target);
      break;
    case Opcode::kSPop:
      if (i.imm != 0) os << ' ' << i.imm;
      break;
    case Opcode::kRet:
    case Opcode::kHalt:
      break;
  }
  return os.str();
}

std::string print_program(const Program& program) {
  std::ostringstream os;
  os << "#entry " << program.entry << '\n';
  os << "#adversarial " << (program.adversarial ? "true" : "false") << '\n';
  if (!program.globals.empty()) {
    os << "#global";
    for (const auto& g : program.globals) os << ' ' << g;
    os << '\n';
  }
  for (const Function& fn : program.functions) {
    os << "\nfn " << fn.name << " {\n";
    for (BlockId id : fn.block_order()) {
      const Block& block = fn.blocks.at(id);
      os << 'b' << id << ":\n";
      for (const Instr& instr : block.instrs) {
        os << "  " << print_instr(instr) << '\n';
      }
    }
    os << "}\n";
  }
  return os.str();
}

}  // namespace shadowlab::mir
