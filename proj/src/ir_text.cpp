#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "autobatch/errors.hpp"
#include "autobatch/ir.hpp"

namespace autobatch {

namespace {

std::string join(const std::vector<VarName>& names) {
  std::string out;
  for (const VarName& n : names) out += " " + n;
  return out;
}

std::string primitive_text(const std::string& prim, const std::vector<VarName>& inputs,
                           const std::optional<Literal>& literal) {
  if (literal) return std::string(kConstPrim) + " " + literal_text(*literal);
  return prim + join(inputs);
}

void print_terminator(std::ostringstream& os, const Jump& t) { os << "    jump " << t.target << "\n"; }
void print_terminator(std::ostringstream& os, const Branch& t) {
  os << "    branch " << t.cond << " " << t.if_true << " " << t.if_false << "\n";
}
void print_terminator(std::ostringstream& os, const PushJump& t) {
  os << "    pushjump " << t.jump_to << " " << t.return_to << "\n";
}
void print_terminator(std::ostringstream& os, const Return&) { os << "    return\n"; }

}  // namespace

std::string print_ir(const CallGraphProgram& prog) {
  std::ostringstream os;
  const std::string entry_name =
      prog.entry >= 0 && static_cast<size_t>(prog.entry) < prog.functions.size()
          ? prog.functions[prog.entry].name
          : std::to_string(prog.entry);
  os << "program entry " << entry_name << "\n";
  for (const Function& fn : prog.functions) {
    os << "function " << fn.name << "\n";
    os << "  params" << join(fn.params) << "\n";
    os << "  output " << fn.output << "\n";
    for (const auto& [name, type] : fn.vars) os << "  var " << name << " " << type_name(type) << "\n";
    for (size_t b = 0; b < fn.blocks.size(); ++b) {
      os << "  block " << b << ":\n";
      for (const Op& op : fn.blocks[b].ops) {
        if (const auto* p = std::get_if<PrimitiveOp>(&op)) {
          if (p->literal) {
            os << "    " << p->output << " = " << primitive_text(p->prim, p->inputs, p->literal) << "\n";
          } else {
            os << "    " << p->output << " = prim " << p->prim << join(p->inputs) << "\n";
          }
        } else {
          const auto& c = std::get<CallOp>(op);
          const std::string callee =
              c.callee >= 0 && static_cast<size_t>(c.callee) < prog.functions.size()
                  ? prog.functions[c.callee].name
                  : std::to_string(c.callee);
          os << "    " << c.output << " = call " << callee << join(c.args) << "\n";
        }
      }
      std::visit([&](const auto& t) { print_terminator(os, t); }, fn.blocks[b].term);
    }
    os << "end\n";
  }
  return os.str();
}

std::string print_ir(const FlatProgram& prog) {
  std::ostringstream os;
  os << "flat entry " << prog.entry << " output " << prog.output << " inputs" << join(prog.inputs)
     << "\n";
  for (const auto& [name, v] : prog.vars) {
    os << "var " << name << " " << type_name(v.type) << " " << var_class_name(v.cls) << "\n";
  }
  for (size_t b = 0; b < prog.blocks.size(); ++b) {
    os << "block " << b << ":\n";
    for (const FlatOp& op : prog.blocks[b].ops) {
      switch (op.kind) {
        case FlatOpKind::Pop: os << "    pop " << op.var << "\n"; break;
        case FlatOpKind::Push:
          os << "    push " << op.var << " = " << primitive_text(op.prim, op.inputs, op.literal) << "\n";
          break;
        case FlatOpKind::Update:
          os << "    update " << op.var << " = " << primitive_text(op.prim, op.inputs, op.literal)
             << "\n";
          break;
      }
    }
    std::visit([&](const auto& t) { print_terminator(os, t); }, prog.blocks[b].term);
  }
  os << "end\n";
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

struct Token {
  std::string text;
  int column = 0;
};

struct Line {
  int number = 0;
  std::vector<Token> tokens;
};

std::vector<Line> tokenize(const std::string& text) {
  std::vector<Line> lines;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    Line line{number, {}};
    size_t k = 0;
    while (k < raw.size()) {
      if (std::isspace(static_cast<unsigned char>(raw[k]))) {
        ++k;
        continue;
      }
      size_t start = k;
      while (k < raw.size() && !std::isspace(static_cast<unsigned char>(raw[k]))) ++k;
      line.tokens.push_back({raw.substr(start, k - start), static_cast<int>(start) + 1});
    }
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

class LineReader {
 public:
  explicit LineReader(std::vector<Line> lines) : lines_(std::move(lines)) {}

  bool done() const { return pos_ >= lines_.size(); }
  const Line& peek() const { return lines_[pos_]; }
  const Line& next() {
    if (done()) fail_eof();
    return lines_[pos_++];
  }
  [[noreturn]] void fail_eof() const {
    const int line = lines_.empty() ? 1 : lines_.back().number + 1;
    throw ParseError(line, 1, "unexpected end of input");
  }

 private:
  std::vector<Line> lines_;
  size_t pos_ = 0;
};

[[noreturn]] void fail(const Line& line, size_t tok, const std::string& msg) {
  const int col = tok < line.tokens.size() ? line.tokens[tok].column
                                           : (line.tokens.empty() ? 1 : line.tokens.back().column);
  throw ParseError(line.number, col, msg);
}

const std::string& tok(const Line& line, size_t k, const char* what) {
  if (k >= line.tokens.size()) fail(line, k, std::string("expected ") + what);
  return line.tokens[k].text;
}

void expect(const Line& line, size_t k, const std::string& word) {
  if (tok(line, k, word.c_str()) != word) fail(line, k, "expected '" + word + "'");
}

void expect_end(const Line& line, size_t k) {
  if (k < line.tokens.size()) fail(line, k, "unexpected token '" + line.tokens[k].text + "'");
}

int parse_int(const Line& line, size_t k) {
  const std::string& s = tok(line, k, "integer");
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (*end != '\0' || errno != 0 || v < -2147483648LL || v > 2147483647LL) {
    fail(line, k, "expected integer, got '" + s + "'");
  }
  return static_cast<int>(v);
}

Literal parse_literal(const Line& line, size_t k) {
  const std::string& s = tok(line, k, "literal");
  if (s == "true") return Literal::of_bool(true);
  if (s == "false") return Literal::of_bool(false);
  const bool is_float = s.find_first_of(".pPnN") != std::string::npos ||
                        s.find("inf") != std::string::npos || s.find('e') != std::string::npos;
  char* end = nullptr;
  errno = 0;
  if (is_float) {
    const double v = std::strtod(s.c_str(), &end);
    if (*end != '\0') fail(line, k, "malformed float literal '" + s + "'");
    return Literal::of_float(v);
  }
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (*end != '\0' || errno != 0) fail(line, k, "malformed literal '" + s + "'");
  return Literal::of_int(v);
}

bool is_block_header(const Line& line) {
  return !line.tokens.empty() && line.tokens[0].text == "block";
}

int parse_block_header(const Line& line, size_t expected_index) {
  expect(line, 0, "block");
  std::string idx = tok(line, 1, "block index");
  if (idx.empty() || idx.back() != ':') fail(line, 1, "expected 'block <index>:'");
  idx.pop_back();
  char* end = nullptr;
  const long v = std::strtol(idx.c_str(), &end, 10);
  if (idx.empty() || *end != '\0') fail(line, 1, "malformed block index");
  if (v != static_cast<long>(expected_index)) {
    fail(line, 1, "block index " + idx + " out of order (expected " +
                      std::to_string(expected_index) + ")");
  }
  expect_end(line, 2);
  return static_cast<int>(v);
}

std::vector<VarName> rest(const Line& line, size_t from) {
  std::vector<VarName> out;
  for (size_t k = from; k < line.tokens.size(); ++k) out.push_back(line.tokens[k].text);
  return out;
}

// Shared by both IR flavours. Returns nullopt if the line is not a terminator.
template <typename Term>
std::optional<Term> parse_terminator(const Line& line, bool allow_pushjump) {
  const std::string& head = line.tokens[0].text;
  if (head == "jump") {
    Jump j{parse_int(line, 1)};
    expect_end(line, 2);
    return Term{j};
  }
  if (head == "branch") {
    Branch br{tok(line, 1, "condition"), parse_int(line, 2), parse_int(line, 3)};
    expect_end(line, 4);
    return Term{br};
  }
  if (head == "return") {
    expect_end(line, 1);
    return Term{Return{}};
  }
  if constexpr (std::is_constructible_v<Term, PushJump>) {
    if (head == "pushjump" && allow_pushjump) {
      PushJump pj{parse_int(line, 1), parse_int(line, 2)};
      expect_end(line, 3);
      return Term{pj};
    }
  }
  return std::nullopt;
}

bool looks_like_terminator(const std::string& head) {
  return head == "jump" || head == "branch" || head == "return" || head == "pushjump";
}

}  // namespace

CallGraphProgram parse_callgraph_ir(const std::string& text) {
  LineReader r(tokenize(text));
  CallGraphProgram prog;
  const Line& header = r.next();
  expect(header, 0, "program");
  expect(header, 1, "entry");
  const std::string entry_name = tok(header, 2, "entry function");
  expect_end(header, 3);

  // Call ops name their callee; resolve once every function is known.
  struct PendingCall {
    size_t fn, block, op;
    std::string callee;
    Line line;
  };
  std::vector<PendingCall> pending;

  while (!r.done()) {
    const Line& fline = r.next();
    expect(fline, 0, "function");
    Function fn;
    fn.name = tok(fline, 1, "function name");
    expect_end(fline, 2);

    const Line& pline = r.next();
    expect(pline, 0, "params");
    fn.params = rest(pline, 1);
    const Line& oline = r.next();
    expect(oline, 0, "output");
    fn.output = tok(oline, 1, "output variable");
    expect_end(oline, 2);

    while (!r.done() && r.peek().tokens[0].text == "var") {
      const Line& vline = r.next();
      const std::string& name = tok(vline, 1, "variable name");
      auto type = parse_type_name(tok(vline, 2, "type"));
      if (!type) fail(vline, 2, "unknown type '" + vline.tokens[2].text + "'");
      expect_end(vline, 3);
      if (!fn.vars.emplace(name, *type).second) fail(vline, 1, "duplicate variable '" + name + "'");
    }

    while (!r.done() && is_block_header(r.peek())) {
      parse_block_header(r.next(), fn.blocks.size());
      Block blk;
      bool terminated = false;
      while (!terminated) {
        const Line& line = r.next();
        const std::string& head = line.tokens[0].text;
        if (looks_like_terminator(head)) {
          auto t = parse_terminator<Terminator>(line, false);
          if (!t) fail(line, 0, "unknown terminator '" + head + "'");
          blk.term = *t;
          terminated = true;
          continue;
        }
        if (line.tokens.size() < 3 || line.tokens[1].text != "=") {
          fail(line, 0, "expected op or terminator, got '" + head + "'");
        }
        const std::string& kind = line.tokens[2].text;
        if (kind == "prim") {
          blk.ops.push_back(PrimitiveOp{head, tok(line, 3, "primitive"), rest(line, 4), {}});
        } else if (kind == kConstPrim) {
          Literal lit = parse_literal(line, 3);
          expect_end(line, 4);
          blk.ops.push_back(PrimitiveOp{head, kConstPrim, {}, lit});
        } else if (kind == "call") {
          pending.push_back({prog.functions.size(), fn.blocks.size(), blk.ops.size(),
                             tok(line, 3, "callee"), line});
          blk.ops.push_back(CallOp{head, -1, rest(line, 4)});
        } else {
          fail(line, 2, "unknown op kind '" + kind + "'");
        }
      }
      fn.blocks.push_back(std::move(blk));
    }
    if (r.done()) r.fail_eof();
    const Line& eline = r.next();
    expect(eline, 0, "end");
    expect_end(eline, 1);
    prog.functions.push_back(std::move(fn));
  }

  for (const PendingCall& p : pending) {
    const int idx = prog.find_function(p.callee);
    if (idx < 0) fail(p.line, 3, "unknown function '" + p.callee + "'");
    std::get<CallOp>(prog.functions[p.fn].blocks[p.block].ops[p.op]).callee = idx;
  }
  prog.entry = prog.find_function(entry_name);
  if (prog.entry < 0) fail(header, 2, "unknown entry function '" + entry_name + "'");
  return prog;
}

FlatProgram parse_flat_ir(const std::string& text) {
  LineReader r(tokenize(text));
  FlatProgram prog;
  const Line& header = r.next();
  expect(header, 0, "flat");
  expect(header, 1, "entry");
  prog.entry = parse_int(header, 2);
  expect(header, 3, "output");
  prog.output = tok(header, 4, "output variable");
  expect(header, 5, "inputs");
  prog.inputs = rest(header, 6);

  while (!r.done() && r.peek().tokens[0].text == "var") {
    const Line& vline = r.next();
    const std::string& name = tok(vline, 1, "variable name");
    auto type = parse_type_name(tok(vline, 2, "type"));
    if (!type) fail(vline, 2, "unknown type '" + vline.tokens[2].text + "'");
    auto cls = parse_var_class(tok(vline, 3, "variable class"));
    if (!cls) fail(vline, 3, "unknown variable class '" + vline.tokens[3].text + "'");
    expect_end(vline, 4);
    if (!prog.vars.emplace(name, FlatVar{*type, *cls}).second) {
      fail(vline, 1, "duplicate variable '" + name + "'");
    }
  }

  while (!r.done() && is_block_header(r.peek())) {
    parse_block_header(r.next(), prog.blocks.size());
    FlatBlock blk;
    bool terminated = false;
    while (!terminated) {
      const Line& line = r.next();
      const std::string& head = line.tokens[0].text;
      if (looks_like_terminator(head)) {
        auto t = parse_terminator<FlatTerminator>(line, true);
        if (!t) fail(line, 0, "unknown terminator '" + head + "'");
        blk.term = *t;
        terminated = true;
      } else if (head == "pop") {
        blk.ops.push_back(FlatOp::pop(tok(line, 1, "variable")));
        expect_end(line, 2);
      } else if (head == "push" || head == "update") {
        const std::string& var = tok(line, 1, "variable");
        expect(line, 2, "=");
        const std::string& prim = tok(line, 3, "primitive");
        FlatOp op;
        if (prim == kConstPrim) {
          Literal lit = parse_literal(line, 4);
          expect_end(line, 5);
          op = FlatOp::push(var, kConstPrim, {}, lit);
        } else {
          op = FlatOp::push(var, prim, rest(line, 4));
        }
        if (head == "update") op.kind = FlatOpKind::Update;
        blk.ops.push_back(std::move(op));
      } else {
        fail(line, 0, "unknown instruction '" + head + "'");
      }
    }
    prog.blocks.push_back(std::move(blk));
  }
  if (r.done()) r.fail_eof();
  const Line& eline = r.next();
  expect(eline, 0, "end");
  expect_end(eline, 1);
  if (!r.done()) fail(r.peek(), 0, "trailing content after 'end'");
  return prog;
}

std::variant<CallGraphProgram, FlatProgram> parse_ir(const std::string& text) {
  const auto lines = tokenize(text);
  if (lines.empty()) throw ParseError(1, 1, "empty IR text");
  const std::string& head = lines.front().tokens.front().text;
  if (head == "program") return parse_callgraph_ir(text);
  if (head == "flat") return parse_flat_ir(text);
  throw ParseError(lines.front().number, lines.front().tokens.front().column,
                   "expected 'program' or 'flat' header");
}

}  // namespace autobatch
