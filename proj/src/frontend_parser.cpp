#include <cctype>
#include <cerrno>
#include <cstdlib>

#include "autobatch/errors.hpp"
#include "autobatch/frontend.hpp"

namespace autobatch {

const FunctionDef* SourceModule::find(const std::string& name) const {
  for (const FunctionDef& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

namespace {

enum class Tok { Ident, Int, Float, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  SourcePos pos;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : src_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      const SourcePos pos{line_, col_};
      if (at_end()) {
        out.push_back({Tok::End, "", pos});
        return out;
      }
      const char c = peek();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string s;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) {
          s += advance();
        }
        out.push_back({Tok::Ident, s, pos});
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        out.push_back(number(pos));
      } else {
        out.push_back({Tok::Punct, punct(pos), pos});
      }
    }
  }

 private:
  bool at_end() const { return i_ >= src_.size(); }
  char peek(size_t ahead = 0) const { return i_ + ahead < src_.size() ? src_[i_ + ahead] : '\0'; }
  char advance() {
    const char c = src_[i_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (!at_end()) {
      if (peek() == '#') {
        while (!at_end() && peek() != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(peek()))) {
        advance();
      } else {
        return;
      }
    }
  }

  Token number(SourcePos pos) {
    std::string s;
    bool is_float = false;
    while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
      is_float = true;
      s += advance();
      while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    }
    if ((peek() == 'e' || peek() == 'E') &&
        (std::isdigit(static_cast<unsigned char>(peek(1))) ||
         ((peek(1) == '-' || peek(1) == '+') && std::isdigit(static_cast<unsigned char>(peek(2)))))) {
      is_float = true;
      s += advance();
      if (peek() == '-' || peek() == '+') s += advance();
      while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    }
    return {is_float ? Tok::Float : Tok::Int, s, pos};
  }

  std::string punct(SourcePos pos) {
    static const char* two[] = {"==", "<=", ">=", "!=", "->"};
    for (const char* t : two) {
      if (peek() == t[0] && peek(1) == t[1]) {
        advance();
        advance();
        return t;
      }
    }
    const char c = peek();
    if (std::string("(){},;=<>+-*/:").find(c) != std::string::npos) {
      advance();
      return std::string(1, c);
    }
    throw ParseError(pos.line, pos.column, std::string("unexpected character '") + c + "'");
  }

  const std::string& src_;
  size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  SourceModule module() {
    SourceModule m;
    while (cur().kind != Tok::End) m.functions.push_back(function());
    return m;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(cur().pos.line, cur().pos.column, msg);
  }

  bool is(const char* text) const {
    return (cur().kind == Tok::Punct || cur().kind == Tok::Ident) && cur().text == text;
  }
  bool accept(const char* text) {
    if (!is(text)) return false;
    ++pos_;
    return true;
  }
  void expect(const char* text) {
    if (!accept(text)) {
      fail(std::string("expected '") + text + "'" +
           (cur().kind == Tok::End ? " before end of input" : ", got '" + cur().text + "'"));
    }
  }
  std::string ident(const char* what) {
    if (cur().kind != Tok::Ident || is_keyword(cur().text)) fail(std::string("expected ") + what);
    return next().text;
  }

  static bool is_keyword(const std::string& s) {
    static const char* kws[] = {"def", "if", "else", "while", "return", "and", "or", "not", "true", "false"};
    for (const char* k : kws) {
      if (s == k) return true;
    }
    return false;
  }

  Type type() {
    const Token& t = cur();
    if (t.kind != Tok::Ident) fail("expected a type");
    if (t.text == "vec") {
      ++pos_;
      expect("<");
      if (cur().kind != Tok::Int) fail("expected vector length");
      const long k = std::strtol(next().text.c_str(), nullptr, 10);
      if (k <= 0 || k > 1'000'000) fail("vector length out of range");
      expect(">");
      return Type::vec(static_cast<int>(k));
    }
    auto parsed = parse_type_name(t.text);
    if (!parsed || parsed->is_vector()) fail("unknown type '" + t.text + "'");
    ++pos_;
    return *parsed;
  }

  FunctionDef function() {
    FunctionDef f;
    f.pos = cur().pos;
    expect("def");
    f.name = ident("function name");
    expect("(");
    if (!is(")")) {
      do {
        Param p{ident("parameter name"), Type::scalar(DType::Int)};
        if (accept(":")) p.type = type();
        f.params.push_back(p);
      } while (accept(","));
    }
    expect(")");
    if (accept("->")) f.return_type = type();
    f.body = block();
    return f;
  }

  std::vector<Stmt> block() {
    expect("{");
    std::vector<Stmt> out;
    while (!is("}")) {
      if (cur().kind == Tok::End) fail("unbalanced '{': expected '}' before end of input");
      out.push_back(statement());
    }
    expect("}");
    return out;
  }

  Stmt statement() {
    Stmt s;
    s.pos = cur().pos;
    if (accept("if")) {
      s.kind = Stmt::Kind::If;
      expect("(");
      s.value = expr();
      expect(")");
      s.body = block();
      if (accept("else")) {
        s.has_else = true;
        if (is("if")) {
          s.else_body.push_back(statement());
        } else {
          s.else_body = block();
        }
      }
      return s;
    }
    if (accept("while")) {
      s.kind = Stmt::Kind::While;
      expect("(");
      s.value = expr();
      expect(")");
      s.body = block();
      return s;
    }
    if (accept("return")) {
      s.kind = Stmt::Kind::Return;
      s.value = expr();
      expect(";");
      return s;
    }
    s.kind = Stmt::Kind::Assign;
    s.target = ident("statement");
    expect("=");
    s.value = expr();
    expect(";");
    return s;
  }

  Expr binary(SourcePos pos, std::string op, Expr lhs, Expr rhs) {
    Expr e;
    e.kind = Expr::Kind::Binary;
    e.pos = pos;
    e.name = std::move(op);
    e.args.push_back(std::move(lhs));
    e.args.push_back(std::move(rhs));
    return e;
  }

  Expr expr() { return or_expr(); }

  Expr or_expr() {
    Expr lhs = and_expr();
    while (is("or")) {
      const SourcePos pos = next().pos;
      lhs = binary(pos, "or", std::move(lhs), and_expr());
    }
    return lhs;
  }

  Expr and_expr() {
    Expr lhs = not_expr();
    while (is("and")) {
      const SourcePos pos = next().pos;
      lhs = binary(pos, "and", std::move(lhs), not_expr());
    }
    return lhs;
  }

  Expr not_expr() {
    if (is("not")) {
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.pos = next().pos;
      e.name = "not";
      e.args.push_back(not_expr());
      return e;
    }
    return comparison();
  }

  Expr comparison() {
    Expr lhs = sum();
    for (const char* op : {"==", "!=", "<=", ">=", "<", ">"}) {
      if (cur().kind == Tok::Punct && cur().text == op) {
        const SourcePos pos = next().pos;
        return binary(pos, op, std::move(lhs), sum());
      }
    }
    return lhs;
  }

  Expr sum() {
    Expr lhs = product();
    while (is("+") || is("-")) {
      const Token& t = next();
      lhs = binary(t.pos, t.text, std::move(lhs), product());
    }
    return lhs;
  }

  Expr product() {
    Expr lhs = unary();
    while (is("*") || is("/")) {
      const Token& t = next();
      lhs = binary(t.pos, t.text, std::move(lhs), unary());
    }
    return lhs;
  }

  Expr unary() {
    if (is("-")) {
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.pos = next().pos;
      e.name = "-";
      e.args.push_back(unary());
      return e;
    }
    return primary();
  }

  Expr primary() {
    Expr e;
    e.pos = cur().pos;
    const Token& t = cur();
    if (t.kind == Tok::Int) {
      errno = 0;
      e.kind = Expr::Kind::IntLit;
      e.int_value = std::strtoll(t.text.c_str(), nullptr, 10);
      if (errno == ERANGE) fail("integer literal out of range");
      ++pos_;
      return e;
    }
    if (t.kind == Tok::Float) {
      e.kind = Expr::Kind::FloatLit;
      e.float_value = std::strtod(t.text.c_str(), nullptr);
      ++pos_;
      return e;
    }
    if (accept("(")) {
      Expr inner = expr();
      expect(")");
      return inner;
    }
    if (accept("true") || accept("false")) {
      e.kind = Expr::Kind::BoolLit;
      e.bool_value = toks_[pos_ - 1].text == "true";
      return e;
    }
    e.name = ident("expression");
    if (accept("(")) {
      e.kind = Expr::Kind::Call;
      if (!is(")")) {
        do {
          e.args.push_back(expr());
        } while (accept(","));
      }
      expect(")");
    } else {
      e.kind = Expr::Kind::Var;
    }
    return e;
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

}  // namespace

SourceModule parse_source(const std::string& text) {
  return Parser(Lexer(text).run()).module();
}

}  // namespace autobatch
