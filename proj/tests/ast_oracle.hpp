#pragma once

// Random terminating source programs and a tree-walking evaluator over the
// parsed AST, used as an independent oracle for the lowering.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "autobatch/frontend.hpp"

namespace oracle {

struct Value {
  enum class Kind { Int, Float, Bool } kind = Kind::Int;
  std::int64_t i = 0;
  double f = 0.0;
  bool b = false;
};

inline std::int64_t wrap(std::uint64_t v) { return static_cast<std::int64_t>(v); }

class Evaluator {
 public:
  explicit Evaluator(const autobatch::SourceModule& m) : m_(m) {}

  Value call(const std::string& name, const std::vector<Value>& args) {
    const autobatch::FunctionDef* f = m_.find(name);
    std::map<std::string, Value> env;
    for (size_t k = 0; k < args.size(); ++k) env[f->params[k].name] = args[k];
    Value ret;
    bool returned = false;
    exec(f->body, env, ret, returned);
    return ret;
  }

 private:
  void exec(const std::vector<autobatch::Stmt>& body, std::map<std::string, Value>& env, Value& ret,
            bool& returned) {
    using K = autobatch::Stmt::Kind;
    for (const auto& s : body) {
      if (returned) return;
      switch (s.kind) {
        case K::Assign: env[s.target] = eval(s.value, env); break;
        case K::Return:
          ret = eval(s.value, env);
          returned = true;
          return;
        case K::If:
          if (eval(s.value, env).b) {
            exec(s.body, env, ret, returned);
          } else if (s.has_else) {
            exec(s.else_body, env, ret, returned);
          }
          break;
        case K::While:
          while (!returned && eval(s.value, env).b) exec(s.body, env, ret, returned);
          break;
      }
    }
  }

  static Value num(Value::Kind k, std::int64_t i, double f) {
    Value v;
    v.kind = k;
    v.i = i;
    v.f = f;
    return v;
  }
  static Value boolean(bool b) {
    Value v;
    v.kind = Value::Kind::Bool;
    v.b = b;
    return v;
  }

  Value eval(const autobatch::Expr& e, std::map<std::string, Value>& env) {
    using K = autobatch::Expr::Kind;
    switch (e.kind) {
      case K::IntLit: return num(Value::Kind::Int, e.int_value, 0);
      case K::FloatLit: return num(Value::Kind::Float, 0, e.float_value);
      case K::BoolLit: return boolean(e.bool_value);
      case K::Var: return env.at(e.name);
      case K::Unary: {
        const Value a = eval(e.args[0], env);
        if (e.name == "not") return boolean(!a.b);
        return a.kind == Value::Kind::Int ? num(a.kind, wrap(0 - static_cast<std::uint64_t>(a.i)), 0)
                                          : num(a.kind, 0, -a.f);
      }
      case K::Binary: {
        if (e.name == "and") return boolean(eval(e.args[0], env).b && eval(e.args[1], env).b);
        if (e.name == "or") return boolean(eval(e.args[0], env).b || eval(e.args[1], env).b);
        const Value a = eval(e.args[0], env);
        const Value b = eval(e.args[1], env);
        const bool is_int = a.kind == Value::Kind::Int;
        const std::uint64_t ua = static_cast<std::uint64_t>(a.i);
        const std::uint64_t ub = static_cast<std::uint64_t>(b.i);
        if (e.name == "+") return is_int ? num(a.kind, wrap(ua + ub), 0) : num(a.kind, 0, a.f + b.f);
        if (e.name == "-") return is_int ? num(a.kind, wrap(ua - ub), 0) : num(a.kind, 0, a.f - b.f);
        if (e.name == "*") return is_int ? num(a.kind, wrap(ua * ub), 0) : num(a.kind, 0, a.f * b.f);
        if (e.name == "/") {
          if (!is_int) return num(a.kind, 0, a.f / b.f);
          if (b.i == 0) return num(a.kind, 0, 0);
          if (b.i == -1) return num(a.kind, wrap(0 - ua), 0);
          return num(a.kind, a.i / b.i, 0);
        }
        auto cmp = [&](auto x, auto y) {
          if (e.name == "<") return x < y;
          if (e.name == "<=") return x <= y;
          if (e.name == ">") return x > y;
          if (e.name == ">=") return x >= y;
          if (e.name == "==") return x == y;
          return x != y;
        };
        if (a.kind == Value::Kind::Bool) return boolean(cmp(a.b, b.b));
        return boolean(is_int ? cmp(a.i, b.i) : cmp(a.f, b.f));
      }
      case K::Call: {
        std::vector<Value> args;
        for (const auto& a : e.args) args.push_back(eval(a, env));
        if (e.name == "sin") return num(Value::Kind::Float, 0, std::sin(args[0].f));
        if (e.name == "cos") return num(Value::Kind::Float, 0, std::cos(args[0].f));
        if (e.name == "abs") return num(Value::Kind::Float, 0, std::fabs(args[0].f));
        if (e.name == "float") return num(Value::Kind::Float, 0, static_cast<double>(args[0].i));
        return call(e.name, args);
      }
    }
    return {};
  }

  const autobatch::SourceModule& m_;
};

// Generates a module with helper `h(p, q: float) -> float` and entry
// `main(a, b, x: float) -> int`. Every loop has a fresh bounded counter.
class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  std::string program() {
    std::ostringstream out;
    out << "def main(a, b, x: float) -> int {\n";
    ints_ = {"a", "b"};
    floats_ = {"x"};
    bools_.clear();
    counter_ = 0;
    const int n = 2 + pick(4);
    for (int k = 0; k < n; ++k) stmt(out, 1, 2);
    out << "  return " << int_expr(2) << ";\n}\n\n";
    out << "def h(p, q: float) -> float {\n"
           "  if (p < 0) {\n"
           "    return q - float(p);\n"
           "  }\n"
           "  return sin(q) * float(p);\n"
           "}\n";
    return out.str();
  }

 private:
  int pick(int n) { return static_cast<int>(rng_() % static_cast<std::uint64_t>(n)); }
  std::string any(const std::vector<std::string>& v) { return v[pick(static_cast<int>(v.size()))]; }

  std::string int_expr(int depth) {
    if (depth == 0 || pick(3) == 0) {
      return pick(3) == 0 ? std::to_string(pick(21) - 10) : any(ints_);
    }
    static const char* ops[] = {"+", "-", "*", "/"};
    if (pick(8) == 0) return "(-" + int_expr(depth - 1) + ")";
    return "(" + int_expr(depth - 1) + " " + ops[pick(4)] + " " + int_expr(depth - 1) + ")";
  }

  std::string float_expr(int depth) {
    if (depth == 0 || pick(3) == 0) {
      switch (pick(3)) {
        case 0: return std::to_string(pick(200) - 100) + ".25";
        case 1: return "float(" + any(ints_) + ")";
        default: return any(floats_);
      }
    }
    switch (pick(6)) {
      case 0: return "sin(" + float_expr(depth - 1) + ")";
      case 1: return "h(" + int_expr(1) + ", " + float_expr(depth - 1) + ")";
      case 2: return "abs(" + float_expr(depth - 1) + ")";
      default: {
        static const char* ops[] = {"+", "-", "*"};
        return "(" + float_expr(depth - 1) + " " + ops[pick(3)] + " " + float_expr(depth - 1) + ")";
      }
    }
  }

  std::string bool_expr(int depth) {
    if (depth > 0 && pick(3) == 0) {
      static const char* ops[] = {"and", "or"};
      return "(" + bool_expr(depth - 1) + " " + ops[pick(2)] + " " + bool_expr(depth - 1) + ")";
    }
    if (depth > 0 && pick(6) == 0) return "not " + bool_expr(depth - 1);
    if (!bools_.empty() && pick(4) == 0) return any(bools_);
    static const char* cmps[] = {"<", "<=", ">", ">=", "==", "!="};
    if (pick(2) == 0) return "(" + float_expr(1) + " " + cmps[pick(6)] + " " + float_expr(1) + ")";
    return "(" + int_expr(1) + " " + cmps[pick(6)] + " " + int_expr(1) + ")";
  }

  void indent(std::ostringstream& out, int level) { out << std::string(2 * level, ' '); }

  // Variables first assigned inside a nested body are scoped to it, so every
  // read is definitely assigned.
  void stmt(std::ostringstream& out, int level, int nest) {
    const int kind = nest > 0 ? pick(6) : pick(3);
    if (kind <= 2) {
      indent(out, level);
      const int t = pick(3);
      if (t == 0) {
        const std::string rhs = int_expr(2);
        const std::string name = fresh_or_existing(ints_, "i");
        out << name << " = " << rhs << ";\n";
        add(ints_, name);
      } else if (t == 1) {
        const std::string rhs = float_expr(2);
        const std::string name = fresh_or_existing(floats_, "f");
        out << name << " = " << rhs << ";\n";
        add(floats_, name);
      } else {
        const std::string rhs = bool_expr(1);
        const std::string name = fresh_or_existing(bools_, "c");
        out << name << " = " << rhs << ";\n";
        add(bools_, name);
      }
      return;
    }
    const auto saved = std::make_tuple(ints_, floats_, bools_);
    if (kind <= 4) {
      indent(out, level);
      out << "if (" << bool_expr(2) << ") {\n";
      body(out, level + 1, nest - 1);
      restore(saved);
      indent(out, level);
      if (pick(2) == 0) {
        out << "} else {\n";
        body(out, level + 1, nest - 1);
        restore(saved);
        indent(out, level);
      }
      out << "}\n";
      return;
    }
    const std::string c = "k" + std::to_string(counter_++);
    indent(out, level);
    out << c << " = 0;\n";
    indent(out, level);
    out << "while (" << c << " < " << pick(5) << ") {\n";
    body(out, level + 1, nest - 1);
    indent(out, level + 1);
    out << c << " = " << c << " + 1;\n";
    restore(saved);
    indent(out, level);
    out << "}\n";
  }

  void body(std::ostringstream& out, int level, int nest) {
    const int n = 1 + pick(3);
    for (int k = 0; k < n; ++k) stmt(out, level, nest);
  }

  std::string fresh_or_existing(const std::vector<std::string>& pool, const std::string& prefix) {
    if (!pool.empty() && pick(2) == 0) {
      const std::string v = any(pool);
      if (v[0] != 'k') return v;
    }
    return prefix + std::to_string(names_++);
  }

  static void add(std::vector<std::string>& pool, const std::string& name) {
    for (const auto& v : pool) {
      if (v == name) return;
    }
    pool.push_back(name);
  }

  void restore(const std::tuple<std::vector<std::string>, std::vector<std::string>,
                                std::vector<std::string>>& saved) {
    ints_ = std::get<0>(saved);
    floats_ = std::get<1>(saved);
    bools_ = std::get<2>(saved);
  }

  std::mt19937_64 rng_;
  std::vector<std::string> ints_, floats_, bools_;
  int counter_ = 0;
  int names_ = 0;
};

}  // namespace oracle
