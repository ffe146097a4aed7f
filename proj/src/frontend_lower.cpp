#include <map>
#include <optional>

#include "autobatch/errors.hpp"
#include "autobatch/frontend.hpp"
#include "autobatch/runtime.hpp"

namespace autobatch {

namespace {

constexpr const char* kOutputVar = "$ret";

[[noreturn]] void error_at(const SourcePos& pos, const std::string& msg) {
  throw CompileError(std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " + msg);
}

// Source-level names that map onto registered primitives.
const std::map<std::string, std::string>& primitive_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"float", "tofloat"}, {"int", "toint"}};
  return aliases;
}

struct Signature {
  int index = 0;
  std::vector<Type> params;
  Type result;
};

class FunctionLowerer {
 public:
  FunctionLowerer(const FunctionDef& def, const std::map<std::string, Signature>& sigs,
                  const PrimitiveRegistry& registry)
      : def_(def), sigs_(sigs), registry_(registry) {}

  Function run() {
    fn_.name = def_.name;
    fn_.output = kOutputVar;
    fn_.vars[kOutputVar] = def_.return_type;
    for (const Param& p : def_.params) {
      if (fn_.vars.count(p.name)) error_at(def_.pos, "duplicate parameter '" + p.name + "'");
      fn_.params.push_back(p.name);
      fn_.vars[p.name] = p.type;
    }
    current_ = new_block();
    lower_body(def_.body);
    prune_and_check();
    return std::move(fn_);
  }

 private:
  struct PendingBlock {
    Block block;
    bool terminated = false;
  };

  int new_block() {
    blocks_.push_back({});
    return static_cast<int>(blocks_.size()) - 1;
  }

  void terminate(Terminator t) {
    if (!blocks_[current_].terminated) {
      blocks_[current_].block.term = std::move(t);
      blocks_[current_].terminated = true;
    }
  }

  void emit(Op op) { blocks_[current_].block.ops.push_back(std::move(op)); }

  VarName fresh_temp(Type t) {
    VarName name = "$" + std::to_string(++temp_counter_);
    fn_.vars[name] = t;
    return name;
  }

  void bind(const VarName& name, const Type& t, const SourcePos& pos) {
    auto it = fn_.vars.find(name);
    if (it == fn_.vars.end()) {
      fn_.vars[name] = t;
    } else if (it->second != t) {
      error_at(pos, "'" + name + "' has type " + type_name(it->second) + ", assigned " +
                        type_name(t));
    }
  }

  const Type& type_of(const VarName& v) const { return fn_.vars.at(v); }

  void lower_body(const std::vector<Stmt>& stmts) {
    for (const Stmt& s : stmts) lower_stmt(s);
  }

  void lower_stmt(const Stmt& s) {
    // Code after a return lands in a fresh block that pruning discards.
    if (blocks_[current_].terminated) current_ = new_block();
    switch (s.kind) {
      case Stmt::Kind::Assign: lower_into(s.value, s.target); break;
      case Stmt::Kind::Return: {
        lower_into(s.value, kOutputVar);
        terminate(Return{});
        break;
      }
      case Stmt::Kind::If: {
        const VarName cond = lower_condition(s.value);
        const int then_block = new_block();
        const int else_block = s.has_else ? new_block() : -1;
        const int join = new_block();
        terminate(Branch{cond, then_block, s.has_else ? else_block : join});
        current_ = then_block;
        lower_body(s.body);
        terminate(Jump{join});
        if (s.has_else) {
          current_ = else_block;
          lower_body(s.else_body);
          terminate(Jump{join});
        }
        current_ = join;
        break;
      }
      case Stmt::Kind::While: {
        int header = current_;
        if (!blocks_[current_].block.ops.empty()) {
          header = new_block();
          terminate(Jump{header});
          current_ = header;
        }
        const VarName cond = lower_condition(s.value);
        const int body = new_block();
        const int exit = new_block();
        terminate(Branch{cond, body, exit});
        current_ = body;
        lower_body(s.body);
        terminate(Jump{header});
        current_ = exit;
        break;
      }
    }
  }

  VarName lower_condition(const Expr& e) {
    const VarName v = lower_expr(e);
    if (type_of(v) != Type::scalar(DType::Bool)) error_at(e.pos, "condition is not bool");
    return v;
  }

  // Evaluates `e` into a variable and returns its name; plain variable reads
  // return the variable itself.
  VarName lower_expr(const Expr& e) {
    if (e.kind == Expr::Kind::Var) {
      if (!fn_.vars.count(e.name) || e.name[0] == '$') {
        error_at(e.pos, "'" + e.name + "' used before assignment");
      }
      return e.name;
    }
    if (is_short_circuit(e)) return lower_short_circuit(e);
    std::optional<Type> t;
    Op op = build_op(e, t);
    const VarName out = fresh_temp(*t);
    std::visit([&](auto& o) { o.output = out; }, op);
    emit(std::move(op));
    return out;
  }

  void lower_into(const Expr& e, const VarName& dest) {
    if (e.kind == Expr::Kind::Var || is_short_circuit(e)) {
      const VarName src = lower_expr(e);
      bind(dest, type_of(src), e.pos);
      emit(PrimitiveOp{dest, kCopyPrim, {src}, {}});
      return;
    }
    std::optional<Type> t;
    Op op = build_op(e, t);
    bind(dest, *t, e.pos);
    std::visit([&](auto& o) { o.output = dest; }, op);
    emit(std::move(op));
  }

  static bool is_short_circuit(const Expr& e) {
    return e.kind == Expr::Kind::Binary && (e.name == "and" || e.name == "or");
  }

  // a and b  ==>  r = a; branch r (eval b) join      (or: branches swapped)
  VarName lower_short_circuit(const Expr& e) {
    const VarName lhs = lower_condition(e.args[0]);
    const VarName result = fresh_temp(Type::scalar(DType::Bool));
    emit(PrimitiveOp{result, kCopyPrim, {lhs}, {}});
    const int rhs_block = new_block();
    const int join = new_block();
    if (e.name == "and") {
      terminate(Branch{result, rhs_block, join});
    } else {
      terminate(Branch{result, join, rhs_block});
    }
    current_ = rhs_block;
    const VarName rhs = lower_condition(e.args[1]);
    emit(PrimitiveOp{result, kCopyPrim, {rhs}, {}});
    terminate(Jump{join});
    current_ = join;
    return result;
  }

  PrimitiveOp primitive(const Expr& e, const std::string& prim, std::vector<VarName> inputs,
                        std::optional<Type>& result_type, std::optional<Literal> lit = {}) {
    const Primitive* p = registry_.find(prim);
    if (!p) error_at(e.pos, "unknown primitive '" + prim + "'");
    if (p->arity >= 0 && static_cast<int>(inputs.size()) != p->arity) {
      error_at(e.pos, "'" + e.name + "' expects " + std::to_string(p->arity) + " arguments");
    }
    std::vector<Type> types;
    for (const VarName& v : inputs) types.push_back(type_of(v));
    result_type = p->result_type(types, lit);
    if (!result_type) {
      std::string sig;
      for (const Type& t : types) sig += (sig.empty() ? "" : ", ") + type_name(t);
      error_at(e.pos, "type error: '" + e.name + "' applied to (" + sig + ")");
    }
    return PrimitiveOp{"", prim, std::move(inputs), lit};
  }

  Op build_op(const Expr& e, std::optional<Type>& t) {
    switch (e.kind) {
      case Expr::Kind::IntLit:
        return primitive(e, kConstPrim, {}, t, Literal::of_int(e.int_value));
      case Expr::Kind::FloatLit:
        return primitive(e, kConstPrim, {}, t, Literal::of_float(e.float_value));
      case Expr::Kind::BoolLit:
        return primitive(e, kConstPrim, {}, t, Literal::of_bool(e.bool_value));
      case Expr::Kind::Unary: {
        const VarName a = lower_expr(e.args[0]);
        return primitive(e, e.name == "-" ? "neg" : "not", {a}, t);
      }
      case Expr::Kind::Binary: return build_binary(e, t);
      case Expr::Kind::Call: return build_call(e, t);
      case Expr::Kind::Var: break;
    }
    error_at(e.pos, "internal: unexpected expression kind");
  }

  Op build_binary(const Expr& e, std::optional<Type>& t) {
    const VarName a = lower_expr(e.args[0]);
    const VarName b = lower_expr(e.args[1]);
    const std::string& op = e.name;
    if (op == "+") return primitive(e, "add", {a, b}, t);
    if (op == "-") return primitive(e, "sub", {a, b}, t);
    if (op == "*") return primitive(e, "mul", {a, b}, t);
    if (op == "/") return primitive(e, "div", {a, b}, t);
    if (op == "<=") return primitive(e, "le", {a, b}, t);
    if (op == "<") return primitive(e, "lt", {a, b}, t);
    if (op == "==") return primitive(e, "eq", {a, b}, t);
    if (op == ">=") return primitive(e, "le", {b, a}, t);
    if (op == ">") return primitive(e, "lt", {b, a}, t);
    if (op == "!=") {
      std::optional<Type> eq_type;
      PrimitiveOp eq = primitive(e, "eq", {a, b}, eq_type);
      eq.output = fresh_temp(*eq_type);
      const VarName eq_out = eq.output;
      emit(std::move(eq));
      return primitive(e, "not", {eq_out}, t);
    }
    error_at(e.pos, "unknown operator '" + op + "'");
  }

  // zeros(k) and slice(v, off, k) carry their static length as a literal.
  int static_length(const Expr& arg) {
    if (arg.kind != Expr::Kind::IntLit || arg.int_value <= 0 || arg.int_value > 1'000'000) {
      error_at(arg.pos, "length must be a positive integer literal");
    }
    return static_cast<int>(arg.int_value);
  }

  Op build_call(const Expr& e, std::optional<Type>& t) {
    if (auto it = sigs_.find(e.name); it != sigs_.end()) {
      const Signature& sig = it->second;
      if (e.args.size() != sig.params.size()) {
        error_at(e.pos, "arity mismatch: '" + e.name + "' takes " +
                            std::to_string(sig.params.size()) + " arguments");
      }
      std::vector<VarName> args;
      for (size_t k = 0; k < e.args.size(); ++k) {
        args.push_back(lower_expr(e.args[k]));
        if (type_of(args.back()) != sig.params[k]) {
          error_at(e.args[k].pos, "argument " + std::to_string(k + 1) + " of '" + e.name +
                                      "' should be " + type_name(sig.params[k]));
        }
      }
      t = sig.result;
      return CallOp{"", sig.index, std::move(args)};
    }
    if (e.name == "zeros") {
      if (e.args.size() != 1) error_at(e.pos, "zeros takes one length argument");
      return primitive(e, "zeros." + std::to_string(static_length(e.args[0])), {}, t);
    }
    if (e.name == "slice") {
      if (e.args.size() != 3) error_at(e.pos, "slice takes (vector, offset, length)");
      const int k = static_length(e.args[2]);
      const VarName v = lower_expr(e.args[0]);
      const VarName off = lower_expr(e.args[1]);
      return primitive(e, "slice." + std::to_string(k), {v, off}, t);
    }
    std::string prim = e.name;
    if (auto alias = primitive_aliases().find(prim); alias != primitive_aliases().end()) {
      prim = alias->second;
    }
    if (prim == kConstPrim || prim == kCopyPrim || !registry_.contains(prim)) {
      error_at(e.pos, "unknown function '" + e.name + "'");
    }
    std::vector<VarName> args;
    for (const Expr& a : e.args) args.push_back(lower_expr(a));
    return primitive(e, prim, std::move(args), t);
  }

  // Drops unreachable blocks, renumbers targets, and rejects reachable blocks
  // that fall off the end of the function.
  void prune_and_check() {
    std::vector<int> remap(blocks_.size(), -1);
    std::vector<int> order;
    std::vector<int> work{0};
    std::vector<bool> seen(blocks_.size(), false);
    seen[0] = true;
    while (!work.empty()) {
      const int b = work.back();
      work.pop_back();
      if (!blocks_[b].terminated) {
        error_at(def_.pos, "function '" + def_.name + "' can reach its end without returning");
      }
      for (int s : successors(blocks_[b].block.term)) {
        if (!seen[s]) {
          seen[s] = true;
          work.push_back(s);
        }
      }
    }
    for (size_t b = 0; b < blocks_.size(); ++b) {
      if (seen[b]) {
        remap[b] = static_cast<int>(order.size());
        order.push_back(static_cast<int>(b));
      }
    }
    for (int b : order) {
      Block blk = std::move(blocks_[b].block);
      std::visit(
          [&](auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, Jump>) {
              t.target = remap[t.target];
            } else if constexpr (std::is_same_v<T, Branch>) {
              t.if_true = remap[t.if_true];
              t.if_false = remap[t.if_false];
            }
          },
          blk.term);
      fn_.blocks.push_back(std::move(blk));
    }
  }

  const FunctionDef& def_;
  const std::map<std::string, Signature>& sigs_;
  const PrimitiveRegistry& registry_;
  Function fn_;
  std::vector<PendingBlock> blocks_;
  int current_ = 0;
  int temp_counter_ = 0;
};

}  // namespace

CallGraphProgram lower_to_cfg(const SourceModule& module, const PrimitiveRegistry& registry,
                              const std::string& entry) {
  if (module.functions.empty()) throw CompileError("module defines no functions");
  std::map<std::string, Signature> sigs;
  for (size_t k = 0; k < module.functions.size(); ++k) {
    const FunctionDef& f = module.functions[k];
    if (sigs.count(f.name)) error_at(f.pos, "function '" + f.name + "' defined twice");
    if (registry.contains(f.name) || primitive_aliases().count(f.name) || f.name == "zeros" ||
        f.name == "slice") {
      error_at(f.pos, "function '" + f.name + "' shadows a primitive");
    }
    Signature sig{static_cast<int>(k), {}, f.return_type};
    for (const Param& p : f.params) sig.params.push_back(p.type);
    sigs.emplace(f.name, std::move(sig));
  }

  CallGraphProgram prog;
  for (const FunctionDef& f : module.functions) {
    prog.functions.push_back(FunctionLowerer(f, sigs, registry).run());
  }
  prog.entry = 0;
  if (!entry.empty()) {
    prog.entry = prog.find_function(entry);
    if (prog.entry < 0) throw CompileError("unknown entry function '" + entry + "'");
  }

  const auto diags = validate_callgraph(prog, registry);
  if (!diags.empty()) {
    std::string msg;
    for (const Diagnostic& d : diags) msg += (msg.empty() ? "" : "\n") + to_string(d);
    throw CompileError(msg);
  }
  return prog;
}

CallGraphProgram compile_source(const std::string& text, const PrimitiveRegistry& registry,
                                const std::string& entry) {
  return lower_to_cfg(parse_source(text), registry, entry);
}

}  // namespace autobatch
