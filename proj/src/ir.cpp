#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iterator>
#include <set>

#include "autobatch/ir.hpp"
#include "autobatch/runtime.hpp"

namespace autobatch {

std::string type_name(const Type& t) {
  if (t.is_vector()) return "vec" + std::to_string(t.width);
  switch (t.dtype) {
    case DType::Float: return "float";
    case DType::Int: return "int";
    case DType::Bool: return "bool";
  }
  return "?";
}

std::optional<Type> parse_type_name(const std::string& s) {
  if (s == "float") return Type::scalar(DType::Float);
  if (s == "int") return Type::scalar(DType::Int);
  if (s == "bool") return Type::scalar(DType::Bool);
  if (s.size() > 3 && s.compare(0, 3, "vec") == 0) {
    const std::string digits = s.substr(3);
    if (digits.size() > 6 || digits[0] == '0' ||
        digits.find_first_not_of("0123456789") != std::string::npos) {
      return std::nullopt;
    }
    return Type::vec(std::stoi(digits));
  }
  return std::nullopt;
}

bool operator==(const Literal& a, const Literal& b) {
  if (a.dtype != b.dtype) return false;
  if (a.dtype == DType::Float) return std::memcmp(&a.f, &b.f, sizeof(double)) == 0;
  return a.i == b.i;
}

std::string literal_text(const Literal& lit) {
  switch (lit.dtype) {
    case DType::Int: return std::to_string(lit.i);
    case DType::Bool: return lit.i ? "true" : "false";
    case DType::Float: {
      // Hex float keeps the round trip bit-exact.
      char buf[64];
      std::snprintf(buf, sizeof buf, "%a", lit.f);
      return buf;
    }
  }
  return "?";
}

int CallGraphProgram::find_function(const std::string& name) const {
  for (size_t k = 0; k < functions.size(); ++k) {
    if (functions[k].name == name) return static_cast<int>(k);
  }
  return -1;
}

std::string var_class_name(VarClass c) {
  switch (c) {
    case VarClass::Temporary: return "temporary";
    case VarClass::Registerized: return "registerized";
    case VarClass::Stacked: return "stacked";
  }
  return "?";
}

std::optional<VarClass> parse_var_class(const std::string& s) {
  if (s == "temporary") return VarClass::Temporary;
  if (s == "registerized") return VarClass::Registerized;
  if (s == "stacked") return VarClass::Stacked;
  return std::nullopt;
}

bool FlatOp::reads(const VarName& v) const {
  return std::find(inputs.begin(), inputs.end(), v) != inputs.end();
}

std::string to_string(const Diagnostic& d) { return d.location + ": " + d.message; }

std::vector<int> successors(const Terminator& t) {
  if (const auto* j = std::get_if<Jump>(&t)) return {j->target};
  if (const auto* b = std::get_if<Branch>(&t)) return {b->if_true, b->if_false};
  return {};
}

SegmentLayout segment_layout(const CallGraphProgram& prog) {
  SegmentLayout layout;
  int next = 0;
  for (size_t f = 0; f < prog.functions.size(); ++f) {
    const Function& fn = prog.functions[f];
    std::vector<int> firsts;
    for (size_t b = 0; b < fn.blocks.size(); ++b) {
      firsts.push_back(next);
      const auto calls = std::count_if(fn.blocks[b].ops.begin(), fn.blocks[b].ops.end(),
                                       [](const Op& op) { return std::holds_alternative<CallOp>(op); });
      for (int s = 0; s <= calls; ++s) {
        layout.origin.push_back({static_cast<int>(f), static_cast<int>(b), s});
        ++next;
      }
    }
    layout.first.push_back(std::move(firsts));
  }
  return layout;
}

// ---------------------------------------------------------------------------

namespace {

class Checker {
 public:
  explicit Checker(const PrimitiveRegistry& registry) : registry_(registry) {}

  void add(std::string location, std::string message) {
    diags_.push_back({std::move(location), std::move(message)});
  }
  std::vector<Diagnostic> take() { return std::move(diags_); }

  // Type-checks a primitive application writing `output`.
  void check_primitive(const std::string& loc, const std::string& prim,
                       const std::vector<VarName>& inputs, const std::optional<Literal>& literal,
                       const Type* output_type,
                       const std::function<const Type*(const VarName&)>& lookup) {
    const Primitive* p = registry_.find(prim);
    if (!p) {
      add(loc, "unknown primitive '" + prim + "'");
      return;
    }
    if (p->arity >= 0 && static_cast<int>(inputs.size()) != p->arity) {
      add(loc, "primitive '" + prim + "' expects " + std::to_string(p->arity) + " inputs, got " +
                   std::to_string(inputs.size()));
      return;
    }
    if (literal.has_value() != (prim == kConstPrim)) {
      add(loc, "literal operand only allowed on 'const'");
      return;
    }
    std::vector<Type> types;
    for (const VarName& v : inputs) {
      const Type* t = lookup(v);
      if (!t) {
        add(loc, "undeclared variable '" + v + "'");
        return;
      }
      types.push_back(*t);
    }
    if (!output_type) return;
    const auto result = p->result_type(types, literal);
    if (!result) {
      add(loc, "type error in '" + prim + "'");
    } else if (*result != *output_type) {
      add(loc, "primitive '" + prim + "' yields " + type_name(*result) + " but output is " +
                   type_name(*output_type));
    }
  }

 private:
  const PrimitiveRegistry& registry_;
  std::vector<Diagnostic> diags_;
};

std::string where(const std::string& fn, size_t block) {
  return fn + "/block " + std::to_string(block);
}
std::string where(const std::string& fn, size_t block, size_t op) {
  return where(fn, block) + "/op " + std::to_string(op);
}

void check_target(Checker& c, const std::string& loc, int target, size_t nblocks) {
  if (target < 0 || static_cast<size_t>(target) >= nblocks) {
    c.add(loc, "target out of range: " + std::to_string(target));
  }
}

// Forward must-analysis: variables definitely assigned on every path.
void check_definite_assignment(Checker& c, const Function& fn) {
  const size_t n = fn.blocks.size();
  std::set<VarName> universe;
  for (const auto& [v, _] : fn.vars) universe.insert(v);
  std::vector<std::set<VarName>> in(n, universe);
  std::vector<bool> reached(n, false);
  in[0] = std::set<VarName>(fn.params.begin(), fn.params.end());
  reached[0] = true;

  auto transfer = [&](size_t b) {
    std::set<VarName> s = in[b];
    for (const Op& op : fn.blocks[b].ops) {
      std::visit([&](const auto& o) { s.insert(o.output); }, op);
    }
    return s;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t b = 0; b < n; ++b) {
      if (!reached[b]) continue;
      const std::set<VarName> out = transfer(b);
      for (int succ : successors(fn.blocks[b].term)) {
        if (succ < 0 || static_cast<size_t>(succ) >= n) continue;
        if (!reached[succ]) {
          reached[succ] = true;
          in[succ] = out;
          changed = true;
          continue;
        }
        std::set<VarName> merged;
        std::set_intersection(in[succ].begin(), in[succ].end(), out.begin(), out.end(),
                              std::inserter(merged, merged.begin()));
        if (merged != in[succ]) {
          in[succ] = std::move(merged);
          changed = true;
        }
      }
    }
  }

  for (size_t b = 0; b < n; ++b) {
    if (!reached[b]) continue;
    std::set<VarName> s = in[b];
    const Block& blk = fn.blocks[b];
    for (size_t k = 0; k < blk.ops.size(); ++k) {
      std::visit(
          [&](const auto& o) {
            const std::vector<VarName>* reads = nullptr;
            if constexpr (std::is_same_v<std::decay_t<decltype(o)>, PrimitiveOp>) {
              reads = &o.inputs;
            } else {
              reads = &o.args;
            }
            for (const VarName& v : *reads) {
              if (!s.count(v)) c.add(where(fn.name, b, k), "'" + v + "' may be used before assignment");
            }
            s.insert(o.output);
          },
          blk.ops[k]);
    }
    if (const auto* br = std::get_if<Branch>(&blk.term)) {
      if (!s.count(br->cond)) {
        c.add(where(fn.name, b), "branch condition '" + br->cond + "' may be unassigned");
      }
    }
    if (std::holds_alternative<Return>(blk.term) && !s.count(fn.output)) {
      c.add(where(fn.name, b), "output '" + fn.output + "' not assigned on every path to return");
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate_callgraph(const CallGraphProgram& prog,
                                           const PrimitiveRegistry& registry) {
  Checker c(registry);
  if (prog.functions.empty()) {
    c.add("program", "no functions");
    return c.take();
  }
  if (prog.entry < 0 || static_cast<size_t>(prog.entry) >= prog.functions.size()) {
    c.add("program", "entry out of range");
  }
  std::set<std::string> names;
  for (const Function& fn : prog.functions) {
    if (!names.insert(fn.name).second) c.add(fn.name, "duplicate function name");
    auto lookup = [&fn](const VarName& v) -> const Type* {
      auto it = fn.vars.find(v);
      return it == fn.vars.end() ? nullptr : &it->second;
    };
    for (const VarName& p : fn.params) {
      if (!lookup(p)) c.add(fn.name, "undeclared parameter '" + p + "'");
    }
    if (!lookup(fn.output)) c.add(fn.name, "undeclared output '" + fn.output + "'");
    if (fn.blocks.empty()) {
      c.add(fn.name, "function has no blocks");
      continue;
    }
    for (size_t b = 0; b < fn.blocks.size(); ++b) {
      const Block& blk = fn.blocks[b];
      for (size_t k = 0; k < blk.ops.size(); ++k) {
        const std::string loc = where(fn.name, b, k);
        if (const auto* p = std::get_if<PrimitiveOp>(&blk.ops[k])) {
          const Type* out = lookup(p->output);
          if (!out) c.add(loc, "undeclared variable '" + p->output + "'");
          c.check_primitive(loc, p->prim, p->inputs, p->literal, out, lookup);
        } else {
          const auto& call = std::get<CallOp>(blk.ops[k]);
          if (call.callee < 0 || static_cast<size_t>(call.callee) >= prog.functions.size()) {
            c.add(loc, "call to unknown function index " + std::to_string(call.callee));
            continue;
          }
          const Function& callee = prog.functions[call.callee];
          if (call.args.size() != callee.params.size()) {
            c.add(loc, "arity mismatch calling '" + callee.name + "'");
            continue;
          }
          for (size_t a = 0; a < call.args.size(); ++a) {
            const Type* at = lookup(call.args[a]);
            auto pt = callee.vars.find(callee.params[a]);
            if (!at) {
              c.add(loc, "undeclared variable '" + call.args[a] + "'");
            } else if (pt != callee.vars.end() && *at != pt->second) {
              c.add(loc, "argument " + std::to_string(a) + " type mismatch calling '" +
                             callee.name + "'");
            }
          }
          const Type* out = lookup(call.output);
          auto rt = callee.vars.find(callee.output);
          if (!out) {
            c.add(loc, "undeclared variable '" + call.output + "'");
          } else if (rt != callee.vars.end() && *out != rt->second) {
            c.add(loc, "result type mismatch calling '" + callee.name + "'");
          }
        }
      }
      const std::string loc = where(fn.name, b);
      std::visit(
          [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, Jump>) {
              check_target(c, loc, t.target, fn.blocks.size());
            } else if constexpr (std::is_same_v<T, Branch>) {
              check_target(c, loc, t.if_true, fn.blocks.size());
              check_target(c, loc, t.if_false, fn.blocks.size());
              const Type* ct = lookup(t.cond);
              if (!ct) {
                c.add(loc, "undeclared branch condition '" + t.cond + "'");
              } else if (*ct != Type::scalar(DType::Bool)) {
                c.add(loc, "branch condition '" + t.cond + "' is not bool");
              }
            }
          },
          blk.term);
    }
  }
  auto diags = c.take();
  if (!diags.empty()) return diags;
  // Dataflow only makes sense once the structure is sound.
  for (const Function& fn : prog.functions) check_definite_assignment(c, fn);
  return c.take();
}

std::vector<Diagnostic> validate_flat(const FlatProgram& prog, const PrimitiveRegistry& registry) {
  Checker c(registry);
  const size_t n = prog.blocks.size();
  if (prog.entry < 0 || static_cast<size_t>(prog.entry) >= n) c.add("program", "entry out of range");
  auto lookup_var = [&prog](const VarName& v) -> const FlatVar* {
    auto it = prog.vars.find(v);
    return it == prog.vars.end() ? nullptr : &it->second;
  };
  auto lookup = [&](const VarName& v) -> const Type* {
    const FlatVar* fv = lookup_var(v);
    return fv ? &fv->type : nullptr;
  };
  for (const VarName& v : prog.inputs) {
    if (!lookup(v)) c.add("program", "undeclared input '" + v + "'");
  }
  if (!lookup(prog.output)) c.add("program", "undeclared output '" + prog.output + "'");

  for (size_t b = 0; b < n; ++b) {
    const FlatBlock& blk = prog.blocks[b];
    for (size_t k = 0; k < blk.ops.size(); ++k) {
      const FlatOp& op = blk.ops[k];
      const std::string loc = "block " + std::to_string(b) + "/op " + std::to_string(k);
      const FlatVar* fv = lookup_var(op.var);
      if (!fv) {
        c.add(loc, "undeclared variable '" + op.var + "'");
        continue;
      }
      if (op.kind == FlatOpKind::Pop) {
        if (fv->cls != VarClass::Stacked) c.add(loc, "pop of non-stack variable '" + op.var + "'");
        continue;
      }
      if (op.kind == FlatOpKind::Push && fv->cls != VarClass::Stacked) {
        c.add(loc, "push onto non-stack variable '" + op.var + "'");
      }
      c.check_primitive(loc, op.prim, op.inputs, op.literal, &fv->type, lookup);
    }
    const std::string loc = "block " + std::to_string(b);
    std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, Jump>) {
            check_target(c, loc, t.target, n);
          } else if constexpr (std::is_same_v<T, Branch>) {
            check_target(c, loc, t.if_true, n);
            check_target(c, loc, t.if_false, n);
            const Type* ct = lookup(t.cond);
            if (!ct) {
              c.add(loc, "undeclared branch condition '" + t.cond + "'");
            } else if (*ct != Type::scalar(DType::Bool)) {
              c.add(loc, "branch condition '" + t.cond + "' is not bool");
            }
          } else if constexpr (std::is_same_v<T, PushJump>) {
            check_target(c, loc, t.jump_to, n);
            if (t.return_to < 0 || static_cast<size_t>(t.return_to) > n) {
              c.add(loc, "return target out of range: " + std::to_string(t.return_to));
            }
          }
        },
        blk.term);
  }
  return c.take();
}

}  // namespace autobatch
