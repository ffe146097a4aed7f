#include <cmath>
#include <cstdint>
#include <limits>

#include "autobatch/errors.hpp"
#include "autobatch/runtime.hpp"

namespace autobatch {

namespace {

using std::int64_t;

constexpr Type kFloat = Type::scalar(DType::Float);
constexpr Type kInt = Type::scalar(DType::Int);
constexpr Type kBool = Type::scalar(DType::Bool);

bool is_numeric_scalar(const Type& t) {
  return t.is_scalar() && (t.dtype == DType::Float || t.dtype == DType::Int);
}

// Wrapping integer arithmetic: kernels must never trap.
int64_t wrap_add(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
int64_t wrap_sub(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}
int64_t wrap_mul(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}
int64_t total_div(int64_t a, int64_t b) {
  if (b == 0) return 0;
  if (b == -1) return wrap_sub(0, a);
  return a / b;
}

// ---- type rules ----------------------------------------------------------

std::optional<Type> arith_rule(std::span<const Type> in, bool allow_broadcast) {
  const Type& a = in[0];
  const Type& b = in[1];
  if (a == b && (is_numeric_scalar(a) || a.is_vector())) return a;
  if (allow_broadcast) {
    if (a.is_vector() && b == kFloat) return a;
    if (b.is_vector() && a == kFloat) return b;
  }
  return std::nullopt;
}

std::optional<Type> unary_numeric_rule(std::span<const Type> in) {
  if (is_numeric_scalar(in[0]) || in[0].is_vector()) return in[0];
  return std::nullopt;
}

std::optional<Type> unary_float_rule(std::span<const Type> in) {
  if (in[0].dtype == DType::Float) return in[0];
  return std::nullopt;
}

std::optional<Type> compare_rule(std::span<const Type> in, bool allow_bool) {
  if (in[0] != in[1] || !in[0].is_scalar()) return std::nullopt;
  if (in[0].dtype == DType::Bool && !allow_bool) return std::nullopt;
  return kBool;
}

// ---- kernel helpers ------------------------------------------------------

// Elementwise float op with scalar broadcast against vectors.
template <typename F>
void float_binary(KernelInputs in, BatchArray& out, F op) {
  const BatchArray& a = *in[0];
  const BatchArray& b = *in[1];
  const int w = out.lane_size();
  const int wa = a.lane_size();
  const int wb = b.lane_size();
  for (int l = 0; l < out.lanes(); ++l) {
    for (int k = 0; k < w; ++k) {
      out.f(l, k) = op(a.f(l, wa == 1 ? 0 : k), b.f(l, wb == 1 ? 0 : k));
    }
  }
}

template <typename F>
void int_binary(KernelInputs in, BatchArray& out, F op) {
  const BatchArray& a = *in[0];
  const BatchArray& b = *in[1];
  for (int l = 0; l < out.lanes(); ++l) out.i(l) = op(a.i(l), b.i(l));
}

template <typename FF, typename FI>
KernelFn numeric_binary(FF float_op, FI int_op) {
  return [float_op, int_op](KernelInputs in, BatchArray& out, const Literal*) {
    if (out.is_float()) {
      float_binary(in, out, float_op);
    } else {
      int_binary(in, out, int_op);
    }
  };
}

template <typename FF, typename FI>
KernelFn numeric_unary(FF float_op, FI int_op) {
  return [float_op, int_op](KernelInputs in, BatchArray& out, const Literal*) {
    const BatchArray& a = *in[0];
    if (out.is_float()) {
      auto src = a.floats();
      auto dst = out.floats();
      for (size_t k = 0; k < dst.size(); ++k) dst[k] = float_op(src[k]);
    } else {
      for (int l = 0; l < out.lanes(); ++l) out.i(l) = int_op(a.i(l));
    }
  };
}

template <typename F>
KernelFn float_unary(F op) {
  return numeric_unary(op, [](int64_t v) { return v; });
}

template <typename FF, typename FI>
KernelFn comparison(FF float_op, FI int_op) {
  return [float_op, int_op](KernelInputs in, BatchArray& out, const Literal*) {
    const BatchArray& a = *in[0];
    const BatchArray& b = *in[1];
    for (int l = 0; l < out.lanes(); ++l) {
      const bool r = a.is_float() ? float_op(a.f(l), b.f(l)) : int_op(a.i(l), b.i(l));
      out.i(l) = r ? 1 : 0;
    }
  };
}

Primitive make(std::string name, int arity, TypeRuleFn rule, KernelFn kernel) {
  return Primitive{std::move(name), arity, std::move(rule), std::move(kernel)};
}

TypeRuleFn fixed_rule(std::vector<Type> inputs, Type result) {
  return [inputs, result](std::span<const Type> in, const std::optional<Literal>&)
             -> std::optional<Type> {
    if (in.size() != inputs.size()) return std::nullopt;
    for (size_t k = 0; k < in.size(); ++k) {
      if (in[k] != inputs[k]) return std::nullopt;
    }
    return result;
  };
}

int64_t float_to_int(double v) {
  if (std::isnan(v)) return 0;
  if (v >= 9.2233720368547758e18) return std::numeric_limits<int64_t>::max();
  if (v <= -9.2233720368547758e18) return std::numeric_limits<int64_t>::min();
  return static_cast<int64_t>(v);
}

void add_parametric_zeros(std::map<std::string, Primitive>& cache, const std::string& name,
                          int k) {
  cache.emplace(name, make(name, 0, fixed_rule({}, Type::vec(k)),
                           [](KernelInputs, BatchArray& out, const Literal*) { out.fill_zero(); }));
}

void add_parametric_slice(std::map<std::string, Primitive>& cache, const std::string& name,
                          int k) {
  auto rule = [k](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
    if (in.size() != 2 || !in[0].is_vector() || in[1] != kInt) return std::nullopt;
    return Type::vec(k);
  };
  auto kernel = [](KernelInputs in, BatchArray& out, const Literal*) {
    const BatchArray& v = *in[0];
    const BatchArray& off = *in[1];
    const int w = v.lane_size();
    for (int l = 0; l < out.lanes(); ++l) {
      for (int j = 0; j < out.lane_size(); ++j) {
        const int64_t src = off.i(l) + j;
        out.f(l, j) = (src >= 0 && src < w) ? v.f(l, static_cast<int>(src)) : 0.0;
      }
    }
  };
  cache.emplace(name, make(name, 2, rule, kernel));
}

}  // namespace

void PrimitiveRegistry::add(Primitive p) {
  const std::string name = p.name;
  prims_.insert_or_assign(name, std::move(p));
}

const Primitive* PrimitiveRegistry::find(const std::string& name) const {
  if (auto it = prims_.find(name); it != prims_.end()) return &it->second;
  if (auto it = parametric_cache_.find(name); it != parametric_cache_.end()) return &it->second;

  const auto dot = name.find('.');
  if (dot == std::string::npos) return nullptr;
  const std::string base = name.substr(0, dot);
  const std::string digits = name.substr(dot + 1);
  if (digits.empty() || digits.size() > 6 ||
      digits.find_first_not_of("0123456789") != std::string::npos || digits[0] == '0') {
    return nullptr;
  }
  const int k = std::stoi(digits);
  if (base == "zeros") {
    add_parametric_zeros(parametric_cache_, name, k);
  } else if (base == "slice") {
    add_parametric_slice(parametric_cache_, name, k);
  } else {
    return nullptr;
  }
  return &parametric_cache_.at(name);
}

std::vector<std::string> PrimitiveRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : prims_) out.push_back(name);
  return out;
}

PrimitiveRegistry PrimitiveRegistry::builtins() {
  PrimitiveRegistry r;
  auto arith = [](bool broadcast) {
    return [broadcast](std::span<const Type> in, const std::optional<Literal>&) {
      return in.size() == 2 ? arith_rule(in, broadcast) : std::nullopt;
    };
  };
  auto unary_num = [](std::span<const Type> in, const std::optional<Literal>&) {
    return in.size() == 1 ? unary_numeric_rule(in) : std::nullopt;
  };
  auto unary_flt = [](std::span<const Type> in, const std::optional<Literal>&) {
    return in.size() == 1 ? unary_float_rule(in) : std::nullopt;
  };
  auto cmp = [](bool allow_bool) {
    return [allow_bool](std::span<const Type> in, const std::optional<Literal>&) {
      return in.size() == 2 ? compare_rule(in, allow_bool) : std::nullopt;
    };
  };

  r.add(make("add", 2, arith(false),
             numeric_binary([](double a, double b) { return a + b; }, wrap_add)));
  r.add(make("sub", 2, arith(false),
             numeric_binary([](double a, double b) { return a - b; }, wrap_sub)));
  r.add(make("mul", 2, arith(true),
             numeric_binary([](double a, double b) { return a * b; }, wrap_mul)));
  r.add(make("div", 2, arith(true),
             numeric_binary([](double a, double b) { return a / b; }, total_div)));
  r.add(make("min", 2,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() == 2 && in[0] == in[1] && is_numeric_scalar(in[0])) return in[0];
               return std::nullopt;
             },
             numeric_binary([](double a, double b) { return std::fmin(a, b); },
                            [](int64_t a, int64_t b) { return a < b ? a : b; })));
  r.add(make("max", 2, r.prims_.at("min").result_type,
             numeric_binary([](double a, double b) { return std::fmax(a, b); },
                            [](int64_t a, int64_t b) { return a < b ? b : a; })));
  r.add(make("neg", 1, unary_num,
             numeric_unary([](double a) { return -a; }, [](int64_t a) { return wrap_sub(0, a); })));
  r.add(make("abs", 1, unary_num,
             numeric_unary([](double a) { return std::fabs(a); },
                           [](int64_t a) { return a < 0 ? wrap_sub(0, a) : a; })));
  r.add(make("sqrt", 1, unary_flt, float_unary([](double a) { return std::sqrt(a); })));
  r.add(make("exp", 1, unary_flt, float_unary([](double a) { return std::exp(a); })));
  r.add(make("log", 1, unary_flt, float_unary([](double a) { return std::log(a); })));
  r.add(make("sin", 1, unary_flt, float_unary([](double a) { return std::sin(a); })));
  r.add(make("cos", 1, unary_flt, float_unary([](double a) { return std::cos(a); })));
  r.add(make("floor", 1, unary_flt, float_unary([](double a) { return std::floor(a); })));

  r.add(make("le", 2, cmp(false),
             comparison([](double a, double b) { return a <= b; },
                        [](int64_t a, int64_t b) { return a <= b; })));
  r.add(make("lt", 2, cmp(false),
             comparison([](double a, double b) { return a < b; },
                        [](int64_t a, int64_t b) { return a < b; })));
  r.add(make("eq", 2, cmp(true),
             comparison([](double a, double b) { return a == b; },
                        [](int64_t a, int64_t b) { return a == b; })));

  auto bool_binary = [](auto op) {
    return [op](KernelInputs in, BatchArray& out, const Literal*) {
      for (int l = 0; l < out.lanes(); ++l) out.i(l) = op(in[0]->b(l), in[1]->b(l)) ? 1 : 0;
    };
  };
  r.add(make("and", 2, fixed_rule({kBool, kBool}, kBool),
             bool_binary([](bool a, bool b) { return a && b; })));
  r.add(make("or", 2, fixed_rule({kBool, kBool}, kBool),
             bool_binary([](bool a, bool b) { return a || b; })));
  r.add(make("not", 1, fixed_rule({kBool}, kBool),
             [](KernelInputs in, BatchArray& out, const Literal*) {
               for (int l = 0; l < out.lanes(); ++l) out.i(l) = in[0]->b(l) ? 0 : 1;
             }));

  r.add(make("select", 3,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() == 3 && in[0] == kBool && in[1] == in[2]) return in[1];
               return std::nullopt;
             },
             [](KernelInputs in, BatchArray& out, const Literal*) {
               for (int l = 0; l < out.lanes(); ++l) {
                 out.copy_lane_from(l, in[0]->b(l) ? *in[1] : *in[2], l);
               }
             }));

  r.add(make("dot", 2,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() == 2 && in[0].is_vector() && in[0] == in[1]) return kFloat;
               return std::nullopt;
             },
             [](KernelInputs in, BatchArray& out, const Literal*) {
               const int w = in[0]->lane_size();
               for (int l = 0; l < out.lanes(); ++l) {
                 double s = 0.0;
                 for (int k = 0; k < w; ++k) s += in[0]->f(l, k) * in[1]->f(l, k);
                 out.f(l) = s;
               }
             }));

  r.add(make("axpy", 3,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() == 3 && in[0] == kFloat && in[1].is_vector() && in[1] == in[2]) {
                 return in[1];
               }
               return std::nullopt;
             },
             [](KernelInputs in, BatchArray& out, const Literal*) {
               const int w = out.lane_size();
               for (int l = 0; l < out.lanes(); ++l) {
                 const double a = in[0]->f(l);
                 for (int k = 0; k < w; ++k) out.f(l, k) = a * in[1]->f(l, k) + in[2]->f(l, k);
               }
             }));

  r.add(make("rng_uniform", 2, fixed_rule({kInt, kInt}, kFloat),
             [](KernelInputs in, BatchArray& out, const Literal*) {
               for (int l = 0; l < out.lanes(); ++l) {
                 out.f(l) = uniform_from(in[0]->i(l), in[1]->i(l));
               }
             }));

  r.add(make(kCopyPrim, 1,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() == 1) return in[0];
               return std::nullopt;
             },
             [](KernelInputs in, BatchArray& out, const Literal*) {
               for (int l = 0; l < out.lanes(); ++l) out.copy_lane_from(l, *in[0], l);
             }));

  r.add(make(kConstPrim, 0,
             [](std::span<const Type> in, const std::optional<Literal>& lit)
                 -> std::optional<Type> {
               if (!in.empty() || !lit) return std::nullopt;
               return Type::scalar(lit->dtype);
             },
             [](KernelInputs, BatchArray& out, const Literal* lit) {
               for (int l = 0; l < out.lanes(); ++l) {
                 if (out.is_float()) {
                   out.f(l) = lit->f;
                 } else {
                   out.i(l) = lit->i;
                 }
               }
             }));

  r.add(make("tofloat", 1, fixed_rule({kInt}, kFloat),
             [](KernelInputs in, BatchArray& out, const Literal*) {
               for (int l = 0; l < out.lanes(); ++l) out.f(l) = static_cast<double>(in[0]->i(l));
             }));
  r.add(make("toint", 1, fixed_rule({kFloat}, kInt),
             [](KernelInputs in, BatchArray& out, const Literal*) {
               for (int l = 0; l < out.lanes(); ++l) out.i(l) = float_to_int(in[0]->f(l));
             }));

  r.add(make("get", 2,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() == 2 && in[0].is_vector() && in[1] == kInt) return kFloat;
               return std::nullopt;
             },
             [](KernelInputs in, BatchArray& out, const Literal*) {
               const int w = in[0]->lane_size();
               for (int l = 0; l < out.lanes(); ++l) {
                 const int64_t k = in[1]->i(l);
                 out.f(l) = (k >= 0 && k < w) ? in[0]->f(l, static_cast<int>(k)) : 0.0;
               }
             }));

  // put(v, offset, w): v with w (float or vector) written from offset on;
  // elements landing out of range are dropped.
  r.add(make("put", 3,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() == 3 && in[0].is_vector() && in[1] == kInt &&
                   (in[2] == kFloat || in[2].is_vector())) {
                 return in[0];
               }
               return std::nullopt;
             },
             [](KernelInputs in, BatchArray& out, const Literal*) {
               const int w = out.lane_size();
               const int wv = in[2]->lane_size();
               for (int l = 0; l < out.lanes(); ++l) {
                 out.copy_lane_from(l, *in[0], l);
                 for (int j = 0; j < wv; ++j) {
                   const int64_t dst = in[1]->i(l) + j;
                   if (dst >= 0 && dst < w) out.f(l, static_cast<int>(dst)) = in[2]->f(l, j);
                 }
               }
             }));

  r.add(make("concat", 2,
             [](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
               if (in.size() != 2) return std::nullopt;
               for (const Type& t : in) {
                 if (t.dtype != DType::Float) return std::nullopt;
               }
               return Type::vec(in[0].lane_size() + in[1].lane_size());
             },
             [](KernelInputs in, BatchArray& out, const Literal*) {
               const int wa = in[0]->lane_size();
               const int wb = in[1]->lane_size();
               for (int l = 0; l < out.lanes(); ++l) {
                 for (int k = 0; k < wa; ++k) out.f(l, k) = in[0]->f(l, k);
                 for (int k = 0; k < wb; ++k) out.f(l, wa + k) = in[1]->f(l, k);
               }
             }));

  return r;
}

}  // namespace autobatch
