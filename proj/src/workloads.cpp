#include "autobatch/workloads.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "autobatch/errors.hpp"

namespace autobatch {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::string float_lit(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

// Replaces every `@KEY@` with its value.
std::string fill(std::string text, const std::vector<std::pair<std::string, std::string>>& subs) {
  for (const auto& [key, value] : subs) {
    const std::string token = "@" + key + "@";
    for (size_t at = text.find(token); at != std::string::npos; at = text.find(token, at)) {
      text.replace(at, token.size(), value);
      at += value.size();
    }
  }
  return text;
}

double log_sigmoid(double z) {
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

TargetDensity correlated_gaussian(int dim, double rho) {
  if (dim < 1) throw Error("correlated_gaussian: dim must be positive");
  if (!(std::abs(rho) < 1.0) || (dim > 1 && !(1.0 + (dim - 1) * rho > 0.0))) {
    throw Error("correlated_gaussian: covariance is not positive definite");
  }
  const double a = 1.0 - rho;
  const double c = 1.0 + (dim - 1) * rho;
  // Sigma^-1 = (I - rho / c * 11^T) / a ; det Sigma = a^(dim-1) c
  const double beta = dim == 1 ? 0.0 : rho / c;
  const double log_det = dim == 1 ? 0.0 : (dim - 1) * std::log(a) + std::log(c);
  const double inv_a = dim == 1 ? 1.0 : 1.0 / a;
  const double norm = -0.5 * (dim * kLog2Pi + log_det);

  auto precision_times = [=](std::span<const double> x, std::span<double> out) {
    double sum = 0.0;
    for (double v : x) sum += v;
    for (int k = 0; k < dim; ++k) out[k] = inv_a * (x[k] - beta * sum);
  };

  TargetDensity t;
  t.name = "gauss" + std::to_string(dim);
  t.dim = dim;
  t.logpdf = [=](std::span<const double> x) {
    std::vector<double> px(dim);
    precision_times(x, px);
    double q = 0.0;
    for (int k = 0; k < dim; ++k) q += x[k] * px[k];
    return norm - 0.5 * q;
  };
  t.grad = [=](std::span<const double> x, std::span<double> out) {
    precision_times(x, out);
    for (int k = 0; k < dim; ++k) out[k] = -out[k];
  };
  t.mean.assign(dim, 0.0);
  t.cov.assign(dim, std::vector<double>(dim, dim == 1 ? 0.0 : rho));
  for (int k = 0; k < dim; ++k) t.cov[k][k] = 1.0;
  return t;
}

TargetDensity logistic_regression(int n_points, int n_regressors, std::uint64_t seed,
                                  bool negate_labels) {
  if (n_points < 1 || n_regressors < 1) throw Error("logistic_regression: empty problem");
  struct Data {
    int n, p;
    std::vector<double> x;  // row-major n x p
    std::vector<double> y;  // +-1
  };
  auto data = std::make_shared<Data>();
  data->n = n_points;
  data->p = n_regressors;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> truth(n_regressors);
  for (double& w : truth) w = normal(rng);
  for (int i = 0; i < n_points; ++i) {
    double z = 0.0;
    for (int j = 0; j < n_regressors; ++j) {
      const double v = normal(rng);
      data->x.push_back(v);
      z += v * truth[j];
    }
    const double label = unif(rng) < sigmoid(z) ? 1.0 : -1.0;
    data->y.push_back(negate_labels ? -label : label);
  }

  TargetDensity t;
  t.name = "logreg" + std::to_string(n_points) + "x" + std::to_string(n_regressors) +
           (negate_labels ? "flip" : "");
  t.dim = n_regressors;
  t.logpdf = [data](std::span<const double> w) {
    double lp = -0.5 * data->p * kLog2Pi;
    for (int j = 0; j < data->p; ++j) lp -= 0.5 * w[j] * w[j];
    for (int i = 0; i < data->n; ++i) {
      double z = 0.0;
      for (int j = 0; j < data->p; ++j) z += data->x[i * data->p + j] * w[j];
      lp += log_sigmoid(data->y[i] * z);
    }
    return lp;
  };
  t.grad = [data](std::span<const double> w, std::span<double> out) {
    for (int j = 0; j < data->p; ++j) out[j] = -w[j];
    for (int i = 0; i < data->n; ++i) {
      double z = 0.0;
      for (int j = 0; j < data->p; ++j) z += data->x[i * data->p + j] * w[j];
      const double s = data->y[i] * sigmoid(-data->y[i] * z);
      for (int j = 0; j < data->p; ++j) out[j] += s * data->x[i * data->p + j];
    }
  };
  return t;
}

void register_target(PrimitiveRegistry& registry, const TargetDensity& target) {
  const Type vt = Type::vec(target.dim);
  const Type ft = Type::scalar(DType::Float);
  auto takes_state = [vt](Type result) {
    return [vt, result](std::span<const Type> in, const std::optional<Literal>&) -> std::optional<Type> {
      if (in.size() != 1 || in[0] != vt) return std::nullopt;
      return result;
    };
  };
  auto logpdf = target.logpdf;
  auto grad = target.grad;
  registry.add(Primitive{target.logpdf_prim(), 1, takes_state(ft),
                         [logpdf](KernelInputs in, BatchArray& out, const Literal*) {
                           for (int l = 0; l < out.lanes(); ++l) out.f(l) = logpdf(in[0]->row(l));
                         }});
  registry.add(Primitive{target.grad_prim(), 1, takes_state(vt),
                         [grad](KernelInputs in, BatchArray& out, const Literal*) {
                           for (int l = 0; l < out.lanes(); ++l) grad(in[0]->row(l), out.row(l));
                         }});
}

void leapfrog_step(const TargetDensity& target, std::vector<double>& theta, std::vector<double>& r,
                   double eps) {
  std::vector<double> g(target.dim);
  target.grad(theta, g);
  for (int k = 0; k < target.dim; ++k) r[k] += 0.5 * eps * g[k];
  for (int k = 0; k < target.dim; ++k) theta[k] += eps * r[k];
  target.grad(theta, g);
  for (int k = 0; k < target.dim; ++k) r[k] += 0.5 * eps * g[k];
}

// Packed build_tree result, with D = dim:
//   [theta- | r- | theta+ | r+ | theta' | n' s' counter]
//    0       D    2D       3D   4D       5D 5D+1 5D+2
static const char* kNutsTemplate = R"(# NUTS-lite: slice sampler with recursive tree doubling.
def nuts(theta0: vec<@D@>, key) -> vec<@CHAIN@> {
  theta = theta0;
  chain = zeros(@CHAIN@);
  ctr = 0;
  m = 0;
  while (m < @ITERS@) {
    r0 = zeros(@D@);
    i = 0;
    while (i < @D@) {
      u1 = rng_uniform(key, ctr);
      u2 = rng_uniform(key, ctr + 1);
      ctr = ctr + 2;
      r0 = put(r0, i, sqrt(-2.0 * log(1.0 - u1)) * cos(6.283185307179586 * u2));
      i = i + 1;
    }
    logu = @T@_logpdf(theta) - 0.5 * dot(r0, r0) + log(1.0 - rng_uniform(key, ctr));
    ctr = ctr + 1;
    tm = theta;
    tp = theta;
    rm = r0;
    rp = r0;
    j = 0;
    n = 1.0;
    s = 1.0;
    while (0.5 < s and j <= @MAXD@) {
      v = 1.0;
      if (rng_uniform(key, ctr) < 0.5) {
        v = -1.0;
      }
      ctr = ctr + 1;
      if (v < 0.0) {
        b = build_tree(tm, rm, logu, v, j, key, ctr);
        tm = slice(b, 0, @D@);
        rm = slice(b, @D1@, @D@);
      } else {
        b = build_tree(tp, rp, logu, v, j, key, ctr);
        tp = slice(b, @D2@, @D@);
        rp = slice(b, @D3@, @D@);
      }
      np = get(b, @D5@);
      sp = get(b, @D5@ + 1);
      ctr = int(get(b, @D5@ + 2));
      if (0.5 < sp) {
        if (rng_uniform(key, ctr) * n < np) {
          theta = slice(b, @D4@, @D@);
        }
        ctr = ctr + 1;
      }
      n = n + np;
      dt = tp - tm;
      s = 0.0;
      if (0.5 < sp and 0.0 <= dot(dt, rm) and 0.0 <= dot(dt, rp)) {
        s = 1.0;
      }
      j = j + 1;
    }
    k = 0;
    while (k < @D@) {
      chain = put(chain, m * @D@ + k, get(theta, k));
      k = k + 1;
    }
    m = m + 1;
  }
  return chain;
}

def build_tree(theta: vec<@D@>, r: vec<@D@>, logu: float, v: float, j, key, ctr) -> vec<@PACK@> {
  if (j == 0) {
    lf = leapfrog(theta, r, v * @EPS@);
    t1 = slice(lf, 0, @D@);
    r1 = slice(lf, @D1@, @D@);
    joint = @T@_logpdf(t1) - 0.5 * dot(r1, r1);
    n1 = 0.0;
    if (logu <= joint) {
      n1 = 1.0;
    }
    s1 = 0.0;
    if (logu - 1000.0 < joint) {
      s1 = 1.0;
    }
    tail = put(put(put(zeros(3), 0, n1), 1, s1), 2, float(ctr));
    return concat(concat(concat(concat(concat(t1, r1), t1), r1), t1), tail);
  }
  a = build_tree(theta, r, logu, v, j - 1, key, ctr);
  tm = slice(a, 0, @D@);
  rm = slice(a, @D1@, @D@);
  tp = slice(a, @D2@, @D@);
  rp = slice(a, @D3@, @D@);
  tprime = slice(a, @D4@, @D@);
  n1 = get(a, @D5@);
  s1 = get(a, @D5@ + 1);
  ctr = int(get(a, @D5@ + 2));
  if (0.5 < s1) {
    if (v < 0.0) {
      b = build_tree(tm, rm, logu, v, j - 1, key, ctr);
      tm = slice(b, 0, @D@);
      rm = slice(b, @D1@, @D@);
    } else {
      b = build_tree(tp, rp, logu, v, j - 1, key, ctr);
      tp = slice(b, @D2@, @D@);
      rp = slice(b, @D3@, @D@);
    }
    n2 = get(b, @D5@);
    s2 = get(b, @D5@ + 1);
    ctr = int(get(b, @D5@ + 2));
    if (rng_uniform(key, ctr) * (n1 + n2) < n2) {
      tprime = slice(b, @D4@, @D@);
    }
    ctr = ctr + 1;
    dt = tp - tm;
    s1 = 0.0;
    if (0.5 < s2 and 0.0 <= dot(dt, rm) and 0.0 <= dot(dt, rp)) {
      s1 = 1.0;
    }
    n1 = n1 + n2;
  }
  tail = put(put(put(zeros(3), 0, n1), 1, s1), 2, float(ctr));
  return concat(concat(concat(concat(concat(tm, rm), tp), rp), tprime), tail);
}

def leapfrog(theta: vec<@D@>, r: vec<@D@>, eps: float) -> vec<@D2@> {
  g = @T@_grad(theta);
  k = 0;
  while (k < @L@) {
    r = axpy(0.5 * eps, g, r);
    theta = axpy(eps, r, theta);
    g = @T@_grad(theta);
    r = axpy(0.5 * eps, g, r);
    k = k + 1;
  }
  return concat(theta, r);
}
)";

std::string nuts_lite_source(const NutsConfig& c, const TargetDensity& target) {
  if (c.leapfrog_steps < 1) throw Error("nuts config: leapfrog_steps must be at least 1");
  if (c.max_depth < 0) throw Error("nuts config: max_depth must be non-negative");
  if (c.iterations < 1) throw Error("nuts config: iterations must be at least 1");
  if (!(c.step_size > 0.0) || !std::isfinite(c.step_size)) {
    throw Error("nuts config: step_size must be positive");
  }
  if (target.dim < 1) throw Error("nuts config: target has no dimensions");
  const int d = target.dim;
  auto n = [](long v) { return std::to_string(v); };
  return fill(kNutsTemplate, {{"CHAIN", n(static_cast<long>(c.iterations) * d)},
                              {"ITERS", n(c.iterations)},
                              {"MAXD", n(c.max_depth)},
                              {"PACK", n(5L * d + 3)},
                              {"EPS", float_lit(c.step_size)},
                              {"L", n(c.leapfrog_steps)},
                              {"T", target.name},
                              {"D1", n(d)},
                              {"D2", n(2L * d)},
                              {"D3", n(3L * d)},
                              {"D4", n(4L * d)},
                              {"D5", n(5L * d)},
                              {"D", n(d)}});
}

int nuts_stack_depth(const NutsConfig& config) {
  // base frame + nuts + build_tree levels 0..max_depth + leapfrog + halt slot
  return config.max_depth + 5;
}

std::vector<BatchArray> nuts_inputs(const NutsConfig& config, const TargetDensity& target,
                                    int lanes) {
  std::vector<std::vector<double>> theta0;
  std::vector<std::int64_t> keys;
  for (int b = 0; b < lanes; ++b) {
    const std::int64_t key = config.seed * 1'000'003 + b;
    keys.push_back(key);
    std::vector<double> row;
    // Overdispersed starting points in [-2, 2) drawn from a separate stream.
    for (int k = 0; k < target.dim; ++k) row.push_back(4.0 * uniform_from(~key, k) - 2.0);
    theta0.push_back(std::move(row));
  }
  return {BatchArray::of_vectors(theta0), BatchArray::of_ints(keys)};
}

std::string fibonacci_source() {
  return R"(def fibonacci(n) {
  if (n <= 1) {
    return 1;
  } else {
    left = fibonacci(n - 2);
    right = fibonacci(n - 1);
    return left + right;
  }
}
)";
}

namespace {

std::vector<std::int64_t> ints_in(std::mt19937_64& rng, int lanes, int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  std::vector<std::int64_t> out;
  for (int b = 0; b < lanes; ++b) out.push_back(dist(rng));
  return out;
}

std::vector<double> floats_in(std::mt19937_64& rng, int lanes, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out;
  for (int b = 0; b < lanes; ++b) out.push_back(dist(rng));
  return out;
}

TargetDensity corpus_target() { return correlated_gaussian(2, 0.5); }

NutsConfig corpus_nuts_config() {
  NutsConfig c;
  c.step_size = 0.3;
  c.leapfrog_steps = 2;
  c.max_depth = 3;
  c.iterations = 3;
  return c;
}

}  // namespace

std::vector<CorpusEntry> corpus() {
  std::vector<CorpusEntry> out;

  out.push_back({"fibonacci", fibonacci_source(), "fibonacci", true,
                 {BatchArray::of_ints({3, 7, 4, 5})},
                 [](std::mt19937_64& rng, int z) {
                   return std::vector<BatchArray>{BatchArray::of_ints(ints_in(rng, z, 0, 12))};
                 }});

  out.push_back({"countdown",
                 "def countdown(n) {\n"
                 "  while (0 < n) {\n"
                 "    n = n - 1;\n"
                 "  }\n"
                 "  return n;\n"
                 "}\n",
                 "countdown", false, {BatchArray::of_ints({5, 0, 1, 9})},
                 [](std::mt19937_64& rng, int z) {
                   return std::vector<BatchArray>{BatchArray::of_ints(ints_in(rng, z, -3, 20))};
                 }});

  out.push_back({"mutual_recursion",
                 "def is_even(n) -> bool {\n"
                 "  if (n == 0) {\n"
                 "    return true;\n"
                 "  }\n"
                 "  return is_odd(n - 1);\n"
                 "}\n"
                 "\n"
                 "def is_odd(n) -> bool {\n"
                 "  if (n == 0) {\n"
                 "    return false;\n"
                 "  }\n"
                 "  return is_even(n - 1);\n"
                 "}\n",
                 "is_even", true, {BatchArray::of_ints({0, 1, 6, 9})},
                 [](std::mt19937_64& rng, int z) {
                   return std::vector<BatchArray>{BatchArray::of_ints(ints_in(rng, z, 0, 15))};
                 }});

  out.push_back({"two_call_sites",
                 "# Two call sites of one helper on divergent paths that reconverge.\n"
                 "def converge(x: float, k) -> float {\n"
                 "  if (k < 2) {\n"
                 "    y = smooth(x * 2.0);\n"
                 "  } else {\n"
                 "    z = x + float(k);\n"
                 "    y = smooth(z) - 1.0;\n"
                 "  }\n"
                 "  w = y * y;\n"
                 "  while (0 < k) {\n"
                 "    w = w + smooth(w / 8.0);\n"
                 "    k = k - 1;\n"
                 "  }\n"
                 "  return w;\n"
                 "}\n"
                 "\n"
                 "def smooth(x: float) -> float {\n"
                 "  return sin(x) + x * 0.5;\n"
                 "}\n",
                 "converge", false,
                 {BatchArray::of_floats({0.5, -1.25, 2.0, 0.0}), BatchArray::of_ints({0, 3, 1, 4})},
                 [](std::mt19937_64& rng, int z) {
                   return std::vector<BatchArray>{BatchArray::of_floats(floats_in(rng, z, -3, 3)),
                                                  BatchArray::of_ints(ints_in(rng, z, 0, 5))};
                 }});

  out.push_back({"straight_line",
                 "def poly(x: float, y: float) -> float {\n"
                 "  a = x * y + 1.5;\n"
                 "  b = sin(a) - exp(y / 4.0);\n"
                 "  c = abs(a - b) + 1.0;\n"
                 "  return a * b - floor(x) + sqrt(c) * log(c);\n"
                 "}\n",
                 "poly", false,
                 {BatchArray::of_floats({1.0, -2.5, 0.25, 3.0}),
                  BatchArray::of_floats({0.5, 1.5, -1.0, 2.0})},
                 [](std::mt19937_64& rng, int z) {
                   return std::vector<BatchArray>{BatchArray::of_floats(floats_in(rng, z, -4, 4)),
                                                  BatchArray::of_floats(floats_in(rng, z, -4, 4))};
                 }});

  out.push_back({"ackermann",
                 "def ack(m, n) {\n"
                 "  if (m == 0) {\n"
                 "    return n + 1;\n"
                 "  }\n"
                 "  if (n == 0) {\n"
                 "    return ack(m - 1, 1);\n"
                 "  }\n"
                 "  return ack(m - 1, ack(m, n - 1));\n"
                 "}\n",
                 "ack", true, {BatchArray::of_ints({0, 1, 2, 2}), BatchArray::of_ints({3, 2, 1, 3})},
                 [](std::mt19937_64& rng, int z) {
                   return std::vector<BatchArray>{BatchArray::of_ints(ints_in(rng, z, 0, 2)),
                                                  BatchArray::of_ints(ints_in(rng, z, 0, 3))};
                 }});

  const TargetDensity target = corpus_target();
  const NutsConfig cfg = corpus_nuts_config();
  out.push_back({"nuts_lite", nuts_lite_source(cfg, target), "nuts", true,
                 nuts_inputs(cfg, target, 4),
                 [cfg, target](std::mt19937_64& rng, int z) {
                   NutsConfig c = cfg;
                   c.seed = static_cast<std::int64_t>(rng() % 100000);
                   return nuts_inputs(c, target, z);
                 },
                 10'000'000});
  return out;
}

PrimitiveRegistry corpus_registry() {
  PrimitiveRegistry r = PrimitiveRegistry::builtins();
  register_target(r, corpus_target());
  return r;
}

const CorpusEntry* find_corpus_entry(const std::string& name) {
  static const std::vector<CorpusEntry> entries = corpus();
  for (const CorpusEntry& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

}  // namespace autobatch
