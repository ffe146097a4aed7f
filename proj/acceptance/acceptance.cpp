// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "autobatch/compiler.hpp"
#include "autobatch/errors.hpp"
#include "autobatch/frontend.hpp"
#include "autobatch/local_exec.hpp"
#include "autobatch/metrics.hpp"
#include "autobatch/pc_vm.hpp"
#include "autobatch/workloads.hpp"

using namespace autobatch;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string first_failure;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) first_failure = what;
    pass &= ok;
  }
};

const PrimitiveRegistry& registry() {
  static const PrimitiveRegistry r = corpus_registry();
  return r;
}

CallGraphProgram program(const CorpusEntry& e) { return compile_source(e.source, registry(), e.entry); }

bool close(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return a == b || std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

bool matches(const BatchArray& got, const BatchArray& want) {
  if (got.type() != want.type() || got.lanes() != want.lanes()) return false;
  if (!got.is_float()) return got == want;
  for (size_t k = 0; k < got.floats().size(); ++k) {
    if (!close(got.floats()[k], want.floats()[k])) return false;
  }
  return true;
}

std::int64_t fib_oracle(std::int64_t n) {
  std::int64_t a = 1, b = 1;  // values at 0 and 1
  for (std::int64_t k = 1; k < n; ++k) {
    const std::int64_t c = a + b;
    a = b;
    b = c;
  }
  return b;
}

std::pair<BatchArray, ScheduleTrace> local_run(const CallGraphProgram& prog, const std::vector<BatchArray>& in,
                                               ExecMode mode = ExecMode::Mask,
                                               std::int64_t max_steps = 1'000'000'000) {
  LocalOptions o;
  o.mode = mode;
  o.max_steps = max_steps;
  const int z = in.empty() ? 1 : in[0].lanes();
  return trace_local(prog, registry(), prog.entry, in, LaneMask::full(z), o);
}

std::pair<BatchArray, ScheduleTrace> pc_run(const FlatProgram& flat, const std::vector<BatchArray>& in, int depth,
                                            ExecMode mode = ExecMode::Mask,
                                            std::int64_t max_steps = 1'000'000'000,
                                            const PrimitiveRegistry& reg = registry()) {
  VmOptions o;
  o.mode = mode;
  o.max_steps = max_steps;
  return run_vm(flat, reg, in, depth, o);
}

// 1 --------------------------------------------------------------------------
Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  const int sizes[] = {1, 2, 4, 7, 32};
  int runs = 0;
  for (const CorpusEntry& e : corpus()) {
    const auto prog = program(e);
    std::vector<FlatProgram> flats;
    for (unsigned bits = 0; bits < 16; ++bits) flats.push_back(compile(prog, CompileOptions::from_bits(bits)).flat);
    std::mt19937_64 rng(1000 + e.name.size());
    for (int n = 0; n < 50; ++n) {
      const auto in = e.random_inputs(rng, sizes[n % 5]);
      const BatchArray want = run_reference_batch(prog, registry(), prog.entry, in, e.max_steps);
      o.require(matches(local_run(prog, in).first, want), e.name + " local batch " + std::to_string(n));
      for (unsigned bits = 0; bits < 16; ++bits) {
        o.require(matches(pc_run(flats[bits], in, 64).first, want),
                  e.name + " pc passes " + std::to_string(bits) + " batch " + std::to_string(n));
        ++runs;
      }
      ++runs;
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime over 60 s");
  o.detail << runs << " engine runs over " << corpus().size() << " programs in " << secs << " s";
  return o;
}

// 2 --------------------------------------------------------------------------
Outcome fibonacci_goldens() {
  Outcome o;
  const auto prog = program(*find_corpus_entry("fibonacci"));
  const FlatProgram flat = compile(prog).flat;
  const std::vector<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>> cases = {
      {{3, 7, 4, 5}, {3, 21, 5, 8}}, {{6, 7, 8, 9}, {13, 21, 34, 55}}};
  for (const auto& [in, want] : cases) {
    std::vector<std::int64_t> oracle;
    for (auto n : in) oracle.push_back(fib_oracle(n));
    o.require(oracle == want, "recurrence oracle disagrees with the golden");
    const std::vector<BatchArray> batch = {BatchArray::of_ints(in)};
    const BatchArray expect = BatchArray::of_ints(want);
    o.require(local_run(prog, batch).first == expect, "local");
    o.require(pc_run(flat, batch, 32).first == expect, "pc");
  }
  o.detail << "[3,7,4,5] -> [3,21,5,8], [6,7,8,9] -> [13,21,34,55] on both engines";
  return o;
}

// 3 --------------------------------------------------------------------------
Outcome stack_freedom() {
  Outcome o;
  int programs = 0;
  for (const CorpusEntry& e : corpus()) {
    if (e.recursive) continue;
    ++programs;
    const FlatProgram flat = compile(program(e)).flat;
    std::mt19937_64 rng(3);
    for (int n = 0; n < 5; ++n) {
      const auto trace = pc_run(flat, e.random_inputs(rng, 8), 8).second;
      std::int64_t data = 0;
      for (const auto& [var, counts] : trace.stacks) {
        if (var != "pc") data += counts.total();
      }
      o.require(data == 0, e.name + " moved data through a stack");
      o.require(trace.stacks.count("pc") && trace.stacks.at("pc").total() > 0, e.name + " pc stack unused");
    }
  }
  o.detail << programs << " non-recursive programs, zero data-variable stack traffic";
  return o;
}

// 4 --------------------------------------------------------------------------
Outcome cross_depth() {
  Outcome o;
  const auto prog = program(*find_corpus_entry("fibonacci"));
  const FlatProgram flat = compile(prog).flat;
  bool mixed = false;
  for (std::int64_t k : {4, 6, 8}) {
    const std::vector<BatchArray> in = {BatchArray::of_ints({k, k + 1})};
    const auto local = local_run(prog, in).second;
    MachineState s = init_machine(flat, registry(), in, 32);
    VmOptions vo;
    vo.observer = [&](const StepView& v) {
      std::set<int> depths;
      for (int b = 0; b < v.state.lanes(); ++b) {
        if (v.active[b]) depths.insert(v.state.depth(b));
      }
      mixed |= depths.size() > 1;
    };
    while (!s.halted()) step(s, vo);
    const size_t pc_steps = s.trace().steps.size(), local_steps = local.steps.size();
    o.detail << "k=" << k << " pc " << pc_steps << " local " << local_steps << "; ";
    o.require(pc_steps < local_steps, "pc not fewer steps at k=" + std::to_string(k));
  }
  o.require(mixed, "no step mixed stack depths");
  o.detail << "mixed-depth step " << (mixed ? "present" : "absent");
  return o;
}

// 5 --------------------------------------------------------------------------
Outcome pass_soundness() {
  Outcome o;
  for (const CorpusEntry& e : corpus()) {
    const auto prog = program(e);
    std::mt19937_64 rng(5);
    std::vector<std::vector<BatchArray>> batches = {e.sample_inputs};
    for (int n = 0; n < 5; ++n) batches.push_back(e.random_inputs(rng, 6));
    std::vector<BatchArray> first(batches.size());
    for (unsigned bits = 0; bits < 16; ++bits) {
      const FlatProgram flat = compile(prog, CompileOptions::from_bits(bits)).flat;
      for (size_t n = 0; n < batches.size(); ++n) {
        const BatchArray out = pc_run(flat, batches[n], 64).first;
        if (bits == 0) first[n] = out;
        o.require(out == first[n], e.name + " differs under passes " + std::to_string(bits));
      }
    }
    CompileOptions keep;
    keep.pop_push = false;
    const FlatProgram before = compile(prog, keep).flat;
    const FlatProgram after = cancel_pop_push(before);
    o.require(count_cancellable_pairs(after) == 0, e.name + " leaves cancellable pairs");
    o.require(cancel_pop_push(after) == after, e.name + " cancellation not idempotent");
  }
  o.detail << "16 subsets bit-identical over the corpus; cancellation leaves 0 pairs and is idempotent";
  return o;
}

// 6 --------------------------------------------------------------------------
Outcome mode_equivalence() {
  Outcome o;
  for (const CorpusEntry& e : corpus()) {
    const auto prog = program(e);
    const FlatProgram flat = compile(prog).flat;
    std::mt19937_64 rng(6);
    for (int n = 0; n < 5; ++n) {
      const auto in = e.random_inputs(rng, 7);
      const auto lm = local_run(prog, in, ExecMode::Mask), lg = local_run(prog, in, ExecMode::GatherScatter);
      const auto pm = pc_run(flat, in, 64, ExecMode::Mask), pg = pc_run(flat, in, 64, ExecMode::GatherScatter);
      o.require(lm.first == lg.first && lm.second == lg.second, e.name + " local modes differ");
      o.require(pm.first == pg.first && pm.second == pg.second, e.name + " pc modes differ");
    }
  }
  o.detail << "mask and gather-scatter agree on outputs and traces for both engines";
  return o;
}

struct NutsRun {
  BatchArray local, pc;
  ScheduleTrace local_trace, pc_trace;
};

NutsRun nuts_run(const NutsConfig& cfg, const TargetDensity& target, int lanes) {
  PrimitiveRegistry reg = PrimitiveRegistry::builtins();
  register_target(reg, target);
  const auto prog = compile_source(nuts_lite_source(cfg, target), reg, "nuts");
  const auto in = nuts_inputs(cfg, target, lanes);
  NutsRun r;
  LocalOptions lo;
  lo.max_steps = 1LL << 40;
  std::tie(r.local, r.local_trace) = trace_local(prog, reg, prog.entry, in, LaneMask::full(lanes), lo);
  std::tie(r.pc, r.pc_trace) =
      pc_run(compile(prog).flat, in, nuts_stack_depth(cfg), ExecMode::Mask, 1LL << 40, reg);
  return r;
}

NutsConfig criterion_config() {
  NutsConfig c;
  c.step_size = 0.25;
  c.leapfrog_steps = 4;
  c.max_depth = 6;
  c.iterations = 400;
  c.seed = 20190;
  return c;
}

// 7 --------------------------------------------------------------------------
Outcome nuts_statistics() {
  Outcome o;
  const auto t0 = Clock::now();
  const TargetDensity target = correlated_gaussian(2, 0.5);
  const NutsConfig cfg = criterion_config();
  const int lanes = 64;
  const NutsRun r = nuts_run(cfg, target, lanes);
  o.require(r.local == r.pc, "engines disagree on the chains");
  const double n = static_cast<double>(lanes) * cfg.iterations;
  double mean[2] = {0, 0};
  for (int b = 0; b < lanes; ++b) {
    for (int t = 0; t < cfg.iterations; ++t) {
      for (int i = 0; i < 2; ++i) mean[i] += r.pc.f(b, 2 * t + i) / n;
    }
  }
  double cov[2][2] = {{0, 0}, {0, 0}};
  for (int b = 0; b < lanes; ++b) {
    for (int t = 0; t < cfg.iterations; ++t) {
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          cov[i][j] += (r.pc.f(b, 2 * t + i) - mean[i]) * (r.pc.f(b, 2 * t + j) - mean[j]) / n;
        }
      }
    }
  }
  const double want_cov[2][2] = {{1.0, 0.5}, {0.5, 1.0}};
  for (int i = 0; i < 2; ++i) {
    o.require(std::abs(mean[i]) <= 0.1, "mean out of tolerance");
    for (int j = 0; j < 2; ++j) o.require(std::abs(cov[i][j] - want_cov[i][j]) <= 0.15, "cov out of tolerance");
  }
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, "runtime over 5 min");
  o.detail << "mean (" << mean[0] << ", " << mean[1] << ") cov [[" << cov[0][0] << ", " << cov[0][1] << "], ["
           << cov[1][0] << ", " << cov[1][1] << "]] chains identical, " << secs << " s";
  return o;
}

// 8 --------------------------------------------------------------------------
Outcome utilization_ordering() {
  Outcome o;
  const TargetDensity target = correlated_gaussian(2, 0.5);
  NutsConfig cfg = criterion_config();
  cfg.iterations = 10;
  const std::set<std::string> grad = {target.grad_prim()};
  const NutsRun wide = nuts_run(cfg, target, 30);
  const double ul = utilization(wide.local_trace, grad), up = utilization(wide.pc_trace, grad);
  o.require(wide.local == wide.pc, "engines disagree");
  o.require(ul < 1.0, "local utilization not below 1");
  o.require(up >= ul, "pc utilization below local");
  o.require(up / ul >= 1.5, "ratio below 1.5");
  const NutsRun one = nuts_run(cfg, target, 1);
  const double l1 = utilization(one.local_trace, grad), p1 = utilization(one.pc_trace, grad);
  o.require(l1 == 1.0 && p1 == 1.0, "Z=1 utilization not 1");
  o.detail << "Z=30: local " << ul << " pc " << up << " ratio " << up / ul << "; Z=1: local " << l1 << " pc "
           << p1;
  return o;
}

// 9 --------------------------------------------------------------------------
Outcome gradient_kernels() {
  Outcome o;
  const std::vector<TargetDensity> targets = {correlated_gaussian(2, 0.5), correlated_gaussian(10, 0.5),
                                              logistic_regression(200, 5, 11)};
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (const TargetDensity& t : targets) {
    for (int p = 0; p < 10; ++p) {
      std::vector<double> x(t.dim), g(t.dim);
      for (double& v : x) v = normal(rng);
      t.grad(x, g);
      double err = 0, scale = 0;
      for (int k = 0; k < t.dim; ++k) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[k]));
        auto hi = x, lo = x;
        hi[k] += h;
        lo[k] -= h;
        err = std::max(err, std::abs((t.logpdf(hi) - t.logpdf(lo)) / (2 * h) - g[k]));
        scale = std::max(scale, std::abs(g[k]));
      }
      worst = std::max(worst, err / scale);
    }
  }
  o.require(worst <= 1e-5, "finite-difference mismatch");

  double drift = 0;
  const TargetDensity t = targets[0];
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> theta = {normal(rng), normal(rng)}, r = {normal(rng), normal(rng)};
    const auto theta0 = theta, r0 = r;
    for (int s = 0; s < 4; ++s) leapfrog_step(t, theta, r, 0.25);
    for (double& v : r) v = -v;
    for (int s = 0; s < 4; ++s) leapfrog_step(t, theta, r, 0.25);
    for (int k = 0; k < 2; ++k) {
      drift = std::max({drift, std::abs(theta[k] - theta0[k]), std::abs(r[k] + r0[k])});
    }
  }
  o.require(drift <= 1e-10, "leapfrog not reversible");
  o.detail << "worst relative gradient error " << worst << ", reversibility drift " << drift;
  return o;
}

// 10 -------------------------------------------------------------------------
Outcome fault_handling() {
  Outcome o;
  const FlatProgram fib = compile(program(*find_corpus_entry("fibonacci"))).flat;
  try {
    pc_run(fib, {BatchArray::of_ints({10})}, 3);
    o.require(false, "no overflow");
  } catch (const StackOverflow& e) {
    o.require(e.lane() == 0 && !e.variable().empty(), "overflow lacks lane or variable");
    o.detail << "\"" << e.what() << "\"; ";
  }

  const std::string spin = "def spin(n) {\n  while (0 < 1) {\n    n = n + 1;\n  }\n  return n;\n}\n";
  const auto prog = compile_source(spin, registry());
  const std::vector<BatchArray> in = {BatchArray::of_ints({0, 5})};
  const std::int64_t bound = 5000;
  try {
    pc_run(compile(prog).flat, in, 4, ExecMode::Mask, bound);
    o.require(false, "pc loop terminated");
  } catch (const StepLimitExceeded& e) {
    o.require(e.limit() == bound, "pc limit mismatch");
  }
  try {
    local_run(prog, in, ExecMode::Mask, bound);
    o.require(false, "local loop terminated");
  } catch (const StepLimitExceeded& e) {
    o.require(e.limit() == bound, "local limit mismatch");
  }
  o.detail << "non-terminating loop stopped at " << bound << " steps on both engines";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"fibonacci goldens", fibonacci_goldens},
      {"stack freedom", stack_freedom},
      {"cross-depth batching", cross_depth},
      {"pass soundness", pass_soundness},
      {"mode equivalence", mode_equivalence},
      {"NUTS-lite statistics", nuts_statistics},
      {"utilization ordering", utilization_ordering},
      {"gradient kernels", gradient_kernels},
      {"fault handling", fault_handling},
  };
  int failures = 0;
  for (size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += !o.pass;
    std::cout << "criterion " << k + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[k].first << ": "
              << o.detail.str() << (o.first_failure.empty() ? "" : " [first failure: " + o.first_failure + "]")
              << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
