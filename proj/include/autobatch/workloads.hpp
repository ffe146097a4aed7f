#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "autobatch/runtime.hpp"

namespace autobatch {

struct TargetDensity {
  std::string name;  // kernels register as <name>_logpdf and <name>_grad
  int dim = 0;
  std::function<double(std::span<const double>)> logpdf;
  std::function<void(std::span<const double>, std::span<double>)> grad;
  // Reference moments; empty when the target has no closed form.
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;

  std::string logpdf_prim() const { return name + "_logpdf"; }
  std::string grad_prim() const { return name + "_grad"; }
};

// Zero mean, unit variances, every off-diagonal covariance equal to rho.
TargetDensity correlated_gaussian(int dim, double rho);

// Bernoulli likelihood with labels in {-1, +1} plus a standard normal prior.
// negate_labels flips every generated label (same design matrix).
TargetDensity logistic_regression(int n_points, int n_regressors, std::uint64_t seed,
                                  bool negate_labels = false);

// Adds <name>_logpdf : vec<dim> -> float and <name>_grad : vec<dim> -> vec<dim>.
void register_target(PrimitiveRegistry& registry, const TargetDensity& target);

struct NutsConfig {
  double step_size = 0.25;
  int leapfrog_steps = 4;  // per tree leaf
  int max_depth = 6;       // deepest build_tree level
  int iterations = 400;
  std::int64_t seed = 0;
};

// Source program with entry `nuts(theta0: vec<dim>, key) -> vec<iterations*dim>`.
// Throws Error on an invalid config.
std::string nuts_lite_source(const NutsConfig& config, const TargetDensity& target);

// Stack depth the program-counter engine needs for this config.
int nuts_stack_depth(const NutsConfig& config);

// Per-lane inputs {theta0, key} derived from config.seed.
std::vector<BatchArray> nuts_inputs(const NutsConfig& config, const TargetDensity& target, int lanes);

// One leapfrog step of size eps, in place.
void leapfrog_step(const TargetDensity& target, std::vector<double>& theta, std::vector<double>& r,
                   double eps);

std::string fibonacci_source();

struct CorpusEntry {
  std::string name;
  std::string source;
  std::string entry;
  bool recursive = false;
  std::vector<BatchArray> sample_inputs;
  std::function<std::vector<BatchArray>(std::mt19937_64&, int lanes)> random_inputs;
  std::int64_t max_steps = 1'000'000;
};

std::vector<CorpusEntry> corpus();
// Builtins plus every target density the corpus uses.
PrimitiveRegistry corpus_registry();
const CorpusEntry* find_corpus_entry(const std::string& name);

}  // namespace autobatch
