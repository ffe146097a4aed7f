#include <bit>
#include <cmath>
#include <random>

#include "autobatch/errors.hpp"
#include "autobatch/runtime.hpp"
#include "doctest.h"

using namespace autobatch;

namespace {

const PrimitiveRegistry& reg() {
  static const PrimitiveRegistry r = PrimitiveRegistry::builtins();
  return r;
}

BatchArray run_both(const std::string& prim, std::vector<BatchArray> inputs, const LaneMask& mask,
                    BatchArray dest) {
  std::vector<const BatchArray*> ptrs;
  for (const auto& in : inputs) ptrs.push_back(&in);
  BatchArray masked = dest;
  BatchArray gathered = dest;
  apply_masked(*reg().find(prim), ptrs, mask, masked);
  apply_gather_scatter(*reg().find(prim), ptrs, mask, gathered);
  CHECK(masked == gathered);
  return masked;
}

}  // namespace

TEST_CASE("masked sub leaves inactive lanes untouched") {
  auto out = run_both("sub", {BatchArray::of_ints({3, 7, 4, 5}), BatchArray::of_ints({2, 2, 2, 2})},
                      LaneMask::of(4, {0, 2}), BatchArray::of_ints({9, 9, 9, 9}));
  CHECK(out == BatchArray::of_ints({1, 9, 2, 9}));
}

TEST_CASE("le on a full mask") {
  auto out = run_both("le", {BatchArray::of_ints({3, 7, 4, 5}), BatchArray::of_ints({1, 1, 1, 1})},
                      LaneMask::full(4), BatchArray::of_bools({true, true, true, true}));
  CHECK(out == BatchArray::of_bools({false, false, false, false}));
}

TEST_CASE("junk-lane division does not leak into masked-out lanes") {
  BatchArray prior = BatchArray::of_floats({42.5, -1.0});
  auto out = run_both("div", {BatchArray::of_floats({1, 1}), BatchArray::of_floats({0, 2})},
                      LaneMask::of(2, {1}), prior);
  CHECK(out.lane_bits_equal(0, prior, 0));
  CHECK(out.f(1) == 0.5);
}

TEST_CASE("empty and full masks") {
  BatchArray dest = BatchArray::of_ints({5, 6, 7});
  auto none = run_both("add", {BatchArray::of_ints({1, 2, 3}), BatchArray::of_ints({1, 1, 1})},
                       LaneMask(3), dest);
  CHECK(none == dest);
  auto all = run_both("add", {BatchArray::of_ints({1, 2, 3}), BatchArray::of_ints({1, 1, 1})},
                      LaneMask::full(3), dest);
  CHECK(all == BatchArray::of_ints({2, 3, 4}));
}

TEST_CASE("integer kernels are total") {
  auto out = run_both("div", {BatchArray::of_ints({7, INT64_MIN}), BatchArray::of_ints({0, -1})},
                      LaneMask::full(2), BatchArray::of_ints({0, 0}));
  CHECK(out.i(0) == 0);
  CHECK(out.i(1) == INT64_MIN);
}

TEST_CASE("mode equivalence and lane isolation over random inputs") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> float_prims = {"add", "sub", "mul", "div", "min", "max"};
  for (int trial = 0; trial < 200; ++trial) {
    const int z = 1 + static_cast<int>(rng() % 9);
    std::normal_distribution<double> normal(0.0, 3.0);
    std::vector<double> a, b, d;
    LaneMask mask(z);
    for (int l = 0; l < z; ++l) {
      a.push_back(normal(rng));
      b.push_back(trial % 5 == 0 ? 0.0 : normal(rng));
      d.push_back(normal(rng));
      mask.set(l, rng() % 2);
    }
    const std::string& prim = float_prims[trial % float_prims.size()];
    BatchArray prior = BatchArray::of_floats(d);
    auto out = run_both(prim, {BatchArray::of_floats(a), BatchArray::of_floats(b)}, mask, prior);
    for (int l = 0; l < z; ++l) {
      if (!mask[l]) CHECK(out.lane_bits_equal(l, prior, l));
    }
  }
}

TEST_CASE("vector primitives") {
  BatchArray x = BatchArray::of_vectors({{1, 2}, {3, 4}});
  BatchArray y = BatchArray::of_vectors({{10, 20}, {30, 40}});
  BatchArray a = BatchArray::of_floats({2, -1});
  auto axpy = run_both("axpy", {a, x, y}, LaneMask::full(2), BatchArray(Type::vec(2), 2));
  CHECK(axpy == BatchArray::of_vectors({{12, 24}, {27, 36}}));
  auto dot = run_both("dot", {x, y}, LaneMask::full(2), BatchArray(Type::scalar(DType::Float), 2));
  CHECK(dot == BatchArray::of_floats({50, 250}));
  auto put = run_both("put", {x, BatchArray::of_ints({1, 5}), BatchArray::of_floats({9, 9})},
                      LaneMask::full(2), BatchArray(Type::vec(2), 2));
  CHECK(put == BatchArray::of_vectors({{1, 9}, {3, 4}}));
  auto slice = run_both("slice.1", {y, BatchArray::of_ints({1, 0})}, LaneMask::full(2),
                        BatchArray(Type::vec(1), 2));
  CHECK(slice == BatchArray::of_vectors({{20}, {30}}));
  CHECK(reg().find("zeros.3") != nullptr);
  CHECK(reg().find("zeros.03") == nullptr);
  CHECK(reg().find("bogus.3") == nullptr);
}

TEST_CASE("stack push, pop and read_top") {
  StackedVar sv("n", Type::scalar(DType::Int), 2, 2);
  sv.push(BatchArray::of_ints({5, 6}), LaneMask::full(2));
  CHECK(sv.pointer(0) == 1);
  CHECK(sv.pointer(1) == 1);
  CHECK(sv.read_top() == BatchArray::of_ints({5, 6}));

  sv.push(BatchArray::of_ints({7, 8}), LaneMask::of(2, {0}));
  CHECK(sv.read_top().i(0) == 7);
  CHECK(sv.read_top().i(1) == 6);
  CHECK(sv.cache_coherent());

  // lane 0 is full
  CHECK_THROWS_AS(sv.push(BatchArray::of_ints({1, 1}), LaneMask::of(2, {0})), StackOverflow);
  try {
    sv.push(BatchArray::of_ints({1, 1}), LaneMask::of(2, {0}));
  } catch (const StackOverflow& e) {
    CHECK(e.lane() == 0);
    CHECK(e.variable() == "n");
  }

  sv.pop(LaneMask::of(2, {0}));
  CHECK(sv.read_top().i(0) == 5);  // LIFO
  sv.pop(LaneMask::full(2));
  CHECK(sv.pointer(0) == 0);
  CHECK(sv.pointer(1) == 0);
  CHECK_THROWS_AS(sv.pop(LaneMask::of(2, {1})), StackUnderflow);
}

TEST_CASE("stack LIFO and cache coherence against a per-lane model") {
  std::mt19937 rng(11);
  const int z = 5;
  const int depth = 6;
  StackedVar sv("x", Type::scalar(DType::Float), z, depth);
  std::vector<std::vector<double>> model(z);
  for (int step = 0; step < 2000; ++step) {
    LaneMask mask(z);
    for (int l = 0; l < z; ++l) mask.set(l, rng() % 2);
    const int action = static_cast<int>(rng() % 3);
    bool ok = true;
    for (int l = 0; l < z; ++l) {
      if (!mask[l]) continue;
      if (action == 0 && static_cast<int>(model[l].size()) >= depth) ok = false;
      if (action != 0 && model[l].empty()) ok = false;
    }
    if (!ok) continue;
    std::vector<double> vals;
    for (int l = 0; l < z; ++l) vals.push_back(step * 10.0 + l);
    BatchArray v = BatchArray::of_floats(vals);
    for (int l = 0; l < z; ++l) {
      if (!mask[l]) continue;
      if (action == 0) model[l].push_back(vals[l]);
      if (action == 1) model[l].pop_back();
      if (action == 2) model[l].back() = vals[l];
    }
    if (action == 0) sv.push(v, mask);
    if (action == 1) sv.pop(mask);
    if (action == 2) sv.update_top(v, mask);
    REQUIRE(sv.cache_coherent());
    const BatchArray fresh = sv.gather_top();
    for (int l = 0; l < z; ++l) {
      REQUIRE(sv.pointer(l) == static_cast<int>(model[l].size()));
      if (!model[l].empty()) {
        REQUIRE(sv.read_top().f(l) == model[l].back());
        REQUIRE(fresh.f(l) == model[l].back());
      }
    }
  }
}

TEST_CASE("rng_uniform is pure and lane independent") {
  BatchArray key = BatchArray::of_ints({17, 17});
  BatchArray ctr = BatchArray::of_ints({3, 4});
  CHECK(rng_uniform(key, ctr) == rng_uniform(key, ctr));
  auto single = rng_uniform(BatchArray::of_ints({17}), BatchArray::of_ints({3}));
  CHECK(single.lane_bits_equal(0, rng_uniform(key, ctr), 0));
  CHECK(rng_uniform(key, ctr).f(0) != rng_uniform(key, ctr).f(1));
}

TEST_CASE("rng_uniform empirical mean") {
  const int n = 100000;
  double sum = 0.0;
  for (int c = 0; c < n; ++c) {
    const double u = uniform_from(12345, c);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}
