#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "autobatch/ir.hpp"

namespace autobatch {

// One value per lane, Z lanes. Floats (and float vectors) live in `f`,
// ints and bools (0/1) in `i`; the unused vector stays empty.
class BatchArray {
 public:
  BatchArray() = default;
  BatchArray(Type type, int lanes);

  static BatchArray of_floats(const std::vector<double>& v);
  static BatchArray of_ints(const std::vector<std::int64_t>& v);
  static BatchArray of_bools(const std::vector<bool>& v);
  // One row per lane; every row must have the same length.
  static BatchArray of_vectors(const std::vector<std::vector<double>>& rows);

  const Type& type() const { return type_; }
  int lanes() const { return lanes_; }
  int lane_size() const { return type_.lane_size(); }
  bool is_float() const { return type_.dtype == DType::Float; }

  std::span<double> floats() { return f_; }
  std::span<const double> floats() const { return f_; }
  std::span<std::int64_t> ints() { return i_; }
  std::span<const std::int64_t> ints() const { return i_; }

  double f(int lane, int k = 0) const { return f_[lane * lane_size() + k]; }
  double& f(int lane, int k = 0) { return f_[lane * lane_size() + k]; }
  std::int64_t i(int lane) const { return i_[lane]; }
  std::int64_t& i(int lane) { return i_[lane]; }
  bool b(int lane) const { return i_[lane] != 0; }

  std::span<const double> row(int lane) const {
    return std::span<const double>(f_).subspan(lane * lane_size(), lane_size());
  }
  std::span<double> row(int lane) {
    return std::span<double>(f_).subspan(lane * lane_size(), lane_size());
  }

  // Copy lane `src_lane` of `src` into lane `dst_lane` of this array.
  void copy_lane_from(int dst_lane, const BatchArray& src, int src_lane);
  // Lane b of this array as a one-lane array.
  BatchArray lane(int b) const;
  void fill_zero();

  // Bitwise comparison of one lane (floats compared by bit pattern).
  bool lane_bits_equal(int lane, const BatchArray& other, int other_lane) const;
  friend bool operator==(const BatchArray& a, const BatchArray& b);

 private:
  Type type_;
  int lanes_ = 0;
  std::vector<double> f_;
  std::vector<std::int64_t> i_;
};

// Stacks single-lane arrays into a Z-lane array.
BatchArray concat_lanes(const std::vector<BatchArray>& lanes);

class LaneMask {
 public:
  LaneMask() = default;
  explicit LaneMask(int lanes, bool value = false) : bits_(lanes, value ? 1 : 0) {}
  static LaneMask full(int lanes) { return LaneMask(lanes, true); }
  static LaneMask of(int lanes, std::initializer_list<int> on);

  int lanes() const { return static_cast<int>(bits_.size()); }
  bool operator[](int b) const { return bits_[b] != 0; }
  void set(int b, bool v = true) { bits_[b] = v ? 1 : 0; }
  int count() const;
  bool none() const { return count() == 0; }
  std::vector<int> indices() const;

  friend bool operator==(const LaneMask&, const LaneMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

enum class ExecMode { Mask, GatherScatter };

std::string exec_mode_name(ExecMode m);

// ---------------------------------------------------------------------------
// Primitive kernels

using KernelInputs = std::span<const BatchArray* const>;

// Computes every lane of `out` from the same lanes of the inputs. Kernels are
// total: they never throw on lane data.
using KernelFn = std::function<void(KernelInputs in, BatchArray& out, const Literal* literal)>;
// Result type for the given input types, or nullopt when the signature does
// not match. `literal` is set only for `const`.
using TypeRuleFn = std::function<std::optional<Type>(std::span<const Type> in,
                                                     const std::optional<Literal>& literal)>;

struct Primitive {
  std::string name;
  int arity = 0;  // -1 = variadic
  TypeRuleFn result_type;
  KernelFn kernel;
};

class PrimitiveRegistry {
 public:
  // Registry with every builtin kernel.
  static PrimitiveRegistry builtins();

  void add(Primitive p);
  // Resolves parametric names such as `zeros.3` and `slice.2`.
  const Primitive* find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Primitive> prims_;
  mutable std::map<std::string, Primitive> parametric_cache_;
};

// dest lanes in `mask` receive prim(inputs); other lanes keep their bits.
// The kernel runs over every lane, junk lanes included.
void apply_masked(const Primitive& prim, std::span<const BatchArray* const> inputs,
                  const LaneMask& mask, BatchArray& dest, const Literal* literal = nullptr);

// Same contract as apply_masked, but only the active lanes are gathered into
// a packed array, computed, and scattered back.
void apply_gather_scatter(const Primitive& prim, std::span<const BatchArray* const> inputs,
                          const LaneMask& mask, BatchArray& dest,
                          const Literal* literal = nullptr);

void apply(ExecMode mode, const Primitive& prim, std::span<const BatchArray* const> inputs,
           const LaneMask& mask, BatchArray& dest, const Literal* literal = nullptr);

// ---------------------------------------------------------------------------
// Per-variable stacks

class StackedVar {
 public:
  StackedVar() = default;
  StackedVar(std::string name, Type type, int lanes, int depth);

  const std::string& name() const { return name_; }
  int lanes() const { return lanes_; }
  int depth() const { return depth_; }
  const Type& type() const { return top_.type(); }

  int pointer(int lane) const { return pointers_[lane]; }
  std::span<const int> pointers() const { return pointers_; }

  // Throws StackOverflow naming the first offending lane.
  void push(const BatchArray& values, const LaneMask& mask);
  void pop(const LaneMask& mask);
  // Overwrite the top frame of masked lanes in place (write-through).
  void update_top(const BatchArray& values, const LaneMask& mask);

  // The cached top; lanes with pointer 0 hold junk.
  const BatchArray& read_top() const { return top_; }
  // Fresh gather of data[pointer - 1] per lane, bypassing the cache.
  BatchArray gather_top() const;
  // Value at stack level `level` of lane `lane`.
  BatchArray frame(int level, int lane) const;

  bool cache_coherent() const;

  // Block index reported in stack faults.
  void set_fault_block(int block) { fault_block_ = block; }

 private:
  std::string name_;
  int lanes_ = 0;
  int depth_ = 0;
  BatchArray store_;  // depth * lanes slots; slot = level * lanes + lane
  std::vector<int> pointers_;
  BatchArray top_;
  int fault_block_ = -1;
};

// ---------------------------------------------------------------------------
// Counter-based RNG: pure function of (key, counter).

double uniform_from(std::int64_t key, std::int64_t counter);

BatchArray rng_uniform(const BatchArray& key, const BatchArray& counter);

}  // namespace autobatch
