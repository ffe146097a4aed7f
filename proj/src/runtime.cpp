#include "autobatch/runtime.hpp"

#include <algorithm>
#include <cstring>

#include "autobatch/errors.hpp"

namespace autobatch {

BatchArray::BatchArray(Type type, int lanes) : type_(type), lanes_(lanes) {
  if (lanes < 0) throw RuntimeFault("negative lane count");
  if (type.dtype == DType::Float) {
    f_.assign(static_cast<size_t>(lanes) * type.lane_size(), 0.0);
  } else {
    if (type.width != 0) throw RuntimeFault("vectors must be float");
    i_.assign(lanes, 0);
  }
}

BatchArray BatchArray::of_floats(const std::vector<double>& v) {
  BatchArray a(Type::scalar(DType::Float), static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), a.f_.begin());
  return a;
}

BatchArray BatchArray::of_ints(const std::vector<std::int64_t>& v) {
  BatchArray a(Type::scalar(DType::Int), static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), a.i_.begin());
  return a;
}

BatchArray BatchArray::of_bools(const std::vector<bool>& v) {
  BatchArray a(Type::scalar(DType::Bool), static_cast<int>(v.size()));
  for (size_t b = 0; b < v.size(); ++b) a.i_[b] = v[b] ? 1 : 0;
  return a;
}

BatchArray BatchArray::of_vectors(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw RuntimeFault("of_vectors needs at least one row");
  const int k = static_cast<int>(rows.front().size());
  BatchArray a(Type::vec(k), static_cast<int>(rows.size()));
  for (size_t b = 0; b < rows.size(); ++b) {
    if (static_cast<int>(rows[b].size()) != k) throw RuntimeFault("ragged vector rows");
    std::copy(rows[b].begin(), rows[b].end(), a.row(static_cast<int>(b)).begin());
  }
  return a;
}

void BatchArray::copy_lane_from(int dst_lane, const BatchArray& src, int src_lane) {
  if (is_float()) {
    const int w = lane_size();
    std::copy_n(src.f_.begin() + static_cast<std::ptrdiff_t>(src_lane) * w, w,
                f_.begin() + static_cast<std::ptrdiff_t>(dst_lane) * w);
  } else {
    i_[dst_lane] = src.i_[src_lane];
  }
}

BatchArray BatchArray::lane(int b) const {
  BatchArray out(type_, 1);
  out.copy_lane_from(0, *this, b);
  return out;
}

void BatchArray::fill_zero() {
  std::fill(f_.begin(), f_.end(), 0.0);
  std::fill(i_.begin(), i_.end(), 0);
}

bool BatchArray::lane_bits_equal(int lane, const BatchArray& other, int other_lane) const {
  if (type_ != other.type_) return false;
  if (is_float()) {
    const int w = lane_size();
    return std::memcmp(f_.data() + static_cast<size_t>(lane) * w,
                       other.f_.data() + static_cast<size_t>(other_lane) * w,
                       sizeof(double) * w) == 0;
  }
  return i_[lane] == other.i_[other_lane];
}

bool operator==(const BatchArray& a, const BatchArray& b) {
  if (a.type_ != b.type_ || a.lanes_ != b.lanes_) return false;
  for (int l = 0; l < a.lanes_; ++l) {
    if (!a.lane_bits_equal(l, b, l)) return false;
  }
  return true;
}

BatchArray concat_lanes(const std::vector<BatchArray>& lanes) {
  if (lanes.empty()) throw RuntimeFault("concat_lanes of nothing");
  BatchArray out(lanes.front().type(), static_cast<int>(lanes.size()));
  for (size_t b = 0; b < lanes.size(); ++b) {
    if (lanes[b].type() != out.type()) throw RuntimeFault("concat_lanes type mismatch");
    out.copy_lane_from(static_cast<int>(b), lanes[b], 0);
  }
  return out;
}

LaneMask LaneMask::of(int lanes, std::initializer_list<int> on) {
  LaneMask m(lanes);
  for (int b : on) m.set(b);
  return m;
}

int LaneMask::count() const {
  return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<int> LaneMask::indices() const {
  std::vector<int> out;
  for (int b = 0; b < lanes(); ++b) {
    if (bits_[b]) out.push_back(b);
  }
  return out;
}

std::string exec_mode_name(ExecMode m) { return m == ExecMode::Mask ? "mask" : "gather"; }

namespace {

void check_lanes(std::span<const BatchArray* const> inputs, const LaneMask& mask,
                 const BatchArray& dest) {
  if (mask.lanes() != dest.lanes()) throw RuntimeFault("mask/destination lane count mismatch");
  for (const BatchArray* in : inputs) {
    if (in->lanes() != dest.lanes()) throw RuntimeFault("input/destination lane count mismatch");
  }
}

}  // namespace

void apply_masked(const Primitive& prim, std::span<const BatchArray* const> inputs,
                  const LaneMask& mask, BatchArray& dest, const Literal* literal) {
  check_lanes(inputs, mask, dest);
  BatchArray scratch(dest.type(), dest.lanes());
  prim.kernel(inputs, scratch, literal);
  for (int b = 0; b < dest.lanes(); ++b) {
    if (mask[b]) dest.copy_lane_from(b, scratch, b);
  }
}

void apply_gather_scatter(const Primitive& prim, std::span<const BatchArray* const> inputs,
                          const LaneMask& mask, BatchArray& dest, const Literal* literal) {
  check_lanes(inputs, mask, dest);
  const std::vector<int> active = mask.indices();
  const int packed_lanes = static_cast<int>(active.size());

  std::vector<BatchArray> packed;
  packed.reserve(inputs.size());
  for (const BatchArray* in : inputs) {
    BatchArray p(in->type(), packed_lanes);
    for (int k = 0; k < packed_lanes; ++k) p.copy_lane_from(k, *in, active[k]);
    packed.push_back(std::move(p));
  }
  std::vector<const BatchArray*> packed_ptrs;
  for (const BatchArray& p : packed) packed_ptrs.push_back(&p);

  BatchArray result(dest.type(), packed_lanes);
  prim.kernel(packed_ptrs, result, literal);
  for (int k = 0; k < packed_lanes; ++k) dest.copy_lane_from(active[k], result, k);
}

void apply(ExecMode mode, const Primitive& prim, std::span<const BatchArray* const> inputs,
           const LaneMask& mask, BatchArray& dest, const Literal* literal) {
  if (mode == ExecMode::Mask) {
    apply_masked(prim, inputs, mask, dest, literal);
  } else {
    apply_gather_scatter(prim, inputs, mask, dest, literal);
  }
}

// ---------------------------------------------------------------------------

StackedVar::StackedVar(std::string name, Type type, int lanes, int depth)
    : name_(std::move(name)),
      lanes_(lanes),
      depth_(depth),
      store_(type, lanes * depth),
      pointers_(lanes, 0),
      top_(type, lanes) {}

void StackedVar::push(const BatchArray& values, const LaneMask& mask) {
  for (int b = 0; b < lanes_; ++b) {
    if (mask[b] && pointers_[b] >= depth_) throw StackOverflow(b, name_, fault_block_);
  }
  for (int b = 0; b < lanes_; ++b) {
    if (!mask[b]) continue;
    store_.copy_lane_from(pointers_[b] * lanes_ + b, values, b);
    top_.copy_lane_from(b, values, b);
    ++pointers_[b];
  }
}

void StackedVar::pop(const LaneMask& mask) {
  for (int b = 0; b < lanes_; ++b) {
    if (mask[b] && pointers_[b] <= 0) throw StackUnderflow(b, name_, fault_block_);
  }
  for (int b = 0; b < lanes_; ++b) {
    if (!mask[b]) continue;
    --pointers_[b];
    if (pointers_[b] >= 1) top_.copy_lane_from(b, store_, (pointers_[b] - 1) * lanes_ + b);
  }
}

void StackedVar::update_top(const BatchArray& values, const LaneMask& mask) {
  for (int b = 0; b < lanes_; ++b) {
    if (mask[b] && pointers_[b] <= 0) throw StackUnderflow(b, name_, fault_block_);
  }
  for (int b = 0; b < lanes_; ++b) {
    if (!mask[b]) continue;
    store_.copy_lane_from((pointers_[b] - 1) * lanes_ + b, values, b);
    top_.copy_lane_from(b, values, b);
  }
}

BatchArray StackedVar::gather_top() const {
  BatchArray out(top_.type(), lanes_);
  for (int b = 0; b < lanes_; ++b) {
    if (pointers_[b] >= 1) out.copy_lane_from(b, store_, (pointers_[b] - 1) * lanes_ + b);
  }
  return out;
}

BatchArray StackedVar::frame(int level, int lane) const {
  BatchArray out(top_.type(), 1);
  out.copy_lane_from(0, store_, level * lanes_ + lane);
  return out;
}

bool StackedVar::cache_coherent() const {
  for (int b = 0; b < lanes_; ++b) {
    if (pointers_[b] >= 1 &&
        !top_.lane_bits_equal(b, store_, (pointers_[b] - 1) * lanes_ + b)) {
      return false;
    }
  }
  return true;
}

}  // namespace autobatch
