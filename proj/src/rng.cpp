#include <array>
#include <cstdint>

#include "autobatch/errors.hpp"
#include "autobatch/runtime.hpp"

namespace autobatch {

namespace {

// Philox4x32-10 (Salmon et al., SC'11).
constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Counter philox_round(const Counter& c, const Key& k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kPhiloxM0, c[0], hi0, lo0);
  mulhilo(kPhiloxM1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

Counter philox4x32_10(Counter c, Key k) {
  for (int round = 0; round < 10; ++round) {
    c = philox_round(c, k);
    k[0] += kPhiloxW0;
    k[1] += kPhiloxW1;
  }
  return c;
}

}  // namespace

double uniform_from(std::int64_t key, std::int64_t counter) {
  const auto uk = static_cast<std::uint64_t>(key);
  const auto uc = static_cast<std::uint64_t>(counter);
  const Counter out = philox4x32_10(
      {static_cast<std::uint32_t>(uc), static_cast<std::uint32_t>(uc >> 32), 0u, 0u},
      {static_cast<std::uint32_t>(uk), static_cast<std::uint32_t>(uk >> 32)});
  const std::uint64_t bits = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  // top 53 bits -> [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

BatchArray rng_uniform(const BatchArray& key, const BatchArray& counter) {
  if (key.lanes() != counter.lanes()) throw RuntimeFault("rng_uniform lane mismatch");
  BatchArray out(Type::scalar(DType::Float), key.lanes());
  for (int b = 0; b < key.lanes(); ++b) out.f(b) = uniform_from(key.i(b), counter.i(b));
  return out;
}

}  // namespace autobatch
