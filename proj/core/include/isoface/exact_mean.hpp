#pragma once

// Correctly rounded mean of non-negative doubles.
//
// The values are accumulated exactly in a wide fixed-point accumulator
// (doubles are dyadic rationals, so the sum is representable), then divided
// by the count with round-to-nearest-even. Because the rounding is applied
// to the exact real value sum/n, replicating every input k times changes
// numerator and denominator by the same factor and returns the identical
// double. The hypersphere loss relies on that for its class-rebalancing
// invariance.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace isoface {

class DyadicAccumulator {
 public:
  void add(double v) {
    if (v == 0.0) return;
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("accumulator requires finite non-negative");
    int e;
    const double frac = std::frexp(v, &e);            // v = frac * 2^e
    const auto mant = std::uint64_t(std::ldexp(frac, 53));  // 53-bit integer
    const int bitpos = (e - 53) - kMinExp;            // weight of mant's LSB
    int idx = bitpos >> 5;
    const int off = bitpos & 31;
    unsigned __int128 wide = (unsigned __int128)mant << off;
    while (wide != 0) {
      limbs_[std::size_t(idx++)] += std::uint64_t(wide & 0xffffffffu);
      wide >>= 32;
    }
    if (++pending_ == kCarryEvery) normalize();
  }

  // Exact sum divided by n, rounded to nearest even.
  double mean(std::uint64_t n) {
    if (n == 0 || n > 0xffffffffu)
      throw std::invalid_argument("mean count out of range");
    normalize();
    // long division of the fixed-point value by n, top limb first
    std::vector<std::uint64_t> q(kLimbs, 0);
    std::uint64_t rem = 0;
    for (int i = kLimbs - 1; i >= 0; --i) {
      const std::uint64_t cur = (rem << 32) | limbs_[std::size_t(i)];
      q[std::size_t(i)] = cur / n;
      rem = cur % n;
    }
    // locate the most significant set bit of the quotient
    int top = kLimbs - 1;
    while (top >= 0 && q[std::size_t(top)] == 0) --top;
    if (top < 0) return 0.0;  // rem/n < 1 ulp of anything representable? only if sum < n*2^kMinExp
    int msb = 63 - __builtin_clzll(q[std::size_t(top)]);
    // absolute bit index of the msb (weight 2^(kMinExp + absmsb))
    const long absmsb = long(top) * 32 + msb;
    // collect the 54 bits below and including msb, plus sticky
    std::uint64_t window = 0;
    bool sticky = (rem != 0);
    for (long b = absmsb; b > absmsb - 54; --b) {
      window <<= 1;
      if (b >= 0) {
        const long limb = b >> 5, off = b & 31;
        window |= (q[std::size_t(limb)] >> off) & 1u;
      }
    }
    for (long b = absmsb - 54; b >= 0 && !sticky; --b) {
      const long limb = b >> 5, off = b & 31;
      if ((q[std::size_t(limb)] >> off) & 1u) sticky = true;
    }
    // window holds 54 bits: 53 mantissa bits + guard
    std::uint64_t mant = window >> 1;
    const bool guard = window & 1u;
    if (guard && (sticky || (mant & 1u))) ++mant;  // round to nearest even
    double result = std::ldexp(double(mant), int(kMinExp + absmsb - 52));
    return result;
  }

 private:
  void normalize() {
    std::uint64_t carry = 0;
    for (std::size_t i = 0; i < kLimbs; ++i) {
      const std::uint64_t cur = limbs_[i] + carry;
      limbs_[i] = cur & 0xffffffffu;
      carry = cur >> 32;
    }
    if (carry != 0) throw std::overflow_error("dyadic accumulator overflow");
    pending_ = 0;
  }

  // bit 0 of limb 0 weighs 2^kMinExp; covers subnormals up to ~2^1100 sums
  static constexpr int kMinExp = -1120;
  static constexpr int kLimbs = 72;
  static constexpr int kCarryEvery = 1 << 20;  // limbs hold 32+20 bits safely

  std::uint64_t limbs_[kLimbs] = {};
  int pending_ = 0;
};

inline double exact_mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("exact_mean of empty set");
  DyadicAccumulator acc;
  for (double v : values) acc.add(v);
  return acc.mean(values.size());
}

}  // namespace isoface
