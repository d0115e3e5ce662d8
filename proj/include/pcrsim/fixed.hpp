#pragma once

// Constant-precision number format F_s and its rounded arithmetic.
//
// An element of F_s is stored as a signed numerator k with value k * 2^-s and
// |k| <= 2^(2s) - 1. Every operation here is exact up to a single final
// rounding: rational operations use integer arithmetic, square-root based
// normalizations are rounded by exact integer comparison, and exp/sigmoid go
// through a certified interval enclosure (see round_certified).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "pcrsim/errors.hpp"

namespace pcrsim::fixed {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Accumulator numerator. With s <= 16 every product of two numerators is below
// 2^64, so sums of fewer than 2^63 such products are exact in 128 bits.
using Wide = __int128;

class Precision {
 public:
  static constexpr int kMinBits = 2;
  static constexpr int kMaxBits = 16;

  explicit Precision(int s);

  int bits() const { return s_; }
  // Numerator of 1.0, i.e. 2^s.
  std::int64_t unit() const { return std::int64_t{1} << s_; }
  // Largest admissible |k|; B_s = max_numerator() * 2^-s.
  std::int64_t max_numerator() const { return (std::int64_t{1} << (2 * s_)) - 1; }
  // |F_s| = 2 (2^(2s) - 1) + 1.
  std::uint64_t format_size() const { return 2 * static_cast<std::uint64_t>(max_numerator()) + 1; }

  friend bool operator==(Precision, Precision) = default;

 private:
  int s_;
};

class FixedScalar {
 public:
  explicit FixedScalar(Precision p) : k_(0), p_(p) {}

  // Throws InvalidPrecision when |k| exceeds the format range.
  static FixedScalar from_numerator(std::int64_t k, Precision p);
  // Exact rational value; throws if the value is not a grid point.
  static FixedScalar exact(const Rational& value, Precision p);

  std::int64_t numerator() const { return k_; }
  Precision precision() const { return p_; }
  Rational value() const;
  double to_double() const;
  // Reduced fraction such as "3/16", "-1" or "0".
  std::string to_fraction() const;
  bool is_zero() const { return k_ == 0; }

  friend bool operator==(const FixedScalar&, const FixedScalar&) = default;

 private:
  FixedScalar(std::int64_t k, Precision p) : k_(k), p_(p) {}
  std::int64_t k_;
  Precision p_;
};

// Exact accumulator result: numerator * 2^-scale_bits. Never persisted; round
// it with round_exact before it crosses a module boundary.
struct ExactSum {
  Wide numerator = 0;
  int scale_bits = 0;

  Rational value() const;
  friend bool operator==(const ExactSum&, const ExactSum&) = default;
};

class FixedVector {
 public:
  FixedVector(Precision p, std::size_t n) : p_(p), k_(n, 0) {}
  static FixedVector from_numerators(Precision p, std::vector<std::int64_t> k);
  static FixedVector from_scalars(std::span<const FixedScalar> xs);

  Precision precision() const { return p_; }
  std::size_t size() const { return k_.size(); }
  bool empty() const { return k_.empty(); }

  FixedScalar operator[](std::size_t i) const;
  void set(std::size_t i, const FixedScalar& x);
  std::int64_t numerator(std::size_t i) const { return k_[i]; }
  void set_numerator(std::size_t i, std::int64_t k);
  std::span<const std::int64_t> numerators() const { return k_; }
  bool is_zero() const;
  // True iff every entry lies in F_s. Always true unless memory was corrupted;
  // the decoder asserts it at block boundaries.
  bool in_format() const;

  friend bool operator==(const FixedVector&, const FixedVector&) = default;

 private:
  Precision p_;
  std::vector<std::int64_t> k_;
};

class FixedMatrix {
 public:
  FixedMatrix(Precision p, std::size_t rows, std::size_t cols)
      : p_(p), rows_(rows), cols_(cols), k_(rows * cols, 0) {}

  Precision precision() const { return p_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  FixedScalar at(std::size_t r, std::size_t c) const;
  void set(std::size_t r, std::size_t c, const FixedScalar& x);
  FixedVector row(std::size_t r) const;
  void set_row(std::size_t r, const FixedVector& v);
  std::span<const std::int64_t> numerators() const { return k_; }

  friend bool operator==(const FixedMatrix&, const FixedMatrix&) = default;

 private:
  Precision p_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::int64_t> k_;
};

// ---------------------------------------------------------------------------
// Rounding map [.]_s: nearest grid point, ties toward smaller magnitude,
// saturation at +-B_s.

FixedScalar round_s(const Rational& x, Precision p);
// Rounds num / den (den > 0) and returns the numerator of the result.
std::int64_t round_ratio(Wide num, Wide den, Precision p);
std::int64_t round_ratio(const BigInt& num, const BigInt& den, Precision p);
// Rounds num * 2^-shift (real units) and returns the numerator.
std::int64_t round_dyadic(Wide num, int shift, Precision p);
FixedScalar round_exact(const ExactSum& x, Precision p);
// Rounds sign * sqrt(num / den) for num >= 0, den > 0. Exact: the tie test is
// an integer comparison of squares.
std::int64_t round_signed_sqrt(int sign, const BigInt& num, const BigInt& den, Precision p);

// [sqrt(x)]_s for a nonnegative rational.
FixedScalar sqrt_s(const Rational& x, Precision p);

// ---------------------------------------------------------------------------
// Certified rounding of irrational values.

// value = mantissa * 2^exponent
struct DyadicBound {
  BigInt mantissa;
  long exponent = 0;
};

struct DyadicInterval {
  DyadicBound lo;
  DyadicBound hi;
};

// Produces an enclosure [lo, hi] of the target value using the requested
// number of working bits.
using Encloser = std::function<DyadicInterval(int working_bits)>;

// Working precisions tried in order before giving up.
inline constexpr int kCertifiedBits[] = {96, 192, 384, 768, 1536};

// Returns the rounding of the enclosed value once both endpoints round to the
// same grid point; throws AmbiguousRounding if that never happens.
FixedScalar round_certified(const Encloser& enclose, Precision p);

// ---------------------------------------------------------------------------
// Scalar arithmetic.

FixedScalar add_s(const FixedScalar& a, const FixedScalar& b);
FixedScalar sub_s(const FixedScalar& a, const FixedScalar& b);
FixedScalar mul_s(const FixedScalar& a, const FixedScalar& b);
FixedScalar relu_s(const FixedScalar& a);
// Clamp to [0, 1].
FixedScalar clamp_unit_s(const FixedScalar& a);
FixedScalar exp_s(const FixedScalar& z);
FixedScalar sigmoid_s(const FixedScalar& z);

// Left fold ((x1 + x2) + x3) ... with rounding after every addition.
FixedScalar sum_strict(std::span<const FixedScalar> xs);
ExactSum sum_acc(std::span<const FixedScalar> xs, Precision p);

// Numerator-level kernels used by the hot loops in nn_core.
namespace kernel {
std::int64_t add(std::int64_t a, std::int64_t b, Precision p);
std::int64_t mul(std::int64_t a, std::int64_t b, Precision p);
// Numerator of [acc 2^-2s / sqrt(m)]_s for an accumulator on the 2^-2s grid.
std::int64_t score(Wide acc, std::size_t m, Precision p);
std::int64_t exp(std::int64_t z, Precision p);
std::int64_t sigmoid(std::int64_t z, Precision p);
}  // namespace kernel

// ---------------------------------------------------------------------------
// Vector operations.

FixedScalar dot_strict(const FixedVector& x, const FixedVector& y);
ExactSum dot_acc(const FixedVector& x, const FixedVector& y);
// [<x, y>_acc / sqrt(m)]_s
FixedScalar score_s(const FixedVector& x, const FixedVector& y);
FixedVector rmsnorm_s(const FixedVector& x);
FixedVector l2norm_s(const FixedVector& x);
FixedVector softmax_s(const FixedVector& z);

}  // namespace pcrsim::fixed
