#include "pcrsim/fixed.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pcrsim::fixed {

namespace {

Wide wide_abs(Wide x) { return x < 0 ? -x : x; }

// Largest magnitude fed to the 128-bit fast paths.
constexpr Wide kFastLimit = static_cast<Wide>(1) << 100;

std::int64_t saturate(const BigInt& magnitude, int sign, Precision p) {
  const BigInt maxk = p.max_numerator();
  const std::int64_t k = magnitude > maxk ? p.max_numerator() : static_cast<std::int64_t>(magnitude);
  return sign < 0 ? -k : k;
}

std::int64_t saturate(Wide magnitude, int sign, Precision p) {
  const std::int64_t k =
      magnitude > static_cast<Wide>(p.max_numerator()) ? p.max_numerator() : static_cast<std::int64_t>(magnitude);
  return sign < 0 ? -k : k;
}

BigInt to_big(Wide x) {
  const bool neg = x < 0;
  unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(x + 1)) + 1 : static_cast<unsigned __int128>(x);
  BigInt r = static_cast<std::uint64_t>(u >> 64);
  r <<= 64;
  r += static_cast<std::uint64_t>(u);
  return neg ? BigInt(-r) : r;
}

std::uint64_t isqrt_u64(std::uint64_t v) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(v)));
  while (r > 0 && static_cast<unsigned __int128>(r) * r > v) --r;
  while (static_cast<unsigned __int128>(r + 1) * (r + 1) <= v) ++r;
  return r;
}

// Nearest integer to sqrt(P / Q), ties down; requires P, Q < 2^62.
std::uint64_t nearest_sqrt(std::uint64_t P, std::uint64_t Q) {
  std::uint64_t t = isqrt_u64(P / Q);
  const unsigned __int128 lhs = static_cast<unsigned __int128>(P) * 4;
  const unsigned __int128 rhs = static_cast<unsigned __int128>(2 * t + 1) * (2 * t + 1) * Q;
  if (lhs > rhs) ++t;
  return t;
}

void require_same(Precision a, Precision b) {
  if (!(a == b)) throw InvalidPrecision("operands use different precisions");
}

void require_same_size(const FixedVector& x, const FixedVector& y) {
  if (x.size() != y.size()) {
    throw DimensionMismatch("vector lengths differ: " + std::to_string(x.size()) + " vs " +
                            std::to_string(y.size()));
  }
  require_same(x.precision(), y.precision());
}

}  // namespace

// ---------------------------------------------------------------------------

Precision::Precision(int s) : s_(s) {
  if (s < kMinBits || s > kMaxBits) {
    throw InvalidPrecision("precision s must lie in [" + std::to_string(kMinBits) + ", " +
                           std::to_string(kMaxBits) + "], got " + std::to_string(s));
  }
}

FixedScalar FixedScalar::from_numerator(std::int64_t k, Precision p) {
  if (k > p.max_numerator() || k < -p.max_numerator()) {
    throw InvalidPrecision("numerator " + std::to_string(k) + " outside F_" + std::to_string(p.bits()));
  }
  return FixedScalar(k, p);
}

FixedScalar FixedScalar::exact(const Rational& value, Precision p) {
  const FixedScalar r = round_s(value, p);
  if (r.value() != value) throw InvalidPrecision("value is not a grid point of F_" + std::to_string(p.bits()));
  return r;
}

Rational FixedScalar::value() const { return Rational(k_) / Rational(BigInt(1) << p_.bits()); }

double FixedScalar::to_double() const { return std::ldexp(static_cast<double>(k_), -p_.bits()); }

std::string FixedScalar::to_fraction() const {
  const Rational v = value();
  std::ostringstream os;
  os << boost::multiprecision::numerator(v);
  if (boost::multiprecision::denominator(v) != 1) os << '/' << boost::multiprecision::denominator(v);
  return os.str();
}

Rational ExactSum::value() const { return Rational(to_big(numerator)) / Rational(BigInt(1) << scale_bits); }

FixedVector FixedVector::from_numerators(Precision p, std::vector<std::int64_t> k) {
  FixedVector v(p, 0);
  for (std::int64_t x : k) {
    if (x > p.max_numerator() || x < -p.max_numerator()) {
      throw InvalidPrecision("numerator " + std::to_string(x) + " outside F_" + std::to_string(p.bits()));
    }
  }
  v.k_ = std::move(k);
  return v;
}

FixedVector FixedVector::from_scalars(std::span<const FixedScalar> xs) {
  if (xs.empty()) throw EmptyInput("cannot infer precision of an empty scalar list");
  FixedVector v(xs.front().precision(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) v.set(i, xs[i]);
  return v;
}

FixedScalar FixedVector::operator[](std::size_t i) const { return FixedScalar::from_numerator(k_.at(i), p_); }

void FixedVector::set(std::size_t i, const FixedScalar& x) {
  require_same(p_, x.precision());
  k_.at(i) = x.numerator();
}

void FixedVector::set_numerator(std::size_t i, std::int64_t k) {
  if (k > p_.max_numerator() || k < -p_.max_numerator()) throw InvalidPrecision("numerator out of range");
  k_.at(i) = k;
}

bool FixedVector::is_zero() const {
  for (std::int64_t k : k_)
    if (k != 0) return false;
  return true;
}

bool FixedVector::in_format() const {
  for (std::int64_t k : k_)
    if (k > p_.max_numerator() || k < -p_.max_numerator()) return false;
  return true;
}

FixedScalar FixedMatrix::at(std::size_t r, std::size_t c) const {
  return FixedScalar::from_numerator(k_.at(r * cols_ + c), p_);
}

void FixedMatrix::set(std::size_t r, std::size_t c, const FixedScalar& x) {
  require_same(p_, x.precision());
  if (r >= rows_ || c >= cols_) throw DimensionMismatch("matrix index out of range");
  k_[r * cols_ + c] = x.numerator();
}

FixedVector FixedMatrix::row(std::size_t r) const {
  if (r >= rows_) throw DimensionMismatch("matrix row out of range");
  return FixedVector::from_numerators(p_, std::vector<std::int64_t>(k_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
                                                                    k_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_)));
}

void FixedMatrix::set_row(std::size_t r, const FixedVector& v) {
  require_same(p_, v.precision());
  if (r >= rows_ || v.size() != cols_) throw DimensionMismatch("matrix row shape mismatch");
  for (std::size_t c = 0; c < cols_; ++c) k_[r * cols_ + c] = v.numerator(c);
}

// ---------------------------------------------------------------------------
// Rounding.

std::int64_t round_ratio(const BigInt& num, const BigInt& den, Precision p) {
  if (den <= 0) throw Error("round_ratio: denominator must be positive");
  const int sign = num < 0 ? -1 : 1;
  const BigInt a = (sign < 0 ? BigInt(-num) : num) << p.bits();
  BigInt q = a / den;
  const BigInt r = a % den;
  // Exactly half rounds toward zero.
  if (r > den - r) ++q;
  return saturate(q, sign, p);
}

std::int64_t round_ratio(Wide num, Wide den, Precision p) {
  if (den <= 0) throw Error("round_ratio: denominator must be positive");
  const int sign = num < 0 ? -1 : 1;
  const Wide mag = wide_abs(num);
  if (mag >= kFastLimit || den >= kFastLimit) return round_ratio(to_big(num), to_big(den), p);
  const Wide a = mag << p.bits();
  Wide q = a / den;
  const Wide r = a % den;
  if (r > den - r) ++q;
  return saturate(q, sign, p);
}

std::int64_t round_dyadic(Wide num, int shift, Precision p) {
  const int sign = num < 0 ? -1 : 1;
  const Wide mag = wide_abs(num);
  const int down = shift - p.bits();
  if (down <= 0) {
    if (mag > static_cast<Wide>(p.max_numerator())) return saturate(mag, sign, p);
    return saturate(mag << (-down), sign, p);
  }
  if (down >= 120 || mag >= kFastLimit) {
    return round_ratio(to_big(num), BigInt(1) << shift, p);
  }
  Wide q = mag >> down;
  const Wide r = mag & ((static_cast<Wide>(1) << down) - 1);
  const Wide half = static_cast<Wide>(1) << (down - 1);
  if (r > half) ++q;
  return saturate(q, sign, p);
}

FixedScalar round_exact(const ExactSum& x, Precision p) {
  return FixedScalar::from_numerator(round_dyadic(x.numerator, x.scale_bits, p), p);
}

FixedScalar round_s(const Rational& x, Precision p) {
  return FixedScalar::from_numerator(
      round_ratio(boost::multiprecision::numerator(x), boost::multiprecision::denominator(x), p), p);
}

std::int64_t round_signed_sqrt(int sign, const BigInt& num, const BigInt& den, Precision p) {
  if (num < 0 || den <= 0) throw Error("round_signed_sqrt: need num >= 0 and den > 0");
  if (num == 0) return 0;
  // Magnitude y = sqrt(num / den) * 2^s, y^2 = P / Q.
  const BigInt P = num << (2 * p.bits());
  const BigInt& Q = den;
  const BigInt limit = BigInt(1) << 62;
  if (P < limit && Q < limit) {
    return saturate(static_cast<Wide>(nearest_sqrt(static_cast<std::uint64_t>(P), static_cast<std::uint64_t>(Q))),
                    sign, p);
  }
  BigInt t = boost::multiprecision::sqrt(BigInt(P / Q));
  const BigInt odd = 2 * t + 1;
  if (4 * P > odd * odd * Q) ++t;
  return saturate(t, sign, p);
}

FixedScalar sqrt_s(const Rational& x, Precision p) {
  if (x < 0) throw Error("sqrt_s of a negative value");
  return FixedScalar::from_numerator(
      round_signed_sqrt(1, boost::multiprecision::numerator(x), boost::multiprecision::denominator(x), p), p);
}

namespace {

std::int64_t round_bound(const DyadicBound& b, Precision p) {
  if (b.exponent >= 0) {
    if (b.exponent > 4 * Precision::kMaxBits) {
      return b.mantissa == 0 ? 0 : saturate(BigInt(p.max_numerator()) + 1, b.mantissa < 0 ? -1 : 1, p);
    }
    return round_ratio(BigInt(b.mantissa << static_cast<unsigned>(b.exponent)), BigInt(1), p);
  }
  return round_ratio(b.mantissa, BigInt(1) << static_cast<unsigned>(-b.exponent), p);
}

}  // namespace

FixedScalar round_certified(const Encloser& enclose, Precision p) {
  for (int bits : kCertifiedBits) {
    const DyadicInterval iv = enclose(bits);
    const std::int64_t lo = round_bound(iv.lo, p);
    const std::int64_t hi = round_bound(iv.hi, p);
    if (lo == hi) return FixedScalar::from_numerator(lo, p);
  }
  throw AmbiguousRounding("enclosure still straddles a rounding midpoint at " +
                          std::to_string(kCertifiedBits[std::size(kCertifiedBits) - 1]) + " bits");
}

// ---------------------------------------------------------------------------
// Scalars.

namespace kernel {

std::int64_t add(std::int64_t a, std::int64_t b, Precision p) {
  const std::int64_t s = a + b;
  if (s > p.max_numerator()) return p.max_numerator();
  if (s < -p.max_numerator()) return -p.max_numerator();
  return s;
}

std::int64_t mul(std::int64_t a, std::int64_t b, Precision p) {
  if (a == 0 || b == 0) return 0;
  return round_dyadic(static_cast<Wide>(a) * b, 2 * p.bits(), p);
}

std::int64_t score(Wide acc, std::size_t m, Precision p) {
  if (acc == 0) return 0;
  if (m == 0) throw EmptyInput("score over zero-length vectors");
  const int sign = acc < 0 ? -1 : 1;
  const Wide mag = wide_abs(acc);
  // acc is on the 2^-2s grid: value = acc 2^-2s / sqrt(m), and the scaled
  // magnitude y = value 2^s satisfies y^2 = acc^2 / (2^2s m).
  const int shift = 2 * p.bits();
  if (mag < (static_cast<Wide>(1) << 31) && m < (std::uint64_t{1} << (61 - shift))) {
    const auto a = static_cast<std::uint64_t>(mag);
    return saturate(static_cast<Wide>(nearest_sqrt(a * a, static_cast<std::uint64_t>(m) << shift)), sign, p);
  }
  const BigInt a = to_big(mag);
  return round_signed_sqrt(sign, BigInt(a * a), (BigInt(1) << (2 * shift)) * m, p);
}

}  // namespace kernel

FixedScalar add_s(const FixedScalar& a, const FixedScalar& b) {
  require_same(a.precision(), b.precision());
  return FixedScalar::from_numerator(kernel::add(a.numerator(), b.numerator(), a.precision()), a.precision());
}

FixedScalar sub_s(const FixedScalar& a, const FixedScalar& b) {
  require_same(a.precision(), b.precision());
  return FixedScalar::from_numerator(kernel::add(a.numerator(), -b.numerator(), a.precision()), a.precision());
}

FixedScalar mul_s(const FixedScalar& a, const FixedScalar& b) {
  require_same(a.precision(), b.precision());
  return FixedScalar::from_numerator(kernel::mul(a.numerator(), b.numerator(), a.precision()), a.precision());
}

FixedScalar relu_s(const FixedScalar& a) { return a.numerator() > 0 ? a : FixedScalar(a.precision()); }

FixedScalar clamp_unit_s(const FixedScalar& a) {
  const Precision p = a.precision();
  if (a.numerator() < 0) return FixedScalar(p);
  if (a.numerator() > p.unit()) return FixedScalar::from_numerator(p.unit(), p);
  return a;
}

FixedScalar sum_strict(std::span<const FixedScalar> xs) {
  if (xs.empty()) throw EmptyInput("sum_strict of an empty list");
  FixedScalar acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add_s(acc, xs[i]);
  return acc;
}

ExactSum sum_acc(std::span<const FixedScalar> xs, Precision p) {
  ExactSum r{0, p.bits()};
  for (const FixedScalar& x : xs) {
    require_same(p, x.precision());
    r.numerator += x.numerator();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Vectors.

FixedScalar dot_strict(const FixedVector& x, const FixedVector& y) {
  require_same_size(x, y);
  if (x.empty()) throw EmptyInput("dot_strict of empty vectors");
  const Precision p = x.precision();
  std::int64_t acc = kernel::mul(x.numerator(0), y.numerator(0), p);
  for (std::size_t i = 1; i < x.size(); ++i) acc = kernel::add(acc, kernel::mul(x.numerator(i), y.numerator(i), p), p);
  return FixedScalar::from_numerator(acc, p);
}

ExactSum dot_acc(const FixedVector& x, const FixedVector& y) {
  require_same_size(x, y);
  ExactSum r{0, 2 * x.precision().bits()};
  for (std::size_t i = 0; i < x.size(); ++i) r.numerator += static_cast<Wide>(x.numerator(i)) * y.numerator(i);
  return r;
}

FixedScalar score_s(const FixedVector& x, const FixedVector& y) {
  if (x.empty()) throw EmptyInput("score_s of empty vectors");
  const ExactSum acc = dot_acc(x, y);
  const Precision p = x.precision();
  return FixedScalar::from_numerator(kernel::score(acc.numerator, x.size(), p), p);
}

namespace {

// Coordinates x_r * sqrt(scale_num / sumsq), rounded; shared by RMS and l2.
FixedVector normalize(const FixedVector& x, std::uint64_t length_factor) {
  const Precision p = x.precision();
  Wide sumsq = 0;
  for (std::int64_t k : x.numerators()) sumsq += static_cast<Wide>(k) * k;
  FixedVector out(p, x.size());
  if (sumsq == 0) return out;
  const BigInt den = to_big(sumsq);
  // Vectors in the constructions repeat one magnitude many times.
  std::int64_t last_mag = -1;
  std::int64_t last_out = 0;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const std::int64_t k = x.numerator(r);
    const std::int64_t mag = k < 0 ? -k : k;
    if (mag != last_mag) {
      last_mag = mag;
      last_out = mag == 0 ? 0 : round_signed_sqrt(1, BigInt(BigInt(mag) * mag * length_factor), den, p);
    }
    out.set_numerator(r, k < 0 ? -last_out : last_out);
  }
  return out;
}

}  // namespace

FixedVector rmsnorm_s(const FixedVector& x) {
  // x_r / rho with rho^2 = sum k^2 2^-2s / m, so (x_r / rho)^2 = k_r^2 m / sum k^2.
  return normalize(x, x.size());
}

FixedVector l2norm_s(const FixedVector& x) { return normalize(x, 1); }

FixedVector softmax_s(const FixedVector& z) {
  const Precision p = z.precision();
  FixedVector out(p, z.size());
  std::vector<std::int64_t> e(z.size());
  Wide total = 0;
  for (std::size_t r = 0; r < z.size(); ++r) {
    e[r] = kernel::exp(z.numerator(r), p);
    total += e[r];
  }
  if (total == 0) return out;
  for (std::size_t r = 0; r < z.size(); ++r) out.set_numerator(r, e[r] == 0 ? 0 : round_ratio(e[r], total, p));
  return out;
}

}  // namespace pcrsim::fixed
