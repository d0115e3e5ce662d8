// Certified enclosures of exp and the logistic sigmoid on grid inputs, backed
// by MPFR directed rounding.

#include <mpfr.h>

#include <unordered_map>
#include <vector>

#include "pcrsim/fixed.hpp"

namespace pcrsim::fixed {

namespace {

class Mpfr {
 public:
  explicit Mpfr(mpfr_prec_t bits) { mpfr_init2(v_, bits); }
  ~Mpfr() { mpfr_clear(v_); }
  Mpfr(const Mpfr&) = delete;
  Mpfr& operator=(const Mpfr&) = delete;
  mpfr_ptr get() { return v_; }

 private:
  mpfr_t v_;
};

class Mpz {
 public:
  Mpz() { mpz_init(v_); }
  ~Mpz() { mpz_clear(v_); }
  Mpz(const Mpz&) = delete;
  Mpz& operator=(const Mpz&) = delete;
  mpz_ptr get() { return v_; }

 private:
  mpz_t v_;
};

DyadicBound to_bound(mpfr_ptr x) {
  Mpz m;
  const mpfr_exp_t e = mpfr_get_z_2exp(m.get(), x);
  std::vector<std::uint64_t> words(mpz_sizeinbase(m.get(), 2) / 64 + 2, 0);
  std::size_t count = 0;
  mpz_export(words.data(), &count, -1, sizeof(std::uint64_t), 0, 0, m.get());
  DyadicBound b;
  boost::multiprecision::import_bits(b.mantissa, words.begin(), words.begin() + static_cast<std::ptrdiff_t>(count),
                                     64, false);
  if (mpz_sgn(m.get()) < 0) b.mantissa = -b.mantissa;
  b.exponent = e;
  return b;
}

// z = k * 2^-s, exactly.
void load_grid_value(mpfr_ptr z, std::int64_t k, int s) {
  mpfr_set_si(z, static_cast<long>(k), MPFR_RNDN);
  mpfr_div_2ui(z, z, static_cast<unsigned long>(s), MPFR_RNDN);
}

DyadicInterval enclose_exp(std::int64_t k, int s, int bits) {
  Mpfr z(80), lo(bits), hi(bits);
  load_grid_value(z.get(), k, s);
  mpfr_exp(lo.get(), z.get(), MPFR_RNDD);
  mpfr_exp(hi.get(), z.get(), MPFR_RNDU);
  return {to_bound(lo.get()), to_bound(hi.get())};
}

// sigma(z) = 1 / (1 + e^-z); each endpoint rounds every step outward.
DyadicInterval enclose_sigmoid(std::int64_t k, int s, int bits) {
  Mpfr z(80), t(bits), lo(bits), hi(bits);
  load_grid_value(z.get(), -k, s);
  mpfr_exp(t.get(), z.get(), MPFR_RNDU);
  mpfr_add_ui(t.get(), t.get(), 1, MPFR_RNDU);
  mpfr_ui_div(lo.get(), 1, t.get(), MPFR_RNDD);
  mpfr_exp(t.get(), z.get(), MPFR_RNDD);
  mpfr_add_ui(t.get(), t.get(), 1, MPFR_RNDD);
  mpfr_ui_div(hi.get(), 1, t.get(), MPFR_RNDU);
  return {to_bound(lo.get()), to_bound(hi.get())};
}

std::int64_t cache_key(std::int64_t k, Precision p) { return k * 32 + p.bits(); }

}  // namespace

namespace kernel {

std::int64_t exp(std::int64_t z, Precision p) {
  const std::int64_t unit = p.unit();
  // e^z < e^-(s+1) < 2^-(s+1): strictly below the rounding threshold.
  if (z < -(p.bits() + 1) * unit) return 0;
  // e^z > e^s > 2^s > B_s + delta/2.
  if (z > p.bits() * unit) return p.max_numerator();
  if (z == 0) return unit;
  thread_local std::unordered_map<std::int64_t, std::int64_t> cache;
  const std::int64_t key = cache_key(z, p);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const std::int64_t r =
      round_certified([&](int bits) { return enclose_exp(z, p.bits(), bits); }, p).numerator();
  cache.emplace(key, r);
  return r;
}

std::int64_t sigmoid(std::int64_t z, Precision p) {
  const std::int64_t unit = p.unit();
  // 1 - sigma(z) < e^-z < delta/2 and symmetrically for sigma(z) itself.
  if (z > (p.bits() + 1) * unit) return unit;
  if (z < -(p.bits() + 1) * unit) return 0;
  thread_local std::unordered_map<std::int64_t, std::int64_t> cache;
  const std::int64_t key = cache_key(z, p);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const std::int64_t r =
      round_certified([&](int bits) { return enclose_sigmoid(z, p.bits(), bits); }, p).numerator();
  cache.emplace(key, r);
  return r;
}

}  // namespace kernel

FixedScalar exp_s(const FixedScalar& z) {
  return FixedScalar::from_numerator(kernel::exp(z.numerator(), z.precision()), z.precision());
}

FixedScalar sigmoid_s(const FixedScalar& z) {
  return FixedScalar::from_numerator(kernel::sigmoid(z.numerator(), z.precision()), z.precision());
}

}  // namespace pcrsim::fixed
