#pragma once

// Test-only reference values. Reals are evaluated in 100-digit binary floating
// point (boost cpp_bin_float, independent of the MPFR-backed library path) and
// rounded onto F_s by scanning grid points.

#include <cstdint>
#include <stdexcept>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_100;

inline Real grid_value(std::int64_t k, int s) { return Real(k) / Real(std::int64_t{1} << s); }

// Nearest grid numerator, ties toward smaller magnitude, saturating. The caller
// must not hand in values within 1e-60 of a midpoint unless they are exact.
inline std::int64_t round_to_grid(const Real& x, int s) {
  const std::int64_t maxk = (std::int64_t{1} << (2 * s)) - 1;
  const Real scaled = x * Real(std::int64_t{1} << s);
  if (scaled > Real(maxk + 1)) return maxk;
  if (scaled < Real(-maxk - 1)) return -maxk;
  const Real fl = boost::multiprecision::floor(scaled);
  std::int64_t lo = static_cast<std::int64_t>(fl);
  std::int64_t best = 0;
  Real best_d = -1;
  // Scan a small window of grid points around x (clamped to the format).
  for (std::int64_t k = lo - 1; k <= lo + 2; ++k) {
    const std::int64_t kk = k > maxk ? maxk : (k < -maxk ? -maxk : k);
    const Real d = boost::multiprecision::abs(scaled - Real(kk));
    const auto mag = [](std::int64_t v) { return v < 0 ? -v : v; };
    if (best_d < 0 || d < best_d || (d == best_d && mag(kk) < mag(best))) {
      best = kk;
      best_d = d;
    }
  }
  return best;
}

// Distance of x * 2^s to the nearest rounding midpoint, for sanity checks.
inline Real midpoint_gap(const Real& x, int s) {
  const Real scaled = x * Real(std::int64_t{1} << s);
  const Real frac = scaled - boost::multiprecision::floor(scaled);
  return boost::multiprecision::abs(frac - Real(0.5));
}

}  // namespace oracle
