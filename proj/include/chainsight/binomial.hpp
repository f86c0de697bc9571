#pragma once

// Binomial upper tail P(X > k), X ~ Binomial(n, p), summed term by term in
// log space. Individual terms use Loader's saddle-point form of the pmf, which
// keeps full relative precision for large n, and the summation starts at the
// tail boundary and walks away from the mode until terms stop contributing.
// Nothing is formed as 1 - F(k) when F(k) is close to one, so tiny tails do not
// collapse to zero.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>

#include "errors.hpp"

namespace chainsight {

namespace detail {

// log(n!) - log(sqrt(2 pi n) (n/e)^n)
inline double stirlerr(double n) {
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  if (n <= 15.0) {
    static const auto table = [] {
      std::array<double, 16> t{};
      const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
      double lognf = 0.0;
      for (int i = 1; i < 16; ++i) {
        lognf += std::log(static_cast<double>(i));
        t[i] = lognf + i - half_log_2pi - (0.5 + i) * std::log(static_cast<double>(i));
      }
      return t;
    }();
    return table[static_cast<int>(n)];
  }
  const double nn = n * n;
  if (n > 500) return (s0 - s1 / nn) / n;
  if (n > 80) return (s0 - (s1 - s2 / nn) / nn) / n;
  if (n > 35) return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
  return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// x log(x / np) + np - x, computed without cancellation near x = np.
inline double bd0(double x, double np) {
  if (std::fabs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
    return s;
  }
  return x * std::log(x / np) + np - x;
}

} // namespace detail

/// log P(X = x) for X ~ Binomial(n, p); -inf outside the support.
inline double binomial_log_pmf(std::uint64_t x, std::uint64_t n, double p) {
  const double q = 1.0 - p;
  if (x > n) return -std::numeric_limits<double>::infinity();
  if (p == 0.0) return x == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (p == 1.0) return x == n ? 0.0 : -std::numeric_limits<double>::infinity();
  const auto nd = static_cast<double>(n);
  const auto xd = static_cast<double>(x);
  if (x == 0) return nd * std::log1p(-p);
  if (x == n) return nd * std::log(p);
  const double lc = detail::stirlerr(nd) - detail::stirlerr(xd) - detail::stirlerr(nd - xd) -
                    detail::bd0(xd, nd * p) - detail::bd0(nd - xd, nd * q);
  const double lf = std::log(2.0 * std::numbers::pi) + std::log(xd) + std::log1p(-xd / nd);
  return lc - 0.5 * lf;
}

namespace detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

// log of sum_{i=from..to} pmf(i), walking in direction `step` (+1 or -1) from
// `from`, which must lie on the far side of the mode so terms only shrink.
inline double log_tail_sum(std::uint64_t from, std::uint64_t to, int step, std::uint64_t n, double p) {
  const double log_ratio_up = std::log(p) - std::log1p(-p); // log(p / q)
  double log_term = binomial_log_pmf(from, n, p);
  double log_sum = log_term;
  std::uint64_t i = from;
  constexpr double negligible = -40.0; // e^-40 relative to the running sum
  while (i != to) {
    const auto id = static_cast<double>(i);
    const auto nd = static_cast<double>(n);
    if (step > 0) {
      log_term += std::log((nd - id) / (id + 1.0)) + log_ratio_up;
      ++i;
    } else {
      log_term += std::log(id / (nd - id + 1.0)) - log_ratio_up;
      --i;
    }
    log_sum = log_add(log_sum, log_term);
    if (log_term - log_sum < negligible) break;
  }
  return log_sum;
}

} // namespace detail

/// log P(X > k).
inline double binomial_log_sf(std::uint64_t k, std::uint64_t n, double p) {
  if (k > n) throw domain_error("binomial_sf: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  if (!(p >= 0.0 && p <= 1.0)) throw domain_error("binomial_sf: p outside [0,1]");
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  if (k == n || p == 0.0) return neg_inf;
  if (p == 1.0) return 0.0;
  const double mean = static_cast<double>(n) * p;
  if (static_cast<double>(k + 1) >= mean) {
    // Upper tail lies beyond the mode: terms decrease from k + 1 upward.
    return detail::log_tail_sum(k + 1, n, +1, n, p);
  }
  // Lower tail F(k) is at most about one half here; take its complement.
  const double log_cdf = detail::log_tail_sum(k, 0, -1, n, p);
  return std::log1p(-std::exp(log_cdf));
}

/// P(X > k) = 1 - F(k; n, p).
inline double binomial_sf(std::uint64_t k, std::uint64_t n, double p) {
  return std::exp(binomial_log_sf(k, n, p));
}

} // namespace chainsight
