#pragma once

// Sequential random sampling: the members of a uniform n-subset of
// {0, ..., N-1} in increasing order, in O(n) expected time and O(1) space,
// after J. S. Vitter, "An efficient algorithm for sequential random sampling"
// (ACM TOMS 13(1), 1987), Method D with the Method A fallback.

#include <cmath>
#include <cstdint>
#include <string>

#include "errors.hpp"
#include "rng.hpp"

namespace chainsight {

class SortedSampler {
public:
  SortedSampler(Rng& rng, std::uint64_t population, std::uint64_t count)
      : rng_(rng), n_(count), big_n_(population) {
    if (count > population)
      throw domain_error("cannot draw " + std::to_string(count) + " of " + std::to_string(population));
    if (n_ > 1 && alpha_inverse * n_ < big_n_) {
      method_d_ = true;
      ninv_ = 1.0 / static_cast<double>(n_);
      vprime_ = std::exp(std::log(rng_.open_unit()) * ninv_);
      qu1_ = big_n_ - n_ + 1;
    }
  }

  std::uint64_t remaining() const noexcept { return n_; }

  /// Next member, strictly greater than the previous one.
  std::uint64_t next() {
    if (n_ == 0) throw domain_error("sorted sample exhausted");
    std::uint64_t skip;
    if (n_ > 1 && method_d_ && alpha_inverse * n_ < big_n_) {
      skip = skip_d();
    } else if (n_ > 1) {
      method_d_ = false;
      skip = skip_a();
    } else {
      const double v = method_d_ ? vprime_ : rng_.open_unit();
      skip = static_cast<std::uint64_t>(std::floor(static_cast<double>(big_n_) * v));
      if (skip >= big_n_) skip = big_n_ - 1;
    }
    const std::uint64_t picked = position_ + skip;
    position_ = picked + 1;
    big_n_ -= skip + 1;
    --n_;
    return picked;
  }

private:
  static constexpr std::uint64_t alpha_inverse = 13;

  std::uint64_t skip_a() {
    std::uint64_t top = big_n_ - n_;
    double nreal = static_cast<double>(big_n_);
    const double v = rng_.open_unit();
    std::uint64_t s = 0;
    double quot = static_cast<double>(top) / nreal;
    while (quot > v) {
      ++s;
      --top;
      nreal -= 1.0;
      quot *= static_cast<double>(top) / nreal;
    }
    return s;
  }

  std::uint64_t skip_d() {
    const double n = static_cast<double>(n_);
    const double big_n = static_cast<double>(big_n_);
    const double nmin1inv = 1.0 / (n - 1.0);
    std::uint64_t s;
    for (;;) {
      double x;
      for (;;) {
        x = big_n * (1.0 - vprime_);
        s = static_cast<std::uint64_t>(x);
        if (s < qu1_) break;
        vprime_ = std::exp(std::log(rng_.open_unit()) * ninv_);
      }
      const double u = rng_.open_unit();
      const double qu1 = static_cast<double>(qu1_);
      const double sreal = static_cast<double>(s);
      const double y1 = std::exp(std::log(u * big_n / qu1) * nmin1inv);
      vprime_ = y1 * (1.0 - x / big_n) * (qu1 / (qu1 - sreal));
      if (vprime_ <= 1.0) break;

      double y2 = 1.0;
      double top = big_n - 1.0;
      double bottom;
      std::uint64_t limit;
      if (n_ - 1 > s) {
        bottom = big_n - n;
        limit = big_n_ - s;
      } else {
        bottom = big_n - sreal - 1.0;
        limit = qu1_;
      }
      for (std::uint64_t t = big_n_ - 1; t >= limit; --t) {
        y2 = y2 * top / bottom;
        top -= 1.0;
        bottom -= 1.0;
        if (t == 0) break;
      }
      if (big_n / (big_n - x) >= y1 * std::exp(std::log(y2) * nmin1inv)) {
        vprime_ = std::exp(std::log(rng_.open_unit()) * nmin1inv);
        break;
      }
      vprime_ = std::exp(std::log(rng_.open_unit()) * ninv_);
    }
    ninv_ = nmin1inv;
    qu1_ -= s;
    return s;
  }

  Rng& rng_;
  std::uint64_t n_;      // still to pick
  std::uint64_t big_n_;  // candidates left
  std::uint64_t position_ = 0;
  bool method_d_ = false;
  double ninv_ = 0;
  double vprime_ = 0;
  std::uint64_t qu1_ = 0; // big_n_ - n_ + 1
};

} // namespace chainsight
