#pragma once

// Chain-length distribution when k of n blocks change, all k-subsets equally
// likely, and one chain of the resulting array is drawn uniformly.
//
// Every array corresponds to exactly one ordered composition p of k (the run
// lengths left to right); the number of arrays with composition p is
// C(n - k + 1, |p|): the |p| runs are separated by mandatory zeros and the
// remaining n - k - (|p| - 1) zeros are spread over |p| + 1 gaps. Grouping
// compositions by their underlying unordered partition gives
//
//   Pr(C = c) = sum over partitions q of k of
//               orderings(q) * C(n - k + 1, |q|) / C(n, k) * mult_c(q) / |q|
//
// which needs p(k) terms instead of 2^(k-1).

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "chains.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace chainsight {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

struct UniformChangeModel {
  std::uint64_t n = 0; // array length (free blocks)
  std::uint64_t k = 0; // number of changed blocks

  void validate() const {
    if (k == 0) throw domain_error("uniform change model needs k > 0 (no chains exist for k = 0)");
    if (k > n) throw domain_error("uniform change model needs k <= n, got k=" + std::to_string(k) +
                                  " n=" + std::to_string(n));
  }
};

/// Exact probability kept as a reduced fraction.
struct ExactProbability {
  Rational value;

  BigInt numerator() const { return boost::multiprecision::numerator(value); }
  BigInt denominator() const { return boost::multiprecision::denominator(value); }
  double to_double() const { return value.convert_to<double>(); }
  std::string str() const { return value.str(); }

  friend bool operator==(const ExactProbability&, const ExactProbability&) = default;
};

inline BigInt binomial(std::uint64_t n, std::uint64_t r) {
  if (r > n) return 0;
  r = std::min(r, n - r);
  BigInt acc = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    acc *= n - r + i;
    acc /= i;
  }
  return acc;
}

/// Number of unordered partitions of k, saturating at UINT64_MAX.
inline std::uint64_t partition_count(std::uint64_t k) {
  std::vector<std::uint64_t> p(k + 1, 0);
  p[0] = 1;
  for (std::uint64_t part = 1; part <= k; ++part)
    for (std::uint64_t s = part; s <= k; ++s) {
      const std::uint64_t add = p[s - part];
      p[s] = (p[s] > UINT64_MAX - add) ? UINT64_MAX : p[s] + add;
    }
  return p[k];
}

/// Default partition budget: every k up to 40 is computed exactly.
inline const std::uint64_t default_partition_budget = partition_count(40);

/// Calls fn(parts) for every partition of k; `parts` lists (part, multiplicity)
/// pairs with parts strictly decreasing.
template <class Fn>
void for_each_partition(std::uint32_t k, Fn&& fn) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> parts;
  auto rec = [&](auto&& self, std::uint32_t remaining, std::uint32_t max_part) -> void {
    if (remaining == 0) {
      fn(static_cast<const decltype(parts)&>(parts));
      return;
    }
    for (std::uint32_t part = std::min(remaining, max_part); part >= 1; --part) {
      for (std::uint32_t m = remaining / part; m >= 1; --m) {
        parts.emplace_back(part, m);
        self(self, remaining - part * m, part - 1);
        parts.pop_back();
      }
    }
  };
  rec(rec, k, k);
}

namespace detail {

inline std::vector<BigInt> factorials(std::uint32_t upto) {
  std::vector<BigInt> f(upto + 1);
  f[0] = 1;
  for (std::uint32_t i = 1; i <= upto; ++i) f[i] = f[i - 1] * i;
  return f;
}

inline void check_budget(std::uint64_t k, std::uint64_t budget) {
  if (k > UINT32_MAX || partition_count(k) > budget)
    throw capacity_error("partition budget exceeded for k=" + std::to_string(k) + " (" +
                         std::to_string(partition_count(k)) + " partitions > " + std::to_string(budget) +
                         "); use the Monte Carlo estimator");
}

} // namespace detail

/// Sum of orderings over all partitions of k; equals 2^(k-1), the number of
/// ordered compositions.
inline BigInt composition_count_via_partitions(std::uint32_t k) {
  const auto fact = detail::factorials(k);
  BigInt total = 0;
  for_each_partition(k, [&](const auto& parts) {
    std::uint32_t len = 0;
    BigInt denom = 1;
    for (auto [part, m] : parts) {
      len += m;
      denom *= fact[m];
    }
    total += fact[len] / denom;
  });
  return total;
}

/// Pr(C = c) for c = 1..k, exact. Index 0 of the result is c = 1.
inline std::vector<ExactProbability> chain_distribution_exact(const UniformChangeModel& model,
                                                              std::uint64_t budget = default_partition_budget) {
  model.validate();
  detail::check_budget(model.k, budget);
  const auto k = static_cast<std::uint32_t>(model.k);
  const auto fact = detail::factorials(k);

  // placements[m] = C(n - k + 1, m)
  std::vector<BigInt> placements(k + 1);
  const std::uint64_t slots = model.n - model.k + 1;
  placements[0] = 1;
  for (std::uint32_t m = 1; m <= k; ++m)
    placements[m] = m > slots ? BigInt(0) : placements[m - 1] * (slots - m + 1) / m;

  // by_len[c][m]: sum of orderings * placements * mult_c over partitions with m parts.
  std::vector<std::vector<BigInt>> by_len(k + 1, std::vector<BigInt>(k + 1));
  for_each_partition(k, [&](const auto& parts) {
    std::uint32_t len = 0;
    BigInt denom = 1;
    for (auto [part, m] : parts) {
      len += m;
      denom *= fact[m];
    }
    if (placements[len] == 0) return;
    const BigInt weight = fact[len] / denom * placements[len];
    for (auto [part, m] : parts) by_len[part][len] += weight * m;
  });

  const BigInt total = binomial(model.n, model.k);
  std::vector<ExactProbability> out(k);
  for (std::uint32_t c = 1; c <= k; ++c) {
    Rational acc = 0;
    for (std::uint32_t m = 1; m <= k; ++m)
      if (by_len[c][m] != 0) acc += Rational(by_len[c][m], BigInt(m));
    out[c - 1].value = acc / total;
  }
  return out;
}

inline ExactProbability chain_probability_exact(const UniformChangeModel& model, std::uint64_t c,
                                                std::uint64_t budget = default_partition_budget) {
  model.validate();
  if (c < 1 || c > model.k)
    throw domain_error("chain length c=" + std::to_string(c) + " outside 1.." + std::to_string(model.k));
  return chain_distribution_exact(model, budget)[c - 1];
}

inline constexpr std::uint64_t default_enumeration_limit = 10'000'000;

/// Averages (#c-chains / #chains) over every one of the C(n, k) arrays.
/// Index 0 of the result is c = 1.
inline std::vector<ExactProbability> chain_distribution_bruteforce(
    const UniformChangeModel& model, std::uint64_t limit = default_enumeration_limit) {
  model.validate();
  const BigInt arrays = binomial(model.n, model.k);
  if (model.n > 63 || arrays > limit)
    throw capacity_error("brute-force enumeration of C(" + std::to_string(model.n) + "," +
                         std::to_string(model.k) + ") arrays exceeds the limit of " + std::to_string(limit));
  const auto n = static_cast<unsigned>(model.n);
  const auto k = static_cast<unsigned>(model.k);

  // sums[t][c]: total number of c-chains over arrays that have t chains.
  std::vector<std::vector<std::uint64_t>> sums(k + 1, std::vector<std::uint64_t>(k + 1, 0));
  const std::uint64_t end = n == 64 ? 0 : (std::uint64_t{1} << n);
  std::vector<unsigned> runs;
  for (std::uint64_t mask = (k == 64 ? ~0ULL : (std::uint64_t{1} << k) - 1); mask < end;) {
    runs.clear();
    std::uint64_t m = mask;
    while (m) {
      m >>= std::countr_zero(m);
      const auto len = static_cast<unsigned>(std::countr_one(m));
      runs.push_back(len);
      m = len == 64 ? 0 : (m >> len);
    }
    for (auto len : runs) ++sums[runs.size()][len];
    // Gosper's hack: next mask with the same popcount.
    const std::uint64_t lowest = mask & (~mask + 1);
    const std::uint64_t ripple = mask + lowest;
    if (ripple == 0) break;
    mask = (((ripple ^ mask) >> 2) / lowest) | ripple;
  }

  std::vector<ExactProbability> out(k);
  for (unsigned c = 1; c <= k; ++c) {
    Rational acc = 0;
    for (unsigned t = 1; t <= k; ++t)
      if (sums[t][c]) acc += Rational(BigInt(sums[t][c]), BigInt(t));
    out[c - 1].value = acc / arrays;
  }
  return out;
}

inline ExactProbability chain_probability_bruteforce(const UniformChangeModel& model, std::uint64_t c,
                                                     std::uint64_t limit = default_enumeration_limit) {
  model.validate();
  if (c < 1 || c > model.k)
    throw domain_error("chain length c=" + std::to_string(c) + " outside 1.." + std::to_string(model.k));
  return chain_distribution_bruteforce(model, limit)[c - 1];
}

struct MonteCarloEstimate {
  double estimate = 0;
  double standard_error = 0;
  double half_width_95 = 0;
  std::uint64_t trials = 0;
  std::uint64_t hits = 0;
};

namespace detail {

inline constexpr std::uint64_t mc_block = 1 << 16;

/// Draws a uniform k-subset of [0, n) into `out`, sorted.
inline void sample_subset(Rng& rng, std::uint64_t n, std::uint64_t k, std::vector<std::uint64_t>& out,
                          std::vector<std::uint64_t>& bitmap) {
  out.clear();
  if (k <= 64) {
    // Floyd's algorithm with a linear membership check.
    for (std::uint64_t j = n - k; j < n; ++j) {
      const std::uint64_t t = rng.below(j + 1);
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
      else out.push_back(j);
    }
    std::sort(out.begin(), out.end());
    return;
  }
  if (n <= (std::uint64_t{1} << 30)) {
    bitmap.assign((n + 63) / 64, 0);
    const bool complement = k > n / 2;
    const std::uint64_t want = complement ? n - k : k;
    for (std::uint64_t got = 0; got < want;) {
      const std::uint64_t t = rng.below(n);
      auto& w = bitmap[t >> 6];
      const std::uint64_t bit = std::uint64_t{1} << (t & 63);
      if (!(w & bit)) w |= bit, ++got;
    }
    for (std::uint64_t i = 0; i < n; ++i)
      if (((bitmap[i >> 6] >> (i & 63)) & 1U) != complement) out.push_back(i);
    return;
  }
  std::unordered_set<std::uint64_t> seen;
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    out.push_back(seen.insert(t).second ? t : (seen.insert(j), j));
  }
  std::sort(out.begin(), out.end());
}

} // namespace detail

namespace detail {

/// hits[c] = number of trials whose drawn chain had length c (c <= k).
inline std::vector<std::uint64_t> montecarlo_histogram(const UniformChangeModel& model, std::uint64_t trials,
                                                       std::uint64_t seed) {
  std::vector<std::uint64_t> hits(model.k + 1, 0);
  std::vector<std::uint64_t> subset, bitmap, runs;
  for (std::uint64_t block = 0; block * mc_block < trials; ++block) {
    Rng rng(derive_seed(seed, {block}));
    const std::uint64_t in_block = std::min(mc_block, trials - block * mc_block);
    for (std::uint64_t t = 0; t < in_block; ++t) {
      sample_subset(rng, model.n, model.k, subset, bitmap);
      runs.clear();
      std::uint64_t run = 1;
      for (std::size_t i = 1; i < subset.size(); ++i) {
        if (subset[i] == subset[i - 1] + 1) ++run;
        else runs.push_back(run), run = 1;
      }
      runs.push_back(run);
      ++hits[runs[rng.below(runs.size())]];
    }
  }
  return hits;
}

inline MonteCarloEstimate make_estimate(std::uint64_t hits, std::uint64_t trials) {
  MonteCarloEstimate e;
  e.trials = trials;
  e.hits = hits;
  e.estimate = static_cast<double>(hits) / static_cast<double>(trials);
  e.standard_error = std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(trials));
  e.half_width_95 = 1.959963984540054 * e.standard_error;
  return e;
}

} // namespace detail

/// Frequency with which a uniformly drawn chain of a uniformly drawn array has
/// length c. Trials run in fixed-size blocks, each with its own derived seed.
inline MonteCarloEstimate chain_probability_montecarlo(const UniformChangeModel& model, std::uint64_t c,
                                                       std::uint64_t trials, std::uint64_t seed) {
  model.validate();
  if (trials == 0) throw domain_error("Monte Carlo needs at least one trial");
  if (c < 1 || c > model.k)
    throw domain_error("chain length c=" + std::to_string(c) + " outside 1.." + std::to_string(model.k));
  return detail::make_estimate(detail::montecarlo_histogram(model, trials, seed)[c], trials);
}

enum class TheoryMethod { automatic, exact, brute, montecarlo };

inline TheoryMethod theory_method_from_name(const std::string& s) {
  if (s == "auto") return TheoryMethod::automatic;
  if (s == "exact") return TheoryMethod::exact;
  if (s == "brute") return TheoryMethod::brute;
  if (s == "mc") return TheoryMethod::montecarlo;
  throw domain_error("unknown method \"" + s + "\" (expected auto, exact, brute or mc)");
}

struct TheoryOptions {
  TheoryMethod method = TheoryMethod::automatic;
  std::uint64_t trials = 1'000'000;
  std::uint64_t seed = 0;
  std::uint64_t partition_budget = default_partition_budget;
  std::uint64_t enumeration_limit = default_enumeration_limit;
};

/// Pr(C = c) for c = 1..c_max (entries beyond k are 0). The automatic method
/// is exact within the partition budget and Monte Carlo beyond it.
inline ChainDistribution theoretical_distribution(const UniformChangeModel& model, std::uint64_t c_max,
                                                  const TheoryOptions& opt = {}) {
  model.validate();
  if (c_max == 0) throw domain_error("c_max must be at least 1");
  ChainDistribution d;
  d.max_c = static_cast<std::uint32_t>(c_max);
  const std::uint64_t upto = std::min(c_max, model.k);
  TheoryMethod method = opt.method;
  if (method == TheoryMethod::automatic)
    method = (model.k <= UINT32_MAX && partition_count(model.k) <= opt.partition_budget) ? TheoryMethod::exact
                                                                                         : TheoryMethod::montecarlo;
  if (method == TheoryMethod::exact || method == TheoryMethod::brute) {
    const auto exact = method == TheoryMethod::exact ? chain_distribution_exact(model, opt.partition_budget)
                                                     : chain_distribution_bruteforce(model, opt.enumeration_limit);
    for (std::uint64_t c = 1; c <= upto; ++c) d.probs[static_cast<std::uint32_t>(c)] = exact[c - 1].to_double();
  } else {
    if (opt.trials == 0) throw domain_error("Monte Carlo needs at least one trial");
    const auto hits = detail::montecarlo_histogram(model, opt.trials, opt.seed);
    for (std::uint64_t c = 1; c <= upto; ++c)
      d.probs[static_cast<std::uint32_t>(c)] = static_cast<double>(hits[c]) / static_cast<double>(opt.trials);
  }
  for (std::uint64_t c = upto + 1; c <= c_max; ++c) d.probs[static_cast<std::uint32_t>(c)] = 0.0;
  return d;
}

/// Writes `c,probability` rows.
inline void write_theory_csv(std::ostream& out, const ChainDistribution& d) {
  out << "c,probability\n";
  for (auto [c, p] : d.probs) out << c << ',' << text_io::format_double(p) << '\n';
}

} // namespace chainsight
