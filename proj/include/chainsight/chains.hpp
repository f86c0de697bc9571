#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "change_record.hpp"
#include "errors.hpp"
#include "text_io.hpp"

namespace chainsight {

/// Lengths of the maximal runs of set bits in a change record, left to right.
using ChainList = std::vector<std::uint32_t>;

/// Empirical chain-length pmf. `counts` is kept alongside `probs` so that
/// distributions can be pooled again without losing weight.
struct ChainDistribution {
  std::map<std::uint32_t, double> probs;
  std::map<std::uint32_t, std::uint64_t> counts;
  std::uint64_t total_chains = 0;
  std::uint32_t max_c = 0;

  double prob(std::uint32_t c) const {
    auto it = probs.find(c);
    return it == probs.end() ? 0.0 : it->second;
  }

  static ChainDistribution from_counts(std::map<std::uint32_t, std::uint64_t> counts) {
    ChainDistribution d;
    for (auto it = counts.begin(); it != counts.end();) {
      if (it->second == 0) it = counts.erase(it);
      else d.total_chains += (it++)->second;
    }
    if (d.total_chains == 0) throw domain_error("chain distribution is undefined: no chains");
    for (auto [c, n] : counts) d.probs[c] = static_cast<double>(n) / static_cast<double>(d.total_chains);
    d.max_c = counts.rbegin()->first;
    d.counts = std::move(counts);
    return d;
  }
};

/// Calls fn(length) for every run of ones in `words`, in order, scanning a
/// word at a time. Bits past the logical end must be zero.
template <class Fn>
inline void for_each_chain(std::span<const std::uint64_t> words, Fn&& fn) {
  std::uint64_t run = 0;
  for (std::uint64_t w : words) {
    if (w == 0) {
      if (run) fn(run), run = 0;
      continue;
    }
    if (w == ~std::uint64_t{0}) {
      run += 64;
      continue;
    }
    unsigned pos = 0;
    while (pos < 64) {
      const std::uint64_t rest = w >> pos;
      if (rest == 0) {
        if (run) fn(run), run = 0;
        break;
      }
      if (rest & 1U) {
        const unsigned ones = static_cast<unsigned>(std::countr_one(rest));
        run += ones;
        pos += ones;
      } else {
        if (run) fn(run), run = 0;
        pos += static_cast<unsigned>(std::countr_zero(rest));
      }
    }
  }
  if (run) fn(run);
}

inline ChainList extract_chains(const ChangeRecord& record) {
  ChainList chains;
  for_each_chain(record.words(), [&](std::uint64_t len) { chains.push_back(static_cast<std::uint32_t>(len)); });
  return chains;
}

/// Number of chains, and how many have each length 1..n.
struct ChainCounts {
  std::uint64_t total = 0;
  std::vector<std::uint64_t> by_length; // by_length[c - 1]

  explicit ChainCounts(std::size_t n = 0) : by_length(n, 0) {}

  void add(std::uint64_t len) {
    ++total;
    if (len >= 1 && len <= by_length.size()) ++by_length[len - 1];
  }
  bool operator==(const ChainCounts&) const = default;
};

inline ChainCounts count_chains(const ChainList& chains, std::size_t n) {
  ChainCounts c(n);
  for (auto len : chains) c.add(len);
  return c;
}

/// count_chains over the runs of ones in a bit vector, without listing them.
/// Works a word at a time with shifted copies of the neighbouring words; the
/// bits past the logical end must be zero.
inline ChainCounts count_chains(std::span<const std::uint64_t> words, std::size_t n) {
  ChainCounts out(n);
  if (n >= 64) {
    for_each_chain(words, [&](std::uint64_t len) { out.add(len); });
    return out;
  }
  const std::size_t nw = words.size();
  for (std::size_t i = 0; i < nw; ++i) {
    const std::uint64_t w = words[i];
    const std::uint64_t prev = i ? words[i - 1] : 0;
    const std::uint64_t next = i + 1 < nw ? words[i + 1] : 0;
    // Bit j of right(k) is bit j + k of the sequence.
    auto right = [&](unsigned k) { return (w >> k) | (next << (64 - k)); };
    const std::uint64_t start = w & ~((w << 1) | (prev >> 63));
    out.total += static_cast<std::uint64_t>(std::popcount(start));
    std::uint64_t run = start; // starts followed by at least c ones
    for (unsigned c = 1; c <= n; ++c) {
      const std::uint64_t longer = run & right(c);
      out.by_length[c - 1] += static_cast<std::uint64_t>(std::popcount(run & ~longer));
      run = longer;
      if (c >= 4 && run == 0) break; // short prefix stays branch-free
    }
  }
  return out;
}

/// Record with the given runs separated by single zeros. Inverse of
/// extract_chains on such records.
inline ChangeRecord record_from_chains(const ChainList& chains) {
  std::uint64_t length = 0;
  for (auto c : chains) length += c;
  if (!chains.empty()) length += chains.size() - 1;
  ChangeRecord r(length);
  std::uint64_t pos = 0;
  for (auto c : chains) {
    r.set_range(pos, c);
    pos += c + 1;
  }
  return r;
}

inline void add_counts(std::map<std::uint32_t, std::uint64_t>& counts, const ChainList& chains) {
  for (auto c : chains) ++counts[c];
}

/// Pools chain counts across all lists, then normalises once.
inline ChainDistribution empirical_distribution(const std::vector<ChainList>& lists) {
  std::map<std::uint32_t, std::uint64_t> counts;
  for (const auto& l : lists) add_counts(counts, l);
  if (counts.empty()) throw domain_error("chain distribution is undefined: all chain lists are empty");
  return ChainDistribution::from_counts(std::move(counts));
}

inline ChainDistribution empirical_distribution(const ChainList& list) {
  return empirical_distribution(std::vector<ChainList>{list});
}

/// Count-weighted pooling of existing distributions.
inline ChainDistribution pool_distributions(const std::vector<const ChainDistribution*>& dists) {
  std::map<std::uint32_t, std::uint64_t> counts;
  for (const auto* d : dists)
    for (auto [c, n] : d->counts) counts[c] += n;
  if (counts.empty()) throw domain_error("chain distribution is undefined: nothing to pool");
  return ChainDistribution::from_counts(std::move(counts));
}

// ---- CSV formats ---------------------------------------------------------

/// One chain list per line, comma separated; an empty line is an empty list.
inline void write_chain_lists(std::ostream& out, const std::vector<ChainList>& lists) {
  for (const auto& l : lists) {
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (i) out << ',';
      out << l[i];
    }
    out << '\n';
  }
}

inline std::vector<ChainList> read_chain_lists(std::istream& in, const std::string& source = "<stream>") {
  std::vector<ChainList> lists;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ChainList l;
    if (!line.empty()) {
      for (const auto& field : text_io::split(line, ',')) {
        const auto v = text_io::parse_u64(field, source, lineno);
        if (v == 0 || v > UINT32_MAX)
          throw format_error(source + ":" + std::to_string(lineno) + ": chain length out of range: " + field);
        l.push_back(static_cast<std::uint32_t>(v));
      }
    }
    lists.push_back(std::move(l));
  }
  return lists;
}

inline void save_chain_lists(const std::filesystem::path& path, const std::vector<ChainList>& lists) {
  auto out = text_io::open_out(path);
  write_chain_lists(out, lists);
}

inline std::vector<ChainList> load_chain_lists(const std::filesystem::path& path) {
  auto in = text_io::open_in(path);
  return read_chain_lists(in, path.string());
}

/// Header `c,probability,count`, one row per observed length.
inline void write_distribution(std::ostream& out, const ChainDistribution& d) {
  out << "c,probability,count\n";
  for (auto [c, p] : d.probs) {
    auto it = d.counts.find(c);
    out << c << ',' << text_io::format_double(p) << ',' << (it == d.counts.end() ? 0 : it->second) << '\n';
  }
}

inline ChainDistribution read_distribution(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw format_error(source + ": empty distribution file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "c,probability,count")
    throw format_error(source + ":1: expected header c,probability,count");
  std::map<std::uint32_t, std::uint64_t> counts;
  std::map<std::uint32_t, double> probs;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = text_io::split(line, ',');
    if (f.size() != 3) throw format_error(source + ":" + std::to_string(lineno) + ": expected 3 fields");
    const auto c = text_io::parse_u64(f[0], source, lineno);
    if (c == 0 || c > UINT32_MAX) throw format_error(source + ":" + std::to_string(lineno) + ": bad chain length");
    const double p = text_io::parse_double(f[1], source, lineno);
    if (!(p >= 0.0 && p <= 1.0)) throw format_error(source + ":" + std::to_string(lineno) + ": probability outside [0,1]");
    probs[static_cast<std::uint32_t>(c)] = p;
    counts[static_cast<std::uint32_t>(c)] = text_io::parse_u64(f[2], source, lineno);
  }
  std::uint64_t total = 0;
  for (auto [c, n] : counts) total += n;
  if (total > 0) return ChainDistribution::from_counts(std::move(counts));
  // Probability-only file: keep the given pmf as is.
  ChainDistribution d;
  double sum = 0;
  for (auto [c, p] : probs) sum += p;
  if (probs.empty() || sum <= 0) throw format_error(source + ": distribution has no mass");
  for (auto [c, p] : probs) d.probs[c] = p / sum;
  d.max_c = probs.rbegin()->first;
  return d;
}

inline void save_distribution(const std::filesystem::path& path, const ChainDistribution& d) {
  auto out = text_io::open_out(path);
  write_distribution(out, d);
}

inline ChainDistribution load_distribution(const std::filesystem::path& path) {
  auto in = text_io::open_in(path);
  return read_distribution(in, path.string());
}

} // namespace chainsight
