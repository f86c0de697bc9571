#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "binomial.hpp"
#include "chains.hpp"
#include "errors.hpp"
#include "text_io.hpp"

namespace chainsight {

/// Clean-disk chain-length probabilities p_1..p_n.
struct ReferenceProbs {
  std::vector<double> probs; // probs[c - 1]
  std::size_t n_features() const noexcept { return probs.size(); }
};

enum class FeatureMode { tail, raw };

inline FeatureMode feature_mode_from_name(const std::string& s) {
  if (s == "tail") return FeatureMode::tail;
  if (s == "raw") return FeatureMode::raw;
  throw domain_error("unknown feature mode \"" + s + "\" (expected tail or raw)");
}

inline std::string feature_mode_name(FeatureMode m) { return m == FeatureMode::tail ? "tail" : "raw"; }

/// Number of Bernoulli trials behind each tail feature: the disk's chain count
/// (default) or the length of its change record.
enum class TailTrials { chain_count, record_length };

inline constexpr int unlabeled = -1;

struct FeatureMatrix {
  std::vector<std::vector<double>> rows;
  std::size_t n_features = 0;
  std::vector<int> labels; // 0 clean, 1 dirty, -1 unlabeled; empty if none
  FeatureMode mode = FeatureMode::raw;

  std::size_t size() const noexcept { return rows.size(); }
};

inline ReferenceProbs reference_from_distribution(const ChainDistribution& d, std::size_t n_features) {
  if (n_features == 0) throw domain_error("need at least one feature");
  ReferenceProbs ref;
  ref.probs.resize(n_features, 0.0);
  for (std::size_t c = 1; c <= n_features; ++c) ref.probs[c - 1] = d.prob(static_cast<std::uint32_t>(c));
  return ref;
}

/// Pools the clean chain lists and truncates to the first n_features lengths.
inline ReferenceProbs estimate_reference_probs(const std::vector<ChainList>& clean, std::size_t n_features) {
  return reference_from_distribution(empirical_distribution(clean), n_features);
}

/// Row of tail features 1 - F(k_c; N, p_c), with N the chain count unless
/// `trials` is given. A disk without chains yields zeros.
inline std::vector<double> tail_feature_row(const ChainCounts& counts, const ReferenceProbs& ref,
                                            std::optional<std::uint64_t> trials = std::nullopt) {
  if (counts.by_length.size() < ref.n_features()) throw shape_error("chain counts shorter than the feature width");
  const std::uint64_t n = trials.value_or(counts.total);
  std::vector<double> row(ref.n_features());
  for (std::size_t c = 0; c < ref.n_features(); ++c) {
    const std::uint64_t k = std::min<std::uint64_t>(counts.by_length[c], n);
    row[c] = binomial_sf(k, n, ref.probs[c]);
  }
  return row;
}

inline std::vector<double> tail_feature_row(const ChainList& disk, const ReferenceProbs& ref,
                                            std::optional<std::uint64_t> trials = std::nullopt) {
  return tail_feature_row(count_chains(disk, ref.n_features()), ref, trials);
}

inline std::vector<double> raw_feature_row(const ChainCounts& counts, std::size_t n_features) {
  if (counts.by_length.size() < n_features) throw shape_error("chain counts shorter than the feature width");
  std::vector<double> row(n_features, 0.0);
  if (counts.total == 0) return row;
  for (std::size_t c = 0; c < n_features; ++c)
    row[c] = static_cast<double>(counts.by_length[c]) / static_cast<double>(counts.total);
  return row;
}

inline std::vector<double> raw_feature_row(const ChainList& disk, std::size_t n_features) {
  return raw_feature_row(count_chains(disk, n_features), n_features);
}

/// One row per disk, features in chain-length order. `record_lengths` is
/// required when `trials` is TailTrials::record_length.
inline FeatureMatrix build_features_tail(const std::vector<ChainList>& disks, const ReferenceProbs& ref,
                                         TailTrials trials = TailTrials::chain_count,
                                         std::span<const std::uint64_t> record_lengths = {}) {
  if (ref.n_features() == 0) throw domain_error("reference probabilities are empty");
  if (trials == TailTrials::record_length && record_lengths.size() != disks.size())
    throw shape_error("record-length trials need one record length per disk");
  FeatureMatrix fm;
  fm.mode = FeatureMode::tail;
  fm.n_features = ref.n_features();
  fm.rows.reserve(disks.size());
  std::size_t empty = 0;
  for (std::size_t i = 0; i < disks.size(); ++i) {
    if (disks[i].empty()) ++empty;
    std::optional<std::uint64_t> n;
    if (trials == TailTrials::record_length) n = record_lengths[i];
    fm.rows.push_back(tail_feature_row(disks[i], ref, n));
  }
  if (empty) std::cerr << "warning: " << empty << " disk(s) without chains got all-zero tail features\n";
  return fm;
}

inline FeatureMatrix build_features_raw(const std::vector<ChainList>& disks, std::size_t n_features) {
  if (n_features == 0) throw domain_error("need at least one feature");
  FeatureMatrix fm;
  fm.mode = FeatureMode::raw;
  fm.n_features = n_features;
  fm.rows.reserve(disks.size());
  for (const auto& d : disks) fm.rows.push_back(raw_feature_row(d, n_features));
  return fm;
}

/// Header `label,f1,...,fn`; label is -1 for unlabeled rows.
inline void write_feature_matrix(std::ostream& out, const FeatureMatrix& fm) {
  out << "label";
  for (std::size_t c = 1; c <= fm.n_features; ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t i = 0; i < fm.rows.size(); ++i) {
    out << (fm.labels.empty() ? unlabeled : fm.labels[i]);
    for (double v : fm.rows[i]) out << ',' << text_io::format_double(v);
    out << '\n';
  }
}

inline FeatureMatrix read_feature_matrix(std::istream& in, const std::string& source = "<stream>") {
  FeatureMatrix fm;
  std::string line;
  if (!std::getline(in, line)) throw format_error(source + ": empty feature file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = text_io::split(line, ',');
  if (header.empty() || header[0] != "label") throw format_error(source + ":1: header must start with label");
  fm.n_features = header.size() - 1;
  for (std::size_t c = 1; c <= fm.n_features; ++c)
    if (header[c] != "f" + std::to_string(c)) throw format_error(source + ":1: unexpected column " + header[c]);
  std::size_t lineno = 1;
  bool any_label = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = text_io::split(line, ',');
    if (f.size() != fm.n_features + 1)
      throw format_error(text_io::where(source, lineno) + "expected " + std::to_string(fm.n_features + 1) + " fields");
    const auto label = text_io::parse_i64(f[0], source, lineno);
    if (label < -1 || label > 1) throw format_error(text_io::where(source, lineno) + "label must be -1, 0 or 1");
    any_label = any_label || label != unlabeled;
    fm.labels.push_back(static_cast<int>(label));
    std::vector<double> row;
    for (std::size_t c = 1; c < f.size(); ++c) row.push_back(text_io::parse_double(f[c], source, lineno));
    fm.rows.push_back(std::move(row));
  }
  if (!any_label) fm.labels.clear();
  return fm;
}

inline void save_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& fm) {
  auto out = text_io::open_out(path);
  write_feature_matrix(out, fm);
}

inline FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  auto in = text_io::open_in(path);
  return read_feature_matrix(in, path.string());
}

} // namespace chainsight
