#pragma once

// Corpus ingestion and labeled dataset synthesis.
//
// A corpus is a directory of per-record chain data:
//   *.chains.csv   chain lists, one line per record segment; all lines of a
//                  file are pooled into one corpus entry
//   *.chgrec       binary change records, converted with extract_chains
//   *.dist.csv     distributions with counts (c,probability,count)
//   manifest.json  optional, {"provenance": "..."} or a list of strings
// Entries are ordered by file name. Anything else that looks like data
// (other *.csv, *.json, *.bin) is rejected rather than guessed at.
//
// Every random choice in a dataset is a function of (master_seed, run, split,
// row), never of the hidden-volume size, so datasets for different sizes in
// the same run share their clean rows and their public changes.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "chains.hpp"
#include "change_record.hpp"
#include "classifier.hpp"
#include "errors.hpp"
#include "features.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "text_io.hpp"
#include "units.hpp"

namespace chainsight {

struct CorpusEntry {
  std::string name;
  ChainDistribution distribution;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::vector<std::string> provenance;
  std::size_t size() const noexcept { return entries.size(); }
};

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace detail

inline Corpus load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw format_error("corpus directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });

  Corpus corpus;
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    if (name == "manifest.json") {
      auto in = text_io::open_in(path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw format_error(path.string() + ": " + e.what());
      }
      const auto& p = j.contains("provenance") ? j["provenance"] : j;
      if (p.is_string()) corpus.provenance.push_back(p.get<std::string>());
      else if (p.is_array())
        for (const auto& s : p) corpus.provenance.push_back(s.is_string() ? s.get<std::string>() : s.dump());
      else corpus.provenance.push_back(p.dump());
      continue;
    }
    CorpusEntry entry;
    if (detail::ends_with(name, ".chains.csv")) {
      entry.name = name.substr(0, name.size() - 11);
      const auto lists = load_chain_lists(path);
      try {
        entry.distribution = empirical_distribution(lists);
      } catch (const domain_error&) {
        throw format_error(path.string() + ": record has no chains");
      }
    } else if (detail::ends_with(name, ".chgrec")) {
      entry.name = name.substr(0, name.size() - 7);
      const auto chains = extract_chains(load_change_record(path));
      if (chains.empty()) throw format_error(path.string() + ": record has no changes");
      entry.distribution = empirical_distribution(chains);
    } else if (detail::ends_with(name, ".dist.csv")) {
      entry.name = name.substr(0, name.size() - 9);
      entry.distribution = load_distribution(path);
    } else if (detail::ends_with(name, ".csv") || detail::ends_with(name, ".json") ||
               detail::ends_with(name, ".bin")) {
      throw format_error(path.string() + ": unrecognized corpus file (expected *.chains.csv, *.chgrec, "
                                         "*.dist.csv or manifest.json)");
    } else {
      continue;
    }
    corpus.entries.push_back(std::move(entry));
  }
  if (corpus.entries.empty()) throw format_error("corpus " + dir.string() + " contains no records");
  return corpus;
}

enum class SizeMode { per_size, mixed };

struct ExperimentConfig {
  std::uint64_t total_bytes = TiB;
  std::uint64_t free_bytes = 100 * GiB;
  std::uint32_t block_size = 4096;
  std::uint64_t cover_bytes = 25 * GiB;
  std::vector<std::uint64_t> hidden_sizes = {GiB / 4, GiB / 2, 3 * GiB / 4, GiB, 5 * GiB / 4};
  HiddenVolumeConfig hidden{};
  /// Write grouping of the dirty training rows; empty means hidden.chain_group.
  /// Lets the classifier be trained on one writer and tested on another.
  std::vector<std::uint32_t> train_chain_groups;
  std::uint64_t train_size = 10000;
  double train_dirty_fraction = 0.5;
  std::uint64_t test_size = 2500;
  double test_dirty_fraction = 0.05;
  std::size_t n_features = 1;
  FeatureMode feature_mode = FeatureMode::raw;
  TailTrials tail_trials = TailTrials::chain_count;
  double reference_fraction = 0.2;
  SizeMode size_mode = SizeMode::per_size;
  std::uint32_t repetitions = 100;
  std::uint64_t master_seed = 0;
  TrainOptions training{};

  DiskModel disk() const { return DiskModel::from_bytes(total_bytes, free_bytes, block_size); }

  void validate() const {
    disk().validate();
    hidden.validate();
    for (auto g : train_chain_groups)
      if (g == 0) throw domain_error("train chain groups must be at least 1");
    auto frac_ok = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!frac_ok(train_dirty_fraction) || !frac_ok(test_dirty_fraction) || !frac_ok(reference_fraction))
      throw domain_error("fractions must lie in [0,1]");
    if (train_size == 0 || test_size == 0) throw domain_error("train and test sizes must be positive");
    if (n_features == 0) throw domain_error("n_features must be at least 1");
    if (repetitions == 0) throw domain_error("repetitions must be at least 1");
    if (hidden_sizes.empty()) throw domain_error("hidden_sizes must not be empty");
    for (auto s : hidden_sizes)
      if (s == 0) throw domain_error("hidden sizes must be positive");
    if (training.epochs == 0 || !(training.learning_rate > 0)) throw domain_error("bad training options");
  }

  std::vector<std::uint32_t> effective_train_groups() const {
    return train_chain_groups.empty() ? std::vector<std::uint32_t>{hidden.chain_group} : train_chain_groups;
  }
};

// ---- JSON ------------------------------------------------------------------

namespace detail {

inline std::uint64_t json_size(const nlohmann::json& j, const char* key) {
  if (j.is_number_unsigned() || j.is_number_integer()) {
    if (j.get<std::int64_t>() < 0) throw format_error(std::string(key) + " must be non-negative");
    return j.get<std::uint64_t>();
  }
  if (j.is_string()) return parse_size(j.get<std::string>());
  throw format_error(std::string(key) + ": expected a byte count or a size string");
}

} // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["total_bytes"] = c.total_bytes;
  j["free_bytes"] = c.free_bytes;
  j["block_size"] = c.block_size;
  j["cover_bytes"] = c.cover_bytes;
  j["hidden_sizes"] = c.hidden_sizes;
  j["hidden"] = {{"copies", c.hidden.copies},
                 {"reconstruct_threshold", c.hidden.reconstruct_threshold},
                 {"chain_group", c.hidden.chain_group}};
  j["train_chain_groups"] = c.train_chain_groups;
  j["train_size"] = c.train_size;
  j["train_dirty_fraction"] = c.train_dirty_fraction;
  j["test_size"] = c.test_size;
  j["test_dirty_fraction"] = c.test_dirty_fraction;
  j["n_features"] = c.n_features;
  j["feature_mode"] = feature_mode_name(c.feature_mode);
  j["tail_trials"] = c.tail_trials == TailTrials::chain_count ? "chains" : "record_length";
  j["reference_fraction"] = c.reference_fraction;
  j["size_mode"] = c.size_mode == SizeMode::per_size ? "per_size" : "mixed";
  j["repetitions"] = c.repetitions;
  j["master_seed"] = c.master_seed;
  j["training"] = {{"learning_rate", c.training.learning_rate},
                   {"epochs", c.training.epochs},
                   {"l2", c.training.l2},
                   {"threshold", c.training.threshold}};
  return j;
}

/// Missing keys keep their defaults; unknown keys are an error.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "total_bytes", "free_bytes", "block_size", "cover_bytes", "hidden_sizes", "hidden",
      "train_chain_groups", "train_size", "train_dirty_fraction", "test_size", "test_dirty_fraction",
      "n_features", "feature_mode", "tail_trials", "reference_fraction", "size_mode", "repetitions",
      "master_seed", "training"};
  if (!j.is_object()) throw format_error("experiment config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw format_error("unknown config key \"" + k + "\"");
  ExperimentConfig c;
  try {
    if (j.contains("total_bytes")) c.total_bytes = detail::json_size(j["total_bytes"], "total_bytes");
    if (j.contains("free_bytes")) c.free_bytes = detail::json_size(j["free_bytes"], "free_bytes");
    if (j.contains("block_size")) c.block_size = j["block_size"].get<std::uint32_t>();
    if (j.contains("cover_bytes")) c.cover_bytes = detail::json_size(j["cover_bytes"], "cover_bytes");
    if (j.contains("hidden_sizes")) {
      c.hidden_sizes.clear();
      for (const auto& s : j["hidden_sizes"]) c.hidden_sizes.push_back(detail::json_size(s, "hidden_sizes"));
    }
    if (j.contains("hidden")) {
      const auto& h = j["hidden"];
      if (h.contains("copies")) c.hidden.copies = h["copies"].get<std::uint32_t>();
      if (h.contains("reconstruct_threshold")) c.hidden.reconstruct_threshold = h["reconstruct_threshold"].get<std::uint32_t>();
      if (h.contains("chain_group")) c.hidden.chain_group = h["chain_group"].get<std::uint32_t>();
    }
    if (j.contains("train_chain_groups")) c.train_chain_groups = j["train_chain_groups"].get<std::vector<std::uint32_t>>();
    if (j.contains("train_size")) c.train_size = j["train_size"].get<std::uint64_t>();
    if (j.contains("train_dirty_fraction")) c.train_dirty_fraction = j["train_dirty_fraction"].get<double>();
    if (j.contains("test_size")) c.test_size = j["test_size"].get<std::uint64_t>();
    if (j.contains("test_dirty_fraction")) c.test_dirty_fraction = j["test_dirty_fraction"].get<double>();
    if (j.contains("n_features")) c.n_features = j["n_features"].get<std::size_t>();
    if (j.contains("feature_mode")) c.feature_mode = feature_mode_from_name(j["feature_mode"].get<std::string>());
    if (j.contains("tail_trials")) {
      const auto t = j["tail_trials"].get<std::string>();
      if (t == "chains") c.tail_trials = TailTrials::chain_count;
      else if (t == "record_length") c.tail_trials = TailTrials::record_length;
      else throw format_error("tail_trials must be \"chains\" or \"record_length\"");
    }
    if (j.contains("reference_fraction")) c.reference_fraction = j["reference_fraction"].get<double>();
    if (j.contains("size_mode")) {
      const auto m = j["size_mode"].get<std::string>();
      if (m == "per_size") c.size_mode = SizeMode::per_size;
      else if (m == "mixed") c.size_mode = SizeMode::mixed;
      else throw format_error("size_mode must be \"per_size\" or \"mixed\"");
    }
    if (j.contains("repetitions")) c.repetitions = j["repetitions"].get<std::uint32_t>();
    if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
    if (j.contains("training")) {
      const auto& t = j["training"];
      if (t.contains("learning_rate")) c.training.learning_rate = t["learning_rate"].get<double>();
      if (t.contains("epochs")) c.training.epochs = t["epochs"].get<std::uint32_t>();
      if (t.contains("l2")) c.training.l2 = t["l2"].get<double>();
      if (t.contains("threshold")) c.training.threshold = t["threshold"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("experiment config: ") + e.what());
  } catch (const domain_error& e) {
    throw format_error(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  auto in = text_io::open_in(path);
  try {
    return experiment_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path.string() + ": " + e.what());
  } catch (const format_error& e) {
    throw format_error(path.string() + ": " + e.what());
  }
}

// ---- samples and datasets ----------------------------------------------------

struct RowMeta {
  std::size_t entry = 0;
  std::uint64_t hidden_bytes = 0;
  std::uint32_t chain_group = 0; // 0 for clean rows
  std::uint64_t seed = 0;
};

struct LabeledDataset {
  FeatureMatrix features;
  std::vector<RowMeta> meta;
  std::size_t size() const noexcept { return features.size(); }
  std::size_t dirty_count() const {
    return static_cast<std::size_t>(std::count(features.labels.begin(), features.labels.end(), 1));
  }
};

namespace seed_tag {
inline constexpr std::uint64_t public_changes = 1;
inline constexpr std::uint64_t hidden_writes = 2;
inline constexpr std::uint64_t entry = 3;
inline constexpr std::uint64_t size_pick = 4;
inline constexpr std::uint64_t group_pick = 5;
inline constexpr std::uint64_t labels = 6;
inline constexpr std::uint64_t holdout = 7;
inline constexpr std::uint64_t row = 8;
} // namespace seed_tag

/// Public changes drawn from `entry`, plus a hidden volume when hidden_bytes
/// is set; returns the chains of the combined record.
inline ChainList generate_sample(const ChainDistribution& entry, const ExperimentConfig& cfg,
                                 std::optional<std::uint64_t> hidden_bytes, std::uint64_t seed,
                                 std::optional<std::uint32_t> chain_group = std::nullopt) {
  const DiskModel disk = cfg.disk();
  Rng public_rng(derive_seed(seed, {seed_tag::public_changes}));
  const RunSet runs = sample_public_runs(disk, PublicChangeConfig{cfg.cover_bytes, entry}, public_rng);
  if (!hidden_bytes || *hidden_bytes == 0) return merge_to_chains(runs, {});
  HiddenVolumeConfig h = cfg.hidden;
  h.data_bytes = *hidden_bytes;
  if (chain_group) h.chain_group = *chain_group;
  Rng hidden_rng(derive_seed(seed, {seed_tag::hidden_writes}));
  const auto carriers = sample_hidden_writes(disk, h, hidden_rng);
  return merge_to_chains(runs, carriers);
}

/// Corpus indices used as the clean reference set for a run, and the rest.
struct CorpusSplit {
  std::vector<std::size_t> reference;
  std::vector<std::size_t> pool;
};

inline CorpusSplit split_corpus(std::size_t corpus_size, const ExperimentConfig& cfg, std::uint32_t run) {
  if (corpus_size < 2) throw domain_error("corpus needs at least 2 entries to hold out a reference set");
  std::vector<std::size_t> idx(corpus_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.master_seed, {run, seed_tag::holdout}));
  for (std::size_t i = corpus_size - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
  auto n_ref = static_cast<std::size_t>(std::llround(cfg.reference_fraction * static_cast<double>(corpus_size)));
  n_ref = std::clamp<std::size_t>(n_ref, 1, corpus_size - 1);
  CorpusSplit s;
  s.reference.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_ref));
  s.pool.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_ref), idx.end());
  std::sort(s.reference.begin(), s.reference.end());
  std::sort(s.pool.begin(), s.pool.end());
  return s;
}

inline ReferenceProbs reference_for(const Corpus& corpus, const CorpusSplit& split, std::size_t n_features) {
  std::vector<const ChainDistribution*> dists;
  for (auto i : split.reference) dists.push_back(&corpus.entries[i].distribution);
  return reference_from_distribution(pool_distributions(dists), n_features);
}

/// Train/test pair for one hidden size (or the mixed-size pair).
struct DatasetPair {
  std::uint64_t hidden_bytes = 0; // 0 in mixed mode
  LabeledDataset train;
  LabeledDataset test;
};

namespace detail {

inline std::vector<int> stratified_labels(std::uint64_t n, double dirty_fraction, std::uint64_t seed) {
  const auto dirty = static_cast<std::uint64_t>(std::llround(dirty_fraction * static_cast<double>(n)));
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(dirty, n)), 1);
  Rng rng(seed);
  for (std::uint64_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
  return labels;
}

struct FeatureContext {
  FeatureMode mode;
  std::size_t n_features;
  const ReferenceProbs* ref;
  std::optional<std::uint64_t> trials;

  std::vector<double> row(const ChainCounts& counts) const {
    if (mode == FeatureMode::raw) return raw_feature_row(counts, n_features);
    return tail_feature_row(counts, *ref, trials);
  }
};

} // namespace detail

/// Datasets for every requested size of one run. In per-size mode `sizes`
/// lists the sizes to build; in mixed mode it is ignored and one pair is
/// returned whose dirty rows draw their size from cfg.hidden_sizes.
enum class Splits { both, train_only, test_only };

inline std::vector<DatasetPair> generate_datasets(const Corpus& corpus, const ExperimentConfig& cfg,
                                                  std::uint32_t run, const std::vector<std::uint64_t>& sizes,
                                                  Splits which = Splits::both) {
  cfg.validate();
  const CorpusSplit split = split_corpus(corpus.size(), cfg, run);
  const DiskModel disk = cfg.disk();

  std::optional<ReferenceProbs> ref;
  if (cfg.feature_mode == FeatureMode::tail) ref = reference_for(corpus, split, cfg.n_features);
  detail::FeatureContext fx{cfg.feature_mode, cfg.n_features, ref ? &*ref : nullptr, std::nullopt};
  if (cfg.tail_trials == TailTrials::record_length) fx.trials = disk.total_blocks;

  const bool mixed = cfg.size_mode == SizeMode::mixed;
  const std::vector<std::uint64_t> slots = mixed ? std::vector<std::uint64_t>{0} : sizes;
  if (slots.empty()) throw domain_error("no hidden sizes requested");
  std::vector<DatasetPair> out(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) out[s].hidden_bytes = slots[s];

  for (int split_id = 0; split_id < 2; ++split_id) {
    const bool is_train = split_id == 0;
    if ((is_train && which == Splits::test_only) || (!is_train && which == Splits::train_only)) continue;
    const std::uint64_t n = is_train ? cfg.train_size : cfg.test_size;
    const double frac = is_train ? cfg.train_dirty_fraction : cfg.test_dirty_fraction;
    const std::uint64_t split_seed = derive_seed(cfg.master_seed, {run, static_cast<std::uint64_t>(split_id)});
    const auto labels = detail::stratified_labels(n, frac, derive_seed(split_seed, {seed_tag::labels}));
    const auto groups = is_train ? cfg.effective_train_groups() : std::vector<std::uint32_t>{cfg.hidden.chain_group};

    for (auto& pair : out) {
      auto& ds = is_train ? pair.train : pair.test;
      ds.features.mode = cfg.feature_mode;
      ds.features.n_features = cfg.n_features;
      ds.features.rows.reserve(n);
      ds.features.labels = labels;
      ds.meta.reserve(n);
    }

    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint64_t row_seed = derive_seed(split_seed, {seed_tag::row, i});
      const std::size_t entry =
          split.pool[Rng(derive_seed(row_seed, {seed_tag::entry})).below(split.pool.size())];
      Rng public_rng(derive_seed(row_seed, {seed_tag::public_changes}));
      auto drawn =
          draw_public_chains(disk, PublicChangeConfig{cfg.cover_bytes, corpus.entries[entry].distribution}, public_rng);

      if (labels[i] == 0) {
        // Public runs never touch, so a clean disk's chains are the drawn lengths.
        const auto feat = fx.row(count_chains(drawn, cfg.n_features));
        for (auto& pair : out) {
          auto& ds = is_train ? pair.train : pair.test;
          ds.features.rows.push_back(feat);
          ds.meta.push_back(RowMeta{entry, 0, 0, row_seed});
        }
        continue;
      }

      const std::uint32_t group = groups[Rng(derive_seed(row_seed, {seed_tag::group_pick})).below(groups.size())];
      std::vector<HiddenVolumeConfig> volumes;
      for (auto& pair : out) {
        HiddenVolumeConfig h = cfg.hidden;
        h.data_bytes = pair.hidden_bytes;
        if (mixed)
          h.data_bytes =
              cfg.hidden_sizes[Rng(derive_seed(row_seed, {seed_tag::size_pick})).below(cfg.hidden_sizes.size())];
        h.chain_group = group;
        volumes.push_back(h);
      }
      const std::uint64_t keep_from = nested_counts_supported(disk, volumes) ? disk.extents().front().start : 0;
      const RunSet runs = place_public_runs(disk, std::move(drawn), public_rng, keep_from);
      Rng hidden_rng(derive_seed(row_seed, {seed_tag::hidden_writes}));
      const auto counts = nested_hidden_counts(disk, runs, volumes, hidden_rng, cfg.n_features);
      for (std::size_t s = 0; s < out.size(); ++s) {
        auto& ds = is_train ? out[s].train : out[s].test;
        ds.features.rows.push_back(fx.row(counts[s]));
        ds.meta.push_back(RowMeta{entry, volumes[s].data_bytes, group, row_seed});
      }
    }
  }
  return out;
}

/// Train/test datasets for a single hidden size (per-size mode) or for the
/// configured size mix when `hidden_bytes` is empty.
inline DatasetPair generate_dataset(const Corpus& corpus, const ExperimentConfig& cfg, std::uint32_t run,
                                    std::optional<std::uint64_t> hidden_bytes = std::nullopt) {
  ExperimentConfig c = cfg;
  if (hidden_bytes) {
    c.size_mode = SizeMode::per_size;
    return generate_datasets(corpus, c, run, {*hidden_bytes})[0];
  }
  c.size_mode = SizeMode::mixed;
  return generate_datasets(corpus, c, run, {})[0];
}

} // namespace chainsight
