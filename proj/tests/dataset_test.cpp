#include <chainsight/dataset.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "test_util.hpp"

using namespace chainsight;

namespace {

// A scaled-down disk so that many rows stay cheap.
ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.total_bytes = 8 * GiB;
  cfg.free_bytes = 2 * GiB;
  cfg.cover_bytes = GiB / 2;
  cfg.hidden_sizes = {16 * MiB, 64 * MiB};
  cfg.train_size = 40;
  cfg.test_size = 20;
  cfg.n_features = 3;
  cfg.master_seed = 7;
  return cfg;
}

const Corpus& fixture() {
  static const Corpus c = load_corpus(CHAINSIGHT_FIXTURE_CORPUS);
  return c;
}

std::size_t singletons(const ChainList& l) { return static_cast<std::size_t>(std::count(l.begin(), l.end(), 1u)); }

} // namespace

TEST(Corpus, LoadsChainListFiles) {
  testutil::TempDir dir("corpus");
  testutil::write_file(dir / "a.chains.csv", "1,1,3\n2\n");
  testutil::write_file(dir / "b.chains.csv", "4,4\n");
  testutil::write_file(dir / "c.chains.csv", "1\n");
  testutil::write_file(dir / "notes.txt", "ignored");
  const auto c = load_corpus(dir.path());
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.entries[0].name, "a");
  EXPECT_DOUBLE_EQ(c.entries[0].distribution.prob(1), 0.5);
  EXPECT_DOUBLE_EQ(c.entries[1].distribution.prob(4), 1.0);
  EXPECT_TRUE(c.provenance.empty());
}

TEST(Corpus, MixesRecordsDistributionsAndManifest) {
  testutil::TempDir dir("corpus");
  save_change_record(dir / "r.chgrec", ChangeRecord::from_bits(std::vector<int>{1, 1, 0, 1, 0, 0, 1, 1}));
  testutil::write_file(dir / "s.chains.csv", "3\n");
  testutil::write_file(dir / "t.dist.csv", "c,probability,count\n1,0.25,1\n5,0.75,3\n");
  testutil::write_file(dir / "manifest.json", R"({"provenance": ["lab disks", "2024 capture"]})");
  const auto c = load_corpus(dir.path());
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.entries[0].name, "r");
  EXPECT_EQ(c.entries[0].distribution.counts, (std::map<std::uint32_t, std::uint64_t>{{1, 1}, {2, 2}}));
  EXPECT_DOUBLE_EQ(c.entries[2].distribution.prob(5), 0.75);
  EXPECT_EQ(c.provenance, (std::vector<std::string>{"lab disks", "2024 capture"}));
}

TEST(Corpus, RejectsUnknownDataFiles) {
  testutil::TempDir dir("corpus");
  testutil::write_file(dir / "a.chains.csv", "1\n");
  testutil::write_file(dir / "mystery.csv", "1,2\n");
  EXPECT_THROW(load_corpus(dir.path()), format_error);
}

TEST(Corpus, RejectsEmptyOrMissing) {
  testutil::TempDir dir("corpus");
  EXPECT_THROW(load_corpus(dir.path()), format_error);
  EXPECT_THROW(load_corpus(dir / "missing"), format_error);
  testutil::write_file(dir / "a.chains.csv", "\n\n");
  EXPECT_THROW(load_corpus(dir.path()), format_error);
}

TEST(Corpus, FixtureIsReadable) {
  const auto& c = fixture();
  EXPECT_EQ(c.size(), 40u);
  ASSERT_FALSE(c.provenance.empty());
  EXPECT_NE(c.provenance[0].find("make_fixture_corpus"), std::string::npos);
}

TEST(Config, JsonRoundTrip) {
  auto cfg = small_config();
  cfg.train_chain_groups = {1, 2};
  cfg.feature_mode = FeatureMode::tail;
  cfg.size_mode = SizeMode::mixed;
  cfg.training.epochs = 77;
  const auto back = experiment_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.train_chain_groups, (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(back.training.epochs, 77u);
}

TEST(Config, AcceptsSizeStrings) {
  const auto cfg = experiment_config_from_json(
      nlohmann::json{{"free_bytes", "50GiB"}, {"hidden_sizes", {"0.25GiB", "512M"}}, {"cover_bytes", 1024}});
  EXPECT_EQ(cfg.free_bytes, 50 * GiB);
  EXPECT_EQ(cfg.hidden_sizes, (std::vector<std::uint64_t>{GiB / 4, 512 * MiB}));
  EXPECT_EQ(cfg.cover_bytes, 1024u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"trian_size", 3}}), format_error);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"test_dirty_fraction", 1.5}}), domain_error);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"feature_mode", "log"}}), format_error);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::array()), format_error);
  testutil::TempDir dir("config");
  testutil::write_file(dir / "c.json", "{ not json");
  EXPECT_THROW(load_experiment_config(dir / "c.json"), format_error);
}

TEST(Labels, StratificationIsExact) {
  for (auto [n, f, want] : {std::tuple{10000u, 0.5, 5000}, std::tuple{2500u, 0.05, 125}, std::tuple{500u, 0.05, 25}}) {
    const auto labels = detail::stratified_labels(n, f, 3);
    ASSERT_EQ(labels.size(), n);
    EXPECT_EQ(std::count(labels.begin(), labels.end(), 1), want);
  }
}

TEST(Labels, ShuffleIsNotSorted) {
  const auto labels = detail::stratified_labels(1000, 0.5, 4);
  EXPECT_FALSE(std::is_sorted(labels.begin(), labels.end()));
  EXPECT_FALSE(std::is_sorted(labels.rbegin(), labels.rend()));
}

TEST(Split, ReferenceEntriesAreHeldOut) {
  const auto cfg = small_config();
  for (std::uint32_t run = 0; run < 5; ++run) {
    const auto s = split_corpus(40, cfg, run);
    EXPECT_EQ(s.reference.size(), 8u);
    EXPECT_EQ(s.pool.size(), 32u);
    std::set<std::size_t> all(s.reference.begin(), s.reference.end());
    all.insert(s.pool.begin(), s.pool.end());
    EXPECT_EQ(all.size(), 40u);
  }
  EXPECT_NE(split_corpus(40, cfg, 0).reference, split_corpus(40, cfg, 1).reference);
  EXPECT_THROW(split_corpus(1, cfg, 0), domain_error);
}

TEST(Datasets, RowsComeOnlyFromThePool) {
  const auto cfg = small_config();
  const auto pairs = generate_datasets(fixture(), cfg, 2, cfg.hidden_sizes);
  const auto split = split_corpus(fixture().size(), cfg, 2);
  const std::set<std::size_t> ref(split.reference.begin(), split.reference.end());
  for (const auto& p : pairs)
    for (const auto* ds : {&p.train, &p.test})
      for (const auto& m : ds->meta) ASSERT_FALSE(ref.count(m.entry)) << "entry " << m.entry;
}

TEST(Datasets, ShapesAndLabelCounts) {
  const auto cfg = small_config();
  const auto pairs = generate_datasets(fixture(), cfg, 0, cfg.hidden_sizes);
  ASSERT_EQ(pairs.size(), 2u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.train.size(), 40u);
    EXPECT_EQ(p.train.dirty_count(), 20u);
    EXPECT_EQ(p.test.size(), 20u);
    EXPECT_EQ(p.test.dirty_count(), 1u);
    for (const auto& row : p.train.features.rows) EXPECT_EQ(row.size(), 3u);
  }
}

TEST(Datasets, SizesShareCleanRowsAndPublicChanges) {
  const auto cfg = small_config();
  const auto pairs = generate_datasets(fixture(), cfg, 1, cfg.hidden_sizes);
  for (std::size_t i = 0; i < pairs[0].train.size(); ++i) {
    const auto& a = pairs[0].train;
    const auto& b = pairs[1].train;
    EXPECT_EQ(a.meta[i].entry, b.meta[i].entry);
    EXPECT_EQ(a.meta[i].seed, b.meta[i].seed);
    if (a.features.labels[i] == 0) EXPECT_EQ(a.features.rows[i], b.features.rows[i]);
  }
}

TEST(Datasets, AreDeterministic) {
  const auto cfg = small_config();
  const auto a = generate_datasets(fixture(), cfg, 3, cfg.hidden_sizes);
  const auto b = generate_datasets(fixture(), cfg, 3, cfg.hidden_sizes);
  for (std::size_t s = 0; s < a.size(); ++s) {
    EXPECT_EQ(a[s].train.features.rows, b[s].train.features.rows);
    EXPECT_EQ(a[s].test.features.rows, b[s].test.features.rows);
  }
  const auto c = generate_datasets(fixture(), cfg, 4, cfg.hidden_sizes);
  EXPECT_NE(a[0].train.features.rows, c[0].train.features.rows);
}

// Each dataset row must equal the chain counts of the full, unshortcut
// simulation of that row.
TEST(Datasets, RowsMatchDirectSimulation) {
  auto cfg = small_config();
  cfg.train_chain_groups = {1, 2};
  for (auto mode : {FeatureMode::raw, FeatureMode::tail}) {
    cfg.feature_mode = mode;
    const auto pairs = generate_datasets(fixture(), cfg, 5, cfg.hidden_sizes);
    const auto ref = reference_for(fixture(), split_corpus(fixture().size(), cfg, 5), cfg.n_features);
    for (const auto& p : pairs) {
      for (const auto* ds : {&p.train, &p.test}) {
        for (std::size_t i = 0; i < ds->size(); ++i) {
          const auto& m = ds->meta[i];
          const bool dirty = ds->features.labels[i] == 1;
          ASSERT_EQ(dirty, m.hidden_bytes != 0);
          const auto chains = generate_sample(
              fixture().entries[m.entry].distribution, cfg, dirty ? std::optional(m.hidden_bytes) : std::nullopt,
              m.seed, dirty ? std::optional(m.chain_group) : std::nullopt);
          const auto want = mode == FeatureMode::raw ? raw_feature_row(chains, cfg.n_features)
                                                     : tail_feature_row(chains, ref);
          ASSERT_EQ(ds->features.rows[i], want) << "row " << i;
        }
      }
    }
  }
}

TEST(Datasets, TrainGroupsFollowConfiguration) {
  auto cfg = small_config();
  cfg.train_chain_groups = {2, 3};
  cfg.hidden.chain_group = 1;
  const auto pair = generate_dataset(fixture(), cfg, 0, 16 * MiB);
  for (std::size_t i = 0; i < pair.train.size(); ++i)
    if (pair.train.features.labels[i]) EXPECT_TRUE(pair.train.meta[i].chain_group == 2 || pair.train.meta[i].chain_group == 3);
  for (std::size_t i = 0; i < pair.test.size(); ++i)
    if (pair.test.features.labels[i]) EXPECT_EQ(pair.test.meta[i].chain_group, 1u);
}

TEST(Datasets, MixedModeDrawsSizesFromTheList) {
  auto cfg = small_config();
  const auto pair = generate_dataset(fixture(), cfg, 0);
  EXPECT_EQ(pair.hidden_bytes, 0u);
  std::set<std::uint64_t> seen;
  for (const auto& m : pair.train.meta)
    if (m.hidden_bytes) seen.insert(m.hidden_bytes);
  EXPECT_EQ(seen, (std::set<std::uint64_t>{16 * MiB, 64 * MiB}));
}

TEST(Samples, HiddenVolumeAddsSingletons) {
  const ExperimentConfig cfg;
  const auto& entry = fixture().entries[0].distribution;
  const auto clean = generate_sample(entry, cfg, std::nullopt, 11);
  const auto dirty = generate_sample(entry, cfg, 5 * GiB / 4, 11);
  EXPECT_GT(singletons(dirty), singletons(clean));
  EXPECT_GT(dirty.size(), clean.size());
}

TEST(Samples, HiddenWritesAloneAreMostlySingletons) {
  ExperimentConfig cfg;
  cfg.cover_bytes = 0;
  const auto chains = generate_sample(fixture().entries[0].distribution, cfg, GiB / 4, 12);
  ASSERT_FALSE(chains.empty());
  EXPECT_GE(static_cast<double>(singletons(chains)) / static_cast<double>(chains.size()), 0.95);
}
