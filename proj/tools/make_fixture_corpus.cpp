// Writes a small synthetic corpus of chain lists that look like public
// filesystem activity: a large share of single-block changes and a heavy,
// truncated power-law tail of longer contiguous writes.
//
//   make_fixture_corpus -o data/fixture_corpus [--entries 40] [--seed 1]

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chainsight/chains.hpp>
#include <chainsight/rng.hpp>
#include <chainsight/simulate.hpp>
#include <chainsight/text_io.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

struct Params {
  std::uint32_t entries = 40;
  std::uint32_t lines = 5;
  std::uint32_t chains_per_line = 1000;
  std::uint32_t max_chain = 4096;
  double p1_lo = 0.55, p1_hi = 0.70;
  double alpha_lo = 1.4, alpha_hi = 1.8;
  std::uint64_t seed = 1;
};

chainsight::ChainDistribution entry_model(double p1, double alpha, std::uint32_t max_chain) {
  std::map<std::uint32_t, double> w;
  double tail = 0;
  for (std::uint32_t c = 2; c <= max_chain; ++c) tail += std::pow(c, -alpha);
  chainsight::ChainDistribution d;
  d.probs[1] = p1;
  for (std::uint32_t c = 2; c <= max_chain; ++c) d.probs[c] = (1.0 - p1) * std::pow(c, -alpha) / tail;
  d.max_c = max_chain;
  return d;
}

} // namespace

int main(int argc, char** argv) {
  Params p;
  std::string out_dir;
  CLI::App app{"Generate the bundled synthetic chain corpus", "make_fixture_corpus"};
  app.add_option("-o,--output", out_dir, "Corpus directory to (re)write")->required();
  app.add_option("--entries", p.entries, "Number of corpus entries")->capture_default_str();
  app.add_option("--lines", p.lines, "Chain lists per entry")->capture_default_str();
  app.add_option("--chains-per-line", p.chains_per_line, "Chains per list")->capture_default_str();
  app.add_option("--max-chain", p.max_chain, "Longest chain")->capture_default_str();
  app.add_option("--p1-lo", p.p1_lo, "Lowest singleton share")->capture_default_str();
  app.add_option("--p1-hi", p.p1_hi, "Highest singleton share")->capture_default_str();
  app.add_option("--alpha-lo", p.alpha_lo, "Smallest tail exponent")->capture_default_str();
  app.add_option("--alpha-hi", p.alpha_hi, "Largest tail exponent")->capture_default_str();
  app.add_option("--seed", p.seed, "Generator seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json manifest;
    manifest["provenance"] = nlohmann::json::array();
    manifest["provenance"].push_back("synthetic chain lists from make_fixture_corpus");
    manifest["generator"] = {{"entries", p.entries},         {"lines", p.lines},
                             {"chains_per_line", p.chains_per_line}, {"max_chain", p.max_chain},
                             {"p1", {p.p1_lo, p.p1_hi}},     {"alpha", {p.alpha_lo, p.alpha_hi}},
                             {"seed", p.seed}};
    for (std::uint32_t e = 0; e < p.entries; ++e) {
      chainsight::Rng rng(chainsight::derive_seed(p.seed, {e}));
      const double p1 = p.p1_lo + (p.p1_hi - p.p1_lo) * rng.unit();
      const double alpha = p.alpha_lo + (p.alpha_hi - p.alpha_lo) * rng.unit();
      const chainsight::ChainSampler sampler(entry_model(p1, alpha, p.max_chain));
      std::vector<chainsight::ChainList> lists(p.lines);
      for (auto& l : lists)
        for (std::uint32_t i = 0; i < p.chains_per_line; ++i) l.push_back(sampler(rng));
      char name[32];
      std::snprintf(name, sizeof name, "record%02u.chains.csv", e);
      chainsight::save_chain_lists(std::filesystem::path(out_dir) / name, lists);
    }
    auto out = chainsight::text_io::open_out(std::filesystem::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
