#pragma once

// Block-change simulators for a disk with a public filesystem and, optionally,
// a hidden volume living in its free space.
//
// Public changes are drawn as whole chains from an empirical distribution and
// laid out over the entire disk so that no two chains touch; the drawn lengths
// therefore survive extraction unchanged. Hidden carriers go to uniformly
// chosen free blocks and may abut each other or public chains, which is what
// makes them visible.
//
// The experiment pipeline works on the sparse forms (RunSet plus sorted
// carrier indices) and never materialises a full-disk bit vector; the
// ChangeRecord-producing entry points are thin wrappers over the same
// samplers.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chains.hpp"
#include "change_record.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "sorted_sample.hpp"
#include "theory.hpp"

namespace chainsight {

struct Extent {
  std::uint64_t start = 0;
  std::uint64_t length = 0;
};

struct DiskModel {
  std::uint64_t total_blocks = 0;
  std::uint64_t free_blocks = 0;
  std::uint32_t block_size = 4096;
  /// Free-space map. Empty means one contiguous region at the end of the disk.
  std::vector<Extent> free_extents;

  static DiskModel from_bytes(std::uint64_t total_bytes, std::uint64_t free_bytes, std::uint32_t block_size) {
    DiskModel d;
    d.block_size = block_size;
    d.total_blocks = total_bytes / block_size;
    d.free_blocks = free_bytes / block_size;
    return d;
  }

  void validate() const {
    if (block_size == 0) throw domain_error("block size must be positive");
    if (free_blocks == 0 || free_blocks > total_blocks)
      throw domain_error("disk model needs 0 < free_blocks <= total_blocks");
    if (!free_extents.empty()) {
      std::uint64_t sum = 0, prev_end = 0;
      for (const auto& e : free_extents) {
        if (e.length == 0 || e.start < prev_end || e.start + e.length > total_blocks)
          throw domain_error("free extents must be nonempty, sorted, disjoint and inside the disk");
        prev_end = e.start + e.length;
        sum += e.length;
      }
      if (sum != free_blocks) throw domain_error("free extents do not add up to free_blocks");
    }
  }

  std::vector<Extent> extents() const {
    if (!free_extents.empty()) return free_extents;
    return {Extent{total_blocks - free_blocks, free_blocks}};
  }
};

struct HiddenVolumeConfig {
  std::uint64_t data_bytes = 0;
  std::uint32_t copies = 6;
  std::uint32_t reconstruct_threshold = 1;
  std::uint32_t chain_group = 1;

  void validate() const {
    if (copies == 0) throw domain_error("copies must be at least 1");
    if (reconstruct_threshold < 1 || reconstruct_threshold > copies)
      throw domain_error("reconstruct threshold must lie in 1..copies");
    if (chain_group == 0) throw domain_error("chain group must be at least 1");
  }

  std::uint64_t data_blocks(std::uint32_t block_size) const { return (data_bytes + block_size - 1) / block_size; }

  /// data_blocks * copies, rounded up to a whole number of groups.
  std::uint64_t carrier_blocks(std::uint32_t block_size) const {
    const std::uint64_t raw = data_blocks(block_size) * copies;
    return (raw + chain_group - 1) / chain_group * chain_group;
  }
};

struct PublicChangeConfig {
  std::uint64_t target_bytes = 0;
  ChainDistribution source_distribution;
};

/// Walker alias table over a chain-length pmf.
class ChainSampler {
public:
  explicit ChainSampler(const ChainDistribution& d) {
    for (auto [c, p] : d.probs)
      if (p > 0) lengths_.push_back(c), weights_.push_back(p);
    if (lengths_.empty()) throw domain_error("cannot sample from an empty chain distribution");
    const std::size_t n = lengths_.size();
    const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = weights_[i] * static_cast<double>(n) / total;
    prob_.assign(n, 1.0);
    alias_.resize(n);
    std::iota(alias_.begin(), alias_.end(), std::uint32_t{0});
    std::vector<std::uint32_t> small, large;
    for (std::uint32_t i = 0; i < n; ++i) (scaled[i] < 1.0 ? small : large).push_back(i);
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
  }

  /// One engine call per draw: the integer part of u * n picks the column and
  /// the fractional part decides between it and its alias.
  std::uint32_t operator()(Rng& rng) const {
    const double x = rng.unit() * static_cast<double>(lengths_.size());
    const auto i = std::min(static_cast<std::size_t>(x), lengths_.size() - 1);
    const std::uint32_t pick[2] = {lengths_[alias_[i]], lengths_[i]};
    return pick[(x - static_cast<double>(i)) < prob_[i]];
  }

private:
  std::vector<std::uint32_t> lengths_;
  std::vector<double> weights_;
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

struct Run {
  std::uint64_t start = 0;
  std::uint32_t length = 0;
};

/// Public changes in sparse form: runs sorted by start, never touching.
struct RunSet {
  std::uint64_t record_length = 0;
  std::vector<Run> runs;
  std::vector<std::uint32_t> drawn; // every drawn chain length, in disk order
  /// Index into `drawn` of runs.front(). Nonzero when placement stopped early
  /// and only the topmost runs were positioned.
  std::size_t first_run = 0;
  /// keep_from passed to place_public_runs.
  std::uint64_t placed_from = 0;

  bool complete() const noexcept { return first_run == 0 && runs.size() == drawn.size(); }
};

/// Chain lengths drawn until their total reaches the target size.
inline std::vector<std::uint32_t> draw_public_chains(const DiskModel& disk, const PublicChangeConfig& cfg, Rng& rng) {
  disk.validate();
  std::vector<std::uint32_t> drawn;
  const std::uint64_t target = (cfg.target_bytes + disk.block_size - 1) / disk.block_size;
  if (target == 0) return drawn;
  const ChainSampler sampler(cfg.source_distribution);
  std::uint64_t changed = 0;
  while (changed < target) {
    const auto c = sampler(rng);
    drawn.push_back(c);
    changed += c;
  }
  return drawn;
}

/// Places `drawn` uniformly among all arrangements on the disk in which no two
/// runs touch, in that order. Arrangements of m ordered runs of total length T
/// on n blocks correspond one-to-one with m-subsets of n - T + 1 slots; the
/// slots are drawn largest first, so runs are placed from the top of the disk
/// down. Placement stops at the first run that ends before block keep_from - 1
/// (keep_from = 0 places everything); the runs below it are left unplaced.
inline RunSet place_public_runs(const DiskModel& disk, std::vector<std::uint32_t> drawn, Rng& rng,
                                std::uint64_t keep_from = 0) {
  RunSet out;
  out.record_length = disk.total_blocks;
  out.drawn = std::move(drawn);
  out.placed_from = keep_from;
  const std::uint64_t m = out.drawn.size();
  if (m == 0) return out;
  std::uint64_t changed = 0;
  for (auto c : out.drawn) changed += c;
  if (changed > disk.total_blocks || disk.total_blocks - changed + 1 < m)
    throw capacity_error("public changes do not fit on the disk without touching (" + std::to_string(changed) +
                         " blocks in " + std::to_string(m) + " chains on " + std::to_string(disk.total_blocks) +
                         " blocks)");
  const std::uint64_t slots = disk.total_blocks - changed + 1;
  SortedSampler sampler(rng, slots, m);
  std::uint64_t before = changed; // blocks in runs 0..i-1
  std::vector<Run> top;
  for (std::uint64_t j = 0; j < m; ++j) {
    const std::uint64_t i = m - 1 - j;
    before -= out.drawn[i];
    const std::uint64_t slot = slots - 1 - sampler.next();
    const Run r{slot + before, out.drawn[i]};
    if (r.start + r.length < keep_from) {
      out.first_run = static_cast<std::size_t>(i + 1);
      break;
    }
    top.push_back(r);
  }
  out.runs.assign(top.rbegin(), top.rend());
  return out;
}

inline RunSet sample_public_runs(const DiskModel& disk, const PublicChangeConfig& cfg, Rng& rng) {
  return place_public_runs(disk, draw_public_chains(disk, cfg, rng), rng);
}

inline ChangeRecord materialize(const RunSet& runs) {
  if (!runs.complete()) throw domain_error("run set was only partly placed");
  ChangeRecord r(runs.record_length);
  for (const auto& run : runs.runs) r.set_range(run.start, run.length);
  return r;
}

inline ChangeRecord simulate_public_changes(const DiskModel& disk, const PublicChangeConfig& cfg,
                                            std::uint64_t seed) {
  Rng rng(seed);
  return materialize(sample_public_runs(disk, cfg, rng));
}

namespace detail {

/// Bitmap over free-space indices shifted by `offset` bits; only hidden
/// carriers are ever marked in it.
struct CarrierBitmap {
  std::vector<std::uint64_t>& words;
  std::uint64_t offset;

  bool test(std::uint64_t f) const {
    const std::uint64_t i = f + offset;
    return (words[i >> 6] >> (i & 63)) & 1U;
  }
  void mark(std::uint64_t f) {
    const std::uint64_t i = f + offset;
    words[i >> 6] |= std::uint64_t{1} << (i & 63);
  }
};

/// Rejection sampler for carrier positions. Draws are made one carrier (or one
/// group of chain_group carriers) at a time, so the first j carriers of a
/// larger volume are distributed exactly like a volume of j carriers drawn
/// from the same generator state.
class CarrierDraw {
public:
  CarrierDraw(std::uint64_t free, std::uint32_t group, CarrierBitmap bits, Rng& rng)
      : free_(free), group_(group), bits_(bits), rng_(rng) {
    if (group_ > free_) throw capacity_error("chain group larger than the free space");
  }

  /// Draws until `carriers` blocks are marked in total.
  void fill_to(std::uint64_t carriers) {
    if (carriers > free_)
      throw capacity_error("hidden volume needs " + std::to_string(carriers) + " carrier blocks but only " +
                           std::to_string(free_) + " are free");
    if (group_ == 1) {
      // Marking `missing` draws blindly and recounting consumes the same draws
      // as rejecting repeats one at a time: a round can add at most `missing`
      // new carriers, so the target is reached exactly on a round's last draw.
      while (marked_ < carriers) {
        const std::uint64_t missing = carriers - marked_;
        for (std::uint64_t i = 0; i < missing; ++i) bits_.mark(rng_.below(free_));
        marked_ = 0;
        for (auto w : bits_.words) marked_ += static_cast<std::uint64_t>(std::popcount(w));
      }
      return;
    }
    const std::uint64_t groups = carriers / group_;
    const std::uint64_t max_attempts = 64 * groups + 1024;
    while (marked_ / group_ < groups) {
      if (++attempts_ > max_attempts)
        throw capacity_error("could not place " + std::to_string(groups) + " groups of " + std::to_string(group_) +
                             " carriers without overlap");
      const std::uint64_t s = rng_.below(free_ - group_ + 1);
      bool clear = true;
      for (std::uint32_t j = 0; j < group_ && clear; ++j) clear = !bits_.test(s + j);
      if (!clear) continue;
      for (std::uint32_t j = 0; j < group_; ++j) bits_.mark(s + j);
      marked_ += group_;
    }
  }

private:
  std::uint64_t free_;
  std::uint32_t group_;
  CarrierBitmap bits_;
  Rng& rng_;
  std::uint64_t marked_ = 0;
  std::uint64_t attempts_ = 0;
};

} // namespace detail

/// Sorted disk indices of the hidden volume's carrier blocks. A plain volume
/// needing more than half the free space is drawn as the complement set.
inline std::vector<std::uint64_t> sample_hidden_writes(const DiskModel& disk, const HiddenVolumeConfig& cfg,
                                                       Rng& rng) {
  disk.validate();
  cfg.validate();
  const std::uint64_t carriers = cfg.carrier_blocks(disk.block_size);
  if (carriers == 0) return {};
  const std::uint64_t free = disk.free_blocks;
  if (carriers > free)
    throw capacity_error("hidden volume needs " + std::to_string(carriers) + " carrier blocks but only " +
                         std::to_string(free) + " are free");

  thread_local std::vector<std::uint64_t> bitmap;
  bitmap.assign((free + 63) / 64, 0);
  const bool complement = cfg.chain_group == 1 && carriers > free / 2;
  detail::CarrierDraw draw(free, cfg.chain_group, detail::CarrierBitmap{bitmap, 0}, rng);
  draw.fill_to(complement ? free - carriers : carriers);

  std::vector<std::uint64_t> out;
  out.reserve(carriers);
  const auto extents = disk.extents();
  std::size_t ext = 0;
  std::uint64_t ext_base = 0; // free index of extents[ext].start
  for (std::uint64_t w = 0; w < bitmap.size(); ++w) {
    std::uint64_t word = complement ? ~bitmap[w] : bitmap[w];
    if (w == bitmap.size() - 1 && free % 64 != 0) word &= (std::uint64_t{1} << (free % 64)) - 1;
    while (word) {
      const std::uint64_t f = w * 64 + static_cast<std::uint64_t>(std::countr_zero(word));
      word &= word - 1;
      while (f >= ext_base + extents[ext].length) ext_base += extents[ext++].length;
      out.push_back(extents[ext].start + (f - ext_base));
    }
  }
  return out;
}

inline std::vector<std::uint64_t> simulate_hidden_writes(const DiskModel& disk, const HiddenVolumeConfig& cfg,
                                                         std::uint64_t seed) {
  Rng rng(seed);
  return sample_hidden_writes(disk, cfg, rng);
}

/// Bitwise OR of a record with a set of changed block indices.
inline ChangeRecord merge_change_records(const ChangeRecord& record, std::span<const std::uint64_t> hidden) {
  ChangeRecord out = record;
  for (auto i : hidden) {
    if (i >= out.length())
      throw shape_error("hidden index " + std::to_string(i) + " outside record of length " +
                        std::to_string(out.length()));
    out.set(i);
  }
  return out;
}

/// Chain list of the union of sorted non-touching runs and sorted indices.
/// Equal to extract_chains(merge_change_records(materialize(runs), hidden)).
inline ChainList merge_to_chains(const RunSet& runs, std::span<const std::uint64_t> hidden) {
  if (!runs.complete()) throw domain_error("run set was only partly placed");
  ChainList out;
  out.reserve(runs.runs.size() + hidden.size());
  std::size_t ri = 0, hi = 0;
  bool open = false;
  std::uint64_t cs = 0, ce = 0; // current chain [cs, ce)
  while (ri < runs.runs.size() || hi < hidden.size()) {
    std::uint64_t s, e;
    if (hi >= hidden.size() || (ri < runs.runs.size() && runs.runs[ri].start <= hidden[hi])) {
      s = runs.runs[ri].start;
      e = s + runs.runs[ri].length;
      ++ri;
    } else {
      s = hidden[hi];
      e = s + 1;
      if (e > runs.record_length)
        throw shape_error("hidden index " + std::to_string(s) + " outside record of length " +
                          std::to_string(runs.record_length));
      ++hi;
    }
    if (open && s <= ce) {
      ce = std::max(ce, e);
    } else {
      if (open) out.push_back(static_cast<std::uint32_t>(ce - cs));
      cs = s;
      ce = e;
      open = true;
    }
  }
  if (open) out.push_back(static_cast<std::uint32_t>(ce - cs));
  return out;
}

// ---- chain counts ------------------------------------------------------------

/// True when nested_hidden_counts can take its fast path for these volumes:
/// a single free extent and no volume drawn as a complement set.
inline bool nested_counts_supported(const DiskModel& disk, std::span<const HiddenVolumeConfig> volumes) {
  if (disk.extents().size() != 1) return false;
  for (const auto& v : volumes)
    if (v.chain_group == 1 && v.carrier_blocks(disk.block_size) > disk.free_blocks / 2) return false;
  return true;
}

/// Chain counts of the public runs merged with each hidden volume in turn,
/// where volume j is drawn by sample_hidden_writes from the generator state
/// `hidden_rng` has on entry (every volume starts from that same state). The
/// volumes must share copies and chain_group. Public runs need only be placed
/// down to the start of the free region (place_public_runs with keep_from =
/// the first free block). Results follow the order of `volumes`.
inline std::vector<ChainCounts> nested_hidden_counts(const DiskModel& disk, const RunSet& runs,
                                                     std::span<const HiddenVolumeConfig> volumes, Rng& hidden_rng,
                                                     std::size_t n) {
  disk.validate();
  for (const auto& v : volumes) {
    v.validate();
    if (v.chain_group != volumes[0].chain_group)
      throw domain_error("nested hidden volumes must share chain_group");
  }
  std::vector<ChainCounts> result(volumes.size(), ChainCounts(n));
  if (volumes.empty()) return result;

  if (!nested_counts_supported(disk, volumes)) {
    if (!runs.complete()) throw domain_error("run set was only partly placed");
    for (std::size_t j = 0; j < volumes.size(); ++j) {
      Rng rng = hidden_rng;
      result[j] = count_chains(merge_to_chains(runs, sample_hidden_writes(disk, volumes[j], rng)), n);
    }
    return result;
  }

  const Extent region = disk.extents().front();
  // Runs that end before region.start - 1 cannot touch a carrier.
  const auto first = std::partition_point(runs.runs.begin(), runs.runs.end(),
                                          [&](const Run& r) { return r.start + r.length < region.start; });
  if (!runs.complete() && runs.placed_from > region.start)
    throw domain_error("public runs were not placed far enough down to cover the free region");
  const std::uint64_t w0 = first == runs.runs.end() ? region.start : std::min(region.start, first->start);
  const std::uint64_t w1 = runs.record_length;
  const std::uint64_t nwords = (w1 - w0 + 63) / 64;

  ChainCounts base(n);
  const std::size_t first_index = runs.first_run + static_cast<std::size_t>(first - runs.runs.begin());
  for (std::size_t i = 0; i < first_index; ++i) base.add(runs.drawn[i]);

  thread_local std::vector<std::uint64_t> public_bits, carrier_bits, merged;
  public_bits.assign(nwords, 0);
  for (auto it = first; it != runs.runs.end(); ++it) {
    std::uint64_t s = it->start - w0;
    const std::uint64_t e = s + it->length;
    for (; s < e && (s & 63); ++s) public_bits[s >> 6] |= std::uint64_t{1} << (s & 63);
    for (; s + 64 <= e; s += 64) public_bits[s >> 6] = ~std::uint64_t{0};
    for (; s < e; ++s) public_bits[s >> 6] |= std::uint64_t{1} << (s & 63);
  }

  std::vector<std::size_t> order(volumes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return volumes[a].carrier_blocks(disk.block_size) < volumes[b].carrier_blocks(disk.block_size);
  });

  carrier_bits.assign(nwords, 0);
  merged.resize(nwords);
  Rng rng = hidden_rng;
  detail::CarrierDraw draw(disk.free_blocks, volumes[0].chain_group,
                           detail::CarrierBitmap{carrier_bits, region.start - w0}, rng);
  for (auto j : order) {
    draw.fill_to(volumes[j].carrier_blocks(disk.block_size));
    for (std::uint64_t w = 0; w < nwords; ++w) merged[w] = public_bits[w] | carrier_bits[w];
    ChainCounts c = count_chains(std::span<const std::uint64_t>(merged), n);
    c.total += base.total;
    for (std::size_t k = 0; k < n; ++k) c.by_length[k] += base.by_length[k];
    result[j] = std::move(c);
  }
  return result;
}

// ---- survivability --------------------------------------------------------

/// Probability that a data block keeps at least `threshold` of its `copies`
/// carriers when each carrier is overwritten independently with probability q.
inline double block_survival(const HiddenVolumeConfig& cfg, double q) {
  cfg.validate();
  if (!(q >= 0.0 && q <= 1.0)) throw domain_error("overwrite fraction must lie in [0,1]");
  if (cfg.reconstruct_threshold == 1) return 1.0 - std::pow(q, cfg.copies);
  double sum = 0.0;
  for (std::uint32_t j = cfg.reconstruct_threshold; j <= cfg.copies; ++j)
    sum += binomial(cfg.copies, j).convert_to<double>() * std::pow(1.0 - q, j) * std::pow(q, cfg.copies - j);
  return std::min(1.0, sum);
}

/// Probability that all `data_blocks` blocks of the volume survive.
inline double estimate_survival(const HiddenVolumeConfig& cfg, double q, std::uint64_t data_blocks) {
  const double per_block = block_survival(cfg, q);
  if (data_blocks == 0 || per_block == 1.0) return 1.0;
  if (data_blocks == 1) return per_block;
  return std::exp(static_cast<double>(data_blocks) * std::log1p(per_block - 1.0));
}

/// Default overwrite fraction: public changed blocks over free blocks, capped at 1.
inline double default_overwrite_fraction(std::uint64_t cover_bytes, const DiskModel& disk) {
  const double cover_blocks = std::ceil(static_cast<double>(cover_bytes) / disk.block_size);
  return std::min(1.0, cover_blocks / static_cast<double>(disk.free_blocks));
}

/// Direct simulation of copy overwrites, for checking estimate_survival.
inline MonteCarloEstimate simulate_survival(const HiddenVolumeConfig& cfg, double q, std::uint64_t data_blocks,
                                            std::uint64_t trials, std::uint64_t seed) {
  cfg.validate();
  if (trials == 0) throw domain_error("Monte Carlo needs at least one trial");
  Rng rng(seed);
  std::uint64_t survived = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    bool alive = true;
    for (std::uint64_t b = 0; b < data_blocks && alive; ++b) {
      std::uint32_t intact = 0;
      for (std::uint32_t c = 0; c < cfg.copies; ++c)
        if (!rng.bernoulli(q)) ++intact;
      alive = intact >= cfg.reconstruct_threshold;
    }
    if (alive) ++survived;
  }
  return detail::make_estimate(survived, trials);
}

} // namespace chainsight
