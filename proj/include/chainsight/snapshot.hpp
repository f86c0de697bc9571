#pragma once

// Block-level disk snapshots: every fixed-size block is hashed into a leaf
// digest and a binary Merkle tree is built over the leaves. Two snapshots of
// the same device are diffed into a ChangeRecord, descending only into
// subtrees whose digests differ.
//
// Tree rule (stable, part of the file format):
//   leaf      = H(0x00 || block bytes, last block zero-padded)
//   interior  = H(0x01 || left || right)
//   an odd trailing node at any level is promoted unchanged
//   a single-leaf tree has root H(0x01 || leaf)

#include <bit>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "byte_io.hpp"
#include "change_record.hpp"
#include "errors.hpp"
#include "hash.hpp"

namespace chainsight {

inline constexpr std::uint8_t leaf_tag = 0x00;
inline constexpr std::uint8_t interior_tag = 0x01;

struct SnapshotConfig {
  std::uint32_t block_size = 4096;
  HashAlgorithm hash = HashAlgorithm::sha256;

  void validate() const {
    if (block_size < 512 || !std::has_single_bit(block_size))
      throw domain_error("block size must be a power of two >= 512, got " + std::to_string(block_size));
    (void)digest_size(hash);
  }

  friend bool operator==(const SnapshotConfig&, const SnapshotConfig&) = default;
};

struct Snapshot {
  SnapshotConfig config;
  std::uint64_t num_blocks = 0;
  std::vector<Digest> leaf_hashes;
  Digest root;
  std::string source_id;
  std::uint64_t captured_at = 0; // UNIX seconds
};

inline Digest hash_interior(Hasher& h, std::span<const std::uint8_t> left,
                            std::span<const std::uint8_t> right) {
  h.update(interior_tag).update(left).update(right);
  return h.finish();
}

/// All tree levels, leaves first, root level last (a single node).
/// Only meaningful for two or more leaves; see merkle_root for the base case.
inline std::vector<std::vector<Digest>> merkle_levels(const std::vector<Digest>& leaves,
                                                      HashAlgorithm alg) {
  std::vector<std::vector<Digest>> levels;
  levels.push_back(leaves);
  Hasher h(alg);
  while (levels.back().size() > 1) {
    const auto& cur = levels.back();
    std::vector<Digest> next;
    next.reserve((cur.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < cur.size(); i += 2) next.push_back(hash_interior(h, cur[i], cur[i + 1]));
    if (cur.size() % 2 == 1) next.push_back(cur.back());
    levels.push_back(std::move(next));
  }
  return levels;
}

inline Digest merkle_root(const std::vector<Digest>& leaves, HashAlgorithm alg = HashAlgorithm::sha256) {
  if (leaves.empty()) throw domain_error("merkle_root: empty leaf list");
  if (leaves.size() == 1) {
    Hasher h(alg);
    h.update(interior_tag).update(leaves.front());
    return h.finish();
  }
  return merkle_levels(leaves, alg).back().front();
}

inline std::uint64_t unix_now() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
}

/// Hashes `image` block by block. A trailing partial block is zero-padded.
inline Snapshot take_snapshot(std::istream& image, const SnapshotConfig& config, std::string source_id,
                              std::uint64_t captured_at) {
  config.validate();
  if (!image) throw format_error("image stream is not readable");
  Snapshot snap;
  snap.config = config;
  snap.source_id = std::move(source_id);
  snap.captured_at = captured_at;

  Hasher h(config.hash);
  std::vector<std::uint8_t> block(config.block_size);
  for (;;) {
    image.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block.size()));
    const auto got = static_cast<std::size_t>(image.gcount());
    if (got == 0) break;
    std::fill(block.begin() + static_cast<std::ptrdiff_t>(got), block.end(), std::uint8_t{0});
    h.update(leaf_tag).update(block);
    snap.leaf_hashes.push_back(h.finish());
    if (got < block.size()) break;
  }
  if (image.bad()) throw format_error("read error while hashing image");
  if (snap.leaf_hashes.empty()) throw domain_error("cannot snapshot a zero-length image");
  snap.num_blocks = snap.leaf_hashes.size();
  snap.root = merkle_root(snap.leaf_hashes, config.hash);
  return snap;
}

inline Snapshot take_snapshot(std::istream& image, const SnapshotConfig& config, std::string source_id) {
  return take_snapshot(image, config, std::move(source_id), unix_now());
}

inline Snapshot take_snapshot(const std::filesystem::path& image_path, const SnapshotConfig& config,
                              std::uint64_t captured_at) {
  std::ifstream in(image_path, std::ios::binary);
  if (!in) throw format_error("cannot open image " + image_path.string());
  return take_snapshot(in, config, image_path.filename().string(), captured_at);
}

namespace detail {

inline void check_comparable(const Snapshot& a, const Snapshot& b) {
  if (!(a.config == b.config))
    throw shape_error("snapshots use different block size or hash algorithm");
  if (a.num_blocks != b.num_blocks || a.leaf_hashes.size() != b.leaf_hashes.size())
    throw shape_error("snapshots cover different block counts: " + std::to_string(a.num_blocks) + " vs " +
                      std::to_string(b.num_blocks));
}

inline void diff_subtree(const std::vector<std::vector<Digest>>& la, const std::vector<std::vector<Digest>>& lb,
                         std::size_t level, std::size_t index, ChangeRecord& out) {
  if (la[level][index] == lb[level][index]) return;
  if (level == 0) {
    out.set(index);
    return;
  }
  const std::size_t left = 2 * index;
  const auto& below = la[level - 1];
  // A promoted node has a single child that carries the same digest.
  diff_subtree(la, lb, level - 1, left, out);
  if (left + 1 < below.size()) diff_subtree(la, lb, level - 1, left + 1, out);
}

} // namespace detail

/// Leaf-by-leaf comparison; the reference the pruned diff must agree with.
inline ChangeRecord diff_snapshots_exhaustive(const Snapshot& a, const Snapshot& b) {
  detail::check_comparable(a, b);
  ChangeRecord out(a.num_blocks);
  for (std::uint64_t i = 0; i < a.num_blocks; ++i)
    if (a.leaf_hashes[i] != b.leaf_hashes[i]) out.set(i);
  return out;
}

/// Descends the two Merkle trees and skips equal subtrees.
inline ChangeRecord diff_snapshots(const Snapshot& a, const Snapshot& b) {
  detail::check_comparable(a, b);
  ChangeRecord out(a.num_blocks);
  if (a.root == b.root) return out;
  if (a.num_blocks == 1) {
    if (a.leaf_hashes[0] != b.leaf_hashes[0]) out.set(0);
    return out;
  }
  const auto la = merkle_levels(a.leaf_hashes, a.config.hash);
  const auto lb = merkle_levels(b.leaf_hashes, b.config.hash);
  detail::diff_subtree(la, lb, la.size() - 1, 0, out);
  return out;
}

inline constexpr std::string_view snapshot_magic = "SNAPCHN1";

/// Layout: magic, u32 block_size, u8 hash id, u64 num_blocks, u32 source_id
/// length, source_id bytes, u64 timestamp, leaf digests, root digest.
inline void write_snapshot(std::ostream& out, const Snapshot& s) {
  byte_io::put_bytes(out, snapshot_magic);
  byte_io::put_u32(out, s.config.block_size);
  byte_io::put_u8(out, static_cast<std::uint8_t>(s.config.hash));
  byte_io::put_u64(out, s.num_blocks);
  byte_io::put_u32(out, static_cast<std::uint32_t>(s.source_id.size()));
  byte_io::put_bytes(out, s.source_id);
  byte_io::put_u64(out, s.captured_at);
  for (const auto& d : s.leaf_hashes)
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size()));
  out.write(reinterpret_cast<const char*>(s.root.data()), static_cast<std::streamsize>(s.root.size()));
  if (!out) throw format_error("failed writing snapshot");
}

/// Reads a snapshot and verifies that the stored root matches the leaves.
inline Snapshot read_snapshot(std::istream& in) {
  byte_io::expect_magic(in, snapshot_magic);
  Snapshot s;
  s.config.block_size = byte_io::get_u32(in, "block size");
  const std::uint8_t hash_id = byte_io::get_u8(in, "hash id");
  try {
    s.config.hash = hash_algorithm_from_id(hash_id);
    s.config.validate();
  } catch (const domain_error& e) {
    throw format_error(e.what());
  }
  s.num_blocks = byte_io::get_u64(in, "block count");
  if (s.num_blocks == 0) throw format_error("snapshot with zero blocks");
  const std::uint32_t id_len = byte_io::get_u32(in, "source id length");
  s.source_id.resize(id_len);
  byte_io::get_exact(in, s.source_id.data(), id_len, "source id");
  s.captured_at = byte_io::get_u64(in, "timestamp");
  const std::size_t dsz = digest_size(s.config.hash);
  s.leaf_hashes.resize(s.num_blocks, Digest(dsz));
  for (auto& d : s.leaf_hashes) byte_io::get_exact(in, reinterpret_cast<char*>(d.data()), dsz, "leaf digest");
  s.root.resize(dsz);
  byte_io::get_exact(in, reinterpret_cast<char*>(s.root.data()), dsz, "root digest");
  byte_io::expect_eof(in, "snapshot");
  if (merkle_root(s.leaf_hashes, s.config.hash) != s.root)
    throw format_error("snapshot root does not match its leaf digests");
  return s;
}

inline void save_snapshot(const std::filesystem::path& path, const Snapshot& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot open " + path.string() + " for writing");
  write_snapshot(out, s);
}

inline Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open " + path.string());
  try {
    return read_snapshot(in);
  } catch (const format_error& e) {
    throw format_error(path.string() + ": " + e.what());
  }
}

} // namespace chainsight
