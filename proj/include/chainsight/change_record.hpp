#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "byte_io.hpp"
#include "errors.hpp"

namespace chainsight {

/// Bit vector over disk blocks; bit i is set when block i changed between two
/// snapshots. Bits past `length()` in the last word are always zero.
class ChangeRecord {
public:
  ChangeRecord() = default;
  explicit ChangeRecord(std::uint64_t length) : length_(length), words_((length + 63) / 64, 0) {}

  static ChangeRecord from_bits(std::span<const int> bits) {
    ChangeRecord r(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) r.set(i);
    return r;
  }

  /// Builds a record from bits packed LSB-first into bytes.
  static ChangeRecord from_packed_bytes(std::uint64_t length, std::span<const unsigned char> bytes) {
    ChangeRecord r(length);
    for (std::size_t b = 0; b < bytes.size() && b / 8 < r.words_.size(); ++b)
      r.words_[b / 8] |= static_cast<std::uint64_t>(bytes[b]) << (8 * (b % 8));
    return r;
  }

  std::uint64_t length() const noexcept { return length_; }

  bool test(std::uint64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1U; }
  void set(std::uint64_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::uint64_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }

  /// Sets bits [first, first + count).
  void set_range(std::uint64_t first, std::uint64_t count) {
    if (count == 0) return;
    std::uint64_t last = first + count; // exclusive
    while (first < last) {
      const std::uint64_t w = first >> 6;
      const unsigned lo = first & 63;
      const std::uint64_t span = std::min<std::uint64_t>(64 - lo, last - first);
      const std::uint64_t mask = span == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << span) - 1) << lo;
      words_[w] |= mask;
      first += span;
    }
  }

  std::uint64_t popcount() const noexcept {
    std::uint64_t n = 0;
    for (auto w : words_) n += static_cast<std::uint64_t>(std::popcount(w));
    return n;
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  ChangeRecord& operator|=(const ChangeRecord& other) {
    if (other.length_ != length_)
      throw shape_error("change record length mismatch: " + std::to_string(length_) + " vs " +
                        std::to_string(other.length_));
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
    return *this;
  }

  friend bool operator==(const ChangeRecord&, const ChangeRecord&) = default;

private:
  std::uint64_t length_ = 0;
  std::vector<std::uint64_t> words_;
};

inline constexpr std::string_view change_record_magic = "CHGREC01";

/// Layout: magic, u64 length, bits packed LSB-first, zero-padded to a byte.
inline void write_change_record(std::ostream& out, const ChangeRecord& r) {
  byte_io::put_bytes(out, change_record_magic);
  byte_io::put_u64(out, r.length());
  const std::uint64_t nbytes = (r.length() + 7) / 8;
  std::vector<char> buf(nbytes);
  auto words = r.words();
  for (std::uint64_t b = 0; b < nbytes; ++b)
    buf[b] = static_cast<char>((words[b / 8] >> (8 * (b % 8))) & 0xff);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw format_error("failed writing change record");
}

inline ChangeRecord read_change_record(std::istream& in) {
  byte_io::expect_magic(in, change_record_magic);
  const std::uint64_t length = byte_io::get_u64(in, "change record length");
  const std::uint64_t nbytes = (length + 7) / 8;
  std::vector<unsigned char> buf(nbytes);
  byte_io::get_exact(in, reinterpret_cast<char*>(buf.data()), nbytes, "change record bits");
  if (length % 8 != 0 && nbytes > 0 && (buf.back() >> (length % 8)) != 0)
    throw format_error("nonzero padding bits in change record");
  byte_io::expect_eof(in, "change record");
  return ChangeRecord::from_packed_bytes(length, buf);
}

inline void save_change_record(const std::filesystem::path& path, const ChangeRecord& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot open " + path.string() + " for writing");
  write_change_record(out, r);
}

inline ChangeRecord load_change_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open " + path.string());
  try {
    return read_change_record(in);
  } catch (const format_error& e) {
    throw format_error(path.string() + ": " + e.what());
  }
}

} // namespace chainsight
