#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "errors.hpp"

namespace chainsight {

inline constexpr std::uint64_t KiB = 1ULL << 10;
inline constexpr std::uint64_t MiB = 1ULL << 20;
inline constexpr std::uint64_t GiB = 1ULL << 30;
inline constexpr std::uint64_t TiB = 1ULL << 40;

/// Parses "4096", "0.25GiB", "100G", "1T". Suffixes are binary (K, M, G, T,
/// optionally followed by "iB" or "B").
inline std::uint64_t parse_size(const std::string& text) {
  std::size_t pos = 0;
  double value = 0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw domain_error("not a size: \"" + text + "\"");
  }
  std::string unit = text.substr(pos);
  while (!unit.empty() && unit.front() == ' ') unit.erase(0, 1);
  std::uint64_t mult = 1;
  if (!unit.empty()) {
    const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(unit[0])));
    const std::string rest = unit.substr(1);
    if (rest != "" && rest != "iB" && rest != "B" && rest != "ib") throw domain_error("bad size unit in \"" + text + "\"");
    switch (u) {
    case 'B': if (!rest.empty()) throw domain_error("bad size unit in \"" + text + "\""); break;
    case 'K': mult = KiB; break;
    case 'M': mult = MiB; break;
    case 'G': mult = GiB; break;
    case 'T': mult = TiB; break;
    default: throw domain_error("bad size unit in \"" + text + "\"");
    }
  }
  if (!(value >= 0) || !std::isfinite(value)) throw domain_error("size must be non-negative: \"" + text + "\"");
  return static_cast<std::uint64_t>(std::llround(value * static_cast<double>(mult)));
}

inline double to_gib(std::uint64_t bytes) { return static_cast<double>(bytes) / static_cast<double>(GiB); }

} // namespace chainsight
