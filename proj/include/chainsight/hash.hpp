#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace chainsight {

/// Identifiers stored in snapshot headers. Values are part of the file format.
enum class HashAlgorithm : std::uint8_t {
  sha256 = 1,
  sha512 = 2,
};

inline std::size_t digest_size(HashAlgorithm alg) {
  switch (alg) {
  case HashAlgorithm::sha256: return 32;
  case HashAlgorithm::sha512: return 64;
  }
  throw domain_error("unknown hash algorithm id " + std::to_string(static_cast<int>(alg)));
}

inline HashAlgorithm hash_algorithm_from_id(std::uint8_t id) {
  auto alg = static_cast<HashAlgorithm>(id);
  (void)digest_size(alg);
  return alg;
}

inline HashAlgorithm hash_algorithm_from_name(const std::string& name) {
  if (name == "sha256") return HashAlgorithm::sha256;
  if (name == "sha512") return HashAlgorithm::sha512;
  throw domain_error("unknown hash algorithm \"" + name + "\"");
}

inline std::string hash_algorithm_name(HashAlgorithm alg) {
  return alg == HashAlgorithm::sha512 ? "sha512" : "sha256";
}

using Digest = std::vector<std::uint8_t>;

/// Incremental hasher over OpenSSL's EVP interface.
class Hasher {
public:
  explicit Hasher(HashAlgorithm alg) : alg_(alg), ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_) throw error("EVP_MD_CTX_new failed");
    reset();
  }

  void reset() {
    const EVP_MD* md = alg_ == HashAlgorithm::sha512 ? EVP_sha512() : EVP_sha256();
    if (EVP_DigestInit_ex(ctx_.get(), md, nullptr) != 1) throw error("EVP_DigestInit_ex failed");
  }

  Hasher& update(std::span<const std::uint8_t> bytes) {
    if (EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()) != 1)
      throw error("EVP_DigestUpdate failed");
    return *this;
  }

  Hasher& update(std::uint8_t byte) { return update(std::span<const std::uint8_t>(&byte, 1)); }

  Digest finish() {
    Digest out(digest_size(alg_));
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1 || len != out.size())
      throw error("EVP_DigestFinal_ex failed");
    reset();
    return out;
  }

  HashAlgorithm algorithm() const noexcept { return alg_; }

private:
  HashAlgorithm alg_;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xf]);
  }
  return s;
}

inline std::string sha256_hex(std::string_view text) {
  Hasher h(HashAlgorithm::sha256);
  h.update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return to_hex(h.finish());
}

} // namespace chainsight
