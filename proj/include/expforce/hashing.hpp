#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace expforce {

/// Incremental SHA-256. Fields fed through update_field() are length-prefixed
/// so that concatenation ambiguities cannot produce equal digests.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  Sha256& update_field(std::string_view bytes);
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Stable 64-bit FNV-1a; used where a short, platform-independent hash of a
/// string is needed to derive seeds.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace expforce
