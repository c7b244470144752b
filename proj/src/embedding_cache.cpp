#include <bit>
#include <cstring>

#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/io.hpp"
#include "expforce/model_gateway.hpp"
#include "json.hpp"

namespace expforce {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "cache payloads are stored as little-endian IEEE-754 doubles");

EmbeddingCache::EmbeddingCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create cache directory " + dir_.string());
}

std::string EmbeddingCache::key(std::string_view image, std::string_view description,
                                std::string_view provider_id) {
  Sha256 h;
  h.update_field("expforce-embedding-v1");
  h.update_field(provider_id).update_field(description).update_field(image);
  return h.hex_digest();
}

fs::path EmbeddingCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".vec");
}

std::string EmbeddingCache::encode(const EmbeddingVector& v) {
  std::string payload(v.d() * sizeof(double), '\0');
  std::memcpy(payload.data(), v.values().data(), payload.size());
  nlohmann::ordered_json header;
  header["provider_id"] = v.provider_id();
  header["d"] = v.d();
  header["checksum"] = sha256_hex(payload);
  return header.dump() + "\n" + payload;
}

std::optional<EmbeddingVector> EmbeddingCache::decode(std::string_view bytes,
                                                      const std::string& expected_provider) {
  auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) return std::nullopt;
  try {
    auto header = nlohmann::json::parse(bytes.substr(0, nl));
    auto d = header.at("d").get<std::size_t>();
    auto provider = header.at("provider_id").get<std::string>();
    auto checksum = header.at("checksum").get<std::string>();
    std::string_view payload = bytes.substr(nl + 1);
    if (provider != expected_provider || payload.size() != d * sizeof(double) ||
        sha256_hex(payload) != checksum) {
      return std::nullopt;
    }
    std::vector<double> values(d);
    std::memcpy(values.data(), payload.data(), payload.size());
    return EmbeddingVector(std::move(values), provider);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::shared_ptr<std::mutex> EmbeddingCache::lock_for(const std::string& key) {
  std::lock_guard<std::mutex> guard(mu_);
  auto& slot = key_locks_[key];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

EmbeddingVector EmbeddingCache::get_or_compute(std::string_view image, std::string_view description,
                                               const std::string& provider_id,
                                               const std::function<EmbeddingVector()>& compute) {
  const std::string k = key(image, description, provider_id);
  const fs::path path = path_for(k);
  auto key_lock = lock_for(k);
  std::lock_guard<std::mutex> guard(*key_lock);

  std::error_code ec;
  if (fs::is_regular_file(path, ec)) {
    if (auto hit = decode(read_file(path), provider_id)) {
      std::lock_guard<std::mutex> g(mu_);
      ++stats_.hits;
      return *hit;
    }
    std::lock_guard<std::mutex> g(mu_);
    ++stats_.corruptions;
  }
  EmbeddingVector v = compute();
  write_file_atomic(path, encode(v));
  std::lock_guard<std::mutex> g(mu_);
  ++stats_.misses;
  return v;
}

EmbeddingCache::Stats EmbeddingCache::stats() const {
  std::lock_guard<std::mutex> guard(mu_);
  return stats_;
}

}  // namespace expforce
