#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace expforce {

// ---------------------------------------------------------------------------
// Messages

enum class SegmentKind { Text, Image };

struct Segment {
  SegmentKind kind = SegmentKind::Text;
  std::string payload;  // UTF-8 text or opaque image bytes

  static Segment text(std::string s) { return {SegmentKind::Text, std::move(s)}; }
  static Segment image(std::string bytes) { return {SegmentKind::Image, std::move(bytes)}; }

  bool operator==(const Segment&) const = default;
};

struct MultimodalMessage {
  std::string role = "user";
  std::vector<Segment> segments;

  void validate() const;
  bool operator==(const MultimodalMessage&) const = default;
};

/// Canonical wire form of a message list (the `messages` array of a
/// chat-completion request). Byte-stable for identical inputs.
std::string messages_to_wire_json(const std::vector<MultimodalMessage>& messages);

/// SHA-256 of messages_to_wire_json; stub backends key canned answers on it.
std::string prompt_hash(const std::vector<MultimodalMessage>& messages);

// ---------------------------------------------------------------------------
// Endpoint configuration and transport

struct ModelEndpointConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env;  // empty: endpoint takes no key
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  double backoff_initial_s = 0.5;

  void validate() const;
};

struct HttpRequest {
  std::string base_url;
  std::string path;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  double timeout_s = 60.0;
};

struct HttpResponse {
  int status = 0;  // 0 means the request never completed
  std::string body;
  std::string error;
};

using Transport = std::function<HttpResponse(const HttpRequest&)>;

/// Blocking HTTP(S) POST through cpp-httplib.
Transport http_transport();

// ---------------------------------------------------------------------------
// Completion backends (descriptor / predictor models)

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string complete(const std::vector<MultimodalMessage>& messages) = 0;
  /// Identifies the backend and every setting that can change its answers.
  virtual std::string fingerprint() const = 0;
};

/// Answers from a map keyed by prompt_hash(); unknown prompts get the default.
class CannedCompletionBackend : public CompletionBackend {
 public:
  explicit CannedCompletionBackend(std::map<std::string, std::string> answers = {},
                                   std::string default_response = "");

  std::string complete(const std::vector<MultimodalMessage>& messages) override;
  std::string fingerprint() const override;

  std::size_t calls() const { return calls_.load(); }

 private:
  std::map<std::string, std::string> answers_;
  std::string default_response_;
  std::atomic<std::size_t> calls_{0};
};

/// Deterministic stub backed by an arbitrary pure function of the prompt.
class FunctionCompletionBackend : public CompletionBackend {
 public:
  using Fn = std::function<std::string(const std::vector<MultimodalMessage>&)>;
  FunctionCompletionBackend(std::string name, Fn fn);

  std::string complete(const std::vector<MultimodalMessage>& messages) override;
  std::string fingerprint() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

/// Chat-completion endpoint over HTTP with exponential-backoff retries.
class RemoteCompletionBackend : public CompletionBackend {
 public:
  explicit RemoteCompletionBackend(ModelEndpointConfig cfg, Transport transport = http_transport());

  std::string complete(const std::vector<MultimodalMessage>& messages) override;
  std::string fingerprint() const override;

  std::string request_body(const std::vector<MultimodalMessage>& messages) const;
  std::size_t retries() const { return retries_.load(); }

 private:
  ModelEndpointConfig cfg_;
  Transport transport_;
  std::atomic<std::size_t> retries_{0};
};

/// One-shot remote completion.
std::string complete(const ModelEndpointConfig& cfg, const std::vector<MultimodalMessage>& messages,
                     Transport transport = http_transport());

/// Extracts the assistant text from a chat-completion response body.
std::string parse_completion_response(std::string_view body);

// ---------------------------------------------------------------------------
// Embeddings

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Rejects non-finite entries (ProviderError) and zero norm (ZeroVector).
  EmbeddingVector(std::vector<double> values, std::string provider_id);

  const std::vector<double>& values() const { return values_; }
  const std::string& provider_id() const { return provider_id_; }
  std::size_t d() const { return values_.size(); }
  double norm() const;

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
  std::string provider_id_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  EmbeddingVector embed(std::string_view image, std::string_view description);

  virtual std::string provider_id() const = 0;
  /// 0 when the provider has not reported a dimension yet.
  virtual std::size_t dimension() const = 0;

  std::size_t calls() const { return calls_.load(); }

 protected:
  virtual EmbeddingVector do_embed(std::string_view image, std::string_view description) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Offline provider: a pure function of (image bytes, description).
///
/// Layout of the d coordinates:
///   [0, 2)          mass block, a point on an arc at angle (mass-band + 0.5) * step
///   [2, 4)          grip block, same encoding for the grip band
///   [4, d - 16)     hashed bag of words of the description (band tokens removed)
///   [d - 16, d)     small hash-derived block from image and description
/// Band blocks are zero when the description carries no band tokens. Because
/// both band blocks use the same angle step, nearby (mass, grip) bands map to
/// nearby directions and cosine similarity decreases with band distance.
class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  static constexpr std::size_t kMinDimension = 24;
  static constexpr double kBandAngleStep = 0.015;
  static constexpr double kNoiseNorm = 0.005;

  explicit MockEmbeddingProvider(std::size_t dimension = 64);

  std::string provider_id() const override;
  std::size_t dimension() const override { return dimension_; }

 protected:
  EmbeddingVector do_embed(std::string_view image, std::string_view description) override;

 private:
  std::size_t dimension_;
};

/// Embedding endpoint over HTTP; the dimension is whatever the provider
/// returns first, then enforced for the rest of the run.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(ModelEndpointConfig cfg, std::size_t advertised_dimension = 0,
                          Transport transport = http_transport());

  std::string provider_id() const override;
  std::size_t dimension() const override { return dimension_.load(); }

 protected:
  EmbeddingVector do_embed(std::string_view image, std::string_view description) override;

 private:
  ModelEndpointConfig cfg_;
  Transport transport_;
  std::atomic<std::size_t> dimension_;
};

// ---------------------------------------------------------------------------
// Content-addressed cache: <dir>/<first2>/<sha256>.vec

class EmbeddingCache {
 public:
  struct Stats {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t corruptions = 0;
  };

  explicit EmbeddingCache(std::filesystem::path dir);

  static std::string key(std::string_view image, std::string_view description,
                         std::string_view provider_id);
  std::filesystem::path path_for(const std::string& key) const;

  /// Returns the stored vector on a valid hit; otherwise calls `compute`,
  /// stores, and returns its result. A corrupt entry is recomputed and
  /// overwritten.
  EmbeddingVector get_or_compute(std::string_view image, std::string_view description,
                                 const std::string& provider_id,
                                 const std::function<EmbeddingVector()>& compute);

  Stats stats() const;
  const std::filesystem::path& dir() const { return dir_; }

  static std::string encode(const EmbeddingVector& v);
  /// nullopt when the bytes fail the header or checksum check.
  static std::optional<EmbeddingVector> decode(std::string_view bytes,
                                               const std::string& expected_provider);

 private:
  std::shared_ptr<std::mutex> lock_for(const std::string& key);

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<std::mutex>> key_locks_;
  Stats stats_;
};

// ---------------------------------------------------------------------------

/// Bundles the three external models and the cache for one run.
struct Gateway {
  std::shared_ptr<CompletionBackend> descriptor;
  std::shared_ptr<CompletionBackend> predictor;
  std::shared_ptr<EmbeddingProvider> embedder;
  std::shared_ptr<EmbeddingCache> cache;  // optional
  std::size_t concurrency_limit = 4;

  EmbeddingVector embed(std::string_view image, std::string_view description) const;
};

}  // namespace expforce
