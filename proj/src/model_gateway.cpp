#include "expforce/model_gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/image.hpp"
#include "httplib.h"
#include "json.hpp"

namespace expforce {

using ojson = nlohmann::ordered_json;

void MultimodalMessage::validate() const {
  if (segments.empty()) fail(ErrorCode::InvalidArgument, "message has no segments");
  for (const auto& s : segments) {
    if (s.kind == SegmentKind::Image && s.payload.empty()) {
      fail(ErrorCode::MissingImage, "image segment with empty payload");
    }
  }
}

namespace {

ojson segment_json(const Segment& s) {
  ojson part;
  if (s.kind == SegmentKind::Text) {
    part["type"] = "text";
    part["text"] = s.payload;
  } else {
    part["type"] = "image";
    part["media_type"] = std::string(sniff_media_type(s.payload));
    part["data"] = base64_encode(s.payload);
  }
  return part;
}

ojson messages_json(const std::vector<MultimodalMessage>& messages) {
  ojson arr = ojson::array();
  for (const auto& m : messages) {
    m.validate();
    ojson msg;
    msg["role"] = m.role;
    ojson content = ojson::array();
    for (const auto& s : m.segments) content.push_back(segment_json(s));
    msg["content"] = std::move(content);
    arr.push_back(std::move(msg));
  }
  return arr;
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

std::string bearer_key(const ModelEndpointConfig& cfg) {
  if (cfg.api_key_env.empty()) return {};
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    fail(ErrorCode::AuthMissing, "environment variable " + cfg.api_key_env + " is not set");
  }
  return key;
}

/// POST with retries; returns the body of the first 2xx response.
std::string post_with_retries(const ModelEndpointConfig& cfg, const Transport& transport,
                              const std::string& path, const std::string& body,
                              std::atomic<std::size_t>& retries) {
  HttpRequest req;
  req.base_url = cfg.base_url;
  req.path = path;
  req.body = body;
  req.timeout_s = cfg.timeout_s;
  req.headers.emplace_back("Content-Type", "application/json");
  if (auto key = bearer_key(cfg); !key.empty()) req.headers.emplace_back("Authorization", "Bearer " + key);

  HttpResponse last;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      ++retries;
      double delay = cfg.backoff_initial_s * std::pow(2.0, attempt - 1);
      if (delay > 0) std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    last = transport(req);
    if (last.status >= 200 && last.status < 300) return last.body;
    if (!retryable(last.status)) break;
  }
  fail(ErrorCode::TransportError, cfg.base_url + path + " failed with status " +
                                      std::to_string(last.status) +
                                      (last.error.empty() ? "" : " (" + last.error + ")"));
}

}  // namespace

std::string messages_to_wire_json(const std::vector<MultimodalMessage>& messages) {
  return messages_json(messages).dump();
}

std::string prompt_hash(const std::vector<MultimodalMessage>& messages) {
  return sha256_hex(messages_to_wire_json(messages));
}

void ModelEndpointConfig::validate() const {
  if (!(timeout_s > 0)) fail(ErrorCode::ConfigError, "timeout_s must be positive");
  if (max_retries < 0 || max_retries > 5) fail(ErrorCode::ConfigError, "max_retries must be in [0, 5]");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    fail(ErrorCode::ConfigError, "temperature must be in [0, 2]");
  }
  if (!(backoff_initial_s >= 0.0)) fail(ErrorCode::ConfigError, "backoff must be non-negative");
}

Transport http_transport() {
  return [](const HttpRequest& req) {
    HttpResponse out;
    try {
      // httplib wants scheme://host[:port]; keep any path prefix ("/v1") for the request.
      std::string origin = req.base_url, prefix;
      auto scheme_end = origin.find("://");
      auto slash = origin.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
      if (slash != std::string::npos) {
        prefix = origin.substr(slash);
        origin.resize(slash);
      }
      while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
      httplib::Client client(origin);
      auto secs = static_cast<time_t>(req.timeout_s);
      auto usecs = static_cast<time_t>((req.timeout_s - static_cast<double>(secs)) * 1e6);
      client.set_connection_timeout(secs, usecs);
      client.set_read_timeout(secs, usecs);
      client.set_write_timeout(secs, usecs);
      httplib::Headers headers;
      std::string content_type = "application/json";
      for (const auto& [k, v] : req.headers) {
        if (k == "Content-Type") {
          content_type = v;
        } else {
          headers.emplace(k, v);
        }
      }
      auto res = client.Post(prefix + req.path, headers, req.body, content_type);
      if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
      }
      out.status = res->status;
      out.body = res->body;
    } catch (const std::exception& e) {
      out.status = 0;
      out.error = e.what();
    }
    return out;
  };
}

// --- stubs -----------------------------------------------------------------

CannedCompletionBackend::CannedCompletionBackend(std::map<std::string, std::string> answers,
                                                 std::string default_response)
    : answers_(std::move(answers)), default_response_(std::move(default_response)) {}

std::string CannedCompletionBackend::complete(const std::vector<MultimodalMessage>& messages) {
  ++calls_;
  auto it = answers_.find(prompt_hash(messages));
  std::string out = it == answers_.end() ? default_response_ : it->second;
  if (out.empty()) throw EmptyResponse("stub has no answer for this prompt");
  return out;
}

std::string CannedCompletionBackend::fingerprint() const {
  Sha256 h;
  h.update_field("canned");
  for (const auto& [k, v] : answers_) h.update_field(k).update_field(v);
  h.update_field(default_response_);
  return "stub-canned:" + h.hex_digest().substr(0, 16);
}

FunctionCompletionBackend::FunctionCompletionBackend(std::string name, Fn fn)
    : name_(std::move(name)), fn_(std::move(fn)) {}

std::string FunctionCompletionBackend::complete(const std::vector<MultimodalMessage>& messages) {
  std::string out = fn_(messages);
  if (out.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw EmptyResponse(name_ + " returned an empty response");
  }
  return out;
}

// --- remote ----------------------------------------------------------------

RemoteCompletionBackend::RemoteCompletionBackend(ModelEndpointConfig cfg, Transport transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  cfg_.validate();
}

std::string RemoteCompletionBackend::request_body(const std::vector<MultimodalMessage>& messages) const {
  ojson body;
  body["model"] = cfg_.model_name;
  body["temperature"] = cfg_.temperature;
  body["messages"] = messages_json(messages);
  return body.dump();
}

std::string RemoteCompletionBackend::complete(const std::vector<MultimodalMessage>& messages) {
  auto body = request_body(messages);
  auto response = post_with_retries(cfg_, transport_, "/chat/completions", body, retries_);
  return parse_completion_response(response);
}

std::string RemoteCompletionBackend::fingerprint() const {
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.17g", cfg_.temperature);
  return "remote:" + cfg_.base_url + ":" + cfg_.model_name + ":t=" + temp;
}

std::string complete(const ModelEndpointConfig& cfg, const std::vector<MultimodalMessage>& messages,
                     Transport transport) {
  RemoteCompletionBackend backend(cfg, std::move(transport));
  return backend.complete(messages);
}

std::string parse_completion_response(std::string_view body) {
  ojson j;
  try {
    j = ojson::parse(body);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::TransportError, "response is not JSON");
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    fail(ErrorCode::TransportError, "response has no choices");
  }
  const auto& choice = j["choices"][0];
  if (choice.value("finish_reason", "") == "content_filter") {
    fail(ErrorCode::ModelRefusal, "response blocked by content filter");
  }
  const auto& msg = choice.contains("message") ? choice["message"] : ojson::object();
  if (msg.contains("refusal") && msg["refusal"].is_string() && !msg["refusal"].get<std::string>().empty()) {
    fail(ErrorCode::ModelRefusal, msg["refusal"].get<std::string>());
  }
  std::string text;
  if (msg.contains("content")) {
    const auto& c = msg["content"];
    if (c.is_string()) {
      text = c.get<std::string>();
    } else if (c.is_array()) {
      for (const auto& part : c) {
        if (part.value("type", "") == "text") text += part.value("text", "");
      }
    }
  }
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw EmptyResponse("empty response");
  }
  return text;
}

// --- embeddings ------------------------------------------------------------

EmbeddingVector::EmbeddingVector(std::vector<double> values, std::string provider_id)
    : values_(std::move(values)), provider_id_(std::move(provider_id)) {
  if (values_.empty()) fail(ErrorCode::ProviderError, "embedding has zero dimension");
  double sq = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v)) fail(ErrorCode::ProviderError, "embedding has a non-finite entry");
    sq += v * v;
  }
  if (!(sq > 0.0)) fail(ErrorCode::ZeroVector, "embedding has zero norm");
}

double EmbeddingVector::norm() const {
  double sq = 0.0;
  for (double v : values_) sq += v * v;
  return std::sqrt(sq);
}

EmbeddingVector EmbeddingProvider::embed(std::string_view image, std::string_view description) {
  if (image.empty() && description.empty()) {
    fail(ErrorCode::InvalidArgument, "embedding needs an image or a description");
  }
  ++calls_;
  return do_embed(image, description);
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(ModelEndpointConfig cfg, std::size_t advertised_dimension,
                                                 Transport transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), dimension_(advertised_dimension) {
  cfg_.validate();
}

std::string RemoteEmbeddingProvider::provider_id() const {
  return "remote:" + cfg_.base_url + ":" + cfg_.model_name;
}

EmbeddingVector RemoteEmbeddingProvider::do_embed(std::string_view image, std::string_view description) {
  ojson body;
  body["model"] = cfg_.model_name;
  ojson input = ojson::array();
  if (!image.empty()) input.push_back(segment_json(Segment::image(std::string(image))));
  if (!description.empty()) input.push_back(segment_json(Segment::text(std::string(description))));
  body["input"] = std::move(input);

  std::atomic<std::size_t> retries{0};
  auto response = post_with_retries(cfg_, transport_, "/embeddings", body.dump(), retries);

  std::vector<double> values;
  try {
    auto j = ojson::parse(response);
    values = j.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ProviderError, std::string("malformed embedding response: ") + e.what());
  }
  std::size_t expected = 0;
  if (dimension_.compare_exchange_strong(expected, values.size()) || expected == values.size()) {
    return EmbeddingVector(std::move(values), provider_id());
  }
  fail(ErrorCode::DimensionMismatch, "provider returned d=" + std::to_string(values.size()) +
                                         ", expected " + std::to_string(expected));
}

EmbeddingVector Gateway::embed(std::string_view image, std::string_view description) const {
  if (!embedder) fail(ErrorCode::ConfigError, "no embedding provider configured");
  if (!cache) return embedder->embed(image, description);
  return cache->get_or_compute(image, description, embedder->provider_id(),
                               [&] { return embedder->embed(image, description); });
}

}  // namespace expforce
