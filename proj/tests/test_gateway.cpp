#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/image.hpp"
#include "httplib.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace expforce;
using nlohmann::json;

namespace {

std::vector<MultimodalMessage> sample_messages() {
  MultimodalMessage m;
  m.segments = {Segment::text("hello"), Segment::image(solid_color_png(255, 0, 0, 2, 2))};
  return {m};
}

std::string ok_body(const std::string& text) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", "stop"}}}}}
      .dump();
}

ModelEndpointConfig fast_cfg() {
  ModelEndpointConfig c;
  c.base_url = "http://model.invalid";
  c.model_name = "m";
  c.backoff_initial_s = 0.0;
  return c;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("wire json shape") {
  auto wire = json::parse(messages_to_wire_json(sample_messages()));
  REQUIRE(wire.size() == 1);
  CHECK(wire[0]["role"] == "user");
  CHECK(wire[0]["content"][0] == json{{"type", "text"}, {"text", "hello"}});
  CHECK(wire[0]["content"][1]["type"] == "image");
  CHECK(wire[0]["content"][1]["media_type"] == "image/png");
  CHECK(base64_decode(wire[0]["content"][1]["data"].get<std::string>()) == solid_color_png(255, 0, 0, 2, 2));
  CHECK(prompt_hash(sample_messages()) == sha256_hex(messages_to_wire_json(sample_messages())));
}

TEST_CASE("message validation") {
  MultimodalMessage empty;
  CHECK(code_of([&] { empty.validate(); }) == ErrorCode::InvalidArgument);
  MultimodalMessage blank{"user", {Segment::image("")}};
  CHECK(code_of([&] { blank.validate(); }) == ErrorCode::MissingImage);
}

TEST_CASE("retry on 503 then succeed") {
  int calls = 0;
  std::string seen_body;
  Transport t = [&](const HttpRequest& req) {
    ++calls;
    seen_body = req.body;
    CHECK(req.path == "/chat/completions");
    if (calls <= 2) return HttpResponse{503, "busy", ""};
    return HttpResponse{200, ok_body("FORCE_N: 2.5"), ""};
  };
  RemoteCompletionBackend backend(fast_cfg(), t);
  CHECK(backend.complete(sample_messages()) == "FORCE_N: 2.5");
  CHECK(calls == 3);
  CHECK(backend.retries() == 2);
  auto body = json::parse(seen_body);
  CHECK(body["model"] == "m");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"] == json::parse(messages_to_wire_json(sample_messages())));
}

TEST_CASE("retries are bounded and 4xx is not retried") {
  int calls = 0;
  Transport always_down = [&](const HttpRequest&) {
    ++calls;
    return HttpResponse{0, "", "connection refused"};
  };
  auto cfg = fast_cfg();
  cfg.max_retries = 2;
  CHECK(code_of([&] { complete(cfg, sample_messages(), always_down); }) == ErrorCode::TransportError);
  CHECK(calls == 3);

  calls = 0;
  Transport bad_request = [&](const HttpRequest&) {
    ++calls;
    return HttpResponse{400, "{}", ""};
  };
  CHECK(code_of([&] { complete(cfg, sample_messages(), bad_request); }) == ErrorCode::TransportError);
  CHECK(calls == 1);
}

TEST_CASE("api key comes from the environment") {
  auto cfg = fast_cfg();
  cfg.api_key_env = "EXPFORCE_TEST_KEY_UNSET";
  ::unsetenv("EXPFORCE_TEST_KEY_UNSET");
  int calls = 0;
  Transport t = [&](const HttpRequest& req) {
    ++calls;
    bool has_auth = false;
    for (const auto& [k, v] : req.headers) has_auth |= (k == "Authorization" && v == "Bearer sekrit");
    CHECK(has_auth);
    return HttpResponse{200, ok_body("ok"), ""};
  };
  CHECK(code_of([&] { complete(cfg, sample_messages(), t); }) == ErrorCode::AuthMissing);
  CHECK(calls == 0);
  ::setenv("EXPFORCE_TEST_KEY_UNSET", "sekrit", 1);
  CHECK(complete(cfg, sample_messages(), t) == "ok");
  ::unsetenv("EXPFORCE_TEST_KEY_UNSET");
}

TEST_CASE("response parsing") {
  CHECK(parse_completion_response(ok_body("x")) == "x");
  auto filtered = json{{"choices", {{{"message", {{"content", ""}}}, {"finish_reason", "content_filter"}}}}}.dump();
  CHECK(code_of([&] { parse_completion_response(filtered); }) == ErrorCode::ModelRefusal);
  auto refused = json{{"choices", {{{"message", {{"content", nullptr}, {"refusal", "no"}}}}}}}.dump();
  CHECK(code_of([&] { parse_completion_response(refused); }) == ErrorCode::ModelRefusal);
  CHECK(code_of([&] { parse_completion_response(ok_body("")); }) == ErrorCode::ModelRefusal);
  CHECK(code_of([&] { parse_completion_response("not json"); }) == ErrorCode::TransportError);
}

TEST_CASE("endpoint config validation") {
  auto cfg = fast_cfg();
  cfg.max_retries = 6;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::ConfigError);
  cfg = fast_cfg();
  cfg.temperature = 2.5;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::ConfigError);
}

TEST_CASE("canned backend") {
  auto msgs = sample_messages();
  CannedCompletionBackend canned({{prompt_hash(msgs), "answer"}});
  CHECK(canned.complete(msgs) == "answer");
  MultimodalMessage other{"user", {Segment::text("other")}};
  CHECK(code_of([&] { canned.complete({other}); }) == ErrorCode::ModelRefusal);
  CHECK(canned.calls() == 2);
}

TEST_CASE("embedding vectors reject degenerate values") {
  CHECK(code_of([] { EmbeddingVector({0.0, 0.0}, "p"); }) == ErrorCode::ZeroVector);
  CHECK(code_of([] { EmbeddingVector({1.0, std::nan("")}, "p"); }) == ErrorCode::ProviderError);
  CHECK(EmbeddingVector({3.0, 4.0}, "p").norm() == doctest::Approx(5.0));
}

TEST_CASE("mock embedding is deterministic and description-sensitive") {
  MockEmbeddingProvider mock(64);
  auto a = mock.embed("img", "mass-band 10/100; grip-band 5/32");
  CHECK(a == mock.embed("img", "mass-band 10/100; grip-band 5/32"));
  CHECK(a.d() == 64);
  CHECK(a.provider_id() == "mock-v1-d64");
  CHECK(mock.calls() == 2);
  CHECK(code_of([&] { mock.embed("", ""); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("remote embedding dimension check") {
  int calls = 0;
  Transport t = [&](const HttpRequest& req) {
    CHECK(req.path == "/embeddings");
    ++calls;
    std::vector<double> v(calls == 1 ? 4 : 5, 0.5);
    return HttpResponse{200, json{{"data", {{{"embedding", v}}}}}.dump(), ""};
  };
  RemoteEmbeddingProvider p(fast_cfg(), 0, t);
  CHECK(p.embed("img", "desc").d() == 4);
  CHECK(p.dimension() == 4);
  CHECK(code_of([&] { p.embed("img", "desc"); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("http transport against a local server") {
  httplib::Server server;
  std::string seen_path;
  server.Post(R"(/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    seen_path = req.path;
    res.set_content(ok_body("FORCE_N: 3.25"), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto cfg = fast_cfg();
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.timeout_s = 5;
  CHECK(complete(cfg, sample_messages()) == "FORCE_N: 3.25");
  CHECK(seen_path == "/v1/chat/completions");
  server.stop();
  th.join();
}
