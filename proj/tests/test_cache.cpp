#include <fstream>

#include "doctest.h"
#include "expforce/errors.hpp"
#include "expforce/io.hpp"
#include "test_support.hpp"

using namespace expforce;
using testing::TempDir;

TEST_CASE("cache key covers provider, description and image") {
  auto k = EmbeddingCache::key("img", "desc", "p1");
  CHECK(k.size() == 64);
  CHECK(k != EmbeddingCache::key("img", "desc", "p2"));
  CHECK(k != EmbeddingCache::key("img2", "desc", "p1"));
  CHECK(k != EmbeddingCache::key("img", "desc2", "p1"));
  // Field boundaries are length-prefixed.
  CHECK(EmbeddingCache::key("ab", "c", "p") != EmbeddingCache::key("a", "bc", "p"));
  TempDir dir;
  EmbeddingCache cache(dir.path());
  CHECK(cache.path_for(k) == dir.path() / k.substr(0, 2) / (k + ".vec"));
}

TEST_CASE("encode/decode round trip") {
  EmbeddingVector v({0.1, -2.5, 1e-300, 3.0}, "mock-v1-d4");
  auto bytes = EmbeddingCache::encode(v);
  auto back = EmbeddingCache::decode(bytes, "mock-v1-d4");
  REQUIRE(back.has_value());
  CHECK(*back == v);
  CHECK_FALSE(EmbeddingCache::decode(bytes, "other").has_value());
  CHECK_FALSE(EmbeddingCache::decode(bytes.substr(0, bytes.size() - 1), "mock-v1-d4").has_value());
}

TEST_CASE("cold then warm pool embedding, and corruption recovery") {
  TempDir dir;
  auto pool = generate_synthetic_pool(129, 3, OracleConfig{}, dir / "pool");
  auto cache_dir = dir / "cache";

  Gateway cold = testing::stub_gateway(pool, 4, cache_dir);
  auto t1 = embed_pool(pool, cold);
  CHECK(cold.embedder->calls() == 129);
  CHECK(cold.cache->stats().misses == 129);

  Gateway warm = testing::stub_gateway(pool, 4, cache_dir);
  auto t2 = embed_pool(pool, warm);
  CHECK(warm.embedder->calls() == 0);
  CHECK(warm.cache->stats().hits == 129);
  CHECK(t1 == t2);

  // Flip one payload byte in one entry.
  const auto& r = pool.records()[7];
  auto key = EmbeddingCache::key(pool.read_image(r), r.description, warm.embedder->provider_id());
  auto path = warm.cache->path_for(key);
  auto bytes = read_file(path);
  bytes.back() ^= 0x01;
  write_file_atomic(path, bytes);

  Gateway again = testing::stub_gateway(pool, 4, cache_dir);
  auto t3 = embed_pool(pool, again);
  CHECK(again.embedder->calls() == 1);
  CHECK(again.cache->stats().corruptions == 1);
  CHECK(t3 == t1);
  CHECK(read_file(path) != bytes);  // rewritten
}
