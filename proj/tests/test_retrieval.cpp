#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "expforce/errors.hpp"
#include "expforce/random.hpp"
#include "expforce/retrieval.hpp"

using namespace expforce;

namespace {
EmbeddingVector ev(std::vector<double> v) { return EmbeddingVector(std::move(v), "p"); }
}  // namespace

TEST_CASE("cosine similarity reference values") {
  CHECK(cosine_similarity(ev({1, 2, 3}), ev({4, 5, 6})) == doctest::Approx(0.9746318461970762).epsilon(1e-15));
  CHECK(cosine_similarity(ev({1, 0}), ev({0, 1})) == 0.0);
  CHECK(cosine_similarity(ev({1, 1}), ev({-1, -1})) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(ev({2, 2}), ev({1, 1})) <= 1.0);
  CHECK_THROWS_AS(cosine_similarity(ev({1, 2}), ev({1, 2, 3})), Error);
}

TEST_CASE("top_k ordering, exclusion and saturation") {
  EmbeddingTable t{{"a", ev({1, 0})}, {"b", ev({1, 0})}, {"c", ev({0, 1})}, {"q", ev({1, 0})}};
  auto r = top_k("q", ev({1, 0}), t, 2);
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].record_id == "a");  // tie broken by id
  CHECK(r.entries[1].record_id == "b");
  CHECK(r.k_requested == 2);

  std::string warning;
  auto all = top_k("q", ev({1, 0}), t, 10, {"a"}, [&](const std::string& w) { warning = w; });
  CHECK(all.entries.size() == 2);
  CHECK(!warning.empty());
  CHECK(top_k("q", ev({1, 0}), t, 0).entries.empty());
  CHECK_THROWS_AS(top_k("q", ev({1, 0}), t, -1), Error);
}

TEST_CASE("top_k matches a full sort on random tables") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    EmbeddingTable t;
    int n = 1 + static_cast<int>(rng.below(60));
    for (int i = 0; i < n; ++i) {
      t.emplace("id" + std::to_string(rng.below(100)),
                ev({rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0 + rng.below(2)}));
    }
    auto q = ev({0.3, -0.2, 1.0});
    std::vector<ScoredExperience> full;
    for (const auto& [id, e] : t) full.push_back({id, cosine_similarity(q, e)});
    std::sort(full.begin(), full.end(), ranks_before);
    int k = static_cast<int>(rng.below(t.size() + 1));  // duplicate ids make t smaller than n
    full.resize(k);
    CHECK(top_k("none", q, t, k).entries == full);
  }
}
