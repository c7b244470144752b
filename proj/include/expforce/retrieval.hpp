#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "expforce/model_gateway.hpp"

namespace expforce {

struct ScoredExperience {
  std::string record_id;
  double similarity = 0.0;

  bool operator==(const ScoredExperience&) const = default;
};

/// Ranked top-k neighbours of one query: similarity descending, ties by
/// record id ascending.
struct RetrievedSet {
  std::string query_id;
  std::vector<ScoredExperience> entries;
  int k_requested = 0;

  bool operator==(const RetrievedSet&) const = default;
};

using EmbeddingTable = std::map<std::string, EmbeddingVector>;

/// Cosine similarity, clamped to [-1, 1].
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Ranking order used by top_k: higher similarity first, then smaller id.
bool ranks_before(const ScoredExperience& a, const ScoredExperience& b);

/// Exact linear-scan top-k. `on_warning` receives a message when k exceeds
/// the number of candidates; the result then holds every candidate.
RetrievedSet top_k(const std::string& query_id, const EmbeddingVector& query,
                   const EmbeddingTable& pool_embeddings, int k,
                   const std::set<std::string>& exclude = {},
                   const std::function<void(const std::string&)>& on_warning = {});

}  // namespace expforce
