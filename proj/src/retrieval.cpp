#include "expforce/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "expforce/errors.hpp"

namespace expforce {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.d() != b.d()) {
    fail(ErrorCode::DimensionMismatch,
         "cannot compare d=" + std::to_string(a.d()) + " with d=" + std::to_string(b.d()));
  }
  const double na = dot(a.values(), a.values());
  const double nb = dot(b.values(), b.values());
  if (!(na > 0.0) || !(nb > 0.0)) fail(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  double s = dot(a.values(), b.values()) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(s, -1.0, 1.0);
}

bool ranks_before(const ScoredExperience& a, const ScoredExperience& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.record_id < b.record_id;
}

RetrievedSet top_k(const std::string& query_id, const EmbeddingVector& query,
                   const EmbeddingTable& pool_embeddings, int k, const std::set<std::string>& exclude,
                   const std::function<void(const std::string&)>& on_warning) {
  if (k < 0) fail(ErrorCode::InvalidK, "k must be non-negative");
  RetrievedSet out;
  out.query_id = query_id;
  out.k_requested = k;
  if (k == 0) return out;

  std::vector<ScoredExperience> scored;
  scored.reserve(pool_embeddings.size());
  for (const auto& [id, emb] : pool_embeddings) {
    if (id == query_id || exclude.count(id) != 0) continue;
    scored.push_back({id, cosine_similarity(query, emb)});
  }
  auto keep = static_cast<std::size_t>(k);
  if (keep > scored.size()) {
    if (on_warning) {
      on_warning("k=" + std::to_string(k) + " exceeds " + std::to_string(scored.size()) +
                 " candidates for query " + query_id + "; returning all");
    }
    keep = scored.size();
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    ranks_before);
  scored.resize(keep);
  out.entries = std::move(scored);
  return out;
}

}  // namespace expforce
