#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "expforce/model_gateway.hpp"
#include "expforce/pool.hpp"
#include "expforce/prompting.hpp"
#include "expforce/retrieval.hpp"

namespace expforce {

enum class BackendKind { ExpForce, ZeroShot, KnnAverage, RandomExp };

std::string_view to_string(BackendKind b);
std::optional<BackendKind> parse_backend(std::string_view name);
bool uses_predictor_model(BackendKind b);
/// Backends for which k = 0 is meaningful.
bool allows_zero_k(BackendKind b);

struct PredictionRequest {
  std::string query_id;
  std::string query_image;                         // bytes
  std::optional<std::string> query_description;    // skip the descriptor when known
  std::optional<EmbeddingVector> query_embedding;  // skip embedding when known
  int k = 0;
  std::uint64_t seed = 0;
  BackendKind backend = BackendKind::ExpForce;
};

struct ForcePrediction {
  std::string query_id;
  double f_hat_n = 0.0;
  double raw_f_hat_n = 0.0;
  BackendKind backend = BackendKind::ExpForce;
  RetrievedSet retrieved;
  std::optional<std::string> raw_response;
  std::optional<std::string> description;  // query description used for retrieval
  std::string prompt_hash;                 // empty for backends without a prompt
  bool clamped = false;
  std::vector<std::string> warnings;
};

/// What a query may draw on: the experience pool of its fold.
struct ExperienceView {
  const Pool* pool = nullptr;
  std::vector<std::string> ids;  // manifest order
  EmbeddingTable embeddings;     // restricted to `ids`; may be empty for model-only backends
  const std::map<std::string, std::string>* images = nullptr;  // optional id -> bytes

  std::string image(const std::string& id) const;
};

/// Builds a view over `ids`, taking embeddings from `all` when present.
ExperienceView make_view(const Pool& pool, std::vector<std::string> ids, const EmbeddingTable& all = {},
                         const std::map<std::string, std::string>* images = nullptr);

struct PredictorEnv {
  SharedContext ctx = SharedContext::defaults();
  Templates templates = Templates::defaults();
  const Gateway* gateway = nullptr;
};

/// Seed of the random-experience draw for one query.
std::uint64_t random_exp_seed(std::uint64_t run_seed, std::string_view query_id);

/// Uniform sample of min(k, |candidates|) ids without replacement, excluding
/// the query; returned in manifest order.
std::vector<std::string> sample_experiences(const ExperienceView& view, const std::string& query_id, int k,
                                            std::uint64_t run_seed);

/// Resolves the query description (descriptor call if not given) and embedding.
void ensure_query_embedding(PredictionRequest& req, const PredictorEnv& env);

/// The predictor prompt a model-backed request would send.
PromptBundle assemble_predictor_prompt(const PredictionRequest& req, const RetrievedSet& retrieved,
                                       const ExperienceView& view, const PredictorEnv& env);

ForcePrediction predict_expforce(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env);
ForcePrediction predict_zero_shot(PredictionRequest req, const PredictorEnv& env);
ForcePrediction predict_knn_average(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env);
ForcePrediction predict_random_exp(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env);

/// Dispatches on req.backend.
ForcePrediction predict(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env);

}  // namespace expforce
