#include "expforce/predictors.hpp"

#include <algorithm>

#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/random.hpp"

namespace expforce {

std::string_view to_string(BackendKind b) {
  switch (b) {
    case BackendKind::ExpForce: return "expforce";
    case BackendKind::ZeroShot: return "zero-shot";
    case BackendKind::KnnAverage: return "knn-average";
    case BackendKind::RandomExp: return "random-exp";
  }
  return "expforce";
}

std::optional<BackendKind> parse_backend(std::string_view name) {
  for (auto b : {BackendKind::ExpForce, BackendKind::ZeroShot, BackendKind::KnnAverage, BackendKind::RandomExp}) {
    if (to_string(b) == name) return b;
  }
  return std::nullopt;
}

bool uses_predictor_model(BackendKind b) { return b != BackendKind::KnnAverage; }

bool allows_zero_k(BackendKind b) { return b == BackendKind::ExpForce || b == BackendKind::ZeroShot; }

std::string ExperienceView::image(const std::string& id) const {
  if (images != nullptr) {
    if (auto it = images->find(id); it != images->end()) return it->second;
  }
  return pool->read_image(pool->at(id));
}

ExperienceView make_view(const Pool& pool, std::vector<std::string> ids, const EmbeddingTable& all,
                         const std::map<std::string, std::string>* images) {
  ExperienceView view;
  view.pool = &pool;
  view.images = images;
  for (const auto& id : ids) {
    if (auto it = all.find(id); it != all.end()) view.embeddings.emplace(id, it->second);
  }
  view.ids = std::move(ids);
  return view;
}

std::uint64_t random_exp_seed(std::uint64_t run_seed, std::string_view query_id) {
  return derive_seed(run_seed, fnv1a64(query_id));
}

std::vector<std::string> sample_experiences(const ExperienceView& view, const std::string& query_id, int k,
                                            std::uint64_t run_seed) {
  std::vector<std::string> candidates;
  for (const auto& id : view.ids) {
    if (id != query_id) candidates.push_back(id);
  }
  auto take = std::min(static_cast<std::size_t>(std::max(k, 0)), candidates.size());
  Rng rng(random_exp_seed(run_seed, query_id));
  // Partial Fisher-Yates over positions, then restore manifest order.
  std::vector<std::size_t> pos(candidates.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(pos.size() - i));
    std::swap(pos[i], pos[j]);
  }
  pos.resize(take);
  std::sort(pos.begin(), pos.end());
  std::vector<std::string> out;
  out.reserve(take);
  for (auto p : pos) out.push_back(candidates[p]);
  return out;
}

namespace {

void check_k(const PredictionRequest& req) {
  if (req.k < 0) fail(ErrorCode::InvalidK, "k must be non-negative");
  if (req.k == 0 && !allows_zero_k(req.backend)) {
    fail(ErrorCode::InvalidK, std::string(to_string(req.backend)) + " needs k >= 1");
  }
}

const Gateway& gateway_of(const PredictorEnv& env) {
  if (env.gateway == nullptr) fail(ErrorCode::ConfigError, "no model gateway configured");
  return *env.gateway;
}

RetrievedSet retrieve(const PredictionRequest& req, const ExperienceView& view, std::vector<std::string>& warnings) {
  return top_k(req.query_id, *req.query_embedding, view.embeddings, req.k, {},
               [&](const std::string& msg) { warnings.push_back(msg); });
}

ForcePrediction run_model(const PredictionRequest& req, RetrievedSet retrieved, const ExperienceView* view,
                          const PredictorEnv& env) {
  const Gateway& gw = gateway_of(env);
  if (!gw.predictor) fail(ErrorCode::ConfigError, "no predictor model configured");
  ExperienceView empty;
  PromptBundle bundle = assemble_predictor_prompt(req, retrieved, view ? *view : empty, env);

  ForcePrediction out;
  out.query_id = req.query_id;
  out.backend = req.backend;
  out.prompt_hash = prompt_hash(bundle.messages);
  out.description = req.query_description;
  std::string response = gw.predictor->complete(bundle.messages);
  out.raw_response = response;
  ParsedForce parsed = parse_force(response);
  out.f_hat_n = parsed.force_n;
  out.raw_f_hat_n = parsed.raw_force_n;
  out.clamped = parsed.clamped;
  out.retrieved = std::move(retrieved);
  return out;
}

}  // namespace

void ensure_query_embedding(PredictionRequest& req, const PredictorEnv& env) {
  if (req.query_embedding) return;
  const Gateway& gw = gateway_of(env);
  if (!req.query_description) {
    if (!gw.descriptor) fail(ErrorCode::ConfigError, "no descriptor model configured");
    req.query_description = describe_object(env.ctx, req.query_image, *gw.descriptor, env.templates);
  }
  req.query_embedding = gw.embed(req.query_image, *req.query_description);
}

PromptBundle assemble_predictor_prompt(const PredictionRequest& req, const RetrievedSet& retrieved,
                                       const ExperienceView& view, const PredictorEnv& env) {
  std::vector<ExperienceExample> examples;
  examples.reserve(retrieved.entries.size());
  for (const auto& e : retrieved.entries) {
    examples.push_back({view.pool->at(e.record_id), view.image(e.record_id)});
  }
  return build_predictor_prompt(env.ctx, examples, req.query_image, env.templates);
}

ForcePrediction predict_expforce(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env) {
  req.backend = BackendKind::ExpForce;
  check_k(req);
  std::vector<std::string> warnings;
  RetrievedSet retrieved;
  retrieved.query_id = req.query_id;
  if (req.k > 0) {
    ensure_query_embedding(req, env);
    retrieved = retrieve(req, view, warnings);
  }
  auto out = run_model(req, std::move(retrieved), &view, env);
  out.warnings = std::move(warnings);
  return out;
}

ForcePrediction predict_zero_shot(PredictionRequest req, const PredictorEnv& env) {
  req.backend = BackendKind::ZeroShot;
  req.k = 0;
  RetrievedSet retrieved;
  retrieved.query_id = req.query_id;
  return run_model(req, std::move(retrieved), nullptr, env);
}

ForcePrediction predict_knn_average(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env) {
  req.backend = BackendKind::KnnAverage;
  check_k(req);
  ensure_query_embedding(req, env);
  ForcePrediction out;
  out.query_id = req.query_id;
  out.backend = req.backend;
  out.description = req.query_description;
  out.retrieved = retrieve(req, view, out.warnings);
  if (out.retrieved.entries.empty()) fail(ErrorCode::EmptyRetrieval, "experience pool is empty");
  double sum = 0.0;
  for (const auto& e : out.retrieved.entries) sum += view.pool->at(e.record_id).f_star_n;
  out.f_hat_n = sum / static_cast<double>(out.retrieved.entries.size());
  out.raw_f_hat_n = out.f_hat_n;
  return out;
}

ForcePrediction predict_random_exp(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env) {
  req.backend = BackendKind::RandomExp;
  check_k(req);
  RetrievedSet retrieved;
  retrieved.query_id = req.query_id;
  retrieved.k_requested = req.k;
  std::vector<std::string> warnings;
  auto ids = sample_experiences(view, req.query_id, req.k, req.seed);
  if (ids.size() < static_cast<std::size_t>(req.k)) {
    warnings.push_back("k=" + std::to_string(req.k) + " exceeds " + std::to_string(ids.size()) +
                       " candidates for query " + req.query_id + "; using all");
  }
  // Random draws carry no similarity; ids keep the set's tie order.
  for (auto& id : ids) retrieved.entries.push_back({std::move(id), 0.0});
  auto out = run_model(req, std::move(retrieved), &view, env);
  out.warnings = std::move(warnings);
  return out;
}

ForcePrediction predict(PredictionRequest req, const ExperienceView& view, const PredictorEnv& env) {
  switch (req.backend) {
    case BackendKind::ExpForce: return predict_expforce(std::move(req), view, env);
    case BackendKind::ZeroShot: return predict_zero_shot(std::move(req), env);
    case BackendKind::KnnAverage: return predict_knn_average(std::move(req), view, env);
    case BackendKind::RandomExp: return predict_random_exp(std::move(req), view, env);
  }
  fail(ErrorCode::InvalidArgument, "unknown backend");
}

}  // namespace expforce
