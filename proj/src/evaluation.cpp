#include "expforce/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "expforce/concurrency.hpp"
#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"

namespace expforce {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Appropriate: return "Appropriate";
    case Outcome::Overestimate: return "Overestimate";
    case Outcome::Insufficient: return "Insufficient";
  }
  return "Appropriate";
}

MetricBlock compute_metrics(std::span<const ForcePair> pairs) {
  if (pairs.empty()) fail(ErrorCode::EmptyInput, "no prediction pairs");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (const auto& p : pairs) {
    if (!(p.f_hat_n > 0.0) || !(p.f_star_n > 0.0)) {
      fail(ErrorCode::InvalidArgument, "forces must be positive");
    }
    double err = std::fabs(p.f_hat_n - p.f_star_n);
    abs_sum += err;
    sq_sum += err * err;
  }
  const auto n = static_cast<double>(pairs.size());
  MetricBlock m;
  m.n = pairs.size();
  m.mae_n = abs_sum / n;
  m.rmse_n = std::sqrt(sq_sum / n);
  double var = 0.0;
  for (const auto& p : pairs) {
    double d = std::fabs(p.f_hat_n - p.f_star_n) - m.mae_n;
    var += d * d;
  }
  m.std_n = std::sqrt(var / n);
  // Guard the rmse >= mae identity against last-bit rounding.
  m.rmse_n = std::max(m.rmse_n, m.mae_n);
  return m;
}

Outcome classify_outcome(double f_hat_n, double f_star_n, bool lift_succeeded) {
  if (!lift_succeeded) return Outcome::Insufficient;
  if (f_hat_n > kOverestimateRatio * f_star_n || f_hat_n > f_star_n + kOverestimateMarginN) {
    return Outcome::Overestimate;
  }
  return Outcome::Appropriate;
}

Outcome classify_offline(double f_hat_n, double f_star_n) {
  return classify_outcome(f_hat_n, f_star_n, f_hat_n >= f_star_n);
}

void RunLog::line(const std::string& text) {
  std::lock_guard<std::mutex> guard(mu_);
  lines_.push_back(text);
  if (echo_ != nullptr) *echo_ << text << '\n';
}

std::vector<std::string> RunLog::lines() const {
  std::lock_guard<std::mutex> guard(mu_);
  return lines_;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t concurrency_of(const EvalConfig& cfg) {
  return cfg.env.gateway != nullptr ? std::max<std::size_t>(1, cfg.env.gateway->concurrency_limit) : 1;
}

bool needs_retrieval(BackendKind b, const std::vector<int>& ks) {
  if (b == BackendKind::KnnAverage) return true;
  if (b != BackendKind::ExpForce) return false;
  return std::any_of(ks.begin(), ks.end(), [](int k) { return k > 0; });
}

void check_ks(BackendKind backend, const std::vector<int>& ks) {
  if (ks.empty()) fail(ErrorCode::InvalidK, "no k values given");
  for (int k : ks) {
    if (k < 0 || (k == 0 && !allows_zero_k(backend))) {
      fail(ErrorCode::InvalidK, "k=" + std::to_string(k) + " is not valid for " + std::string(to_string(backend)));
    }
  }
}

std::string describe_error(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return std::string(to_string(err->code())) + ": " + e.what();
  return e.what();
}

struct QueryPrep {
  std::optional<std::string> description;
  std::optional<EmbeddingVector> embedding;
  std::string error;
};

struct Prepared {
  std::vector<Fold> folds;
  std::map<std::string, int> fold_of;
  std::map<std::string, std::string> images;
  EmbeddingTable embeddings;
  std::map<std::string, QueryPrep> queries;
};

Prepared prepare(const Pool& pool, const EvalConfig& cfg, const std::vector<int>& ks) {
  Prepared p;
  p.folds = partition_folds(pool, cfg.n_folds, cfg.seed);
  for (std::size_t f = 0; f < p.folds.size(); ++f) {
    for (const auto& id : p.folds[f].query_ids) p.fold_of[id] = static_cast<int>(f);
  }
  for (const auto& r : pool.records()) p.images.emplace(r.id, pool.read_image(r));

  if (!needs_retrieval(cfg.backend, ks)) return p;
  if (cfg.env.gateway == nullptr) fail(ErrorCode::ConfigError, "retrieval needs a model gateway");

  const auto& records = pool.records();
  const std::size_t limit = concurrency_of(cfg);
  std::vector<std::optional<EmbeddingVector>> pool_vecs(records.size());
  parallel_for(records.size(), limit, [&](std::size_t i) {
    pool_vecs[i] = cfg.env.gateway->embed(p.images.at(records[i].id), records[i].description);
  });
  for (std::size_t i = 0; i < records.size(); ++i) p.embeddings.emplace(records[i].id, std::move(*pool_vecs[i]));

  std::vector<QueryPrep> preps(records.size());
  parallel_for(records.size(), limit, [&](std::size_t i) {
    const auto& r = records[i];
    QueryPrep& q = preps[i];
    if (cfg.backend == BackendKind::KnnAverage) {
      // The baseline reuses the stored description, hence the pool embedding.
      q.description = r.description;
      q.embedding = p.embeddings.at(r.id);
      return;
    }
    try {
      PredictionRequest req;
      req.query_id = r.id;
      req.query_image = p.images.at(r.id);
      ensure_query_embedding(req, cfg.env);
      q.description = req.query_description;
      q.embedding = req.query_embedding;
    } catch (const std::exception& e) {
      q.error = describe_error(e);
    }
  });
  for (std::size_t i = 0; i < records.size(); ++i) p.queries.emplace(records[i].id, std::move(preps[i]));
  return p;
}

void add_outcome(OutcomeCounts& counts, Outcome o) { ++counts[o]; }

OutcomeCounts zero_outcomes() {
  OutcomeCounts c;
  for (auto o : kAllOutcomes) c[o] = 0;
  return c;
}

EvalReport evaluate_k(const Pool& pool, const Prepared& prep, const EvalConfig& cfg, int k,
                      const std::string& fingerprint, RunLog* log) {
  EvalReport report;
  report.backend = cfg.backend;
  report.k = cfg.backend == BackendKind::ZeroShot ? 0 : k;
  report.n_folds = cfg.n_folds;
  report.seed = cfg.seed;
  report.config_fingerprint = fingerprint;
  report.outcomes = zero_outcomes();
  for (auto c : kAllCategories) report.per_category[c].outcomes = zero_outcomes();

  std::vector<QueryResult> results;
  for (std::size_t f = 0; f < prep.folds.size(); ++f) {
    const Fold& fold = prep.folds[f];
    ExperienceView view = make_view(pool, fold.pool_ids, prep.embeddings, &prep.images);
    std::vector<QueryResult> fold_results(fold.query_ids.size());
    parallel_for(fold.query_ids.size(), concurrency_of(cfg), [&](std::size_t i) {
      const auto& id = fold.query_ids[i];
      const auto& rec = pool.at(id);
      QueryResult& qr = fold_results[i];
      qr.query_id = id;
      qr.category = rec.category;
      qr.fold = static_cast<int>(f);
      qr.f_star_n = rec.f_star_n;
      try {
        PredictionRequest req;
        req.query_id = id;
        req.query_image = prep.images.at(id);
        req.k = k;
        req.seed = cfg.seed;
        req.backend = cfg.backend;
        if (auto it = prep.queries.find(id); it != prep.queries.end()) {
          if (!it->second.error.empty()) throw std::runtime_error(it->second.error);
          req.query_description = it->second.description;
          req.query_embedding = it->second.embedding;
        }
        ForcePrediction pred = predict(std::move(req), view, cfg.env);
        qr.f_hat_n = pred.f_hat_n;
        qr.raw_f_hat_n = pred.raw_f_hat_n;
        qr.clamped = pred.clamped;
        qr.outcome = classify_offline(pred.f_hat_n, rec.f_star_n);
        for (const auto& e : pred.retrieved.entries) qr.retrieved_ids.push_back(e.record_id);
        qr.warnings = std::move(pred.warnings);
      } catch (const std::exception& e) {
        qr.error = describe_error(e);
      }
    });

    std::vector<ForcePair> pairs;
    for (const auto& qr : fold_results) {
      if (qr.f_hat_n) pairs.push_back({*qr.f_hat_n, qr.f_star_n});
    }
    report.per_fold.push_back(pairs.empty() ? std::nullopt : std::optional(compute_metrics(pairs)));
    for (auto& qr : fold_results) results.push_back(std::move(qr));
  }

  std::sort(results.begin(), results.end(),
            [](const QueryResult& a, const QueryResult& b) { return a.query_id < b.query_id; });

  std::vector<ForcePair> all_pairs;
  std::map<Category, std::vector<ForcePair>> by_cat;
  for (const auto& qr : results) {
    auto& cat = report.per_category[qr.category];
    ++cat.queries;
    ++report.queries;
    if (!qr.f_hat_n) {
      ++cat.failures;
      ++report.failures;
      continue;
    }
    if (qr.clamped) ++report.clamped;
    all_pairs.push_back({*qr.f_hat_n, qr.f_star_n});
    by_cat[qr.category].push_back({*qr.f_hat_n, qr.f_star_n});
    add_outcome(report.outcomes, *qr.outcome);
    add_outcome(cat.outcomes, *qr.outcome);
  }
  if (!all_pairs.empty()) report.overall = compute_metrics(all_pairs);
  for (auto& [c, pairs] : by_cat) report.per_category[c].metrics = compute_metrics(pairs);

  if (log != nullptr) {
    for (const auto& qr : results) {
      for (const auto& w : qr.warnings) log->line("warning query=" + qr.query_id + " " + w);
      std::string line = "query=" + qr.query_id + " backend=" + std::string(to_string(report.backend)) +
                         " k=" + std::to_string(report.k) + " fold=" + std::to_string(qr.fold);
      if (qr.f_hat_n) {
        line += " f_hat=" + num(*qr.f_hat_n) + " f_star=" + num(qr.f_star_n) +
                " outcome=" + std::string(to_string(*qr.outcome)) + (qr.clamped ? " clamped=1" : "");
      } else {
        line += " f_hat=NA f_star=" + num(qr.f_star_n) + " outcome=Failed error=\"" + qr.error + "\"";
      }
      log->line(line);
    }
  }
  report.results = std::move(results);
  return report;
}

}  // namespace

std::string eval_fingerprint(const Pool& pool, const EvalConfig& cfg, const std::vector<int>& ks) {
  Sha256 h;
  h.update_field("expforce-eval-v1");
  h.update_field(pool_digest(pool));
  h.update_field(to_string(cfg.backend));
  for (int k : ks) h.update_field(std::to_string(cfg.backend == BackendKind::ZeroShot ? 0 : k));
  h.update_field(std::to_string(cfg.n_folds));
  h.update_field(std::to_string(cfg.seed));

  const Gateway* gw = cfg.env.gateway;
  if (needs_retrieval(cfg.backend, ks)) {
    h.update_field("embedder").update_field(gw && gw->embedder ? gw->embedder->provider_id() : "");
  }
  if (uses_predictor_model(cfg.backend)) {
    const auto& ctx = cfg.env.ctx;
    h.update_field(ctx.task_objective).update_field(ctx.include_embodiment ? "1" : "0");
    h.update_field(ctx.include_embodiment ? ctx.embodiment_text : "");
    h.update_field(ctx.include_embodiment && ctx.embodiment_image ? sha256_hex(*ctx.embodiment_image) : "");
    h.update_field(ctx.scale_reference_image ? sha256_hex(*ctx.scale_reference_image) : "");
    h.update_field(cfg.env.templates.context).update_field(cfg.env.templates.pred_instruction);
    h.update_field("predictor").update_field(gw && gw->predictor ? gw->predictor->fingerprint() : "");
    if (cfg.backend == BackendKind::ExpForce && needs_retrieval(cfg.backend, ks)) {
      h.update_field(cfg.env.templates.desc_instruction);
      h.update_field("descriptor").update_field(gw && gw->descriptor ? gw->descriptor->fingerprint() : "");
    }
  }
  return h.hex_digest().substr(0, 16);
}

EmbeddingTable embed_pool(const Pool& pool, const Gateway& gateway) {
  const auto& records = pool.records();
  std::vector<std::optional<EmbeddingVector>> vecs(records.size());
  parallel_for(records.size(), gateway.concurrency_limit, [&](std::size_t i) {
    vecs[i] = gateway.embed(pool.read_image(records[i]), records[i].description);
  });
  EmbeddingTable out;
  std::size_t d = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (d == 0) d = vecs[i]->d();
    if (vecs[i]->d() != d) {
      fail(ErrorCode::DimensionMismatch, "record " + records[i].id + " embedded with d=" + std::to_string(vecs[i]->d()));
    }
    out.emplace(records[i].id, std::move(*vecs[i]));
  }
  return out;
}

EvalReport run_cross_validation(const Pool& pool, const EvalConfig& cfg, RunLog* log) {
  std::vector<int> ks{cfg.k};
  check_ks(cfg.backend, cfg.backend == BackendKind::ZeroShot ? std::vector<int>{0} : ks);
  Prepared prep = prepare(pool, cfg, ks);
  return evaluate_k(pool, prep, cfg, cfg.k, eval_fingerprint(pool, cfg, ks), log);
}

SweepResult run_k_sweep(const Pool& pool, const EvalConfig& cfg, const std::vector<int>& k_values, RunLog* log) {
  check_ks(cfg.backend, k_values);
  for (std::size_t i = 1; i < k_values.size(); ++i) {
    if (k_values[i] <= k_values[i - 1]) fail(ErrorCode::InvalidK, "k values must be strictly increasing");
  }
  Prepared prep = prepare(pool, cfg, k_values);
  SweepResult sweep;
  sweep.backend = cfg.backend;
  sweep.n_folds = cfg.n_folds;
  sweep.seed = cfg.seed;
  sweep.config_fingerprint = eval_fingerprint(pool, cfg, k_values);
  for (int k : k_values) {
    EvalConfig at_k = cfg;
    at_k.k = k;
    SweepPoint pt;
    pt.k = k;
    pt.report = evaluate_k(pool, prep, at_k, k, eval_fingerprint(pool, at_k, {k}), log);
    pt.report.k = k;
    pt.overall = pt.report.overall;
    std::vector<double> fold_mae;
    for (const auto& m : pt.report.per_fold) {
      if (m) fold_mae.push_back(m->mae_n);
    }
    if (!fold_mae.empty()) {
      double mean = 0.0;
      for (double v : fold_mae) mean += v;
      mean /= static_cast<double>(fold_mae.size());
      double var = 0.0;
      for (double v : fold_mae) var += (v - mean) * (v - mean);
      pt.fold_std_n = std::sqrt(var / static_cast<double>(fold_mae.size()));
    }
    sweep.points.push_back(std::move(pt));
  }
  return sweep;
}

}  // namespace expforce
