#include <cmath>
#include <cstdio>

#include "expforce/errors.hpp"
#include "expforce/evaluation.hpp"
#include "expforce/io.hpp"
#include "json.hpp"

namespace expforce {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kOfflineProxyNote = "lift succeeds iff f_hat >= f_star (offline proxy)";

ojson metrics_json(const std::optional<MetricBlock>& m) {
  if (!m) return nullptr;
  ojson j;
  j["mae_n"] = m->mae_n;
  j["rmse_n"] = m->rmse_n;
  j["std_n"] = m->std_n;
  j["n"] = m->n;
  return j;
}

std::optional<MetricBlock> metrics_from(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  MetricBlock m;
  m.mae_n = j.at("mae_n").get<double>();
  m.rmse_n = j.at("rmse_n").get<double>();
  m.std_n = j.at("std_n").get<double>();
  m.n = j.at("n").get<std::size_t>();
  return m;
}

ojson outcomes_json(const OutcomeCounts& c) {
  ojson j = ojson::object();
  for (auto o : kAllOutcomes) {
    auto it = c.find(o);
    j[std::string(to_string(o))] = it == c.end() ? 0 : it->second;
  }
  return j;
}

OutcomeCounts outcomes_from(const ojson& j) {
  OutcomeCounts c;
  for (auto o : kAllOutcomes) c[o] = j.at(std::string(to_string(o))).get<std::size_t>();
  return c;
}

Outcome parse_outcome(const std::string& s) {
  for (auto o : kAllOutcomes) {
    if (to_string(o) == s) return o;
  }
  fail(ErrorCode::SchemaViolation, "unknown outcome '" + s + "'");
}

template <typename T>
ojson opt(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson cv_json(const EvalReport& r) {
  ojson j;
  j["kind"] = "cv";
  j["backend"] = std::string(to_string(r.backend));
  j["k"] = r.k;
  j["n_folds"] = r.n_folds;
  j["seed"] = r.seed;
  j["config_fingerprint"] = r.config_fingerprint;
  j["outcome_rule"] = kOfflineProxyNote;
  j["queries"] = r.queries;
  j["failures"] = r.failures;
  j["clamped"] = r.clamped;
  j["overall"] = metrics_json(r.overall);
  j["outcomes"] = outcomes_json(r.outcomes);
  ojson folds = ojson::array();
  for (const auto& m : r.per_fold) folds.push_back(metrics_json(m));
  j["per_fold"] = std::move(folds);
  ojson cats = ojson::object();
  for (const auto& [c, s] : r.per_category) {
    ojson cj;
    cj["queries"] = s.queries;
    cj["failures"] = s.failures;
    cj["metrics"] = metrics_json(s.metrics);
    cj["outcomes"] = outcomes_json(s.outcomes);
    cats[std::string(to_string(c))] = std::move(cj);
  }
  j["per_category"] = std::move(cats);
  ojson results = ojson::array();
  for (const auto& q : r.results) {
    ojson qj;
    qj["query_id"] = q.query_id;
    qj["category"] = std::string(to_string(q.category));
    qj["fold"] = q.fold;
    qj["f_star_n"] = q.f_star_n;
    qj["f_hat_n"] = opt(q.f_hat_n);
    qj["raw_f_hat_n"] = opt(q.raw_f_hat_n);
    qj["clamped"] = q.clamped;
    qj["outcome"] = q.outcome ? ojson(std::string(to_string(*q.outcome))) : ojson(nullptr);
    qj["error"] = q.error;
    qj["retrieved_ids"] = q.retrieved_ids;
    qj["warnings"] = q.warnings;
    results.push_back(std::move(qj));
  }
  j["results"] = std::move(results);
  return j;
}

EvalReport cv_from(const ojson& j) {
  EvalReport r;
  auto backend = parse_backend(j.at("backend").get<std::string>());
  if (!backend) fail(ErrorCode::SchemaViolation, "unknown backend in report");
  r.backend = *backend;
  r.k = j.at("k").get<int>();
  r.n_folds = j.at("n_folds").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  r.queries = j.at("queries").get<std::size_t>();
  r.failures = j.at("failures").get<std::size_t>();
  r.clamped = j.at("clamped").get<std::size_t>();
  r.overall = metrics_from(j.at("overall"));
  r.outcomes = outcomes_from(j.at("outcomes"));
  for (const auto& m : j.at("per_fold")) r.per_fold.push_back(metrics_from(m));
  for (const auto& [name, cj] : j.at("per_category").items()) {
    auto c = parse_category(name);
    if (!c) fail(ErrorCode::SchemaViolation, "unknown category '" + name + "' in report");
    CategorySummary s;
    s.queries = cj.at("queries").get<std::size_t>();
    s.failures = cj.at("failures").get<std::size_t>();
    s.metrics = metrics_from(cj.at("metrics"));
    s.outcomes = outcomes_from(cj.at("outcomes"));
    r.per_category[*c] = std::move(s);
  }
  for (const auto& qj : j.at("results")) {
    QueryResult q;
    q.query_id = qj.at("query_id").get<std::string>();
    auto c = parse_category(qj.at("category").get<std::string>());
    if (!c) fail(ErrorCode::SchemaViolation, "unknown category in report results");
    q.category = *c;
    q.fold = qj.at("fold").get<int>();
    q.f_star_n = qj.at("f_star_n").get<double>();
    if (!qj.at("f_hat_n").is_null()) q.f_hat_n = qj.at("f_hat_n").get<double>();
    if (!qj.at("raw_f_hat_n").is_null()) q.raw_f_hat_n = qj.at("raw_f_hat_n").get<double>();
    q.clamped = qj.at("clamped").get<bool>();
    if (!qj.at("outcome").is_null()) q.outcome = parse_outcome(qj.at("outcome").get<std::string>());
    q.error = qj.at("error").get<std::string>();
    q.retrieved_ids = qj.at("retrieved_ids").get<std::vector<std::string>>();
    q.warnings = qj.at("warnings").get<std::vector<std::string>>();
    r.results.push_back(std::move(q));
  }
  return r;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pct(std::size_t part, std::size_t whole) {
  if (whole == 0) return "n/a";
  return fmt("%.1f", 100.0 * static_cast<double>(part) / static_cast<double>(whole));
}

std::string table_row(const std::string& label, std::size_t queries, std::size_t failures,
                      const OutcomeCounts& outcomes, const std::optional<MetricBlock>& m) {
  std::size_t ok = queries - failures;
  auto count = [&](Outcome o) {
    auto it = outcomes.find(o);
    return it == outcomes.end() ? std::size_t{0} : it->second;
  };
  std::string row = "| " + label + " | " + std::to_string(queries) + " | " + pct(count(Outcome::Appropriate), ok) +
                    " | " + pct(count(Outcome::Overestimate), ok) + " | " + pct(count(Outcome::Insufficient), ok) +
                    " | " + std::to_string(failures) + " | ";
  if (m) {
    row += fmt("%.3f", m->mae_n) + " ± " + fmt("%.3f", m->std_n) + " | " + fmt("%.3f", m->rmse_n) + " |";
  } else {
    row += "n/a | n/a |";
  }
  return row;
}

std::string category_table(const EvalReport& r) {
  std::string out =
      "| Category | N | Appr. (%) | Overest. (%) | Insuff. (%) | Failed | MAE ± STD (N) | RMSE (N) |\n"
      "|---|---:|---:|---:|---:|---:|---|---:|\n";
  for (auto c : kAllCategories) {
    CategorySummary s;
    if (auto it = r.per_category.find(c); it != r.per_category.end()) s = it->second;
    out += table_row(std::string(to_string(c)), s.queries, s.failures, s.outcomes, s.metrics) + "\n";
  }
  out += table_row("Overall", r.queries, r.failures, r.outcomes, r.overall) + "\n";
  return out;
}

double fold_std(const EvalReport& r) {
  std::vector<double> v;
  for (const auto& m : r.per_fold) {
    if (m) v.push_back(m->mae_n);
  }
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

std::string csv_row(int k, const std::optional<MetricBlock>& m, double std_n) {
  if (!m) return std::to_string(k) + ",nan,nan\n";
  return std::to_string(k) + "," + fmt("%.6f", m->mae_n) + "," + fmt("%.6f", std_n) + "\n";
}

ojson parse_report(const std::string& text) {
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, std::string("report is not valid JSON: ") + e.what());
  }
}

}  // namespace

std::string report_json(const EvalReport& report) { return cv_json(report).dump(2) + "\n"; }

std::string report_json(const SweepResult& sweep) {
  ojson j;
  j["kind"] = "sweep";
  j["backend"] = std::string(to_string(sweep.backend));
  j["n_folds"] = sweep.n_folds;
  j["seed"] = sweep.seed;
  j["config_fingerprint"] = sweep.config_fingerprint;
  ojson points = ojson::array();
  for (const auto& p : sweep.points) {
    ojson pj;
    pj["k"] = p.k;
    pj["overall"] = metrics_json(p.overall);
    pj["fold_std_n"] = p.fold_std_n;
    pj["report"] = cv_json(p.report);
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& r) {
  std::string out = "# Cross-validation report\n\n";
  out += "- backend: " + std::string(to_string(r.backend)) + "\n";
  out += "- k: " + std::to_string(r.k) + "\n";
  out += "- folds: " + std::to_string(r.n_folds) + "\n";
  out += "- seed: " + std::to_string(r.seed) + "\n";
  out += "- config fingerprint: " + r.config_fingerprint + "\n";
  out += "- queries: " + std::to_string(r.queries) + ", failures: " + std::to_string(r.failures) +
         ", clamped predictions: " + std::to_string(r.clamped) + "\n";
  out += "- outcome rule: " + std::string(kOfflineProxyNote) + "\n\n";
  out += "Percentages are over successful predictions; STD is the standard deviation of absolute errors.\n\n";
  out += category_table(r);
  out += "\n## Per fold\n\n| Fold | N | MAE (N) | RMSE (N) |\n|---:|---:|---:|---:|\n";
  for (std::size_t f = 0; f < r.per_fold.size(); ++f) {
    const auto& m = r.per_fold[f];
    out += "| " + std::to_string(f) + " | " + (m ? std::to_string(m->n) : "0") + " | " +
           (m ? fmt("%.3f", m->mae_n) : "n/a") + " | " + (m ? fmt("%.3f", m->rmse_n) : "n/a") + " |\n";
  }
  return out;
}

std::string report_table(const SweepResult& s) {
  std::string out = "# k-sweep report\n\n";
  out += "- backend: " + std::string(to_string(s.backend)) + "\n";
  out += "- folds: " + std::to_string(s.n_folds) + "\n";
  out += "- seed: " + std::to_string(s.seed) + "\n";
  out += "- config fingerprint: " + s.config_fingerprint + "\n\n";
  out += "| k | N | MAE (N) | STD across folds (N) | RMSE (N) | Failed |\n|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& p : s.points) {
    out += "| " + std::to_string(p.k) + " | " + std::to_string(p.report.queries) + " | " +
           (p.overall ? fmt("%.3f", p.overall->mae_n) : "n/a") + " | " + fmt("%.3f", p.fold_std_n) + " | " +
           (p.overall ? fmt("%.3f", p.overall->rmse_n) : "n/a") + " | " + std::to_string(p.report.failures) + " |\n";
  }
  for (const auto& p : s.points) {
    out += "\n## k = " + std::to_string(p.k) + "\n\n" + category_table(p.report);
  }
  return out;
}

std::string sweep_csv(const EvalReport& r) { return std::string("k,mae_n,std_n\n") + csv_row(r.k, r.overall, fold_std(r)); }

std::string sweep_csv(const SweepResult& s) {
  std::string out = "k,mae_n,std_n\n";
  for (const auto& p : s.points) out += csv_row(p.k, p.overall, p.fold_std_n);
  return out;
}

void emit_report(const EvalReport& report, const fs::path& out_dir) {
  write_file_atomic(out_dir / kReportJson, report_json(report));
  write_file_atomic(out_dir / kReportTable, report_table(report));
  write_file_atomic(out_dir / kSweepCsv, sweep_csv(report));
}

void emit_report(const SweepResult& sweep, const fs::path& out_dir) {
  write_file_atomic(out_dir / kReportJson, report_json(sweep));
  write_file_atomic(out_dir / kReportTable, report_table(sweep));
  write_file_atomic(out_dir / kSweepCsv, sweep_csv(sweep));
}

EvalReport eval_report_from_json(const std::string& text) {
  auto j = parse_report(text);
  if (j.value("kind", "") != "cv") fail(ErrorCode::SchemaViolation, "not a cross-validation report");
  try {
    return cv_from(j);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, std::string("malformed report: ") + e.what());
  }
}

SweepResult sweep_result_from_json(const std::string& text) {
  auto j = parse_report(text);
  if (j.value("kind", "") != "sweep") fail(ErrorCode::SchemaViolation, "not a sweep report");
  try {
    SweepResult s;
    auto backend = parse_backend(j.at("backend").get<std::string>());
    if (!backend) fail(ErrorCode::SchemaViolation, "unknown backend in report");
    s.backend = *backend;
    s.n_folds = j.at("n_folds").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    for (const auto& pj : j.at("points")) {
      SweepPoint p;
      p.k = pj.at("k").get<int>();
      p.overall = metrics_from(pj.at("overall"));
      p.fold_std_n = pj.at("fold_std_n").get<double>();
      p.report = cv_from(pj.at("report"));
      s.points.push_back(std::move(p));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, std::string("malformed report: ") + e.what());
  }
}

void reemit_report(const fs::path& in_dir, const fs::path& out_dir) {
  std::string text = read_file(in_dir / kReportJson);
  auto j = parse_report(text);
  if (j.value("kind", "") == "sweep") {
    emit_report(sweep_result_from_json(text), out_dir);
  } else {
    emit_report(eval_report_from_json(text), out_dir);
  }
}

}  // namespace expforce
