#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "expforce/pool.hpp"
#include "expforce/predictors.hpp"

namespace expforce {

enum class Outcome { Appropriate, Overestimate, Insufficient };

inline constexpr std::array<Outcome, 3> kAllOutcomes = {Outcome::Appropriate, Outcome::Overestimate,
                                                        Outcome::Insufficient};

std::string_view to_string(Outcome o);

/// Error statistics over (f_hat, f_star) pairs. std_n is the population
/// standard deviation of the absolute errors.
struct MetricBlock {
  double mae_n = 0.0;
  double rmse_n = 0.0;
  double std_n = 0.0;
  std::size_t n = 0;

  bool operator==(const MetricBlock&) const = default;
};

struct ForcePair {
  double f_hat_n = 0.0;
  double f_star_n = 0.0;
};

MetricBlock compute_metrics(std::span<const ForcePair> pairs);

inline constexpr double kOverestimateRatio = 3.0;
inline constexpr double kOverestimateMarginN = 4.0;

/// Insufficient when the lift failed; Overestimate when f_hat exceeds
/// 3 * f_star or f_star + 4 N (strictly); Appropriate otherwise.
Outcome classify_outcome(double f_hat_n, double f_star_n, bool lift_succeeded);

/// Offline proxy: the lift succeeds iff f_hat >= f_star.
Outcome classify_offline(double f_hat_n, double f_star_n);

/// Line-oriented run log. Lines are buffered and optionally echoed.
class RunLog {
 public:
  explicit RunLog(std::ostream* echo = nullptr) : echo_(echo) {}
  void line(const std::string& text);
  std::vector<std::string> lines() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> lines_;
  std::ostream* echo_;
};

struct EvalConfig {
  BackendKind backend = BackendKind::KnnAverage;
  int k = 7;
  int n_folds = 5;
  std::uint64_t seed = 0;
  PredictorEnv env;
};

struct QueryResult {
  std::string query_id;
  Category category = Category::OddShapes;
  int fold = 0;
  double f_star_n = 0.0;
  std::optional<double> f_hat_n;
  std::optional<double> raw_f_hat_n;
  bool clamped = false;
  std::optional<Outcome> outcome;
  std::string error;  // empty on success
  std::vector<std::string> retrieved_ids;
  std::vector<std::string> warnings;

  bool operator==(const QueryResult&) const = default;
};

using OutcomeCounts = std::map<Outcome, std::size_t>;

struct CategorySummary {
  std::size_t queries = 0;
  std::size_t failures = 0;
  std::optional<MetricBlock> metrics;
  OutcomeCounts outcomes;

  bool operator==(const CategorySummary&) const = default;
};

struct EvalReport {
  BackendKind backend = BackendKind::KnnAverage;
  int k = 0;
  int n_folds = 0;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::vector<std::optional<MetricBlock>> per_fold;
  std::map<Category, CategorySummary> per_category;  // all six categories
  std::optional<MetricBlock> overall;
  OutcomeCounts outcomes;
  std::size_t queries = 0;
  std::size_t failures = 0;
  std::size_t clamped = 0;
  std::vector<QueryResult> results;  // sorted by query id

  bool operator==(const EvalReport&) const = default;
};

struct SweepPoint {
  int k = 0;
  std::optional<MetricBlock> overall;
  double fold_std_n = 0.0;  // population std of per-fold MAE
  EvalReport report;

  bool operator==(const SweepPoint&) const = default;
};

struct SweepResult {
  BackendKind backend = BackendKind::KnnAverage;
  int n_folds = 0;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::vector<SweepPoint> points;

  bool operator==(const SweepResult&) const = default;
};

/// Hash of every input that can change the results of a run with `cfg`.
std::string eval_fingerprint(const Pool& pool, const EvalConfig& cfg, const std::vector<int>& ks);

/// Embeds every record (description + image) through the gateway.
EmbeddingTable embed_pool(const Pool& pool, const Gateway& gateway);

EvalReport run_cross_validation(const Pool& pool, const EvalConfig& cfg, RunLog* log = nullptr);

/// One cross-validation per k, all sharing the fold partition, the pool
/// embeddings and the per-query descriptions.
SweepResult run_k_sweep(const Pool& pool, const EvalConfig& cfg, const std::vector<int>& k_values,
                        RunLog* log = nullptr);

// Report files.
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportTable = "report.md";
inline constexpr const char* kSweepCsv = "sweep.csv";

std::string report_json(const EvalReport& report);
std::string report_json(const SweepResult& sweep);
std::string report_table(const EvalReport& report);
std::string report_table(const SweepResult& sweep);
std::string sweep_csv(const EvalReport& report);
std::string sweep_csv(const SweepResult& sweep);

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);
void emit_report(const SweepResult& sweep, const std::filesystem::path& out_dir);

EvalReport eval_report_from_json(const std::string& text);
SweepResult sweep_result_from_json(const std::string& text);

/// Reads report.json from `in_dir` (either kind) and re-emits all files into `out_dir`.
void reemit_report(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir);

}  // namespace expforce
