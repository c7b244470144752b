#include <cmath>
#include <set>

#include "doctest.h"
#include "expforce/errors.hpp"
#include "expforce/io.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace expforce;
using testing::TempDir;

TEST_CASE("metrics") {
  std::vector<ForcePair> p{{2, 1}, {1, 3}, {2, 2}};
  auto m = compute_metrics(p);
  CHECK(m.n == 3);
  CHECK(m.mae_n == doctest::Approx(1.0));
  CHECK(m.rmse_n == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(m.std_n == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK_THROWS_AS(compute_metrics(std::vector<ForcePair>{}), Error);
}

TEST_CASE("outcome classification") {
  CHECK(classify_outcome(7.0, 1.0, true) == Outcome::Overestimate);
  CHECK(classify_outcome(3.0, 1.0, true) == Outcome::Appropriate);
  CHECK(classify_outcome(7.0, 3.0, true) == Outcome::Appropriate);
  CHECK(classify_outcome(5.0, 1.0, true) == Outcome::Overestimate);  // 3x rule alone
  CHECK(classify_outcome(13.0, 4.0, true) == Outcome::Overestimate);  // +4 N rule alone
  CHECK(classify_outcome(1.0, 1.0, false) == Outcome::Insufficient);
  CHECK(classify_offline(0.5, 0.75) == Outcome::Insufficient);
}

TEST_CASE("cross-validation report bookkeeping") {
  TempDir dir;
  auto pool = generate_synthetic_pool(47, 2, OracleConfig{}, dir / "pool");
  auto gw = testing::stub_gateway(pool);
  RunLog log;
  auto r = run_cross_validation(pool, testing::eval_config(BackendKind::ExpForce, 5, gw, 3), &log);
  CHECK(r.queries == 47);
  CHECK(r.failures == 0);
  CHECK(r.per_category.size() == 6);
  CHECK(r.per_fold.size() == 5);
  CHECK(log.lines().size() == 47);
  CHECK(log.lines()[0].rfind("query=", 0) == 0);
  std::size_t per_cat = 0;
  for (const auto& [c, s] : r.per_category) per_cat += s.queries;
  CHECK(per_cat == 47);
  CHECK(std::is_sorted(r.results.begin(), r.results.end(),
                       [](const auto& a, const auto& b) { return a.query_id < b.query_id; }));
  CHECK(r.config_fingerprint.size() == 16);
}

TEST_CASE("failures are recorded, not imputed") {
  TempDir dir;
  auto pool = generate_synthetic_pool(20, 2, OracleConfig{}, dir / "pool");
  auto gw = testing::stub_gateway(pool);
  std::atomic<int> n{0};
  gw.predictor = std::make_shared<FunctionCompletionBackend>("flaky", [&](const auto&) {
    return (n++ % 4 == 0) ? std::string("no number here") : std::string("FORCE_N: 2.0");
  });
  auto ec = testing::eval_config(BackendKind::ExpForce, 3, gw, 0);
  gw.concurrency_limit = 1;
  auto r = run_cross_validation(pool, ec);
  CHECK(r.failures == 5);
  std::size_t outcomes = 0;
  for (const auto& [o, c] : r.outcomes) outcomes += c;
  CHECK(outcomes == 15);
  CHECK(r.overall->n == 15);
  for (const auto& q : r.results) CHECK(q.error.empty() == q.f_hat_n.has_value());
}

TEST_CASE("report files and round trip") {
  TempDir dir;
  auto pool = generate_synthetic_pool(30, 2, OracleConfig{}, dir / "pool");
  auto gw = testing::stub_gateway(pool);
  auto sweep = run_k_sweep(pool, testing::eval_config(BackendKind::KnnAverage, 7, gw, 1), {1, 3, 5});
  emit_report(sweep, dir / "out");
  auto csv = read_file(dir / "out" / kSweepCsv);
  CHECK(csv.rfind("k,mae_n,std_n\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  auto md = read_file(dir / "out" / kReportTable);
  CHECK(md.find("Overall") != std::string::npos);

  CHECK(sweep_result_from_json(read_file(dir / "out" / kReportJson)) == sweep);
  reemit_report(dir / "out", dir / "again");
  for (const char* f : {kReportJson, kReportTable, kSweepCsv}) {
    CHECK(read_file(dir / "again" / f) == read_file(dir / "out" / f));
  }

  auto cv = run_cross_validation(pool, testing::eval_config(BackendKind::RandomExp, 4, gw, 1));
  CHECK(eval_report_from_json(report_json(cv)) == cv);
  auto j = nlohmann::json::parse(report_json(cv));
  CHECK(j["kind"] == "cv");
}

TEST_CASE("sweep validates k values") {
  TempDir dir;
  auto pool = generate_synthetic_pool(12, 2, OracleConfig{}, dir / "pool");
  auto gw = testing::stub_gateway(pool);
  auto ec = testing::eval_config(BackendKind::KnnAverage, 7, gw);
  CHECK_THROWS_AS(run_k_sweep(pool, ec, {3, 1}), Error);
  CHECK_THROWS_AS(run_k_sweep(pool, ec, {0, 1}), Error);
  ec.backend = BackendKind::ExpForce;
  CHECK(run_k_sweep(pool, ec, {0, 2}).points.size() == 2);
}

TEST_CASE("fingerprint ignores concurrency, tracks seed and k") {
  TempDir dir;
  auto pool = generate_synthetic_pool(12, 2, OracleConfig{}, dir / "pool");
  auto g1 = testing::stub_gateway(pool, 1);
  auto g4 = testing::stub_gateway(pool, 4);
  auto a = testing::eval_config(BackendKind::ExpForce, 3, g1, 5);
  auto b = testing::eval_config(BackendKind::ExpForce, 3, g4, 5);
  CHECK(eval_fingerprint(pool, a, {3}) == eval_fingerprint(pool, b, {3}));
  b.seed = 6;
  CHECK(eval_fingerprint(pool, a, {3}) != eval_fingerprint(pool, b, {3}));
  CHECK(eval_fingerprint(pool, a, {3}) != eval_fingerprint(pool, a, {4}));
}
