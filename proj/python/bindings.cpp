// Python bindings for the expforce core.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "expforce/cli.hpp"
#include "expforce/config.hpp"
#include "expforce/errors.hpp"
#include "expforce/evaluation.hpp"
#include "expforce/grasp_oracle.hpp"
#include "expforce/io.hpp"
#include "expforce/predictors.hpp"
#include "expforce/prompting.hpp"
#include "expforce/retrieval.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace expforce;

namespace {

BackendKind backend_of(const std::string& name) {
  auto b = parse_backend(name);
  if (!b) throw py::value_error("unknown backend '" + name + "'");
  return *b;
}

RunConfig config_of(const std::optional<fs::path>& config, std::optional<std::uint64_t> seed,
                    std::optional<std::size_t> concurrency, const std::optional<fs::path>& cache_dir) {
  ConfigOverrides o;
  o.seed = seed;
  o.concurrency_limit = concurrency;
  o.cache_dir = cache_dir;
  return resolve_config(config, o);
}

py::dict record_dict(const ExperienceRecord& r) {
  py::dict d;
  d["id"] = r.id;
  d["name"] = r.name;
  d["category"] = std::string(to_string(r.category));
  d["mass_kg"] = r.mass_kg;
  d["f_star_n"] = r.f_star_n;
  d["image_ref"] = r.image_ref;
  d["description"] = r.description;
  return d;
}

}  // namespace

PYBIND11_MODULE(_expforce, m) {
  m.doc() = "Experience-conditioned grasp force estimation (C++ core)";

  static py::exception<Error> py_error(m, "ExpforceError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object code = py::str(std::string(to_string(e.code())));
      PyErr_SetObject(py_error.ptr(), py::make_tuple(code, py::str(e.what())).ptr());
    }
  });

  m.def("load_pool", [](const fs::path& dir) {
    Pool pool = load_pool(dir);
    py::list out;
    for (const auto& r : pool.records()) out.append(record_dict(r));
    return out;
  }, py::arg("dir"), "Records of a validated pool, in manifest order.");

  m.def("synth_pool", [](int n, const fs::path& out_dir, std::uint64_t seed, double force_noise_sigma_n) {
    OracleConfig cfg;
    cfg.force_noise_sigma_n = force_noise_sigma_n;
    return generate_synthetic_pool(n, seed, cfg, out_dir).size();
  }, py::arg("n"), py::arg("out_dir"), py::arg("seed") = 0, py::arg("force_noise_sigma_n") = 0.0);

  m.def("closed_form_fstar", [](double mass_kg, double mu_eff) {
    return closed_form_fstar(SyntheticObject{mass_kg, mu_eff, "", Category::OddShapes});
  }, py::arg("mass_kg"), py::arg("mu_eff"));

  m.def("adaptive_force_search", [](double mass_kg, double mu_eff) {
    auto r = adaptive_force_search(SyntheticObject{mass_kg, mu_eff, "", Category::OddShapes});
    return py::make_tuple(r.force_n, r.slip_events);
  }, py::arg("mass_kg"), py::arg("mu_eff"), "Returns (force_n, slip_events).");

  m.def("cosine_similarity", [](std::vector<double> a, std::vector<double> b) {
    return cosine_similarity(EmbeddingVector(std::move(a), "py"), EmbeddingVector(std::move(b), "py"));
  });

  m.def("top_k", [](const std::string& query_id, std::vector<double> query,
                    const std::map<std::string, std::vector<double>>& table, int k) {
    EmbeddingTable t;
    for (const auto& [id, v] : table) t.emplace(id, EmbeddingVector(v, "py"));
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : top_k(query_id, EmbeddingVector(std::move(query), "py"), t, k).entries) {
      out.emplace_back(e.record_id, e.similarity);
    }
    return out;
  }, py::arg("query_id"), py::arg("query"), py::arg("table"), py::arg("k"));

  m.def("compute_metrics", [](const std::vector<std::pair<double, double>>& pairs) {
    std::vector<ForcePair> p;
    for (const auto& [f_hat, f_star] : pairs) p.push_back({f_hat, f_star});
    auto mb = compute_metrics(p);
    py::dict d;
    d["mae_n"] = mb.mae_n;
    d["rmse_n"] = mb.rmse_n;
    d["std_n"] = mb.std_n;
    d["n"] = mb.n;
    return d;
  }, py::arg("pairs"), "pairs: [(f_hat_n, f_star_n), ...]");

  m.def("classify_outcome", [](double f_hat_n, double f_star_n, std::optional<bool> lift_succeeded) {
    auto o = lift_succeeded ? classify_outcome(f_hat_n, f_star_n, *lift_succeeded) : classify_offline(f_hat_n, f_star_n);
    return std::string(to_string(o));
  }, py::arg("f_hat_n"), py::arg("f_star_n"), py::arg("lift_succeeded") = py::none());

  m.def("parse_force", [](const std::string& text) {
    auto p = parse_force(text);
    return py::make_tuple(p.force_n, p.raw_force_n, p.clamped);
  }, py::arg("text"), "Returns (force_n, raw_force_n, clamped).");

  m.def("lint_template", [](const std::string& text) { return lint_template(text); });

  m.def("predict", [](const fs::path& pool_dir, const fs::path& query_image, const std::string& backend, int k,
                      std::optional<std::string> query_id, std::optional<fs::path> config,
                      std::optional<std::uint64_t> seed) {
    RunConfig cfg = config_of(config, seed, std::nullopt, std::nullopt);
    Pool pool = load_pool(pool_dir);
    auto ctx = build_context(cfg);
    auto templates = build_templates(cfg);
    Gateway gw = build_gateway(cfg, &pool, ctx, templates);
    PredictorEnv env{ctx, templates, &gw};
    PredictionRequest req;
    req.query_id = query_id.value_or("query");
    req.query_image = read_file(query_image);
    req.k = k;
    req.seed = cfg.seed;
    req.backend = backend_of(backend);
    EmbeddingTable table;
    if (req.backend == BackendKind::ExpForce || req.backend == BackendKind::KnnAverage) table = embed_pool(pool, gw);
    auto pred = predict(std::move(req), make_view(pool, pool.ids(), table), env);
    py::dict d;
    d["f_hat_n"] = pred.f_hat_n;
    d["raw_f_hat_n"] = pred.raw_f_hat_n;
    d["clamped"] = pred.clamped;
    std::vector<std::pair<std::string, double>> retrieved;
    for (const auto& e : pred.retrieved.entries) retrieved.emplace_back(e.record_id, e.similarity);
    d["retrieved"] = retrieved;
    d["warnings"] = pred.warnings;
    return d;
  }, py::arg("pool_dir"), py::arg("query_image"), py::arg("backend") = "expforce", py::arg("k") = 5,
     py::arg("query_id") = py::none(), py::arg("config") = py::none(), py::arg("seed") = py::none());

  m.def("run_cv_json", [](const fs::path& pool_dir, const std::string& backend, int k, int folds,
                          std::optional<std::uint64_t> seed, std::optional<fs::path> config,
                          std::optional<std::size_t> concurrency, std::optional<fs::path> out_dir) {
    RunConfig cfg = config_of(config, seed, concurrency, std::nullopt);
    Pool pool = load_pool(pool_dir);
    auto ctx = build_context(cfg);
    auto templates = build_templates(cfg);
    Gateway gw = build_gateway(cfg, &pool, ctx, templates);
    EvalConfig ec{backend_of(backend), k, folds, cfg.seed, PredictorEnv{ctx, templates, &gw}};
    EvalReport report;
    {
      py::gil_scoped_release release;
      report = run_cross_validation(pool, ec);
    }
    if (out_dir) emit_report(report, *out_dir);
    return report_json(report);
  }, py::arg("pool_dir"), py::arg("backend") = "expforce", py::arg("k") = 7, py::arg("folds") = 5,
     py::arg("seed") = py::none(), py::arg("config") = py::none(), py::arg("concurrency") = py::none(),
     py::arg("out_dir") = py::none());

  m.def("run_sweep_json", [](const fs::path& pool_dir, const std::string& backend, std::vector<int> ks, int folds,
                             std::optional<std::uint64_t> seed, std::optional<fs::path> config,
                             std::optional<fs::path> out_dir) {
    RunConfig cfg = config_of(config, seed, std::nullopt, std::nullopt);
    Pool pool = load_pool(pool_dir);
    auto ctx = build_context(cfg);
    auto templates = build_templates(cfg);
    Gateway gw = build_gateway(cfg, &pool, ctx, templates);
    EvalConfig ec{backend_of(backend), ks.empty() ? 0 : ks.front(), folds, cfg.seed, PredictorEnv{ctx, templates, &gw}};
    SweepResult sweep;
    {
      py::gil_scoped_release release;
      sweep = run_k_sweep(pool, ec, ks);
    }
    if (out_dir) emit_report(sweep, *out_dir);
    return report_json(sweep);
  }, py::arg("pool_dir"), py::arg("backend") = "expforce", py::arg("ks") = std::vector<int>{1, 3, 5, 7, 10},
     py::arg("folds") = 5, py::arg("seed") = py::none(), py::arg("config") = py::none(),
     py::arg("out_dir") = py::none());

  m.def("cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int rc = run_cli(args, out, err);
    return py::make_tuple(rc, out.str(), err.str());
  }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
