#include "expforce/cli.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "expforce/config.hpp"
#include "expforce/errors.hpp"
#include "expforce/evaluation.hpp"
#include "expforce/grasp_oracle.hpp"
#include "expforce/io.hpp"
#include "expforce/predictors.hpp"

namespace expforce {

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::string config_path;
  ConfigOverrides overrides;
  std::uint64_t seed = 0;
  std::size_t concurrency = 0;
  std::string cache_dir, templates_dir, descriptor, predictor, embedding;
  bool no_embodiment = false;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_retrieved(std::ostream& out, const RetrievedSet& set, const Pool& pool) {
  out << "rank  record_id                 similarity  f_star_n\n";
  int rank = 0;
  for (const auto& e : set.entries) {
    char line[256];
    std::snprintf(line, sizeof line, "%4d  %-24s  %10.6f  %8.2f\n", ++rank, e.record_id.c_str(), e.similarity,
                  pool.at(e.record_id).f_star_n);
    out << line;
  }
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      int k = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      ks.push_back(k);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--ks", "not an integer list: " + text);
    }
  }
  return ks;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"expforce: experience-conditioned grasp force estimation toolkit", "expforce"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GlobalFlags g;
  app.add_option("--config", g.config_path, "INI config file (default: $EXPFORCE_CONFIG)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Run seed (folds, synthetic draws, random-exp)");
  auto* conc_opt = app.add_option("--concurrency", g.concurrency, "Maximum in-flight model calls")
                       ->check(CLI::PositiveNumber);
  auto* cache_opt = app.add_option("--cache-dir", g.cache_dir, "Embedding cache directory");
  auto* tmpl_opt = app.add_option("--templates", g.templates_dir, "Prompt template directory");
  auto* desc_opt = app.add_option("--descriptor", g.descriptor, "Descriptor backend")
                       ->check(CLI::IsMember({"stub-catalog", "stub-canned", "remote"}));
  auto* pred_opt = app.add_option("--predictor", g.predictor, "Predictor backend")
                       ->check(CLI::IsMember({"stub-echo-mean", "stub-echo-max", "stub-canned", "remote"}));
  auto* emb_opt = app.add_option("--embedding", g.embedding, "Embedding backend")
                      ->check(CLI::IsMember({"mock", "remote"}));
  auto* noemb_opt = app.add_flag("--no-embodiment", g.no_embodiment, "Drop gripper embodiment from prompts");

  // pool validate
  auto* pool_cmd = app.add_subcommand("pool", "Experience pool management");
  pool_cmd->require_subcommand(1);
  auto* validate_cmd = pool_cmd->add_subcommand("validate", "Validate a pool directory");
  std::string validate_dir;
  validate_cmd->add_option("dir", validate_dir, "Pool directory")->required();

  // synth-pool
  auto* synth_cmd = app.add_subcommand("synth-pool", "Generate a synthetic Coulomb pool");
  int synth_n = 0;
  std::string synth_out, synth_prefix = "syn";
  double f_init = 0, f_step = 0, grid = 0, gravity = 0, f_max = 0, sigma = 0;
  synth_cmd->add_option("--n", synth_n, "Number of records")->required();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--id-prefix", synth_prefix, "Record id prefix");
  auto* f_init_opt = synth_cmd->add_option("--f-init", f_init, "Initial grasp force (N)");
  auto* f_step_opt = synth_cmd->add_option("--f-step", f_step, "Force increment per slip (N)");
  auto* grid_opt = synth_cmd->add_option("--grid", grid, "Force grid (N)");
  auto* g_opt = synth_cmd->add_option("--g", gravity, "Gravitational acceleration (m/s^2)");
  auto* f_max_opt = synth_cmd->add_option("--f-max", f_max, "Force cap (N)");
  auto* sigma_opt = synth_cmd->add_option("--noise-sigma", sigma, "Per-trial force noise (N)");

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "Embed every pool record (warms the cache)");
  std::string embed_pool_dir;
  embed_cmd->add_option("pool", embed_pool_dir, "Pool directory")->required();

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Top-k experiences for a query image");
  std::string r_pool, r_image, r_desc, r_query_id = "query";
  int r_k = 5;
  retrieve_cmd->add_option("pool", r_pool, "Pool directory")->required();
  retrieve_cmd->add_option("--query-image", r_image, "Query image")->required()->check(CLI::ExistingFile);
  retrieve_cmd->add_option("--description", r_desc, "Query description (default: ask the descriptor)");
  retrieve_cmd->add_option("--query-id", r_query_id, "Query id, excluded from the results");
  retrieve_cmd->add_option("--k", r_k, "Number of experiences")->check(CLI::NonNegativeNumber);

  // describe
  auto* describe_cmd = app.add_subcommand("describe", "Describe a query image with the descriptor model");
  std::string d_image, d_pool;
  describe_cmd->add_option("--query-image", d_image, "Query image")->required()->check(CLI::ExistingFile);
  describe_cmd->add_option("--pool", d_pool, "Pool directory (catalog stub)");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict the minimum grasp force for one image");
  std::string p_backend = "expforce", p_pool, p_image, p_desc, p_query_id = "query";
  int p_k = 5;
  predict_cmd->add_option("--backend", p_backend, "expforce | zero-shot | knn-average | random-exp")
      ->check(CLI::IsMember({"expforce", "zero-shot", "knn-average", "random-exp"}));
  predict_cmd->add_option("--k", p_k, "Number of experiences")->check(CLI::NonNegativeNumber);
  predict_cmd->add_option("--pool", p_pool, "Pool directory");
  predict_cmd->add_option("--query-image", p_image, "Query image")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--query-id", p_query_id, "Query id, excluded from retrieval");
  predict_cmd->add_option("--description", p_desc, "Query description (default: ask the descriptor)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Cross-validation experiments");
  eval_cmd->require_subcommand(1);
  std::string e_backend = "expforce", e_pool, e_out = "results", e_ks = "1,3,5,7,10";
  int e_k = 7, e_folds = 5;
  bool e_strict = false;
  auto* cv_cmd = eval_cmd->add_subcommand("cv", "k-fold cross-validation at one k");
  auto* sweep_cmd = eval_cmd->add_subcommand("sweep-k", "Cross-validation for several k sharing folds");
  for (auto* c : {cv_cmd, sweep_cmd}) {
    c->add_option("--backend", e_backend, "expforce | zero-shot | knn-average | random-exp")
        ->check(CLI::IsMember({"expforce", "zero-shot", "knn-average", "random-exp"}));
    c->add_option("--pool", e_pool, "Pool directory")->required();
    c->add_option("--out", e_out, "Report directory");
    c->add_option("--folds", e_folds, "Number of folds")->check(CLI::Range(2, 1000));
    c->add_flag("--strict", e_strict, "Exit 1 if any query failed");
  }
  cv_cmd->add_option("--k", e_k, "Number of experiences")->check(CLI::NonNegativeNumber);
  sweep_cmd->add_option("--ks", e_ks, "Comma-separated, strictly increasing k values");

  // report
  auto* report_cmd = app.add_subcommand("report", "Re-render report.md and sweep.csv from report.json");
  std::string rep_in, rep_out;
  report_cmd->add_option("dir", rep_in, "Directory holding report.json")->required();
  report_cmd->add_option("--out", rep_out, "Output directory (default: same directory)");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("expforce");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) {
      failing = sub;
      for (auto* subsub : sub->get_subcommands()) failing = subsub;
    }
    err << failing->help();
    return 2;
  }

  try {
    ConfigOverrides& o = g.overrides;
    if (*seed_opt) o.seed = g.seed;
    if (*conc_opt) o.concurrency_limit = g.concurrency;
    if (*cache_opt) o.cache_dir = fs::path(g.cache_dir);
    if (*tmpl_opt) o.templates_dir = fs::path(g.templates_dir);
    if (*desc_opt) o.descriptor_kind = g.descriptor;
    if (*pred_opt) o.predictor_kind = g.predictor;
    if (*emb_opt) o.embedding_kind = g.embedding;
    if (*noemb_opt) o.include_embodiment = false;
    if (*f_init_opt) o.f_init_n = f_init;
    if (*f_step_opt) o.f_step_n = f_step;
    if (*grid_opt) o.grid_n = grid;
    if (*g_opt) o.g_mps2 = gravity;
    if (*f_max_opt) o.f_max_n = f_max;
    if (*sigma_opt) o.force_noise_sigma_n = sigma;

    std::optional<fs::path> cfg_path;
    if (!g.config_path.empty()) cfg_path = fs::path(g.config_path);
    RunConfig cfg = resolve_config(cfg_path, o);
    out << "config-fingerprint: " << config_fingerprint(cfg) << "\n";

    SharedContext ctx = build_context(cfg);
    Templates templates = build_templates(cfg);

    if (validate_cmd->parsed()) {
      Pool pool = load_pool(validate_dir);
      out << "ok: " << pool.size() << " records in " << validate_dir << "\n";
      for (auto c : kAllCategories) {
        std::size_t n = 0;
        for (const auto& r : pool.records()) n += r.category == c ? 1 : 0;
        out << "  " << to_string(c) << ": " << n << "\n";
      }
      return 0;
    }

    if (synth_cmd->parsed()) {
      Pool pool = generate_synthetic_pool(synth_n, cfg.seed, cfg.oracle, synth_out, synth_prefix);
      out << "wrote " << pool.size() << " records to " << synth_out << "\n";
      return 0;
    }

    if (embed_cmd->parsed()) {
      Pool pool = load_pool(embed_pool_dir);
      Gateway gw = build_gateway(cfg, &pool, ctx, templates);
      EmbeddingTable table = embed_pool(pool, gw);
      out << "embedded " << table.size() << " records, d=" << (table.empty() ? 0 : table.begin()->second.d())
          << ", provider=" << gw.embedder->provider_id() << ", provider calls=" << gw.embedder->calls();
      if (gw.cache) {
        auto s = gw.cache->stats();
        out << ", cache hits=" << s.hits << ", misses=" << s.misses << ", corrupt=" << s.corruptions;
      }
      out << "\n";
      return 0;
    }

    if (retrieve_cmd->parsed()) {
      Pool pool = load_pool(r_pool);
      Gateway gw = build_gateway(cfg, &pool, ctx, templates);
      PredictorEnv env{ctx, templates, &gw};
      PredictionRequest req;
      req.query_id = r_query_id;
      req.query_image = read_file(r_image);
      if (!r_desc.empty()) req.query_description = r_desc;
      ensure_query_embedding(req, env);
      EmbeddingTable table = embed_pool(pool, gw);
      auto set = top_k(req.query_id, *req.query_embedding, table, r_k, {},
                       [&](const std::string& w) { err << "warning " << w << "\n"; });
      print_retrieved(out, set, pool);
      return 0;
    }

    if (describe_cmd->parsed()) {
      std::optional<Pool> pool;
      if (!d_pool.empty()) pool = load_pool(d_pool);
      Gateway gw = build_gateway(cfg, pool ? &*pool : nullptr, ctx, templates);
      out << describe_object(ctx, read_file(d_image), *gw.descriptor, templates) << "\n";
      return 0;
    }

    if (predict_cmd->parsed()) {
      auto backend = *parse_backend(p_backend);
      std::optional<Pool> pool;
      if (!p_pool.empty()) pool = load_pool(p_pool);
      if (!pool && backend != BackendKind::ZeroShot) {
        throw Error(ErrorCode::InvalidArgument, std::string(p_backend) + " needs --pool");
      }
      Gateway gw = build_gateway(cfg, pool ? &*pool : nullptr, ctx, templates);
      PredictorEnv env{ctx, templates, &gw};
      PredictionRequest req;
      req.query_id = p_query_id;
      req.query_image = read_file(p_image);
      if (!p_desc.empty()) req.query_description = p_desc;
      req.k = p_k;
      req.seed = cfg.seed;
      req.backend = backend;
      ExperienceView view;
      EmbeddingTable table;
      if (pool) {
        if (backend == BackendKind::ExpForce || backend == BackendKind::KnnAverage) table = embed_pool(*pool, gw);
        view = make_view(*pool, pool->ids(), table);
      }
      ForcePrediction pred = predict(std::move(req), view, env);
      for (const auto& w : pred.warnings) err << "warning " << w << "\n";
      out << "query=" << pred.query_id << " backend=" << to_string(pred.backend) << " k=" << p_k
          << " f_hat=" << fmt("%.4f", pred.f_hat_n) << (pred.clamped ? " clamped=1" : "") << "\n";
      if (pool && !pred.retrieved.entries.empty()) print_retrieved(out, pred.retrieved, *pool);
      return 0;
    }

    if (cv_cmd->parsed() || sweep_cmd->parsed()) {
      Pool pool = load_pool(e_pool);
      Gateway gw = build_gateway(cfg, &pool, ctx, templates);
      EvalConfig ec;
      ec.backend = *parse_backend(e_backend);
      ec.k = e_k;
      ec.n_folds = e_folds;
      ec.seed = cfg.seed;
      ec.env = PredictorEnv{ctx, templates, &gw};
      RunLog log(&err);
      std::size_t failures = 0;
      if (cv_cmd->parsed()) {
        EvalReport report = run_cross_validation(pool, ec, &log);
        emit_report(report, e_out);
        failures = report.failures;
        out << "run-fingerprint: " << report.config_fingerprint << "\n";
        if (report.overall) {
          out << "overall MAE " << fmt("%.4f", report.overall->mae_n) << " N, RMSE "
              << fmt("%.4f", report.overall->rmse_n) << " N over " << report.overall->n << " queries\n";
        }
      } else {
        SweepResult sweep = run_k_sweep(pool, ec, parse_ks(e_ks), &log);
        emit_report(sweep, e_out);
        out << "run-fingerprint: " << sweep.config_fingerprint << "\n";
        for (const auto& p : sweep.points) {
          failures += p.report.failures;
          out << "k=" << p.k << " MAE " << (p.overall ? fmt("%.4f", p.overall->mae_n) : "n/a") << " N\n";
        }
      }
      out << "failures: " << failures << "\nreport written to " << e_out << "\n";
      return (e_strict && failures > 0) ? 1 : 0;
    }

    if (report_cmd->parsed()) {
      reemit_report(rep_in, rep_out.empty() ? rep_in : rep_out);
      out << "report written to " << (rep_out.empty() ? rep_in : rep_out) << "\n";
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace expforce
