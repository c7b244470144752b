#include "expforce/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdlib>
#include <set>

#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/io.hpp"
#include "json.hpp"

namespace expforce {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::set<std::string> kDescriptorKinds = {"stub-catalog", "stub-canned", "remote"};
const std::set<std::string> kPredictorKinds = {"stub-echo-mean", "stub-echo-max", "stub-canned", "remote"};
const std::set<std::string> kEmbeddingKinds = {"mock", "remote"};

const std::map<std::string, std::set<std::string>> kSchema = {
    {"run", {"seed", "concurrency", "cache_dir", "templates_dir"}},
    {"oracle", {"f_init_n", "f_step_n", "grid_n", "g_mps2", "f_max_n", "force_noise_sigma_n", "noise_trials"}},
    {"endpoints", {"descriptor", "predictor", "embedding"}},
    {"descriptor", {"base_url", "model_name", "api_key_env", "timeout_s", "max_retries", "temperature",
                    "backoff_initial_s", "canned_file", "default_response"}},
    {"predictor", {"base_url", "model_name", "api_key_env", "timeout_s", "max_retries", "temperature",
                   "backoff_initial_s", "canned_file", "default_response"}},
    {"embedding", {"base_url", "model_name", "api_key_env", "timeout_s", "max_retries", "temperature",
                   "backoff_initial_s", "dimension"}},
    {"context", {"task_objective", "embodiment_text", "embodiment_image", "scale_reference_image",
                 "include_embodiment"}},
};

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& slot) {
  if (auto v = tree.get_optional<std::string>(key)) {
    try {
      slot = tree.get<T>(key);
    } catch (const pt::ptree_error&) {
      fail(ErrorCode::ConfigError, "bad value for " + key + ": '" + *v + "'");
    }
  }
}

void read_path(const pt::ptree& tree, const std::string& key, const fs::path& base, fs::path& slot) {
  if (auto v = tree.get_optional<std::string>(key); v && !v->empty()) {
    fs::path p(*v);
    slot = p.is_absolute() ? p : base / p;
  }
}

void read_role(const pt::ptree& tree, const std::string& section, const fs::path& base, ModelRoleConfig& role) {
  auto& e = role.endpoint;
  read(tree, section + ".base_url", e.base_url);
  read(tree, section + ".model_name", e.model_name);
  read(tree, section + ".api_key_env", e.api_key_env);
  read(tree, section + ".timeout_s", e.timeout_s);
  read(tree, section + ".max_retries", e.max_retries);
  read(tree, section + ".temperature", e.temperature);
  read(tree, section + ".backoff_initial_s", e.backoff_initial_s);
  if (section != "embedding") {
    read_path(tree, section + ".canned_file", base, role.canned_file);
    read(tree, section + ".default_response", role.default_response);
  }
}

void check_kind(const std::set<std::string>& allowed, const std::string& kind, const char* role) {
  if (!allowed.count(kind)) fail(ErrorCode::ConfigError, std::string("unknown ") + role + " backend '" + kind + "'");
}

void check_path(const fs::path& p, const char* what) {
  std::error_code ec;
  if (!p.empty() && !fs::exists(p, ec)) fail(ErrorCode::ConfigError, std::string(what) + " not found: " + p.string());
}

std::shared_ptr<CannedCompletionBackend> canned_from(const ModelRoleConfig& role) {
  std::map<std::string, std::string> answers;
  if (!role.canned_file.empty()) {
    try {
      answers = nlohmann::json::parse(read_file(role.canned_file)).get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ConfigError, "canned file " + role.canned_file.string() + ": " + e.what());
    }
  }
  return std::make_shared<CannedCompletionBackend>(std::move(answers), role.default_response);
}

}  // namespace

void RunConfig::validate() const {
  check_kind(kDescriptorKinds, descriptor.kind, "descriptor");
  check_kind(kPredictorKinds, predictor.kind, "predictor");
  check_kind(kEmbeddingKinds, embedding.kind, "embedding");
  if (concurrency_limit < 1) fail(ErrorCode::ConfigError, "concurrency must be at least 1");
  oracle.validate();
  for (const auto* role : {&descriptor, &predictor, &embedding}) {
    role->endpoint.validate();
    check_path(role->canned_file, "canned file");
  }
  check_path(templates_dir, "templates directory");
  check_path(embodiment_image, "embodiment image");
  check_path(scale_reference_image, "scale reference image");
  if (embedding.kind == "mock" && embedding_dimension != 0 &&
      embedding_dimension < MockEmbeddingProvider::kMinDimension) {
    fail(ErrorCode::ConfigError, "mock embedding dimension too small");
  }
}

RunConfig load_config_file(const fs::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  for (const auto& [section, body] : tree) {
    auto it = kSchema.find(section);
    if (it == kSchema.end()) fail(ErrorCode::ConfigError, "unknown section [" + section + "]");
    for (const auto& [key, _] : body) {
      if (!it->second.count(key)) fail(ErrorCode::ConfigError, "unknown key '" + key + "' in [" + section + "]");
    }
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  RunConfig cfg;
  read(tree, "run.seed", cfg.seed);
  read(tree, "run.concurrency", cfg.concurrency_limit);
  read_path(tree, "run.cache_dir", base, cfg.cache_dir);
  read_path(tree, "run.templates_dir", base, cfg.templates_dir);
  read(tree, "oracle.f_init_n", cfg.oracle.f_init_n);
  read(tree, "oracle.f_step_n", cfg.oracle.f_step_n);
  read(tree, "oracle.grid_n", cfg.oracle.grid_n);
  read(tree, "oracle.g_mps2", cfg.oracle.g_mps2);
  read(tree, "oracle.f_max_n", cfg.oracle.f_max_n);
  read(tree, "oracle.force_noise_sigma_n", cfg.oracle.force_noise_sigma_n);
  read(tree, "oracle.noise_trials", cfg.oracle.noise_trials);
  read(tree, "endpoints.descriptor", cfg.descriptor.kind);
  read(tree, "endpoints.predictor", cfg.predictor.kind);
  read(tree, "endpoints.embedding", cfg.embedding.kind);
  read_role(tree, "descriptor", base, cfg.descriptor);
  read_role(tree, "predictor", base, cfg.predictor);
  read_role(tree, "embedding", base, cfg.embedding);
  read(tree, "embedding.dimension", cfg.embedding_dimension);
  read(tree, "context.task_objective", cfg.task_objective);
  read(tree, "context.embodiment_text", cfg.embodiment_text);
  read_path(tree, "context.embodiment_image", base, cfg.embodiment_image);
  read_path(tree, "context.scale_reference_image", base, cfg.scale_reference_image);
  read(tree, "context.include_embodiment", cfg.include_embodiment);
  return cfg;
}

void apply_overrides(RunConfig& cfg, const ConfigOverrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.concurrency_limit) cfg.concurrency_limit = *o.concurrency_limit;
  if (o.cache_dir) cfg.cache_dir = *o.cache_dir;
  if (o.templates_dir) cfg.templates_dir = *o.templates_dir;
  if (o.descriptor_kind) cfg.descriptor.kind = *o.descriptor_kind;
  if (o.predictor_kind) cfg.predictor.kind = *o.predictor_kind;
  if (o.embedding_kind) cfg.embedding.kind = *o.embedding_kind;
  if (o.include_embodiment) cfg.include_embodiment = *o.include_embodiment;
  if (o.f_init_n) cfg.oracle.f_init_n = *o.f_init_n;
  if (o.f_step_n) cfg.oracle.f_step_n = *o.f_step_n;
  if (o.grid_n) cfg.oracle.grid_n = *o.grid_n;
  if (o.g_mps2) cfg.oracle.g_mps2 = *o.g_mps2;
  if (o.f_max_n) cfg.oracle.f_max_n = *o.f_max_n;
  if (o.force_noise_sigma_n) cfg.oracle.force_noise_sigma_n = *o.force_noise_sigma_n;
}

RunConfig resolve_config(const std::optional<fs::path>& explicit_path, const ConfigOverrides& overrides) {
  RunConfig cfg;
  std::optional<fs::path> path = explicit_path;
  if (!path) {
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') path = fs::path(env);
  }
  if (path) cfg = load_config_file(*path);
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

std::string config_fingerprint(const RunConfig& cfg) {
  Sha256 h;
  h.update_field("expforce-config-v1");
  auto num = [&](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    h.update_field(buf);
  };
  for (const auto* role : {&cfg.descriptor, &cfg.predictor, &cfg.embedding}) {
    const auto& e = role->endpoint;
    h.update_field(role->kind).update_field(e.base_url).update_field(e.model_name).update_field(e.api_key_env);
    num(e.timeout_s);
    num(e.max_retries);
    num(e.temperature);
    num(e.backoff_initial_s);
    h.update_field(role->canned_file.string()).update_field(role->default_response);
  }
  num(static_cast<double>(cfg.embedding_dimension));
  const auto& o = cfg.oracle;
  for (double v : {o.f_init_n, o.f_step_n, o.grid_n, o.g_mps2, o.f_max_n, o.force_noise_sigma_n}) num(v);
  num(o.noise_trials);
  h.update_field(cfg.templates_dir.string()).update_field(cfg.cache_dir.string());
  num(static_cast<double>(cfg.concurrency_limit));
  h.update_field(std::to_string(cfg.seed));
  h.update_field(cfg.task_objective).update_field(cfg.embodiment_text);
  h.update_field(cfg.embodiment_image.string()).update_field(cfg.scale_reference_image.string());
  h.update_field(cfg.include_embodiment ? "1" : "0");
  return h.hex_digest().substr(0, 16);
}

SharedContext build_context(const RunConfig& cfg) {
  SharedContext ctx;
  ctx.task_objective = cfg.task_objective;
  ctx.embodiment_text = cfg.embodiment_text;
  ctx.include_embodiment = cfg.include_embodiment;
  if (!cfg.embodiment_image.empty()) ctx.embodiment_image = read_file(cfg.embodiment_image);
  if (!cfg.scale_reference_image.empty()) ctx.scale_reference_image = read_file(cfg.scale_reference_image);
  ctx.validate();
  return ctx;
}

Templates build_templates(const RunConfig& cfg) {
  return cfg.templates_dir.empty() ? Templates::defaults() : load_templates(cfg.templates_dir);
}

Gateway build_gateway(const RunConfig& cfg, const Pool* pool, const SharedContext& ctx, const Templates& templates) {
  Gateway gw;
  gw.concurrency_limit = cfg.concurrency_limit;

  if (cfg.descriptor.kind == "stub-catalog") {
    if (pool != nullptr) {
      gw.descriptor = make_catalog_descriptor(*pool, ctx, templates, cfg.descriptor.default_response);
    } else {
      gw.descriptor = std::make_shared<CannedCompletionBackend>(std::map<std::string, std::string>{},
                                                                cfg.descriptor.default_response);
    }
  } else if (cfg.descriptor.kind == "stub-canned") {
    gw.descriptor = canned_from(cfg.descriptor);
  } else {
    gw.descriptor = std::make_shared<RemoteCompletionBackend>(cfg.descriptor.endpoint);
  }

  if (cfg.predictor.kind == "stub-echo-mean") {
    gw.predictor = make_echo_predictor(EchoMode::Mean, cfg.predictor.default_response);
  } else if (cfg.predictor.kind == "stub-echo-max") {
    gw.predictor = make_echo_predictor(EchoMode::Max, cfg.predictor.default_response);
  } else if (cfg.predictor.kind == "stub-canned") {
    gw.predictor = canned_from(cfg.predictor);
  } else {
    gw.predictor = std::make_shared<RemoteCompletionBackend>(cfg.predictor.endpoint);
  }

  if (cfg.embedding.kind == "mock") {
    gw.embedder = std::make_shared<MockEmbeddingProvider>(cfg.embedding_dimension == 0 ? 64 : cfg.embedding_dimension);
  } else {
    gw.embedder = std::make_shared<RemoteEmbeddingProvider>(cfg.embedding.endpoint, cfg.embedding_dimension);
  }
  if (!cfg.cache_dir.empty()) gw.cache = std::make_shared<EmbeddingCache>(cfg.cache_dir);
  return gw;
}

}  // namespace expforce
