#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "expforce/grasp_oracle.hpp"
#include "expforce/model_gateway.hpp"
#include "expforce/pool.hpp"
#include "expforce/prompting.hpp"

namespace expforce {

/// Backend choices per model role.
///   descriptor: stub-catalog | stub-canned | remote
///   predictor:  stub-echo-mean | stub-echo-max | stub-canned | remote
///   embedding:  mock | remote
struct ModelRoleConfig {
  std::string kind;
  ModelEndpointConfig endpoint;
  std::filesystem::path canned_file;  // JSON object {prompt_hash: response}
  std::string default_response;
};

struct RunConfig {
  ModelRoleConfig descriptor{"stub-catalog", {}, {}, ""};
  ModelRoleConfig predictor{"stub-echo-mean", {}, {}, "FORCE_N: 1.00"};
  ModelRoleConfig embedding{"mock", {}, {}, ""};
  std::size_t embedding_dimension = 0;  // 0: mock default (64) / provider-reported d

  OracleConfig oracle;
  std::filesystem::path templates_dir;  // empty: built-in templates
  std::filesystem::path cache_dir;      // empty: no embedding cache
  std::size_t concurrency_limit = 4;
  std::uint64_t seed = 0;

  std::string task_objective = SharedContext::defaults().task_objective;
  std::string embodiment_text = SharedContext::defaults().embodiment_text;
  std::filesystem::path embodiment_image;
  std::filesystem::path scale_reference_image;
  bool include_embodiment = true;

  void validate() const;
};

/// Values given on the command line; each set field wins over the file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency_limit;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> templates_dir;
  std::optional<std::string> descriptor_kind;
  std::optional<std::string> predictor_kind;
  std::optional<std::string> embedding_kind;
  std::optional<bool> include_embodiment;
  std::optional<double> f_init_n, f_step_n, grid_n, g_mps2, f_max_n, force_noise_sigma_n;
};

inline constexpr const char* kConfigEnvVar = "EXPFORCE_CONFIG";

/// Parses an INI config file; relative paths resolve against its directory.
RunConfig load_config_file(const std::filesystem::path& path);

void apply_overrides(RunConfig& cfg, const ConfigOverrides& o);

/// Defaults, then the file (explicit path, else $EXPFORCE_CONFIG), then flags.
RunConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path,
                         const ConfigOverrides& overrides);

/// Short hash over every field of the config.
std::string config_fingerprint(const RunConfig& cfg);

SharedContext build_context(const RunConfig& cfg);
Templates build_templates(const RunConfig& cfg);

/// Instantiates the configured backends. A stub-catalog descriptor needs `pool`.
Gateway build_gateway(const RunConfig& cfg, const Pool* pool, const SharedContext& ctx,
                      const Templates& templates);

}  // namespace expforce
