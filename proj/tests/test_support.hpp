#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <unistd.h>

#include "expforce/config.hpp"
#include "expforce/evaluation.hpp"
#include "expforce/grasp_oracle.hpp"
#include "expforce/model_gateway.hpp"
#include "expforce/pool.hpp"
#include "expforce/predictors.hpp"
#include "expforce/prompting.hpp"

namespace fs = std::filesystem;

namespace testing {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("expforce-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

// Stub gateway over `pool`: catalog descriptor, echo-mean predictor, mock embeddings.
inline expforce::Gateway stub_gateway(const expforce::Pool& pool, std::size_t concurrency = 4,
                                      const fs::path& cache_dir = {}) {
  expforce::RunConfig cfg;
  cfg.concurrency_limit = concurrency;
  cfg.cache_dir = cache_dir;
  auto ctx = expforce::build_context(cfg);
  return expforce::build_gateway(cfg, &pool, ctx, expforce::Templates::defaults());
}

inline expforce::EvalConfig eval_config(expforce::BackendKind backend, int k, const expforce::Gateway& gw,
                                        std::uint64_t seed = 0, int folds = 5) {
  expforce::EvalConfig ec;
  ec.backend = backend;
  ec.k = k;
  ec.n_folds = folds;
  ec.seed = seed;
  ec.env.gateway = &gw;
  return ec;
}

inline double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace testing
