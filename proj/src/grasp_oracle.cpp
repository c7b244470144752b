#include "expforce/grasp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/image.hpp"
#include "expforce/io.hpp"

namespace expforce {

void OracleConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) {
      fail(ErrorCode::InvalidArgument, std::string(name) + " must be strictly positive");
    }
  };
  positive(f_init_n, "f_init_n");
  positive(f_step_n, "f_step_n");
  positive(grid_n, "grid_n");
  positive(g_mps2, "g_mps2");
  positive(f_max_n, "f_max_n");
  if (f_init_n > f_max_n) fail(ErrorCode::InvalidArgument, "f_init_n exceeds f_max_n");
  if (!(force_noise_sigma_n >= 0.0)) fail(ErrorCode::InvalidArgument, "noise sigma is negative");
  if (noise_trials < 1) fail(ErrorCode::InvalidArgument, "noise_trials must be >= 1");
}

void validate(const SyntheticObject& obj) {
  if (!(std::isfinite(obj.mass_kg) && obj.mass_kg > 0.0)) {
    fail(ErrorCode::InvalidArgument, "object mass must be positive");
  }
  if (!(std::isfinite(obj.mu_eff) && obj.mu_eff > 0.0)) {
    fail(ErrorCode::InvalidArgument, "mu_eff must be positive");
  }
}

double ceil_to_grid(double value, double grid_n) {
  auto steps = static_cast<long long>(std::ceil((value - kGridTolerance) / grid_n));
  // Correct the division's rounding so the result is the exact smallest multiple.
  while (steps > 0 && static_cast<double>(steps - 1) * grid_n >= value - kGridTolerance) --steps;
  while (static_cast<double>(steps) * grid_n < value - kGridTolerance) ++steps;
  return static_cast<double>(steps) * grid_n;
}

namespace {

double required_force(const SyntheticObject& obj, const OracleConfig& cfg) {
  return obj.mass_kg * cfg.g_mps2 / obj.mu_eff;
}

void check_cap(double force_n, const OracleConfig& cfg) {
  if (force_n > cfg.f_max_n + kGridTolerance) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "required %.3f N exceeds cap %.3f N", force_n, cfg.f_max_n);
    fail(ErrorCode::ForceCapExceeded, buf);
  }
}

}  // namespace

bool slips(const SyntheticObject& obj, double force_n, const OracleConfig& cfg) {
  // Coulomb: friction mu*F must carry the weight m*g.
  return force_n < required_force(obj, cfg) - kGridTolerance;
}

double closed_form_fstar(const SyntheticObject& obj, const OracleConfig& cfg) {
  validate(obj);
  cfg.validate();
  double f = ceil_to_grid(std::max(cfg.f_init_n, required_force(obj, cfg)), cfg.grid_n);
  check_cap(f, cfg);
  return f;
}

SearchResult adaptive_force_search(const SyntheticObject& obj, const OracleConfig& cfg) {
  validate(obj);
  cfg.validate();
  SearchResult out;
  double force = cfg.f_init_n;
  while (slips(obj, force, cfg)) {
    double next = cfg.f_init_n + static_cast<double>(out.slip_events + 1) * cfg.f_step_n;
    if (next > cfg.f_max_n + kGridTolerance) {
      check_cap(required_force(obj, cfg), cfg);
    }
    force = next;
    ++out.slip_events;
  }
  out.force_n = ceil_to_grid(force, cfg.grid_n);
  check_cap(out.force_n, cfg);
  return out;
}

double measure_fstar(const SyntheticObject& obj, const OracleConfig& cfg, Rng& rng) {
  double base = adaptive_force_search(obj, cfg).force_n;
  if (cfg.force_noise_sigma_n == 0.0) return base;
  std::vector<double> trials;
  for (int t = 0; t < cfg.noise_trials; ++t) {
    trials.push_back(base + cfg.force_noise_sigma_n * rng.normal());
  }
  std::sort(trials.begin(), trials.end());
  double median = trials[trials.size() / 2];
  if (trials.size() % 2 == 0) median = 0.5 * (median + trials[trials.size() / 2 - 1]);
  double f = ceil_to_grid(std::max(cfg.f_init_n, median), cfg.grid_n);
  check_cap(f, cfg);
  return f;
}

int mass_band(double mass_kg) {
  double t = std::log(mass_kg / kSynthMassMinKg) / std::log(kSynthMassMaxKg / kSynthMassMinKg);
  return std::clamp(static_cast<int>(std::floor(t * kMassBands)), 0, kMassBands - 1);
}

int grip_band(double mu_eff) {
  double t = std::log(mu_eff / kSynthMuMin) / std::log(kSynthMuMax / kSynthMuMin);
  return std::clamp(static_cast<int>(std::floor(t * kGripBands)), 0, kGripBands - 1);
}

std::string synthetic_description(const SyntheticObject& obj) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "Synthetic grasp test object with a placeholder image. mass-band %d/%d; "
                "grip-band %d/%d.",
                mass_band(obj.mass_kg), kMassBands, grip_band(obj.mu_eff), kGripBands);
  return buf;
}

Category synthetic_category(double mass_kg, double mu_eff) {
  if (mass_kg < 0.05) return Category::FragileLight;
  if (mass_kg < 0.15) return mu_eff >= 2.4 ? Category::Cuboids : Category::Cylinders;
  if (mass_kg < 0.6) return mu_eff >= 2.4 ? Category::Bottles : Category::FragileHeavy;
  return Category::OddShapes;
}

SyntheticObject synthetic_object(std::uint64_t seed, int i) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
  SyntheticObject obj;
  obj.mass_kg = kSynthMassMinKg * std::exp(rng.uniform01() * std::log(kSynthMassMaxKg / kSynthMassMinKg));
  obj.mu_eff = rng.uniform(kSynthMuMin, kSynthMuMax);
  obj.category = synthetic_category(obj.mass_kg, obj.mu_eff);
  return obj;
}

Pool generate_synthetic_pool(int n, std::uint64_t seed, const OracleConfig& cfg,
                             const std::filesystem::path& out_dir, const std::string& id_prefix) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "n must be at least 1");
  cfg.validate();
  std::vector<ExperienceRecord> records;
  records.reserve(static_cast<std::size_t>(n));
  Rng noise(derive_seed(seed, fnv1a64("measurement-noise")));
  for (int i = 0; i < n; ++i) {
    SyntheticObject obj = synthetic_object(seed, i);
    char id[64];
    std::snprintf(id, sizeof id, "%s-%04d", id_prefix.c_str(), i);
    obj.label = id;

    ExperienceRecord r;
    r.id = id;
    r.name = "synthetic object " + std::string(id);
    r.mass_kg = obj.mass_kg;
    r.description = synthetic_description(obj);
    r.image_ref = std::string(kImagesDir) + "/" + id + ".png";
    r.f_star_n = measure_fstar(obj, cfg, noise);
    r.category = obj.category;

    auto color = fnv1a64(r.id);
    write_file_atomic(out_dir / r.image_ref,
                      solid_color_png(static_cast<std::uint8_t>(color), static_cast<std::uint8_t>(color >> 8),
                                      static_cast<std::uint8_t>(color >> 16)));
    records.push_back(std::move(r));
  }
  Pool pool(std::move(records), out_dir);
  save_pool(pool, out_dir);
  return pool;
}

}  // namespace expforce
