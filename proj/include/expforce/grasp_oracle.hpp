#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "expforce/pool.hpp"
#include "expforce/random.hpp"

namespace expforce {

/// Object model for the simulated grasp: Coulomb contact with an effective
/// gripper-object friction coefficient.
struct SyntheticObject {
  double mass_kg = 0.0;
  double mu_eff = 1.0;
  std::string label;
  Category category = Category::OddShapes;
};

struct OracleConfig {
  double f_init_n = 0.25;
  double f_step_n = 0.25;
  double grid_n = 0.25;
  double g_mps2 = 9.81;
  double f_max_n = 20.0;
  /// Gaussian noise on each measured trial; 0 means one noise-free trial.
  double force_noise_sigma_n = 0.0;
  int noise_trials = 3;

  void validate() const;
};

void validate(const SyntheticObject& obj);

/// Smallest multiple of `grid_n` that is >= value (up to kGridTolerance).
double ceil_to_grid(double value, double grid_n);

/// True when the grasp at `force_n` cannot hold the object's weight.
bool slips(const SyntheticObject& obj, double force_n, const OracleConfig& cfg);

double closed_form_fstar(const SyntheticObject& obj, const OracleConfig& cfg = {});

struct SearchResult {
  double force_n = 0.0;
  int slip_events = 0;
};

/// Slip-triggered tightening loop: start at f_init_n, add f_step_n per slip.
SearchResult adaptive_force_search(const SyntheticObject& obj, const OracleConfig& cfg = {});

/// One ground-truth measurement: the search result when noise is off,
/// otherwise the median of `noise_trials` noisy trials, re-gridded.
double measure_fstar(const SyntheticObject& obj, const OracleConfig& cfg, Rng& rng);

// Synthetic generator ranges and description bands.
inline constexpr double kSynthMassMinKg = 0.01;
inline constexpr double kSynthMassMaxKg = 1.5;
inline constexpr double kSynthMuMin = 0.8;
inline constexpr double kSynthMuMax = 4.0;
inline constexpr int kMassBands = 100;
inline constexpr int kGripBands = 32;

int mass_band(double mass_kg);
int grip_band(double mu_eff);
std::string synthetic_description(const SyntheticObject& obj);
Category synthetic_category(double mass_kg, double mu_eff);

/// Draws `n` objects, writes placeholder images and the manifest into
/// `out_dir`, and returns the pool rooted there.
Pool generate_synthetic_pool(int n, std::uint64_t seed, const OracleConfig& cfg,
                             const std::filesystem::path& out_dir,
                             const std::string& id_prefix = "syn");

/// The object parameters the generator would draw for index `i`.
SyntheticObject synthetic_object(std::uint64_t seed, int i);

}  // namespace expforce
