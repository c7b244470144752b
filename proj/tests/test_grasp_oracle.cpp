#include <cmath>

#include "doctest.h"
#include "expforce/errors.hpp"
#include "expforce/grasp_oracle.hpp"
#include "test_support.hpp"

using namespace expforce;

TEST_CASE("ceil_to_grid") {
  CHECK(ceil_to_grid(0.0, 0.25) == 0.0);
  CHECK(ceil_to_grid(0.01, 0.25) == 0.25);
  CHECK(ceil_to_grid(1.0, 0.25) == 1.0);
  CHECK(ceil_to_grid(1.0000000001, 0.25) == 1.0);  // within tolerance
  CHECK(ceil_to_grid(1.01, 0.25) == 1.25);
}

TEST_CASE("known objects") {
  OracleConfig cfg;
  // Champagne-glass-like: light, needs the 1.0 N quoted for it.
  SyntheticObject glass{0.2, 1.962, "glass", Category::FragileLight};
  CHECK(closed_form_fstar(glass, cfg) == doctest::Approx(1.0));
  CHECK(adaptive_force_search(glass, cfg).force_n == closed_form_fstar(glass, cfg));
  // 236 g box, grippy surface.
  SyntheticObject box{0.236, 2.0, "box", Category::Cuboids};
  CHECK(closed_form_fstar(box, cfg) == 1.25);
  auto r = adaptive_force_search(box, cfg);
  CHECK(r.force_n == 1.25);
  CHECK(r.slip_events == 4);
  // Very light object: the search never goes below the first force.
  SyntheticObject feather{0.001, 4.0, "feather", Category::FragileLight};
  CHECK(closed_form_fstar(feather, cfg) == 0.25);
  CHECK(adaptive_force_search(feather, cfg).slip_events == 0);
}

TEST_CASE("force cap") {
  OracleConfig cfg;
  SyntheticObject brick{3.0, 0.5, "brick", Category::OddShapes};
  CHECK_THROWS_AS(closed_form_fstar(brick, cfg), Error);
  CHECK_THROWS_AS(adaptive_force_search(brick, cfg), Error);
}

TEST_CASE("noise knob") {
  OracleConfig cfg;
  SyntheticObject o{0.5, 2.0, "o", Category::Bottles};
  Rng rng(1);
  CHECK(measure_fstar(o, cfg, rng) == closed_form_fstar(o, cfg));
  cfg.force_noise_sigma_n = 0.5;
  for (int i = 0; i < 50; ++i) {
    double f = measure_fstar(o, cfg, rng);
    CHECK(on_force_grid(f));
    CHECK(f >= 0.25);
  }
}

TEST_CASE("synthetic generator") {
  testing::TempDir dir;
  OracleConfig cfg;
  auto pool = generate_synthetic_pool(40, 9, cfg, dir.path());
  CHECK(pool.size() == 40);
  CHECK(pool.records()[0].id == "syn-0000");
  auto reloaded = load_pool(dir.path());
  CHECK(reloaded.records() == pool.records());
  for (int i = 0; i < 40; ++i) {
    const auto& r = pool.records()[i];
    auto o = synthetic_object(9, i);
    CHECK(r.f_star_n == closed_form_fstar(o, cfg));
    CHECK(r.mass_kg == doctest::Approx(o.mass_kg));
    CHECK(r.category == synthetic_category(o.mass_kg, o.mu_eff));
    CHECK(r.description == synthetic_description(o));
    CHECK(r.description.find("friction") == std::string::npos);
  }
  // Same seed, same bytes.
  testing::TempDir dir2;
  generate_synthetic_pool(40, 9, cfg, dir2.path());
  CHECK(pool_digest(load_pool(dir2.path())) == pool_digest(reloaded));
  CHECK_THROWS_AS(generate_synthetic_pool(0, 9, cfg, dir2.path()), Error);
}

TEST_CASE("band helpers stay in range") {
  CHECK(mass_band(kSynthMassMinKg) == 0);
  CHECK(mass_band(kSynthMassMaxKg) == kMassBands - 1);
  CHECK(grip_band(kSynthMuMin) == 0);
  CHECK(grip_band(kSynthMuMax) == kGripBands - 1);
}
