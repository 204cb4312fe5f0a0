#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "panelreg/error.hpp"
#include "panelreg/pipeline.hpp"
#include "panelreg/simlab.hpp"

using namespace panelreg;
using namespace panelreg::simlab;

TEST_CASE("temporal forms at known points") {
  // t0 = 10, T = 30, span 20.
  CHECK(effect_function(EffectKind::kConstant, 11, 10, 30, 2.0, 1.5) == doctest::Approx(3.0));
  CHECK(effect_function(EffectKind::kLinear, 30, 10, 30, 2.0, 1.0) == doctest::Approx(2.0));
  CHECK(effect_function(EffectKind::kLinear, 20, 10, 30, 2.0, 1.0) == doctest::Approx(1.0));
  CHECK(effect_function(EffectKind::kSinusoidal, 15, 10, 30, 2.0, 1.0) == doctest::Approx(2.0));
  CHECK(effect_function(EffectKind::kSinusoidal, 20, 10, 30, 2.0, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(effect_function(EffectKind::kPosNeg, 20, 10, 30, 2.0, 1.0) == doctest::Approx(2.0));
  CHECK(effect_function(EffectKind::kPosNeg, 30, 10, 30, 2.0, 1.0) == doctest::Approx(0.0));
  CHECK(effect_function(EffectKind::kExponential, 30, 10, 30, 1.0, 1.0) == doctest::Approx(1.0 - std::exp(-5.0)));
  CHECK(effect_function(EffectKind::kConcave, 11, 10, 30, 1.0, 1.0) == doctest::Approx(0.5 * std::log(1.2)));
  const std::vector<double> walk{0.5, -0.25};
  CHECK(effect_function(EffectKind::kRandomWalk, 12, 10, 30, 2.0, 1.0, walk) == doctest::Approx(-0.5));

  CHECK_THROWS_AS(effect_function(EffectKind::kLinear, 10, 10, 30, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(effect_function(EffectKind::kRandomWalk, 13, 10, 30, 1.0, 1.0, walk), DomainError);
  CHECK_THROWS_AS(effect_function(EffectKind::kSharkfin, 13, 10, 30, 1.0, 1.0), DomainError);
  CHECK(parse_effect_kind("sine") == EffectKind::kSinusoidal);
  CHECK_THROWS_AS(parse_effect_kind("square"), ConfigError);
}

TEST_CASE("scenario shapes") {
  const EffectShape fin{EffectKind::kSharkfin, 0.6, 0.0, 0.0, 8};
  CHECK(shape_value(fin, 8, 16, 1.0) == doctest::Approx(0.6));
  CHECK(shape_value(fin, 9, 16, 1.0) == 0.0);
  const EffectShape rev{EffectKind::kMeanReversion, 1.0, 0.0, 0.0, 10};
  CHECK(shape_value(rev, 1, 20, 1.0) == doctest::Approx(1.0));
  CHECK(shape_value(rev, 10, 20, 1.0) == doctest::Approx(0.1));
  const EffectShape aff{EffectKind::kAffine, 2.0, 1.0, -0.5};
  CHECK(shape_value(aff, 4, 20, 1.0) == doctest::Approx(-2.0));
}

TEST_CASE("zero variances and zero effect give a zero outcome") {
  DgpConfig cfg;
  cfg.n_units = 50;
  cfg.n_periods = 6;
  cfg.t0 = 3;
  cfg.sigma_alpha = cfg.sigma_gamma = cfg.sigma_beta = cfg.sigma_eps = 0.0;
  cfg.tau_base = 0.0;
  for (const auto& r : generate_panel(cfg).rows) CHECK(r.outcome == 0.0);
}

TEST_CASE("AR(1) errors and treatment share") {
  DgpConfig cfg;
  cfg.sigma_alpha = cfg.sigma_gamma = cfg.sigma_beta = 0.0;
  cfg.tau_base = 0.0;
  cfg.seed = 77;
  const SimPanel p = generate_panel(cfg);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 1; i < p.rows.size(); ++i) {
    if (p.rows[i].unit_id != p.rows[i - 1].unit_id) continue;
    const double x = p.rows[i - 1].outcome, y = p.rows[i].outcome;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  CHECK(sxy / std::sqrt(sxx * syy) == doctest::Approx(0.7).epsilon(0.03 / 0.7));

  std::size_t treated = 0;
  for (auto c : p.unit_cohort) treated += c != kNever;
  const double share = static_cast<double>(treated) / 2000.0;
  CHECK(std::abs(share - 0.5) < 3.0 * std::sqrt(0.25 / 2000.0));
}

TEST_CASE("same seed, same panel") {
  DgpConfig cfg;
  cfg.n_units = 100;
  cfg.seed = 5;
  const auto a = generate_panel(cfg).rows, b = generate_panel(cfg).rows;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].outcome == b[i].outcome);
  cfg.seed = 6;
  CHECK(generate_panel(cfg).rows[0].outcome != a[0].outcome);
}

TEST_CASE("configuration checks") {
  DgpConfig cfg;
  cfg.rho = 1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = {};
  cfg.n_units = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = {};
  cfg.t0 = 35;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = {};
  cfg.cohorts = {{5, 0.6, {}}, {9, 0.6, {}}};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg.cohorts = {{1, 0.2, {}}};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("sharkfin truth vanishes after eight post periods") {
  const SimPanel p = generate_panel(appendix_scenario(Scenario::kSharkfinOneShot, 200, 1));
  REQUIRE(p.truth.size() == 1);
  const EffectCurve& c = p.truth[0];
  CHECK(c.adoption == 15);
  CHECK(c.at(1) == doctest::Approx(0.6 * std::log(2.0) / std::log(9.0)));
  CHECK(c.at(8) == doctest::Approx(0.6));
  for (std::int32_t h = 9; h <= 16; ++h) CHECK(c.at(h) == 0.0);
  CHECK(c.at(0) == 0.0);
}

TEST_CASE("staggered scenario under TWM_COHORT") {
  const SimPanel p = generate_panel(appendix_scenario(Scenario::kStaggered, 1000, 2));
  CHECK(p.truth.size() == 3);
  const MemorySource src(p.rows);
  const auto design = th::compress(src, EstimatorKind::kTwmCohort);
  CHECK(design.strata.size() <= 4u * 30u);
  const auto f = fit_wls(design);
  CHECK(event_curve(f).size() == 3u * 30u);
  CHECK_THROWS_AS(run_battery(src, p.truth[0]), DomainError);
}

TEST_CASE("sharkfin static estimate is close to the average post effect") {
  const SimPanel p = generate_panel(appendix_scenario(Scenario::kSharkfinOneShot, 2000, 42));
  const MemorySource src(p.rows);
  FitRequest req;
  req.spec.kind = EstimatorKind::kTwmStatic;
  req.bootstrap = 199;
  req.seed = 4;
  const FitRun run = run_fit(src, req);
  double avg = 0;
  for (std::int32_t h = 1; h <= 16; ++h) avg += p.truth[0].at(h);
  avg /= 16.0;
  const auto j = static_cast<Eigen::Index>(std::find(run.boot->labels.begin(), run.boot->labels.end(), "W") -
                                           run.boot->labels.begin());
  CHECK(std::abs(*run.fit.coef("W") - avg) < 2.0 * run.boot->se[j]);
}

TEST_CASE("sinusoidal effects favour the event study") {
  DgpConfig base;
  base.n_units = 1000;
  base.effect = EffectKind::kSinusoidal;
  const StudyResult r = rmse_study({base}, 10, 8);
  const auto [gap_a, se_a] = r.paired_gap(0, BatteryEstimator::kE, BatteryEstimator::kA);
  const auto [gap_c, se_c] = r.paired_gap(0, BatteryEstimator::kE, BatteryEstimator::kC);
  CHECK(gap_a < 0.0);
  CHECK(gap_c < 0.0);
  (void)se_a;
  (void)se_c;
}

TEST_CASE("studies are reproducible") {
  DgpConfig base;
  base.n_units = 200;
  base.n_periods = 10;
  base.t0 = 5;
  const std::vector<EffectKind> forms{EffectKind::kLinear};
  const std::vector<double> levels{0.01, 0.5};
  const auto grid = figure_grid(base, forms, levels);
  CHECK(grid.size() == 4);
  const StudyResult a = rmse_study(grid, 2, 3), b = rmse_study(grid, 2, 3, 4);
  REQUIRE(a.rows.size() == 4 * 2 * 5);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].rmse == b.rows[i].rmse);
}

TEST_CASE("quartet members share a difference in means") {
  const auto q = anscombe_quartet(1500, 3);
  REQUIRE(q.size() == 4);
  for (const auto& m : q) CHECK(std::abs(m.dim_estimate - q[0].dim_estimate) < 3.0 * m.dim_se);
  CHECK(max_standardized_gap(q[0].curve, q[0].curve) == 0.0);
}

TEST_CASE("noise-free constant effect is recovered by every estimator") {
  DgpConfig cfg;
  cfg.n_units = 300;
  cfg.sigma_alpha = cfg.sigma_gamma = cfg.sigma_beta = cfg.sigma_eps = 0.0;
  cfg.rho = 0.0;
  const StudyResult r = rmse_study({cfg}, 3, 1);
  for (auto e : kBattery) {
    CAPTURE(to_string(e));
    CHECK(r.mean_rmse(0, e) < 1e-10);
  }
}
