#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panelreg/estimate.hpp"
#include "panelreg/panel.hpp"

namespace panelreg::simlab {

// The seven temporal forms, plus the shapes used by the appendix scenarios and
// the quartet reconstructions.
enum class EffectKind {
  kConstant,
  kLinear,
  kConcave,
  kPosNeg,
  kExponential,
  kSinusoidal,
  kRandomWalk,
  kSharkfin,       // tau log(1+h) / log(1+width) for h <= width, then 0
  kMeanReversion,  // tau (width+1-h) / width for h <= width, then 0
  kAffine,         // tau (a + b h)
};

inline constexpr std::array<EffectKind, 7> kTemporalForms = {
    EffectKind::kConstant,    EffectKind::kLinear,     EffectKind::kConcave,   EffectKind::kPosNeg,
    EffectKind::kExponential, EffectKind::kSinusoidal, EffectKind::kRandomWalk};

std::string to_string(EffectKind kind);
EffectKind parse_effect_kind(std::string_view name);  // ConfigError on unknown names

// Value of one of the temporal forms at calendar period t > t0, with T = t_max.
// `walk` holds the running sums of the random-walk shocks, walk[h-1] for
// h = t - t0. Throws DomainError for t <= t0 or a kind outside the seven forms.
double effect_function(EffectKind kind, std::int32_t t, std::int32_t t0, std::int32_t t_max, double tau, double psi,
                       std::span<const double> walk = {});

struct EffectShape {
  EffectKind kind = EffectKind::kConstant;
  double tau = 1.0;
  double a = 0.0;  // kAffine
  double b = 0.0;  // kAffine
  std::int32_t width = 8;  // kSharkfin, kMeanReversion
};

// Effect at event time h >= 1 for a group whose post window has `horizon`
// periods.
double shape_value(const EffectShape& shape, std::int32_t h, std::int32_t horizon, double psi,
                   std::span<const double> walk = {});

struct PsiMode {
  bool random = false;
  double value = 1.0;  // scalar mode
  double mean = 1.0;   // random mode: N(mean, sd^2) truncated at 0
  double sd = 0.5;
};

struct CohortSpec {
  std::int32_t adoption = 0;
  double share = 0.0;
  EffectShape effect;
};

struct DgpConfig {
  std::size_t n_units = 2000;
  std::int32_t n_periods = 35;
  std::int32_t t0 = 14;
  double sigma_alpha = 5.0;
  double sigma_gamma = 2.0;
  double sigma_beta = 0.01;
  double sigma_eps = 2.0;  // innovation sd of the AR(1) error
  double rho = 0.7;
  double tau_base = 1.0;
  EffectKind effect = EffectKind::kConstant;
  PsiMode psi;
  double treat_prob = 0.5;
  bool exact_assignment = false;  // assign round(share * N) units instead of coin flips
  std::vector<CohortSpec> cohorts;  // empty = one-shot at t0 + 1
  std::uint64_t seed = 1;
};

// Throws ConfigError.
void validate(const DgpConfig& cfg);

// True average effect per calendar period for one adoption group.
struct EffectCurve {
  std::int32_t adoption = 0;
  std::vector<std::int32_t> event_time;  // t - adoption + 1 for t = 1..T
  std::vector<double> truth;             // 0 before adoption
  std::size_t units = 0;

  // Truth at event time h >= 1, or 0 outside the window.
  double at(std::int32_t h) const;
};

struct SimPanel {
  std::vector<PanelRow> rows;  // unit-major, periods 1..T, unit ids 1..N
  std::vector<EffectCurve> truth;  // one per treated group, ascending adoption
  std::vector<std::int32_t> unit_cohort;
};

SimPanel generate_panel(const DgpConfig& cfg);

enum class BatteryEstimator { kA, kB, kC, kD, kE };
inline constexpr std::array<BatteryEstimator, 5> kBattery = {BatteryEstimator::kA, BatteryEstimator::kB,
                                                             BatteryEstimator::kC, BatteryEstimator::kD,
                                                             BatteryEstimator::kE};
std::string to_string(BatteryEstimator e);  // "A_DIM", "B_CUPED", ...

struct BatteryResult {
  std::vector<std::int32_t> event_time;  // post-period event times 1..H
  std::vector<double> truth;
  std::array<std::vector<double>, 5> estimate;  // per estimator, aligned with event_time
  std::array<double, 5> rmse{};
};

// Estimators A-E scored against a one-shot truth curve. Throws DomainError on
// staggered adoption.
BatteryResult run_battery(const PanelSource& source, const EffectCurve& truth, std::size_t threads = 1);

std::uint64_t rep_seed(std::uint64_t seed, std::size_t rep);

struct StudyRow {
  std::size_t config = 0;
  std::size_t rep = 0;
  BatteryEstimator estimator = BatteryEstimator::kA;
  double rmse = 0.0;
};

struct StudySummary {
  std::size_t config = 0;
  BatteryEstimator estimator = BatteryEstimator::kA;
  double mean_rmse = 0.0;
  double mc_se = 0.0;
};

struct StudyResult {
  std::vector<DgpConfig> grid;
  std::vector<StudyRow> rows;  // config-major, then rep, then estimator
  std::vector<StudySummary> summary;
  std::size_t reps = 0;
  std::uint64_t seed = 0;

  double mean_rmse(std::size_t config, BatteryEstimator e) const;
  // Mean and Monte Carlo SE of RMSE(e1) - RMSE(e2) paired by replication.
  std::pair<double, double> paired_gap(std::size_t config, BatteryEstimator e1, BatteryEstimator e2) const;
};

// Replication r of every grid entry uses seed rep_seed(seed, r), so configs
// share their random draws within a replication.
StudyResult rmse_study(const std::vector<DgpConfig>& grid, std::size_t reps, std::uint64_t seed,
                       std::size_t threads = 1);

// Grid over the given forms x {scalar, random psi} x sigma_beta levels.
std::vector<DgpConfig> figure_grid(const DgpConfig& base, std::span<const EffectKind> forms,
                                   std::span<const double> sigma_beta_levels);

enum class Scenario { kSharkfinOneShot, kStaggered };
Scenario parse_scenario(std::string_view name);
std::string to_string(Scenario s);
DgpConfig appendix_scenario(Scenario which, std::size_t n_units = 10000, std::uint64_t seed = 42);

struct QuartetMember {
  std::string name;
  double dim_estimate = 0.0;
  double dim_se = 0.0;
  std::vector<CurvePoint> curve;  // TWM_COHORT event-study coefficients
  std::vector<EffectCurve> truth;
};

// Four panels sharing every untreated draw, with effects that cancel in the
// post-period difference in means: a null, offsetting cohort effects, a
// sign-reversing trend, and cohort-varying slopes.
std::vector<QuartetMember> anscombe_quartet(std::size_t n_units = 3000, std::uint64_t seed = 11, double delta = 2.0);

// Largest |a - b| / sqrt(se_a^2 + se_b^2) over matching curve points.
double max_standardized_gap(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b);

struct FTestStudy {
  std::size_t reps = 0;
  std::size_t rejections = 0;
  double rate = 0.0;
  double mc_se = 0.0;
  std::vector<double> p_values;
};

// TWM_EVENT vs TWM_STATIC F test at level alpha over replications of cfg.
FTestStudy ftest_study(const DgpConfig& cfg, std::size_t reps, std::uint64_t seed, double alpha = 0.05,
                       std::size_t threads = 1);

}  // namespace panelreg::simlab
