#include <cmath>
#include <map>

#include "panelreg/error.hpp"
#include "panelreg/numeric.hpp"
#include "panelreg/scan.hpp"
#include "panelreg/simlab.hpp"

namespace panelreg::simlab {

namespace {

FitResult fit_kind(const PanelSource& source, const PanelStats& stats, EstimatorKind kind, std::int32_t post_start,
                   bool vcov) {
  EstimatorSpec spec;
  spec.kind = kind;
  spec.post_start = post_start;
  return fit_wls(scan_pass2(source, stats, spec), FitOptions{.compute_vcov = vcov});
}

double rmse_of(const std::vector<double>& est, const std::vector<double>& truth) {
  double s = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) s += (est[i] - truth[i]) * (est[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(est.size()));
}

std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {mean, se};
}

}  // namespace

std::string to_string(BatteryEstimator e) {
  switch (e) {
    case BatteryEstimator::kA: return "A_DIM";
    case BatteryEstimator::kB: return "B_CUPED";
    case BatteryEstimator::kC: return "C_TWFE_STATIC";
    case BatteryEstimator::kD: return "D_DYN_DIM";
    case BatteryEstimator::kE: return "E_EVENT_STUDY";
  }
  return "unknown";
}

BatteryResult run_battery(const PanelSource& source, const EffectCurve& truth, std::size_t threads) {
  const PanelStats stats = scan_pass1(source, ScanOptions{threads});
  const auto cohorts = stats.treated_cohorts();
  if (cohorts.size() > 1) {
    throw DomainError("the estimator battery needs one-shot adoption; this panel has " +
                      std::to_string(cohorts.size()) + " cohorts, use TWM_COHORT");
  }
  const std::int32_t post_start = truth.adoption;

  BatteryResult out;
  for (std::size_t p = 0; p < stats.n_periods(); ++p) {
    if (stats.periods[p] >= post_start) {
      const std::int32_t h = stats.periods[p] - post_start + 1;
      out.event_time.push_back(h);
      out.truth.push_back(truth.at(h));
    }
  }
  const std::size_t horizon = out.event_time.size();

  const auto flat = [&](EstimatorKind kind) {
    const auto fit = fit_kind(source, stats, kind, post_start, false);
    return std::vector<double>(horizon, *fit.coef("W"));
  };
  out.estimate[0] = flat(EstimatorKind::kDim);
  out.estimate[1] = flat(EstimatorKind::kCuped);
  out.estimate[2] = flat(EstimatorKind::kTwmStatic);

  std::map<std::int32_t, double> by_h;
  for (const auto& p : event_curve(fit_kind(source, stats, EstimatorKind::kDynDim, post_start, false))) {
    by_h[p.event_time] = p.estimate;
  }
  out.estimate[3].resize(horizon);
  for (std::size_t i = 0; i < horizon; ++i) out.estimate[3][i] = by_h.at(out.event_time[i]);

  by_h.clear();
  for (const auto& p : event_curve(fit_kind(source, stats, EstimatorKind::kTwmEvent, post_start, false))) {
    by_h[p.event_time] = p.estimate;
  }
  out.estimate[4].resize(horizon);
  for (std::size_t i = 0; i < horizon; ++i) out.estimate[4][i] = by_h.at(out.event_time[i]);

  for (std::size_t e = 0; e < 5; ++e) out.rmse[e] = rmse_of(out.estimate[e], out.truth);
  return out;
}

std::uint64_t rep_seed(std::uint64_t seed, std::size_t rep) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(rep) + 0x632be59bd9b4e019ULL));
}

double StudyResult::mean_rmse(std::size_t config, BatteryEstimator e) const {
  for (const auto& s : summary) {
    if (s.config == config && s.estimator == e) return s.mean_rmse;
  }
  throw std::out_of_range("no such study cell");
}

std::pair<double, double> StudyResult::paired_gap(std::size_t config, BatteryEstimator e1, BatteryEstimator e2) const {
  std::vector<double> gaps(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const std::size_t base = (config * reps + r) * kBattery.size();
    gaps[r] = rows[base + static_cast<std::size_t>(e1)].rmse - rows[base + static_cast<std::size_t>(e2)].rmse;
  }
  return mean_and_se(gaps);
}

StudyResult rmse_study(const std::vector<DgpConfig>& grid, std::size_t reps, std::uint64_t seed, std::size_t threads) {
  if (reps < 2) throw ConfigError("an RMSE study needs at least 2 replications");
  for (const auto& cfg : grid) validate(cfg);
  StudyResult out;
  out.grid = grid;
  out.reps = reps;
  out.seed = seed;
  const std::size_t k = kBattery.size();
  out.rows.resize(grid.size() * reps * k);
  parallel_for(reps, threads, [&](std::size_t r) {
    const std::uint64_t s = rep_seed(seed, r);
    for (std::size_t c = 0; c < grid.size(); ++c) {
      DgpConfig cfg = grid[c];
      cfg.seed = s;
      SimPanel panel = generate_panel(cfg);
      const EffectCurve truth = panel.truth.front();
      const MemorySource source(std::move(panel.rows));
      const auto res = run_battery(source, truth);
      for (std::size_t e = 0; e < k; ++e) out.rows[(c * reps + r) * k + e] = {c, r, kBattery[e], res.rmse[e]};
    }
  });
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (std::size_t e = 0; e < k; ++e) {
      std::vector<double> v(reps);
      for (std::size_t r = 0; r < reps; ++r) v[r] = out.rows[(c * reps + r) * k + e].rmse;
      const auto [mean, se] = mean_and_se(v);
      out.summary.push_back({c, kBattery[e], mean, se});
    }
  }
  return out;
}

std::vector<DgpConfig> figure_grid(const DgpConfig& base, std::span<const EffectKind> forms,
                                   std::span<const double> sigma_beta_levels) {
  std::vector<DgpConfig> grid;
  for (auto form : forms) {
    for (bool random_psi : {false, true}) {
      for (double sb : sigma_beta_levels) {
        DgpConfig cfg = base;
        cfg.effect = form;
        cfg.psi.random = random_psi;
        cfg.sigma_beta = sb;
        grid.push_back(cfg);
      }
    }
  }
  return grid;
}

std::vector<QuartetMember> anscombe_quartet(std::size_t n_units, std::uint64_t seed, double delta) {
  DgpConfig base;
  base.n_units = n_units;
  base.n_periods = 20;
  base.t0 = 10;
  base.exact_assignment = true;
  base.seed = seed;
  const double third = 1.0 / 3.0;
  auto affine = [&](double a, double b) { return EffectShape{EffectKind::kAffine, delta, a, b}; };
  // Cohorts adopt at 11 and 16, so the post window (11..20) holds 10 treated
  // periods of cohort 1 and 5 of cohort 2; each pair of effect paths averages
  // to zero over that window.
  const std::vector<std::pair<std::string, std::pair<EffectShape, EffectShape>>> members = {
      {"null", {affine(0.0, 0.0), affine(0.0, 0.0)}},
      {"offsetting_cohorts", {affine(1.0, 0.0), affine(-2.0, 0.0)}},
      {"sign_reversing", {affine(-14.0 / 3.0, 1.0), affine(-14.0 / 3.0, 1.0)}},
      {"cohort_varying", {affine(5.5, -1.0), affine(-3.0, 1.0)}},
  };
  std::vector<QuartetMember> out;
  for (const auto& [name, effects] : members) {
    DgpConfig cfg = base;
    cfg.cohorts = {{11, third, effects.first}, {16, third, effects.second}};
    SimPanel panel = generate_panel(cfg);
    QuartetMember m;
    m.name = name;
    m.truth = panel.truth;
    const MemorySource source(std::move(panel.rows));
    const PanelStats stats = scan_pass1(source);
    const auto dim = fit_kind(source, stats, EstimatorKind::kDim, 11, true);
    m.dim_estimate = *dim.coef("W");
    m.dim_se = *dim.std_error("W");
    m.curve = event_curve(fit_kind(source, stats, EstimatorKind::kTwmCohort, 11, true));
    out.push_back(std::move(m));
  }
  return out;
}

double max_standardized_gap(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b) {
  std::map<std::pair<std::int32_t, std::int32_t>, const CurvePoint*> index;
  for (const auto& p : b) index[{p.cohort, p.period}] = &p;
  double best = 0.0;
  for (const auto& p : a) {
    const auto it = index.find({p.cohort, p.period});
    if (it == index.end() || p.reference || it->second->reference) continue;
    const double pooled = std::sqrt(p.se * p.se + it->second->se * it->second->se);
    if (pooled <= 0.0) continue;
    best = std::max(best, std::fabs(p.estimate - it->second->estimate) / pooled);
  }
  return best;
}

FTestStudy ftest_study(const DgpConfig& cfg, std::size_t reps, std::uint64_t seed, double alpha, std::size_t threads) {
  validate(cfg);
  if (!cfg.cohorts.empty() && cfg.cohorts.size() != 1) throw DomainError("the F-test study needs one-shot adoption");
  FTestStudy out;
  out.reps = reps;
  out.p_values.resize(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    DgpConfig c = cfg;
    c.seed = rep_seed(seed, r);
    SimPanel panel = generate_panel(c);
    const std::int32_t post_start = panel.truth.front().adoption;
    const MemorySource source(std::move(panel.rows));
    const PanelStats stats = scan_pass1(source);
    const auto restricted = fit_kind(source, stats, EstimatorKind::kTwmStatic, post_start, false);
    const auto unrestricted = fit_kind(source, stats, EstimatorKind::kTwmEvent, post_start, false);
    out.p_values[r] = wald_f_test(restricted, unrestricted).p_value;
  });
  for (double p : out.p_values) out.rejections += p < alpha ? 1 : 0;
  out.rate = reps ? static_cast<double>(out.rejections) / static_cast<double>(reps) : 0.0;
  out.mc_se = reps ? std::sqrt(out.rate * (1.0 - out.rate) / static_cast<double>(reps)) : 0.0;
  return out;
}

}  // namespace panelreg::simlab
