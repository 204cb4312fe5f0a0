#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "panelreg/error.hpp"
#include "panelreg/numeric.hpp"
#include "panelreg/simlab.hpp"

namespace panelreg::simlab {

namespace {

// Independent random streams per model component, so that changing one
// component (effects, sigma levels) leaves the others' draws untouched.
enum Stream : std::uint32_t { kAlpha = 1, kGamma, kBeta, kEps, kAssign, kPsi, kWalk };

std::mt19937_64 stream(std::uint64_t seed, Stream id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s) out += (c == '-' || c == ' ') ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string to_string(EffectKind kind) {
  switch (kind) {
    case EffectKind::kConstant: return "constant";
    case EffectKind::kLinear: return "linear";
    case EffectKind::kConcave: return "concave";
    case EffectKind::kPosNeg: return "pos_neg";
    case EffectKind::kExponential: return "exponential";
    case EffectKind::kSinusoidal: return "sinusoidal";
    case EffectKind::kRandomWalk: return "random_walk";
    case EffectKind::kSharkfin: return "sharkfin";
    case EffectKind::kMeanReversion: return "mean_reversion";
    case EffectKind::kAffine: return "affine";
  }
  return "unknown";
}

EffectKind parse_effect_kind(std::string_view name) {
  const std::string key = lower(name);
  for (auto k : {EffectKind::kConstant, EffectKind::kLinear, EffectKind::kConcave, EffectKind::kPosNeg,
                 EffectKind::kExponential, EffectKind::kSinusoidal, EffectKind::kRandomWalk, EffectKind::kSharkfin,
                 EffectKind::kMeanReversion, EffectKind::kAffine}) {
    if (key == to_string(k)) return k;
  }
  if (key == "log_concave") return EffectKind::kConcave;
  if (key == "positive_then_negative") return EffectKind::kPosNeg;
  if (key == "sine") return EffectKind::kSinusoidal;
  throw ConfigError("unknown effect form '" + std::string(name) + "'");
}

double effect_function(EffectKind kind, std::int32_t t, std::int32_t t0, std::int32_t t_max, double tau, double psi,
                       std::span<const double> walk) {
  if (t <= t0) throw DomainError("effect functions are defined for post periods only");
  const double h = t - t0;
  const double span = t_max - t0;
  switch (kind) {
    case EffectKind::kConstant:
      return psi * tau;
    case EffectKind::kLinear:
      return psi * tau * h / span;
    case EffectKind::kConcave:
      return psi * tau * 0.5 * std::log(2.0 * (h + 1.0) / span + 1.0);
    case EffectKind::kPosNeg:
      return psi * (2.0 * t < t_max + t0 ? tau * 2.0 * h / span : tau * (2.0 - 2.0 * h / span));
    case EffectKind::kExponential:
      return psi * tau * (1.0 - std::exp(-5.0 * h / span));
    case EffectKind::kSinusoidal:
      return psi * tau * std::sin(2.0 * std::numbers::pi * h / span);
    case EffectKind::kRandomWalk: {
      const auto i = static_cast<std::size_t>(t - t0 - 1);
      if (i >= walk.size()) throw DomainError("random-walk effect needs a shock path covering period " + std::to_string(t));
      return psi * tau * walk[i];
    }
    default:
      break;
  }
  throw DomainError(to_string(kind) + " is not one of the seven temporal forms");
}

double shape_value(const EffectShape& shape, std::int32_t h, std::int32_t horizon, double psi,
                   std::span<const double> walk) {
  switch (shape.kind) {
    case EffectKind::kSharkfin:
      if (h > shape.width) return 0.0;
      return psi * shape.tau * std::log1p(h) / std::log1p(shape.width);
    case EffectKind::kMeanReversion:
      if (h > shape.width) return 0.0;
      return psi * shape.tau * static_cast<double>(shape.width + 1 - h) / shape.width;
    case EffectKind::kAffine:
      return psi * shape.tau * (shape.a + shape.b * h);
    default:
      return effect_function(shape.kind, h, 0, horizon, shape.tau, psi, walk);
  }
}

double EffectCurve::at(std::int32_t h) const {
  for (std::size_t i = 0; i < event_time.size(); ++i) {
    if (event_time[i] == h) return truth[i];
  }
  return 0.0;
}

void validate(const DgpConfig& cfg) {
  if (cfg.n_units == 0) throw ConfigError("n_units must be positive");
  if (cfg.n_periods < 2) throw ConfigError("n_periods must be at least 2");
  if (cfg.sigma_alpha < 0 || cfg.sigma_gamma < 0 || cfg.sigma_beta < 0 || cfg.sigma_eps < 0) {
    throw ConfigError("standard deviations must be nonnegative");
  }
  if (!(cfg.rho > -1.0 && cfg.rho < 1.0)) throw ConfigError("rho must lie in (-1, 1)");
  if (cfg.psi.random && cfg.psi.sd < 0) throw ConfigError("psi sd must be nonnegative");
  if (cfg.cohorts.empty()) {
    if (!(cfg.t0 >= 1 && cfg.t0 < cfg.n_periods)) throw ConfigError("t0 must satisfy 1 <= t0 < n_periods");
    if (!(cfg.treat_prob > 0.0 && cfg.treat_prob < 1.0)) throw ConfigError("treat_prob must lie in (0, 1)");
  } else {
    double total = 0.0;
    for (const auto& c : cfg.cohorts) {
      if (c.adoption < 2 || c.adoption > cfg.n_periods) {
        throw ConfigError("cohort adoption periods must lie in [2, n_periods]");
      }
      if (c.share <= 0.0) throw ConfigError("cohort shares must be positive");
      total += c.share;
    }
    if (total > 1.0 + 1e-12) throw ConfigError("cohort shares sum to more than 1");
  }
}

SimPanel generate_panel(const DgpConfig& cfg) {
  validate(cfg);
  std::vector<CohortSpec> groups = cfg.cohorts;
  if (groups.empty()) {
    groups.push_back({cfg.t0 + 1, cfg.treat_prob, EffectShape{cfg.effect, cfg.tau_base}});
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.adoption < b.adoption; });
  const std::size_t n = cfg.n_units;
  const std::int32_t t_max = cfg.n_periods;
  std::normal_distribution<double> std_normal(0.0, 1.0);

  // Group per unit: index into `groups`, or -1 for never treated.
  std::vector<int> group(n, -1);
  auto assign = stream(cfg.seed, kAssign);
  if (cfg.exact_assignment) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), assign);
    std::size_t next = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto count = static_cast<std::size_t>(std::llround(groups[g].share * static_cast<double>(n)));
      for (std::size_t k = 0; k < count && next < n; ++k) group[order[next++]] = static_cast<int>(g);
    }
  } else {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = unif(assign);
      double cum = 0.0;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        cum += groups[g].share;
        if (u < cum) {
          group[i] = static_cast<int>(g);
          break;
        }
      }
    }
  }

  auto walk_rng = stream(cfg.seed, kWalk);
  std::vector<std::vector<double>> walks(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::int32_t horizon = t_max - groups[g].adoption + 1;
    double s = 0.0;
    for (std::int32_t h = 0; h < horizon; ++h) {
      s += std_normal(walk_rng);
      walks[g].push_back(s);
    }
  }

  auto gamma_rng = stream(cfg.seed, kGamma);
  std::vector<double> gamma(static_cast<std::size_t>(t_max));
  for (auto& g : gamma) g = cfg.sigma_gamma * std_normal(gamma_rng);

  auto alpha_rng = stream(cfg.seed, kAlpha);
  auto beta_rng = stream(cfg.seed, kBeta);
  auto eps_rng = stream(cfg.seed, kEps);
  auto psi_rng = stream(cfg.seed, kPsi);
  const double eps0_sd = cfg.sigma_eps / std::sqrt(1.0 - cfg.rho * cfg.rho);

  SimPanel out;
  out.rows.reserve(n * static_cast<std::size_t>(t_max));
  out.unit_cohort.resize(n, kNever);
  std::vector<std::vector<CompensatedSum>> effect_sum(groups.size());
  std::vector<std::size_t> group_units(groups.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) effect_sum[g].resize(static_cast<std::size_t>(t_max));

  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = cfg.sigma_alpha * std_normal(alpha_rng);
    const double beta = cfg.sigma_beta * std_normal(beta_rng);
    double psi = cfg.psi.value;
    if (cfg.psi.random) {
      do {
        psi = cfg.psi.mean + cfg.psi.sd * std_normal(psi_rng);
      } while (psi < 0.0);
    }
    const int g = group[i];
    if (g >= 0) {
      out.unit_cohort[i] = groups[static_cast<std::size_t>(g)].adoption;
      ++group_units[static_cast<std::size_t>(g)];
    }
    double eps = 0.0;
    for (std::int32_t t = 1; t <= t_max; ++t) {
      const double nu = std_normal(eps_rng);
      eps = t == 1 ? eps0_sd * nu : cfg.rho * eps + cfg.sigma_eps * nu;
      double effect = 0.0;
      std::uint8_t w = 0;
      if (g >= 0) {
        const auto& spec = groups[static_cast<std::size_t>(g)];
        if (t >= spec.adoption) {
          w = 1;
          effect = shape_value(spec.effect, t - spec.adoption + 1, t_max - spec.adoption + 1, psi,
                               walks[static_cast<std::size_t>(g)]);
          effect_sum[static_cast<std::size_t>(g)][static_cast<std::size_t>(t - 1)].add(effect);
        }
      }
      const double y = alpha + gamma[static_cast<std::size_t>(t - 1)] + beta * t + effect + eps;
      out.rows.push_back({static_cast<std::uint64_t>(i + 1), t, y, w});
    }
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    EffectCurve curve;
    curve.adoption = groups[g].adoption;
    curve.units = group_units[g];
    for (std::int32_t t = 1; t <= t_max; ++t) {
      curve.event_time.push_back(t - curve.adoption + 1);
      const double s = effect_sum[g][static_cast<std::size_t>(t - 1)].value();
      curve.truth.push_back(t >= curve.adoption && curve.units > 0 ? s / static_cast<double>(curve.units) : 0.0);
    }
    out.truth.push_back(std::move(curve));
  }
  return out;
}

Scenario parse_scenario(std::string_view name) {
  const std::string key = lower(name);
  if (key == "sharkfin" || key == "sharkfin_oneshot" || key == "oneshot") return Scenario::kSharkfinOneShot;
  if (key == "staggered") return Scenario::kStaggered;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (expected sharkfin_oneshot or staggered)");
}

std::string to_string(Scenario s) { return s == Scenario::kSharkfinOneShot ? "sharkfin_oneshot" : "staggered"; }

DgpConfig appendix_scenario(Scenario which, std::size_t n_units, std::uint64_t seed) {
  DgpConfig cfg;
  cfg.n_units = n_units;
  cfg.n_periods = 30;
  cfg.t0 = 14;
  cfg.sigma_alpha = 1.0;
  cfg.sigma_gamma = 1.0;
  cfg.sigma_beta = 0.0;
  cfg.sigma_eps = 1.0;
  cfg.rho = 0.7;
  cfg.exact_assignment = true;
  cfg.seed = seed;
  if (which == Scenario::kSharkfinOneShot) {
    cfg.cohorts = {{15, 0.5, EffectShape{EffectKind::kSharkfin, 0.6, 0.0, 0.0, 8}}};
  } else {
    cfg.cohorts = {{8, 0.15, EffectShape{EffectKind::kMeanReversion, 1.0, 0.0, 0.0, 10}},
                   {13, 0.25, EffectShape{EffectKind::kSharkfin, 0.8, 0.0, 0.0, 7}},
                   {18, 0.20, EffectShape{EffectKind::kSinusoidal, 0.5}}};
  }
  return cfg;
}

}  // namespace panelreg::simlab
