#include "panelreg/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/fisher_f.hpp>

#include "panelreg/error.hpp"

namespace panelreg {

namespace {

struct StratumMoments {
  double within = 0.0;  // sum_y_sq - sum_y^2 / n
  bool clamped = false;
};

StratumMoments within_ss(const StratumRecord& s) {
  const double n = static_cast<double>(s.n);
  double within = s.sum_y_sq - s.sum_y * (s.sum_y / n);
  bool clamped = false;
  if (within < 0.0) {
    const double tol = 1e-9 * std::max(1.0, std::fabs(s.sum_y_sq));
    if (within < -tol) {
      throw NumericalError("stratum has negative within sum of squares " + std::to_string(within) +
                           "; sum_y_sq is inconsistent with sum_y and n");
    }
    within = 0.0;
    clamped = true;
  }
  return {within, clamped};
}

double fitted(const StratumRecord& s, std::span<const std::size_t> cols, const Eigen::VectorXd& beta) {
  double v = 0.0;
  for (std::size_t j = 0; j < cols.size(); ++j) v += s.key[cols[j]] * beta[static_cast<Eigen::Index>(j)];
  return v;
}

// Per-stratum residual sums of squares in the stable form
// within_j + n_j (ybar_j - yhat_j)^2.
Eigen::VectorXd stratum_rss(const CompressedDesign& c, std::span<const std::size_t> cols, const Eigen::VectorXd& beta,
                            std::size_t* clamped) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(c.strata.size()));
  std::size_t n_clamped = 0;
  for (std::size_t j = 0; j < c.strata.size(); ++j) {
    const auto& s = c.strata[j];
    const auto m = within_ss(s);
    n_clamped += m.clamped ? 1 : 0;
    const double n = static_cast<double>(s.n);
    const double gap = s.sum_y / n - fitted(s, cols, beta);
    out[static_cast<Eigen::Index>(j)] = m.within + n * gap * gap;
  }
  if (clamped) *clamped = n_clamped;
  return out;
}

Eigen::MatrixXd design_matrix(const CompressedDesign& c, std::span<const std::size_t> cols) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(c.strata.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < c.strata.size(); ++j) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = c.strata[j].key[cols[k]];
    }
  }
  return x;
}

Eigen::VectorXd weights(const CompressedDesign& c) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(c.strata.size()));
  for (std::size_t j = 0; j < c.strata.size(); ++j) w[static_cast<Eigen::Index>(j)] = static_cast<double>(c.strata[j].n);
  return w;
}

// Columns kept by a Cholesky factorisation of the equilibrated Gram matrix
// that visits columns in schema order.
std::vector<std::size_t> independent_columns(const Eigen::MatrixXd& gram, double tol) {
  const Eigen::Index k = gram.rows();
  Eigen::VectorXd scale(k);
  for (Eigen::Index i = 0; i < k; ++i) scale[i] = gram(i, i) > 0.0 ? 1.0 / std::sqrt(gram(i, i)) : 0.0;
  std::vector<std::size_t> kept;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (scale[j] == 0.0) continue;
    const auto r = static_cast<Eigen::Index>(kept.size());
    Eigen::VectorXd z(r);
    for (Eigen::Index a = 0; a < r; ++a) {
      const auto ka = static_cast<Eigen::Index>(kept[static_cast<std::size_t>(a)]);
      double v = gram(ka, j) * scale[ka] * scale[j];
      for (Eigen::Index b = 0; b < a; ++b) v -= l(a, b) * z[b];
      z[a] = v / l(a, a);
    }
    const double d = 1.0 - z.squaredNorm();
    if (d <= tol) continue;
    l.row(r).head(r) = z.transpose();
    l(r, r) = std::sqrt(d);
    kept.push_back(static_cast<std::size_t>(j));
  }
  return kept;
}

}  // namespace

std::optional<std::size_t> FitResult::index_of(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

std::optional<double> FitResult::coef(std::string_view label) const {
  const auto i = index_of(label);
  if (!i) return std::nullopt;
  return beta[static_cast<Eigen::Index>(*i)];
}

std::optional<double> FitResult::std_error(std::string_view label) const {
  const auto i = index_of(label);
  if (!i || se.size() == 0) return std::nullopt;
  return se[static_cast<Eigen::Index>(*i)];
}

Eigen::VectorXd FitResult::full_beta() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(schema.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) out[static_cast<Eigen::Index>(kept[j])] = beta[static_cast<Eigen::Index>(j)];
  return out;
}

FitResult fit_wls(const CompressedDesign& c, const FitOptions& options) {
  if (c.strata.empty()) throw EstimationError("compressed design has no strata");
  const std::size_t width = c.schema.size();
  for (const auto& s : c.strata) {
    if (s.key.size() != width) throw EstimationError("stratum key width does not match the schema");
    if (s.n < 1) throw EstimationError("stratum with non-positive count");
  }

  std::vector<std::size_t> all(width);
  for (std::size_t j = 0; j < width; ++j) all[j] = j;
  const Eigen::MatrixXd x_all = design_matrix(c, all);
  const Eigen::VectorXd w = weights(c);
  const Eigen::MatrixXd gram = x_all.transpose() * w.asDiagonal() * x_all;

  FitResult fit;
  fit.kind = c.schema.kind;
  fit.schema = c.schema;
  fit.n_obs = c.total_rows;
  fit.hc1 = options.hc1;
  fit.kept = independent_columns(gram, options.collinearity_tol);
  if (fit.kept.empty()) throw EstimationError("every design column is zero");
  for (std::size_t j = 0, next = 0; j < width; ++j) {
    if (next < fit.kept.size() && fit.kept[next] == j) {
      fit.labels.push_back(c.schema.labels[j]);
      ++next;
    } else {
      fit.dropped.push_back(c.schema.labels[j]);
    }
  }
  if (fit.kept.size() == 1 && width > 1 && c.schema.labels[fit.kept[0]] == "intercept") {
    throw EstimationError("all regressors are collinear with the intercept");
  }
  fit.n_params = fit.kept.size();
  if (fit.n_obs <= fit.n_params) {
    throw EstimationError("need more observations (" + std::to_string(fit.n_obs) + ") than parameters (" +
                          std::to_string(fit.n_params) + ")");
  }

  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::MatrixXd xw(x_all.rows(), static_cast<Eigen::Index>(fit.kept.size()));
  for (std::size_t k = 0; k < fit.kept.size(); ++k) {
    xw.col(static_cast<Eigen::Index>(k)) = x_all.col(static_cast<Eigen::Index>(fit.kept[k])).cwiseProduct(sw);
  }
  Eigen::VectorXd yw(x_all.rows());
  for (std::size_t j = 0; j < c.strata.size(); ++j) {
    const auto& s = c.strata[j];
    yw[static_cast<Eigen::Index>(j)] = s.sum_y / static_cast<double>(s.n) * sw[static_cast<Eigen::Index>(j)];
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(xw);
  fit.beta = qr.solve(yw);

  const Eigen::VectorXd r = stratum_rss(c, fit.kept, fit.beta, &fit.clamped_strata);
  fit.rss = r.sum();
  if (options.compute_vcov) {
    fit.vcov = hc_vcov(c, fit, options.hc1);
    fit.se = fit.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  return fit;
}

Eigen::MatrixXd hc_vcov(const CompressedDesign& c, const FitResult& fit, bool hc1) {
  const Eigen::MatrixXd x = design_matrix(c, fit.kept);
  const Eigen::VectorXd w = weights(c);
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * x);
  const auto k = static_cast<Eigen::Index>(fit.kept.size());
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd bread = r_inv * r_inv.transpose();

  const Eigen::VectorXd rss_j = stratum_rss(c, fit.kept, fit.beta, nullptr);
  const Eigen::MatrixXd meat = x.transpose() * rss_j.asDiagonal() * x;
  Eigen::MatrixXd v = bread * meat * bread;
  v = 0.5 * (v + v.transpose()).eval();
  if (hc1) {
    const double n = static_cast<double>(fit.n_obs);
    v *= n / (n - static_cast<double>(k));
  }
  return v;
}

double rss(const CompressedDesign& c, const Eigen::VectorXd& beta_full) {
  if (static_cast<std::size_t>(beta_full.size()) != c.schema.size()) {
    throw std::invalid_argument("coefficient vector does not match the schema width");
  }
  std::vector<std::size_t> all(c.schema.size());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  return stratum_rss(c, all, beta_full, nullptr).sum();
}

bool is_nested(const FitResult& restricted, const FitResult& unrestricted) {
  using K = EstimatorKind;
  const K r = restricted.kind;
  const K u = unrestricted.kind;
  if ((r == K::kDim && u == K::kCuped) || (r == K::kTwmStatic && u == K::kTwmEvent) ||
      (r == K::kTwmEvent && u == K::kTwmCohort) || (r == K::kTwmStatic && u == K::kTwmCohort)) {
    return true;
  }
  for (const auto& label : restricted.labels) {
    if (std::find(unrestricted.labels.begin(), unrestricted.labels.end(), label) == unrestricted.labels.end()) {
      return false;
    }
  }
  return is_cross_sectional(r) == is_cross_sectional(u);
}

FTestResult wald_f_test(const FitResult& restricted, const FitResult& unrestricted) {
  if (restricted.n_obs != unrestricted.n_obs) {
    throw DomainError("models were fit on different samples (" + std::to_string(restricted.n_obs) + " vs " +
                      std::to_string(unrestricted.n_obs) + " observations)");
  }
  if (!is_nested(restricted, unrestricted) || unrestricted.n_params <= restricted.n_params) {
    throw DomainError(to_string(restricted.kind) + " is not nested in " + to_string(unrestricted.kind));
  }
  FTestResult out;
  out.df_num = unrestricted.n_params - restricted.n_params;
  out.df_den = unrestricted.n_obs - unrestricted.n_params;
  double diff = restricted.rss - unrestricted.rss;
  const double tol = 1e-9 * std::max(1.0, restricted.rss);
  if (diff < -tol) {
    throw NumericalError("restricted RSS is below unrestricted RSS; models cannot be nested");
  }
  diff = std::max(diff, 0.0);
  if (unrestricted.rss <= 0.0) {
    out.f_stat = diff > tol ? std::numeric_limits<double>::infinity() : 0.0;
    out.p_value = diff > tol ? 0.0 : 1.0;
    return out;
  }
  out.f_stat = (diff / static_cast<double>(out.df_num)) / (unrestricted.rss / static_cast<double>(out.df_den));
  const boost::math::fisher_f dist(static_cast<double>(out.df_num), static_cast<double>(out.df_den));
  out.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, out.f_stat)), 0.0, 1.0);
  return out;
}

std::vector<CurvePoint> event_curve(const FitResult& fit) {
  std::vector<CurvePoint> out;
  const auto se_at = [&](std::size_t i) { return fit.se.size() ? fit.se[static_cast<Eigen::Index>(i)] : 0.0; };
  if (fit.kind == EstimatorKind::kDynDim) {
    for (std::size_t i = 0; i < fit.labels.size(); ++i) {
      const auto info = parse_column_label(fit.labels[i]);
      if (info.role != ColumnRole::kEvent) continue;
      out.push_back({kNever, 0, info.event_time, fit.beta[static_cast<Eigen::Index>(i)], se_at(i), false});
    }
    return out;
  }
  if (fit.kind != EstimatorKind::kTwmEvent && fit.kind != EstimatorKind::kTwmCohort) {
    throw ConfigError(to_string(fit.kind) + " has no event-time coefficients");
  }
  const bool event = fit.kind == EstimatorKind::kTwmEvent;
  std::vector<std::int32_t> periods;
  std::map<std::int32_t, std::map<std::int32_t, CurvePoint>> groups;  // adoption -> period -> point
  for (const auto& label : fit.schema.labels) {
    const auto info = parse_column_label(label);
    if (info.role == ColumnRole::kTime || info.role == ColumnRole::kInteraction) periods.push_back(info.period);
    if (info.role == ColumnRole::kCohort) groups[info.cohort];
  }
  if (event) groups[fit.schema.post_start];
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());

  for (std::size_t i = 0; i < fit.labels.size(); ++i) {
    const auto info = parse_column_label(fit.labels[i]);
    if (info.role != ColumnRole::kInteraction) continue;
    const std::int32_t adopt = event ? fit.schema.post_start : info.cohort;
    groups[adopt][info.period] = {adopt, info.period, info.period - adopt + 1,
                                  fit.beta[static_cast<Eigen::Index>(i)], se_at(i), false};
  }
  for (auto& [adopt, points] : groups) {
    // The omitted interaction is the last period before adoption.
    std::int32_t reference = adopt - 1;
    const auto it = std::lower_bound(periods.begin(), periods.end(), adopt);
    if (it != periods.begin()) reference = *std::prev(it);
    bool omitted = true;
    for (const auto& label : fit.schema.labels) {
      const auto info = parse_column_label(label);
      if (info.role == ColumnRole::kInteraction && info.period == reference && (event || info.cohort == adopt)) {
        omitted = false;
      }
    }
    if (omitted && !points.contains(reference)) points[reference] = {adopt, reference, reference - adopt + 1, 0.0, 0.0, true};
    for (const auto& [p, point] : points) out.push_back(point);
  }
  return out;
}

}  // namespace panelreg
