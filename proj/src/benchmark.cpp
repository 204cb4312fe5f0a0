#include "panelreg/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "panelreg/error.hpp"
#include "panelreg/estimate.hpp"
#include "panelreg/scan.hpp"
#include "panelreg/simlab.hpp"

namespace panelreg {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <typename F>
double seconds(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

DenseFit dense_fit(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec) {
  const DesignBuilder builder(spec, stats);
  if (is_cross_sectional(builder.spec().kind)) throw ConfigError("the dense path covers panel estimators only");
  const auto k = static_cast<Eigen::Index>(builder.width());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(stats.total_rows), k);
  Eigen::VectorXd y(static_cast<Eigen::Index>(stats.total_rows));
  std::vector<double> key(builder.width());
  Eigen::Index row = 0;
  source.scan([&](std::span<const PanelRow> batch) {
    for (const auto& r : batch) {
      const auto u = stats.unit_index(r.unit_id);
      const auto p = stats.period_index(r.time_id);
      if (!u || !p) throw ConsistencyError("row not seen by the first pass");
      if (!builder.panel_key(*u, *p, r.treatment, key)) continue;
      for (Eigen::Index j = 0; j < k; ++j) x(row, j) = key[static_cast<std::size_t>(j)];
      y[row++] = r.outcome;
    }
  });
  x.conservativeResize(row, k);
  y.conservativeResize(row);

  DenseFit out;
  out.rows = static_cast<std::size_t>(row);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  out.beta = qr.solve(y);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd bread = r_inv * r_inv.transpose();
  const Eigen::VectorXd e = y - x * out.beta;
  const Eigen::MatrixXd meat = x.transpose() * e.cwiseAbs2().asDiagonal() * x;
  out.se = (bread * meat * bread).diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

BenchCell bench_cell(std::size_t n_units, std::int32_t n_periods, EstimatorKind kind, const BenchOptions& options) {
  if (options.repeats == 0) throw ConfigError("repeats must be positive");
  simlab::DgpConfig cfg;
  cfg.n_units = n_units;
  cfg.n_periods = n_periods;
  cfg.t0 = n_periods / 2;
  cfg.effect = simlab::EffectKind::kSinusoidal;
  cfg.seed = options.seed;
  simlab::SimPanel panel = simlab::generate_panel(cfg);
  const MemorySource source(std::move(panel.rows));
  EstimatorSpec spec;
  spec.kind = kind;
  spec.post_start = cfg.t0 + 1;

  BenchCell cell;
  cell.n_units = n_units;
  cell.n_periods = n_periods;
  cell.kind = kind;

  FitResult compressed;
  std::vector<double> times;
  for (std::size_t i = 0; i < options.repeats; ++i) {
    times.push_back(seconds([&] {
      const PanelStats stats = scan_pass1(source, ScanOptions{options.threads});
      Pass2Options p2;
      p2.threads = options.threads;
      const auto design = scan_pass2(source, stats, spec, p2);
      cell.strata = design.strata.size();
      compressed = fit_wls(design);
    }));
  }
  cell.compressed_s = median(times);

  const std::size_t width = DesignBuilder(spec, scan_pass1(source)).width();
  const std::size_t dense_bytes = static_cast<std::size_t>(n_units) * static_cast<std::size_t>(n_periods) * width * 8;
  if (dense_bytes > options.dense_budget_bytes) return cell;

  times.clear();
  DenseFit dense;
  for (std::size_t i = 0; i < options.repeats; ++i) {
    times.push_back(seconds([&] {
      const PanelStats stats = scan_pass1(source, ScanOptions{options.threads});
      dense = dense_fit(source, stats, spec);
    }));
  }
  cell.dense_s = median(times);
  cell.max_coef_gap = (compressed.full_beta() - dense.beta).cwiseAbs().maxCoeff();
  return cell;
}

double growth_exponent(const std::vector<std::size_t>& n, const std::vector<double>& secs) {
  const std::size_t m = n.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += std::log(static_cast<double>(n[i]));
    my += std::log(secs[i]);
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = std::log(static_cast<double>(n[i])) - mx;
    sxy += dx * (std::log(secs[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace panelreg
