#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "panelreg/design.hpp"
#include "panelreg/panel.hpp"

namespace panelreg {

struct DenseFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;  // HC0
  std::size_t rows = 0;
};

// Uncompressed reference path: materialises the full NT x k design and solves
// it with Householder QR, then forms the HC0 sandwich row by row.
DenseFit dense_fit(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec);

struct BenchOptions {
  std::size_t repeats = 3;
  std::size_t dense_budget_bytes = std::size_t{2} << 30;  // larger designs are reported as infeasible
  std::size_t threads = 1;
  std::uint64_t seed = 1;
};

struct BenchCell {
  std::size_t n_units = 0;
  std::int32_t n_periods = 0;
  EstimatorKind kind = EstimatorKind::kTwmStatic;
  double compressed_s = 0.0;            // median wall time
  std::optional<double> dense_s;        // empty when over the dense budget
  std::size_t strata = 0;
  double max_coef_gap = 0.0;            // |beta_compressed - beta_dense|_inf when both ran
};

BenchCell bench_cell(std::size_t n_units, std::int32_t n_periods, EstimatorKind kind, const BenchOptions& options = {});

// Slope of log(time) on log(N) by least squares.
double growth_exponent(const std::vector<std::size_t>& n, const std::vector<double>& seconds);

}  // namespace panelreg
