#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "panelreg/compress.hpp"

namespace panelreg {

struct FitOptions {
  double collinearity_tol = 1e-10;  // on the unit-diagonal Gram matrix
  bool hc1 = false;                 // scale HC0 by n / (n - k)
  bool compute_vcov = true;
};

struct FitResult {
  EstimatorKind kind = EstimatorKind::kTwmStatic;
  ColumnSchema schema;
  std::vector<std::string> labels;  // kept columns, schema order
  std::vector<std::size_t> kept;    // schema index of each kept column
  std::vector<std::string> dropped;
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;  // empty when not computed
  Eigen::VectorXd se;
  double rss = 0.0;
  std::uint64_t n_obs = 0;
  std::size_t n_params = 0;
  std::size_t clamped_strata = 0;  // strata whose tiny negative RSS was set to 0
  bool hc1 = false;

  std::optional<std::size_t> index_of(std::string_view label) const;
  std::optional<double> coef(std::string_view label) const;
  std::optional<double> std_error(std::string_view label) const;
  // Coefficients over the full schema, 0 in dropped columns.
  Eigen::VectorXd full_beta() const;
};

// Frequency-weighted least squares on the strata. Throws EstimationError when
// there are no strata, too few rows, or every column is dropped.
FitResult fit_wls(const CompressedDesign& c, const FitOptions& options = {});

// bread * meat * bread with meat = sum_j RSS_j x_j x_j'.
Eigen::MatrixXd hc_vcov(const CompressedDesign& c, const FitResult& fit, bool hc1 = false);

// Residual sum of squares for full-schema coefficients.
double rss(const CompressedDesign& c, const Eigen::VectorXd& beta_full);

struct FTestResult {
  double f_stat = 0.0;
  std::size_t df_num = 0;
  std::uint64_t df_den = 0;
  double p_value = 1.0;
};

// Nested-model F test. Throws DomainError for non-nested models or unequal
// n_obs and NumericalError when RSS_r < RSS_u beyond rounding.
FTestResult wald_f_test(const FitResult& restricted, const FitResult& unrestricted);

bool is_nested(const FitResult& restricted, const FitResult& unrestricted);

struct CurvePoint {
  std::int32_t cohort = kNever;  // adoption period of the group
  std::int32_t period = 0;       // calendar period, 0 for DYN_DIM
  std::int32_t event_time = 0;   // period - adoption + 1
  double estimate = 0.0;
  double se = 0.0;
  bool reference = false;  // omitted category, reported as 0
};

// Event-study coefficients of TWM_EVENT, TWM_COHORT and DYN_DIM fits in
// (cohort, event time) order, including the omitted reference points.
std::vector<CurvePoint> event_curve(const FitResult& fit);

}  // namespace panelreg
