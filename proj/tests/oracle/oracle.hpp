#pragma once

// Reference computations on the uncompressed data. Nothing here uses the
// engine's design, compression or solver code; only the row type is shared.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelreg/design.hpp"
#include "panelreg/panel.hpp"

namespace oracle {

struct Dense {
  std::vector<std::string> labels;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::uint64_t> cluster;
};

// Dummy coding written out directly from the model definitions. post_start 0
// means the earliest adoption period.
Dense dense_design(std::span<const panelreg::PanelRow> rows, panelreg::EstimatorKind kind, std::int32_t post_start = 0);

// Removes the named columns.
Dense drop_columns(const Dense& d, const std::vector<std::string>& labels);

struct Ols {
  Eigen::VectorXd beta;
  Eigen::VectorXd hc0_se;
  Eigen::VectorXd cr1_se;
  Eigen::MatrixXd hc0;
  double rss = 0.0;
  Eigen::Index rank = 0;
};

Ols ols(const Dense& d);

// Two-way within estimator of the W coefficient, by alternating projections.
double twfe_tau(std::span<const panelreg::PanelRow> rows);

}  // namespace oracle
