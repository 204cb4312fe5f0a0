#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelreg/compress.hpp"
#include "panelreg/design.hpp"
#include "panelreg/estimate.hpp"
#include "panelreg/panel.hpp"

namespace panelreg {

// One unit's contribution to the design. Entries point at shared cells; a
// cell is a (unit profile, period, treatment) class whose design key depends
// on the unit only through its cohort and treatment mean.
struct ShardEntry {
  std::uint32_t cell = 0;
  std::int64_t n = 0;
  double sum_y = 0.0;
  double sum_y_sq = 0.0;
};

struct UnitShard {
  std::uint32_t unit = 0;  // dense index into PanelStats
  double unit_treat_mean = 0.0;
  std::int32_t cohort = kNever;
  std::vector<ShardEntry> entries;
};

struct ShardOptions {
  std::size_t threads = 1;
  std::size_t memory_budget_bytes = 0;  // 0 = unbounded
};

struct ShardSet {
  EstimatorSpec spec;  // resolved
  ColumnSchema schema;
  std::vector<std::vector<double>> cell_keys;
  std::vector<std::uint32_t> cell_period;  // period index, or kNoPeriod for cross sections
  std::vector<UnitShard> units;
  // Set when the shards would not fit the memory budget: replicates rescan
  // `source` instead of summing shards.
  bool rescan = false;
  const PanelSource* source = nullptr;
  const PanelStats* stats = nullptr;
  std::size_t n_units = 0;

  static constexpr std::uint32_t kNoPeriod = 0xffffffffu;
};

// Per-unit pre-aggregation for TWM_STATIC, TWM_EVENT, TWM_COHORT, DYN_DIM,
// DIM and CUPED. `source` and `stats` must outlive the result when it falls
// back to rescan mode.
ShardSet shard_units(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec,
                     const ShardOptions& options = {});

// Compression of the sample where unit u appears counts[u] times. With all
// counts 1 this is the full-data design.
CompressedDesign resample_design(const ShardSet& shards, std::span<const std::uint32_t> counts);
CompressedDesign merge_shards(const ShardSet& shards);

struct BootOptions {
  std::size_t b = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double ci_level = 0.95;
  bool normal_ci = false;  // beta +- z * se instead of percentiles
  double max_failed_share = 0.10;
};

struct BootResult {
  std::vector<std::string> labels;
  Eigen::VectorXd point;       // full-sample estimate
  Eigen::MatrixXd replicates;  // b x k; rows of failed replicates are NaN
  Eigen::VectorXd se;
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
  double ci_level = 0.95;
  std::size_t b = 0;
  std::uint64_t seed = 0;
  std::size_t n_failed = 0;
  bool normal_ci = false;
};

// Unit draws of replicate `r`: counts[u] = times unit u was drawn.
std::vector<std::uint32_t> replicate_counts(std::uint64_t seed, std::size_t r, std::size_t n_units);

// Pairs cluster bootstrap over units. Throws InferenceError for fewer than two
// units or when more than max_failed_share of the replicates fail.
BootResult cluster_bootstrap(const ShardSet& shards, const BootOptions& options);

}  // namespace panelreg
