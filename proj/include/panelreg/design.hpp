#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panelreg/panel.hpp"

namespace panelreg {

// The six regressions the engine can estimate.
//   kDim        post-period unit means on (1, W_i)
//   kCuped      post-period unit means on (1, W_i, pre-period unit mean)
//   kTwmStatic  two-way Mundlak: (1, W_it, Wbar_i, Wbar_t)
//   kDynDim     post-period rows on (1, post time dummies, event-time dummies)
//   kTwmEvent   (1, D_i, time dummies, D_i x time) for one-shot adoption
//   kTwmCohort  (1, cohort dummies, time dummies, cohort x time)
enum class EstimatorKind { kDim, kCuped, kTwmStatic, kDynDim, kTwmEvent, kTwmCohort };

std::string to_string(EstimatorKind kind);
// Accepts "TWM_STATIC", "twm_static", "twm-static", ...; throws ConfigError.
EstimatorKind parse_estimator_kind(std::string_view name);
bool is_cross_sectional(EstimatorKind kind);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::kTwmStatic;
  std::int32_t post_start = 0;  // 0 = earliest adoption period in the data
  std::optional<std::int32_t> reference_period;  // TWM_EVENT only; default post_start - 1
  std::optional<std::uint32_t> cuped_bins;       // CUPED only; unset = exact pre-period means
  bool pre_treat_interactions = true;

  friend bool operator==(const EstimatorSpec&, const EstimatorSpec&) = default;
};

// Fills defaults from the data and validates the spec against it.
EstimatorSpec resolve_spec(const EstimatorSpec& spec, const PanelStats& stats);

enum class ColumnRole { kIntercept, kTreatment, kMean, kGroup, kCohort, kTime, kInteraction, kEvent, kOther };

struct ColumnInfo {
  ColumnRole role = ColumnRole::kOther;
  std::int32_t cohort = kNever;  // kCohort / kInteraction with a cohort prefix
  std::int32_t period = 0;       // kTime / kInteraction
  std::int32_t event_time = 0;   // kEvent
};

// Parses one of the labels the design emits ("time_7", "cohort_3:time_7", ...).
ColumnInfo parse_column_label(std::string_view label);

struct ColumnSchema {
  EstimatorKind kind = EstimatorKind::kTwmStatic;
  std::int32_t post_start = 0;
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
  std::optional<std::size_t> index_of(std::string_view label) const;

  friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

struct DesignRow {
  std::vector<double> key;
  double outcome = 0.0;
  std::uint32_t cluster_id = 0;
};

// First period with treatment 1 (1-based position in the path) or kNever.
// Throws DomainError when the path is not nondecreasing.
std::int32_t assign_cohort(std::span<const std::uint8_t> treatment_path);

// Maps rows to design keys for one resolved spec over one panel. Immutable
// after construction and safe to share between threads.
class DesignBuilder {
 public:
  DesignBuilder(const EstimatorSpec& spec, const PanelStats& stats);

  const EstimatorSpec& spec() const { return spec_; }
  const ColumnSchema& schema() const { return schema_; }
  std::size_t width() const { return schema_.size(); }

  // Panel kinds. Writes the key for a row into `key` (width() entries) and
  // returns false when the row is outside the estimation sample.
  bool panel_key(std::uint32_t unit, std::uint32_t period, std::uint8_t treatment, std::span<double> key) const;

  // Rows with equal class ids have equal keys. kNoClass when memoisation is
  // disabled for this panel.
  static constexpr std::size_t kNoClass = static_cast<std::size_t>(-1);
  std::size_t row_class(std::uint32_t unit, std::uint32_t period, std::uint8_t treatment) const;
  std::size_t class_count() const { return class_count_; }

  // Cross-sectional kinds. `pre_mean` is ignored for DIM.
  void cross_section_key(bool treated, double pre_mean, std::span<double> key) const;

  bool in_post(std::uint32_t period) const { return stats_->periods[period] >= spec_.post_start; }
  const PanelStats& stats() const { return *stats_; }

 private:
  void build_schema();

  EstimatorSpec spec_;
  const PanelStats* stats_;
  ColumnSchema schema_;
  std::vector<std::int32_t> treated_cohorts_;
  std::vector<std::int32_t> unit_cohort_slot_;   // 0 = never, else 1 + cohort position
  std::vector<std::int32_t> time_col_;           // per period, -1 when omitted
  std::vector<std::int32_t> interaction_col_;    // [cohort slot - 1][period], -1 when omitted
  std::vector<std::int32_t> event_col_;          // DYN_DIM: event_time - event_base_
  std::int32_t event_base_ = 0;
  std::vector<std::uint32_t> unit_profile_;
  std::size_t class_count_ = 0;
};

// Convenience wrapper over DesignBuilder for a single panel row. Throws
// std::logic_error when `schema` is not the schema of `spec` on `stats`.
DesignRow build_design_row(const PanelRow& row, const PanelStats& stats, const EstimatorSpec& spec,
                           const ColumnSchema& schema);

struct CrossSection {
  std::vector<DesignRow> rows;  // one per retained unit, ascending unit index
  std::size_t excluded_units = 0;
};

// One row per unit with the post-period mean as outcome. Units without
// post-period rows (and, for CUPED, without pre-period rows) are excluded
// and counted.
CrossSection build_cross_section(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec,
                                 const ScanOptions& options = {});

}  // namespace panelreg
