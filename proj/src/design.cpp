#include "panelreg/design.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "panelreg/error.hpp"
#include "panelreg/numeric.hpp"

namespace panelreg {

namespace {

constexpr std::size_t kMaxRowClasses = std::size_t{1} << 24;

std::string upper_snake(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == '-' || c == ' ') {
      out += '_';
    } else {
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

std::optional<std::int32_t> parse_int(std::string_view s) {
  std::int32_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string time_label(std::int32_t p) { return "time_" + std::to_string(p); }
std::string cohort_label(std::int32_t c) { return "cohort_" + std::to_string(c); }

// Largest observed period strictly before `t`, if any.
std::optional<std::int32_t> period_before(const std::vector<std::int32_t>& periods, std::int32_t t) {
  const auto it = std::lower_bound(periods.begin(), periods.end(), t);
  if (it == periods.begin()) return std::nullopt;
  return *std::prev(it);
}

}  // namespace

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kDim: return "DIM";
    case EstimatorKind::kCuped: return "CUPED";
    case EstimatorKind::kTwmStatic: return "TWM_STATIC";
    case EstimatorKind::kDynDim: return "DYN_DIM";
    case EstimatorKind::kTwmEvent: return "TWM_EVENT";
    case EstimatorKind::kTwmCohort: return "TWM_COHORT";
  }
  return "UNKNOWN";
}

EstimatorKind parse_estimator_kind(std::string_view name) {
  const std::string key = upper_snake(name);
  for (auto kind : {EstimatorKind::kDim, EstimatorKind::kCuped, EstimatorKind::kTwmStatic, EstimatorKind::kDynDim,
                    EstimatorKind::kTwmEvent, EstimatorKind::kTwmCohort}) {
    if (key == to_string(kind)) return kind;
  }
  throw ConfigError("unknown estimator '" + std::string(name) +
                    "' (expected one of DIM, CUPED, TWM_STATIC, DYN_DIM, TWM_EVENT, TWM_COHORT)");
}

bool is_cross_sectional(EstimatorKind kind) { return kind == EstimatorKind::kDim || kind == EstimatorKind::kCuped; }

EstimatorSpec resolve_spec(const EstimatorSpec& spec, const PanelStats& stats) {
  EstimatorSpec r = spec;
  if (stats.n_periods() < 2) throw DomainError("panel has fewer than two periods");
  const auto cohorts = stats.treated_cohorts();
  if (r.post_start == 0) {
    if (cohorts.empty()) throw ConfigError("post_start must be given when no unit is ever treated");
    r.post_start = cohorts.front();
  }
  if (!(stats.periods.front() < r.post_start && r.post_start <= stats.periods.back())) {
    throw ConfigError("post_start " + std::to_string(r.post_start) + " must lie in (" +
                      std::to_string(stats.periods.front()) + ", " + std::to_string(stats.periods.back()) + "]");
  }
  if (r.cuped_bins && *r.cuped_bins == 0) throw ConfigError("cuped_bins must be positive");
  if (r.kind == EstimatorKind::kTwmEvent) {
    if (cohorts.size() > 1) {
      throw DomainError("TWM_EVENT requires one-shot adoption but the panel has " + std::to_string(cohorts.size()) +
                        " adoption cohorts; use TWM_COHORT");
    }
    if (!r.reference_period) {
      r.reference_period = period_before(stats.periods, r.post_start);
    } else if (!stats.period_index(*r.reference_period)) {
      throw ConfigError("reference_period " + std::to_string(*r.reference_period) + " is not an observed period");
    }
  } else {
    r.reference_period.reset();
  }
  if (r.kind != EstimatorKind::kCuped) r.cuped_bins.reset();
  return r;
}

ColumnInfo parse_column_label(std::string_view label) {
  ColumnInfo info;
  if (label == "intercept") {
    info.role = ColumnRole::kIntercept;
  } else if (label == "W") {
    info.role = ColumnRole::kTreatment;
  } else if (label == "Wbar_i" || label == "Wbar_t" || label == "Ybar_pre") {
    info.role = ColumnRole::kMean;
  } else if (label == "D") {
    info.role = ColumnRole::kGroup;
  } else if (label.starts_with("event_")) {
    if (auto v = parse_int(label.substr(6))) {
      info.role = ColumnRole::kEvent;
      info.event_time = *v;
    }
  } else if (label.starts_with("time_")) {
    if (auto v = parse_int(label.substr(5))) {
      info.role = ColumnRole::kTime;
      info.period = *v;
    }
  } else {
    const auto colon = label.find(':');
    const auto head = label.substr(0, colon);
    if (colon != std::string_view::npos && label.substr(colon + 1).starts_with("time_")) {
      auto p = parse_int(label.substr(colon + 6));
      if (p && head == "D") {
        info.role = ColumnRole::kInteraction;
        info.period = *p;
      } else if (p && head.starts_with("cohort_")) {
        if (auto c = parse_int(head.substr(7))) {
          info.role = ColumnRole::kInteraction;
          info.cohort = *c;
          info.period = *p;
        }
      }
    } else if (colon == std::string_view::npos && head.starts_with("cohort_")) {
      if (auto c = parse_int(head.substr(7))) {
        info.role = ColumnRole::kCohort;
        info.cohort = *c;
      }
    }
  }
  return info;
}

std::optional<std::size_t> ColumnSchema::index_of(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

std::int32_t assign_cohort(std::span<const std::uint8_t> treatment_path) {
  std::int32_t first = kNever;
  for (std::size_t t = 0; t < treatment_path.size(); ++t) {
    if (treatment_path[t] > 1) throw DomainError("treatment values must be 0 or 1");
    if (treatment_path[t] == 1 && first == kNever) first = static_cast<std::int32_t>(t + 1);
    if (treatment_path[t] == 0 && first != kNever) {
      throw DomainError("treatment path is not absorbing: untreated at position " + std::to_string(t + 1) +
                        " after adoption at " + std::to_string(first));
    }
  }
  return first;
}

DesignBuilder::DesignBuilder(const EstimatorSpec& spec, const PanelStats& stats)
    : spec_(resolve_spec(spec, stats)), stats_(&stats) {
  treated_cohorts_ = stats.treated_cohorts();
  unit_cohort_slot_.resize(stats.n_units());
  for (std::size_t u = 0; u < stats.n_units(); ++u) {
    const auto c = stats.cohort[u];
    unit_cohort_slot_[u] =
        c == kNever ? 0
                    : static_cast<std::int32_t>(std::lower_bound(treated_cohorts_.begin(), treated_cohorts_.end(), c) -
                                                treated_cohorts_.begin()) + 1;
  }
  build_schema();

  if (!is_cross_sectional(spec_.kind)) {
    std::map<std::tuple<std::int32_t, std::uint32_t, std::uint32_t>, std::uint32_t> profiles;
    unit_profile_.resize(stats.n_units());
    for (std::size_t u = 0; u < stats.n_units(); ++u) {
      auto key = spec_.kind == EstimatorKind::kTwmStatic
                     ? std::make_tuple(unit_cohort_slot_[u], stats.unit_treated[u], stats.unit_rows[u])
                     : std::make_tuple(unit_cohort_slot_[u], 0u, 0u);
      unit_profile_[u] = profiles.emplace(key, static_cast<std::uint32_t>(profiles.size())).first->second;
    }
    const std::size_t classes = profiles.size() * stats.n_periods() * 2;
    class_count_ = classes <= kMaxRowClasses ? classes : 0;
  }
}

void DesignBuilder::build_schema() {
  const auto& periods = stats_->periods;
  const std::size_t n_periods = periods.size();
  schema_.kind = spec_.kind;
  schema_.post_start = spec_.post_start;
  auto& labels = schema_.labels;
  labels = {"intercept"};
  time_col_.assign(n_periods, -1);

  switch (spec_.kind) {
    case EstimatorKind::kDim:
      labels.push_back("W");
      break;
    case EstimatorKind::kCuped:
      labels.insert(labels.end(), {"W", "Ybar_pre"});
      break;
    case EstimatorKind::kTwmStatic:
      labels.insert(labels.end(), {"W", "Wbar_i", "Wbar_t"});
      break;
    case EstimatorKind::kDynDim: {
      bool first_post = true;
      for (std::size_t p = 0; p < n_periods; ++p) {
        if (periods[p] < spec_.post_start) continue;
        if (first_post) {
          first_post = false;
          continue;
        }
        time_col_[p] = static_cast<std::int32_t>(labels.size());
        labels.push_back(time_label(periods[p]));
      }
      std::vector<std::int32_t> events;
      for (auto c : treated_cohorts_) {
        for (auto t : periods) {
          if (t >= spec_.post_start && t >= c) events.push_back(t - c + 1);
        }
      }
      std::sort(events.begin(), events.end());
      events.erase(std::unique(events.begin(), events.end()), events.end());
      if (!events.empty()) {
        event_base_ = events.front();
        event_col_.assign(static_cast<std::size_t>(events.back() - event_base_ + 1), -1);
        for (auto h : events) {
          event_col_[h - event_base_] = static_cast<std::int32_t>(labels.size());
          labels.push_back("event_" + std::to_string(h));
        }
      }
      break;
    }
    case EstimatorKind::kTwmEvent:
    case EstimatorKind::kTwmCohort: {
      const bool event = spec_.kind == EstimatorKind::kTwmEvent;
      if (event) {
        labels.push_back("D");
      } else {
        for (auto c : treated_cohorts_) labels.push_back(cohort_label(c));
      }
      for (std::size_t p = 1; p < n_periods; ++p) {
        time_col_[p] = static_cast<std::int32_t>(labels.size());
        labels.push_back(time_label(periods[p]));
      }
      const std::size_t groups = event ? 1 : treated_cohorts_.size();
      interaction_col_.assign(groups * n_periods, -1);
      for (std::size_t g = 0; g < groups; ++g) {
        // Adoption period of the group; the omitted interaction is the last
        // pre-adoption period.
        const std::int32_t adopt = event ? spec_.post_start : treated_cohorts_[g];
        const std::optional<std::int32_t> reference =
            event ? spec_.reference_period : period_before(periods, treated_cohorts_[g]);
        const std::string prefix = event ? "D" : cohort_label(treated_cohorts_[g]);
        for (std::size_t p = 0; p < n_periods; ++p) {
          if (reference && periods[p] == *reference) continue;
          if (!spec_.pre_treat_interactions && periods[p] < adopt) continue;
          interaction_col_[g * n_periods + p] = static_cast<std::int32_t>(labels.size());
          labels.push_back(prefix + ":" + time_label(periods[p]));
        }
      }
      break;
    }
  }
}

bool DesignBuilder::panel_key(std::uint32_t unit, std::uint32_t period, std::uint8_t treatment,
                              std::span<double> key) const {
  std::fill(key.begin(), key.end(), 0.0);
  key[0] = 1.0;
  const std::int32_t slot = unit_cohort_slot_[unit];
  switch (spec_.kind) {
    case EstimatorKind::kTwmStatic:
      key[1] = treatment;
      key[2] = stats_->unit_treat_mean(unit);
      key[3] = stats_->time_treat_mean(period);
      return true;
    case EstimatorKind::kTwmEvent:
    case EstimatorKind::kTwmCohort: {
      if (time_col_[period] >= 0) key[time_col_[period]] = 1.0;
      if (slot > 0) {
        const bool event = spec_.kind == EstimatorKind::kTwmEvent;
        key[event ? 1 : slot] = 1.0;
        const std::size_t g = event ? 0 : static_cast<std::size_t>(slot - 1);
        const auto col = interaction_col_[g * stats_->n_periods() + period];
        if (col >= 0) key[col] = 1.0;
      }
      return true;
    }
    case EstimatorKind::kDynDim: {
      if (!in_post(period)) return false;
      if (time_col_[period] >= 0) key[time_col_[period]] = 1.0;
      if (treatment && slot > 0) {
        const std::int32_t h = stats_->periods[period] - stats_->cohort[unit] + 1;
        key[event_col_.at(static_cast<std::size_t>(h - event_base_))] = 1.0;
      }
      return true;
    }
    case EstimatorKind::kDim:
    case EstimatorKind::kCuped:
      break;
  }
  throw ConfigError(to_string(spec_.kind) + " is cross-sectional; rows are built per unit");
}

std::size_t DesignBuilder::row_class(std::uint32_t unit, std::uint32_t period, std::uint8_t treatment) const {
  if (class_count_ == 0) return kNoClass;
  return (static_cast<std::size_t>(unit_profile_[unit]) * stats_->n_periods() + period) * 2 + (treatment ? 1 : 0);
}

void DesignBuilder::cross_section_key(bool treated, double pre_mean, std::span<double> key) const {
  if (!is_cross_sectional(spec_.kind)) throw ConfigError(to_string(spec_.kind) + " is not cross-sectional");
  key[0] = 1.0;
  key[1] = treated ? 1.0 : 0.0;
  if (spec_.kind == EstimatorKind::kCuped) key[2] = pre_mean;
}

DesignRow build_design_row(const PanelRow& row, const PanelStats& stats, const EstimatorSpec& spec,
                           const ColumnSchema& schema) {
  const DesignBuilder builder(spec, stats);
  if (!(builder.schema() == schema)) throw std::logic_error("design schema does not match the estimator spec");
  const auto unit = stats.unit_index(row.unit_id);
  const auto period = stats.period_index(row.time_id);
  if (!unit || !period) throw ConsistencyError("row references a unit or period absent from the panel statistics");
  DesignRow out;
  out.key.resize(builder.width());
  out.outcome = row.outcome;
  out.cluster_id = *unit;
  if (!builder.panel_key(*unit, *period, row.treatment, out.key)) out.key.clear();
  return out;
}

CrossSection build_cross_section(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec,
                                 const ScanOptions& options) {
  const DesignBuilder builder(spec, stats);
  if (!is_cross_sectional(builder.spec().kind)) {
    throw ConfigError("build_cross_section needs DIM or CUPED, got " + to_string(builder.spec().kind));
  }
  const std::int32_t post_start = builder.spec().post_start;
  const std::size_t n = stats.n_units();

  struct UnitSums {
    std::vector<CompensatedSum> post, pre;
    std::vector<std::uint32_t> post_n, pre_n;
  };
  const std::size_t parts = std::max<std::size_t>(1, options.threads);
  std::vector<UnitSums> partial(parts);
  parallel_for(parts, parts, [&](std::size_t part) {
    UnitSums& s = partial[part];
    s.post.resize(n);
    s.pre.resize(n);
    s.post_n.assign(n, 0);
    s.pre_n.assign(n, 0);
    source.scan(
        [&](std::span<const PanelRow> batch) {
          for (const auto& r : batch) {
            const auto u = stats.unit_index(r.unit_id);
            if (!u || !stats.period_index(r.time_id)) {
              throw ConsistencyError("row for unit " + std::to_string(r.unit_id) + ", period " +
                                     std::to_string(r.time_id) + " was not seen by the first pass");
            }
            if (r.time_id >= post_start) {
              s.post[*u].add(r.outcome);
              ++s.post_n[*u];
            } else {
              s.pre[*u].add(r.outcome);
              ++s.pre_n[*u];
            }
          }
        },
        part, parts);
  });
  for (std::size_t p = 1; p < parts; ++p) {
    for (std::size_t u = 0; u < n; ++u) {
      partial[0].post[u].merge(partial[p].post[u]);
      partial[0].pre[u].merge(partial[p].pre[u]);
      partial[0].post_n[u] += partial[p].post_n[u];
      partial[0].pre_n[u] += partial[p].pre_n[u];
    }
  }
  const UnitSums& s = partial[0];
  const bool cuped = builder.spec().kind == EstimatorKind::kCuped;

  CrossSection out;
  std::vector<double> pre_means;
  std::vector<std::uint32_t> kept;
  for (std::size_t u = 0; u < n; ++u) {
    if (s.post_n[u] == 0 || (cuped && s.pre_n[u] == 0)) {
      ++out.excluded_units;
      continue;
    }
    kept.push_back(static_cast<std::uint32_t>(u));
    pre_means.push_back(cuped ? s.pre[u].value() / s.pre_n[u] : 0.0);
  }

  if (cuped && builder.spec().cuped_bins && !pre_means.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(pre_means.begin(), pre_means.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const auto bins = static_cast<double>(*builder.spec().cuped_bins);
    const double width = (hi - lo) / bins;
    for (auto& m : pre_means) {
      if (width <= 0.0) {
        m = lo;
        continue;
      }
      const double idx = std::min(bins - 1.0, std::floor((m - lo) / width));
      m = lo + (idx + 0.5) * width;
    }
  }

  out.rows.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto u = kept[i];
    DesignRow row;
    row.key.resize(builder.width());
    builder.cross_section_key(stats.cohort[u] != kNever, pre_means[i], row.key);
    row.outcome = s.post[u].value() / s.post_n[u];
    row.cluster_id = u;
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace panelreg
