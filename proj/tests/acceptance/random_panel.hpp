#pragma once

// Random small panels for the equivalence checks.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "panelreg/panel.hpp"

namespace testpanel {

struct Shape {
  bool one_shot = true;
  bool binary = false;
  bool unbalanced = false;
};

inline std::vector<panelreg::PanelRow> random_panel(std::mt19937_64& rng, const Shape& shape) {
  std::uniform_int_distribution<int> n_dist(20, 200), t_dist(3, 12);
  const int n = n_dist(rng);
  const int t_max = t_dist(rng);
  std::uniform_int_distribution<int> c_dist(2, t_max);
  std::vector<int> cohorts{c_dist(rng)};
  if (!shape.one_shot) {
    const int extra = std::uniform_int_distribution<int>(1, 2)(rng);
    for (int i = 0; i < extra; ++i) cohorts.push_back(c_dist(rng));
  }
  std::normal_distribution<double> z;
  std::bernoulli_distribution never(0.4), drop(0.1);
  std::uniform_int_distribution<std::size_t> pick(0, cohorts.size() - 1);
  std::vector<double> gamma(static_cast<std::size_t>(t_max) + 1);
  for (auto& g : gamma) g = z(rng);

  std::vector<panelreg::PanelRow> rows;
  for (int i = 0; i < n; ++i) {
    // First unit never treated, second treated, so both groups exist.
    const int c = i == 0 ? 0 : i == 1 ? cohorts[0] : never(rng) ? 0 : cohorts[pick(rng)];
    const double alpha = 2.0 * z(rng);
    const double slope = 0.3 * z(rng);
    for (int t = 1; t <= t_max; ++t) {
      if (shape.unbalanced && i > 1 && drop(rng)) continue;
      panelreg::PanelRow r;
      r.unit_id = static_cast<std::uint64_t>(1000 + 7 * i);
      r.time_id = t;
      r.treatment = c != 0 && t >= c ? 1 : 0;
      const double effect = r.treatment ? 0.5 + 0.2 * (t - c) : 0.0;
      if (shape.binary) {
        r.outcome = std::bernoulli_distribution(r.treatment ? 0.6 : 0.3)(rng) ? 1.0 : 0.0;
      } else {
        r.outcome = alpha + gamma[static_cast<std::size_t>(t)] + slope * t + effect + z(rng);
      }
      rows.push_back(r);
    }
  }
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

// Same panel with every treated unit moved to the earliest adoption period.
// Treated units without a row at that period are dropped, as their observed
// adoption would come later.
inline std::vector<panelreg::PanelRow> collapse_to_one_shot(std::vector<panelreg::PanelRow> rows) {
  std::int32_t first = 0;
  std::vector<std::uint64_t> treated;
  for (const auto& r : rows) {
    if (!r.treatment) continue;
    treated.push_back(r.unit_id);
    if (first == 0 || r.time_id < first) first = r.time_id;
  }
  std::sort(treated.begin(), treated.end());
  std::vector<std::uint64_t> on_time;
  for (const auto& r : rows)
    if (r.time_id == first) on_time.push_back(r.unit_id);
  std::sort(on_time.begin(), on_time.end());
  std::vector<panelreg::PanelRow> out;
  for (auto r : rows) {
    const bool ever = std::binary_search(treated.begin(), treated.end(), r.unit_id);
    if (ever && !std::binary_search(on_time.begin(), on_time.end(), r.unit_id)) continue;
    r.treatment = ever && r.time_id >= first ? 1 : 0;
    out.push_back(r);
  }
  return out;
}

}  // namespace testpanel
