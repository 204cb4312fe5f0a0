#include "panelreg/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "panelreg/error.hpp"
#include "panelreg/numeric.hpp"

namespace panelreg {

namespace {

struct RowRecord {
  std::uint32_t unit;
  std::uint32_t period;
  std::uint8_t treatment;
  double y;
};

struct CellAcc {
  std::int64_t n = 0;
  CompensatedSum y;
  CompensatedSum yy;
};

bool static_kind(const ShardSet& s) { return s.spec.kind == EstimatorKind::kTwmStatic; }

// Folds per-cell totals into a design, recomputing Wbar_t from the weighted
// period counts for TWM_STATIC.
CompressedDesign fold_cells(const ShardSet& shards, const std::vector<CellAcc>& cells,
                            const std::vector<std::vector<double>>& keys, const std::vector<std::uint32_t>& periods,
                            const std::vector<std::int64_t>& period_rows, const std::vector<std::int64_t>& period_treated) {
  Compressor c(shards.schema);
  std::vector<double> key;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].n == 0) continue;
    key = keys[i];
    if (static_kind(shards)) {
      const auto p = periods[i];
      key[3] = static_cast<double>(period_treated[p]) / static_cast<double>(period_rows[p]);
    }
    c.accumulate_stats(key, cells[i].n, cells[i].y.value(), cells[i].yy.value());
  }
  return std::move(c).finish();
}

CompressedDesign rescan_design(const ShardSet& shards, std::span<const std::uint32_t> counts) {
  const PanelStats& stats = *shards.stats;
  const DesignBuilder builder(shards.spec, stats);
  const std::size_t classes = builder.class_count();
  std::vector<CellAcc> cells(classes);
  std::vector<std::vector<double>> keys(classes);
  std::vector<std::uint32_t> periods(classes, 0);
  std::vector<char> state(classes, 0);  // 0 unseen, 1 inside, 2 outside the sample
  std::vector<std::int64_t> period_rows(stats.n_periods(), 0);
  std::vector<std::int64_t> period_treated(stats.n_periods(), 0);
  std::vector<double> key(builder.width());
  shards.source->scan([&](std::span<const PanelRow> batch) {
    for (const auto& r : batch) {
      const auto u = stats.unit_index(r.unit_id);
      const auto p = stats.period_index(r.time_id);
      if (!u || !p) throw ConsistencyError("source changed since the first pass");
      const std::uint32_t m = counts[*u];
      if (m == 0) continue;
      const std::size_t cls = builder.row_class(*u, *p, r.treatment);
      if (state[cls] == 0) {
        state[cls] = builder.panel_key(*u, *p, r.treatment, key) ? 1 : 2;
        keys[cls] = key;
        periods[cls] = *p;
      }
      if (state[cls] == 2) continue;
      CellAcc& a = cells[cls];
      a.n += m;
      a.y.add(m * r.outcome);
      a.yy.add(m * (r.outcome * r.outcome));
      period_rows[*p] += m;
      period_treated[*p] += r.treatment ? m : 0;
    }
  });
  return fold_cells(shards, cells, keys, periods, period_rows, period_treated);
}

double quantile7(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

ShardSet shard_units(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec,
                     const ShardOptions& options) {
  const DesignBuilder builder(spec, stats);
  ShardSet out;
  out.spec = builder.spec();
  out.schema = builder.schema();
  out.source = &source;
  out.stats = &stats;

  if (is_cross_sectional(out.spec.kind)) {
    const auto cs = build_cross_section(source, stats, spec, ScanOptions{options.threads});
    std::map<std::vector<std::uint64_t>, std::uint32_t> cell_of;
    for (const auto& row : cs.rows) {
      std::vector<std::uint64_t> bits(row.key.size());
      std::transform(row.key.begin(), row.key.end(), bits.begin(), double_bits);
      auto [it, fresh] = cell_of.emplace(bits, static_cast<std::uint32_t>(out.cell_keys.size()));
      if (fresh) {
        out.cell_keys.push_back(row.key);
        out.cell_period.push_back(ShardSet::kNoPeriod);
      }
      UnitShard shard;
      shard.unit = row.cluster_id;
      shard.unit_treat_mean = stats.unit_treat_mean(row.cluster_id);
      shard.cohort = stats.cohort[row.cluster_id];
      shard.entries.push_back({it->second, 1, row.outcome, row.outcome * row.outcome});
      out.units.push_back(std::move(shard));
    }
    out.n_units = out.units.size();
    return out;
  }

  if (builder.class_count() == 0) {
    throw InferenceError("panel has too many distinct unit profiles to shard for the bootstrap");
  }
  const std::size_t estimate = stats.total_rows * (sizeof(ShardEntry) + sizeof(RowRecord)) +
                               stats.n_units() * sizeof(UnitShard);
  if (options.memory_budget_bytes > 0 && estimate > options.memory_budget_bytes) {
    std::cerr << "warning: unit shards need about " << estimate << " bytes, over the budget of "
              << options.memory_budget_bytes << "; bootstrap replicates will rescan the source\n";
    out.rescan = true;
    out.n_units = stats.n_units();
    return out;
  }

  const std::size_t parts = std::max<std::size_t>(1, options.threads);
  std::vector<std::vector<RowRecord>> partial(parts);
  parallel_for(parts, parts, [&](std::size_t part) {
    auto& recs = partial[part];
    source.scan(
        [&](std::span<const PanelRow> batch) {
          for (const auto& r : batch) {
            const auto u = stats.unit_index(r.unit_id);
            const auto p = stats.period_index(r.time_id);
            if (!u || !p) {
              throw ConsistencyError("row for unit " + std::to_string(r.unit_id) + ", period " +
                                     std::to_string(r.time_id) + " was not seen by the first pass");
            }
            recs.push_back({*u, *p, r.treatment, r.outcome});
          }
        },
        part, parts);
  });

  std::vector<std::vector<RowRecord>> by_unit(stats.n_units());
  for (std::size_t u = 0; u < stats.n_units(); ++u) by_unit[u].reserve(stats.unit_rows[u]);
  for (auto& recs : partial) {
    for (const auto& r : recs) by_unit[r.unit].push_back(r);
    recs.clear();
    recs.shrink_to_fit();
  }

  std::vector<std::int64_t> cell_of(builder.class_count(), -1);  // -2 = outside the sample
  std::vector<double> key(builder.width());
  for (std::size_t u = 0; u < stats.n_units(); ++u) {
    auto& recs = by_unit[u];
    std::sort(recs.begin(), recs.end(), [](const RowRecord& a, const RowRecord& b) {
      return std::tie(a.period, a.treatment) < std::tie(b.period, b.treatment) ||
             (a.period == b.period && a.treatment == b.treatment && total_order_bits(a.y) < total_order_bits(b.y));
    });
    UnitShard shard;
    shard.unit = static_cast<std::uint32_t>(u);
    shard.unit_treat_mean = stats.unit_treat_mean(u);
    shard.cohort = stats.cohort[u];
    for (const auto& r : recs) {
      const std::size_t cls = builder.row_class(r.unit, r.period, r.treatment);
      if (cell_of[cls] == -1) {
        if (builder.panel_key(r.unit, r.period, r.treatment, key)) {
          cell_of[cls] = static_cast<std::int64_t>(out.cell_keys.size());
          out.cell_keys.push_back(key);
          out.cell_period.push_back(r.period);
        } else {
          cell_of[cls] = -2;
        }
      }
      if (cell_of[cls] < 0) continue;
      const auto cell = static_cast<std::uint32_t>(cell_of[cls]);
      if (!shard.entries.empty() && shard.entries.back().cell == cell) {
        auto& e = shard.entries.back();
        ++e.n;
        e.sum_y += r.y;
        e.sum_y_sq += r.y * r.y;
      } else {
        shard.entries.push_back({cell, 1, r.y, r.y * r.y});
      }
    }
    recs.clear();
    recs.shrink_to_fit();
    if (!shard.entries.empty()) out.units.push_back(std::move(shard));
  }
  out.n_units = out.units.size();
  return out;
}

CompressedDesign resample_design(const ShardSet& shards, std::span<const std::uint32_t> counts) {
  if (counts.size() != shards.n_units) throw std::invalid_argument("draw counts do not match the unit count");
  if (shards.rescan) return rescan_design(shards, counts);
  const std::size_t n_cells = shards.cell_keys.size();
  std::vector<CellAcc> cells(n_cells);
  const std::size_t n_periods = shards.stats ? shards.stats->n_periods() : 0;
  std::vector<std::int64_t> period_rows(static_kind(shards) ? n_periods : 0, 0);
  std::vector<std::int64_t> period_treated(period_rows.size(), 0);
  for (std::size_t i = 0; i < shards.units.size(); ++i) {
    const std::uint32_t m = counts[i];
    if (m == 0) continue;
    for (const auto& e : shards.units[i].entries) {
      CellAcc& a = cells[e.cell];
      a.n += m * e.n;
      a.y.add(m * e.sum_y);
      a.yy.add(m * e.sum_y_sq);
      if (!period_rows.empty()) {
        const auto p = shards.cell_period[e.cell];
        period_rows[p] += m * e.n;
        if (shards.cell_keys[e.cell][1] != 0.0) period_treated[p] += m * e.n;
      }
    }
  }
  return fold_cells(shards, cells, shards.cell_keys, shards.cell_period, period_rows, period_treated);
}

CompressedDesign merge_shards(const ShardSet& shards) {
  const std::vector<std::uint32_t> ones(shards.n_units, 1);
  auto out = resample_design(shards, ones);
  if (shards.stats) out.source_fingerprint = shards.stats->fingerprint;
  return out;
}

std::vector<std::uint32_t> replicate_counts(std::uint64_t seed, std::size_t r, std::size_t n_units) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(static_cast<std::uint64_t>(r) >> 32)};
  std::mt19937_64 gen(seq);
  std::uniform_int_distribution<std::size_t> pick(0, n_units - 1);
  std::vector<std::uint32_t> counts(n_units, 0);
  for (std::size_t i = 0; i < n_units; ++i) ++counts[pick(gen)];
  return counts;
}

BootResult cluster_bootstrap(const ShardSet& shards, const BootOptions& options) {
  if (shards.n_units < 2) {
    throw InferenceError("cluster bootstrap needs at least two units, got " + std::to_string(shards.n_units));
  }
  if (!(options.ci_level > 0.0 && options.ci_level < 1.0)) throw ConfigError("ci_level must lie in (0, 1)");
  const FitResult full = fit_wls(merge_shards(shards), FitOptions{.compute_vcov = false});

  BootResult out;
  out.labels = full.labels;
  out.point = full.beta;
  out.b = options.b;
  out.seed = options.seed;
  out.ci_level = options.ci_level;
  out.normal_ci = options.normal_ci;
  const auto k = static_cast<Eigen::Index>(full.beta.size());
  if (options.b == 0) return out;

  out.replicates.resize(static_cast<Eigen::Index>(options.b), k);
  std::vector<char> failed(options.b, 0);
  parallel_for(options.b, options.threads, [&](std::size_t r) {
    const auto counts = replicate_counts(options.seed, r, shards.n_units);
    const auto row = static_cast<Eigen::Index>(r);
    try {
      const auto design = resample_design(shards, counts);
      const auto fit = fit_wls(design, FitOptions{.compute_vcov = false});
      if (fit.kept != full.kept) {
        failed[r] = 1;
      } else {
        out.replicates.row(row) = fit.beta.transpose();
      }
    } catch (const EstimationError&) {
      failed[r] = 1;
    } catch (const NumericalError&) {
      failed[r] = 1;
    }
    if (failed[r]) out.replicates.row(row).setConstant(std::numeric_limits<double>::quiet_NaN());
  });
  out.n_failed = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  if (static_cast<double>(out.n_failed) > options.max_failed_share * static_cast<double>(options.b)) {
    throw InferenceError(std::to_string(out.n_failed) + " of " + std::to_string(options.b) +
                         " bootstrap replicates were rank deficient");
  }

  const std::size_t valid = options.b - out.n_failed;
  out.se.resize(k);
  out.ci_lower.resize(k);
  out.ci_upper.resize(k);
  const double alpha = 1.0 - options.ci_level;
  const double z = boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0);
  std::vector<double> col;
  for (Eigen::Index j = 0; j < k; ++j) {
    col.clear();
    for (std::size_t r = 0; r < options.b; ++r) {
      if (!failed[r]) col.push_back(out.replicates(static_cast<Eigen::Index>(r), j));
    }
    CompensatedSum s;
    for (double v : col) s.add(v);
    const double mean = s.value() / static_cast<double>(valid);
    CompensatedSum ss;
    for (double v : col) ss.add((v - mean) * (v - mean));
    out.se[j] = valid > 1 ? std::sqrt(ss.value() / static_cast<double>(valid - 1)) : 0.0;
    if (options.normal_ci) {
      out.ci_lower[j] = out.point[j] - z * out.se[j];
      out.ci_upper[j] = out.point[j] + z * out.se[j];
    } else {
      out.ci_lower[j] = quantile7(col, alpha / 2.0);
      out.ci_upper[j] = quantile7(col, 1.0 - alpha / 2.0);
    }
  }
  return out;
}

}  // namespace panelreg
