#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <map>
#include <thread>

#include "panelreg/error.hpp"
#include "panelreg/numeric.hpp"
#include "panelreg/panel.hpp"

namespace panelreg {

namespace {

struct UnitAcc {
  std::uint32_t rows = 0;
  std::uint32_t treated = 0;
  std::int32_t last_untreated = std::numeric_limits<std::int32_t>::min();
  std::int32_t first_treated = std::numeric_limits<std::int32_t>::max();
};

struct TimeAcc {
  std::uint64_t rows = 0;
  std::uint64_t treated = 0;
};

struct Pass1Partial {
  std::unordered_map<std::uint64_t, UnitAcc> units;
  std::map<std::int32_t, TimeAcc> times;
  std::uint64_t rows = 0;
  std::uint64_t fingerprint = 0;

  void add(std::span<const PanelRow> batch) {
    std::uint64_t cached_id = 0;
    UnitAcc* cached = nullptr;
    std::int32_t cached_t = std::numeric_limits<std::int32_t>::min();
    TimeAcc* cached_time = nullptr;
    for (const auto& r : batch) {
      if (cached == nullptr || r.unit_id != cached_id) {
        cached = &units[r.unit_id];
        cached_id = r.unit_id;
      }
      if (cached_time == nullptr || r.time_id != cached_t) {
        cached_time = &times[r.time_id];
        cached_t = r.time_id;
      }
      UnitAcc& u = *cached;
      ++u.rows;
      ++cached_time->rows;
      if (r.treatment) {
        ++u.treated;
        ++cached_time->treated;
        u.first_treated = std::min(u.first_treated, r.time_id);
      } else {
        u.last_untreated = std::max(u.last_untreated, r.time_id);
      }
      std::uint64_t h = mix_hash(r.unit_id, static_cast<std::uint64_t>(static_cast<std::uint32_t>(r.time_id)));
      h = mix_hash(h, double_bits(r.outcome));
      fingerprint += mix_hash(h, r.treatment);
    }
    rows += batch.size();
  }

  void merge(Pass1Partial&& other) {
    for (const auto& [id, acc] : other.units) {
      UnitAcc& u = units[id];
      u.rows += acc.rows;
      u.treated += acc.treated;
      u.last_untreated = std::max(u.last_untreated, acc.last_untreated);
      u.first_treated = std::min(u.first_treated, acc.first_treated);
    }
    for (const auto& [t, acc] : other.times) {
      TimeAcc& a = times[t];
      a.rows += acc.rows;
      a.treated += acc.treated;
    }
    rows += other.rows;
    fingerprint += other.fingerprint;
  }
};

}  // namespace

void parallel_for(std::size_t parts, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, parts));
  if (threads == 1) {
    for (std::size_t p = 0; p < parts; ++p) fn(p);
    return;
  }
  std::vector<std::exception_ptr> errors(parts);
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t p = next++; p < parts; p = next++) {
          try {
            fn(p);
          } catch (...) {
            errors[p] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PanelStats scan_pass1(const PanelSource& source, const ScanOptions& options) {
  const std::size_t parts = std::max<std::size_t>(1, options.threads);
  std::vector<Pass1Partial> partials(parts);
  parallel_for(parts, parts, [&](std::size_t p) {
    source.scan([&](std::span<const PanelRow> batch) { partials[p].add(batch); }, p, parts);
  });
  for (std::size_t p = 1; p < parts; ++p) partials[0].merge(std::move(partials[p]));
  Pass1Partial& all = partials[0];

  PanelStats stats;
  stats.unit_ids.reserve(all.units.size());
  for (const auto& [id, acc] : all.units) stats.unit_ids.push_back(id);
  std::sort(stats.unit_ids.begin(), stats.unit_ids.end());

  const std::size_t n = stats.unit_ids.size();
  stats.unit_rows.resize(n);
  stats.unit_treated.resize(n);
  stats.cohort.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    const UnitAcc& acc = all.units.at(stats.unit_ids[u]);
    if (acc.treated > 0 && acc.last_untreated > acc.first_treated) {
      throw DomainError("treatment is not absorbing for unit " + std::to_string(stats.unit_ids[u]) +
                        ": treated at period " + std::to_string(acc.first_treated) + " but untreated at period " +
                        std::to_string(acc.last_untreated));
    }
    stats.unit_rows[u] = acc.rows;
    stats.unit_treated[u] = acc.treated;
    stats.cohort[u] = acc.treated > 0 ? acc.first_treated : kNever;
  }
  for (const auto& [t, acc] : all.times) {
    if (t == kNever) throw DomainError("time id 0 is reserved for never-treated units; periods must be nonzero");
    stats.periods.push_back(t);
    stats.time_rows.push_back(acc.rows);
    stats.time_treated.push_back(acc.treated);
    stats.treated_rows += acc.treated;
  }
  stats.total_rows = all.rows;
  stats.fingerprint = all.fingerprint;
  stats.build_index();
  return stats;
}

void PanelStats::build_index() {
  unit_lookup_.clear();
  dense_units_ = !unit_ids.empty() && unit_ids.back() - unit_ids.front() + 1 == unit_ids.size();
  unit_base_ = unit_ids.empty() ? 0 : unit_ids.front();
  if (!dense_units_) {
    unit_lookup_.reserve(unit_ids.size());
    for (std::size_t u = 0; u < unit_ids.size(); ++u) unit_lookup_.emplace(unit_ids[u], static_cast<std::uint32_t>(u));
  }
  period_table_.clear();
  period_base_ = periods.empty() ? 0 : periods.front();
  if (!periods.empty()) {
    const auto range = static_cast<std::int64_t>(periods.back()) - periods.front() + 1;
    if (range <= (1 << 22)) {
      period_table_.assign(static_cast<std::size_t>(range), -1);
      for (std::size_t p = 0; p < periods.size(); ++p) period_table_[periods[p] - period_base_] = static_cast<std::int32_t>(p);
    }
  }
}

std::optional<std::uint32_t> PanelStats::unit_index(std::uint64_t unit_id) const {
  if (dense_units_) {
    if (unit_id < unit_base_ || unit_id - unit_base_ >= unit_ids.size()) return std::nullopt;
    return static_cast<std::uint32_t>(unit_id - unit_base_);
  }
  const auto it = unit_lookup_.find(unit_id);
  if (it == unit_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> PanelStats::period_index(std::int32_t time_id) const {
  if (!period_table_.empty()) {
    const auto off = static_cast<std::int64_t>(time_id) - period_base_;
    if (off < 0 || off >= static_cast<std::int64_t>(period_table_.size()) || period_table_[off] < 0) return std::nullopt;
    return static_cast<std::uint32_t>(period_table_[off]);
  }
  const auto it = std::lower_bound(periods.begin(), periods.end(), time_id);
  if (it == periods.end() || *it != time_id) return std::nullopt;
  return static_cast<std::uint32_t>(it - periods.begin());
}

std::vector<std::int32_t> PanelStats::treated_cohorts() const {
  std::vector<std::int32_t> out;
  for (auto c : cohort) {
    if (c != kNever) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t PanelStats::never_treated_units() const {
  return static_cast<std::size_t>(std::count(cohort.begin(), cohort.end(), kNever));
}

}  // namespace panelreg
