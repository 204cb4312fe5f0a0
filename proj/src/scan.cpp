#include "panelreg/scan.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <memory>
#include <string>

#include "panelreg/error.hpp"

namespace panelreg {

namespace {

constexpr std::uint32_t kUnset = 0;
constexpr std::uint32_t kOutside = std::numeric_limits<std::uint32_t>::max();
constexpr std::uint64_t kMaxDuplicateBits = std::uint64_t{1} << 33;

class SeenBits {
 public:
  explicit SeenBits(std::uint64_t bits) : words_((bits + 63) / 64) {
    cells_ = std::make_unique<std::atomic<std::uint64_t>[]>(words_);
    for (std::size_t i = 0; i < words_; ++i) cells_[i].store(0, std::memory_order_relaxed);
  }

  // True when the bit was already set.
  bool test_and_set(std::uint64_t bit) {
    const std::uint64_t mask = std::uint64_t{1} << (bit & 63);
    return (cells_[bit >> 6].fetch_or(mask, std::memory_order_relaxed) & mask) != 0;
  }

 private:
  std::size_t words_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> cells_;
};

[[noreturn]] void unseen_row(const PanelRow& r) {
  throw ConsistencyError("row for unit " + std::to_string(r.unit_id) + ", period " + std::to_string(r.time_id) +
                         " was not seen by the first pass");
}

}  // namespace

CompressedDesign scan_pass2(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec,
                            const Pass2Options& options, Pass2Report* report) {
  const DesignBuilder builder(spec, stats);
  const std::size_t parts = std::max<std::size_t>(1, options.threads);
  CompressorOptions copts{options.memory_budget_bytes / parts, options.spill_dir};
  if (options.memory_budget_bytes > 0 && copts.memory_budget_bytes == 0) copts.memory_budget_bytes = 1;

  if (is_cross_sectional(builder.spec().kind)) {
    const auto cs = build_cross_section(source, stats, spec, ScanOptions{options.threads});
    Compressor c(builder.schema(), copts);
    for (const auto& row : cs.rows) c.accumulate(row);
    if (report) {
      report->excluded_units = cs.excluded_units;
      report->spilled_runs = c.spilled_runs();
    }
    auto out = std::move(c).finish();
    out.source_fingerprint = stats.fingerprint;
    return out;
  }

  std::unique_ptr<SeenBits> seen;
  const std::uint64_t cells = static_cast<std::uint64_t>(stats.n_units()) * stats.n_periods();
  if (options.check_duplicates && cells <= kMaxDuplicateBits) seen = std::make_unique<SeenBits>(cells);

  std::vector<Compressor> partials;
  partials.reserve(parts);
  for (std::size_t p = 0; p < parts; ++p) partials.emplace_back(builder.schema(), copts);
  std::vector<std::uint64_t> rows_seen(parts, 0);

  parallel_for(parts, parts, [&](std::size_t part) {
    Compressor& c = partials[part];
    std::vector<double> key(builder.width());
    // row class -> stratum slot + 1, valid for one compressor generation
    std::vector<std::uint32_t> slot_of(builder.class_count(), kUnset);
    std::uint64_t generation = c.generation();
    std::uint64_t count = 0;
    source.scan(
        [&](std::span<const PanelRow> batch) {
          for (const auto& r : batch) {
            const auto unit = stats.unit_index(r.unit_id);
            const auto period = stats.period_index(r.time_id);
            if (!unit || !period) unseen_row(r);
            if (seen && seen->test_and_set(static_cast<std::uint64_t>(*unit) * stats.n_periods() + *period)) {
              throw ConsistencyError("duplicate row for unit " + std::to_string(r.unit_id) + ", period " +
                                     std::to_string(r.time_id));
            }
            ++count;
            const std::size_t cls = builder.row_class(*unit, *period, r.treatment);
            if (cls == DesignBuilder::kNoClass) {
              if (builder.panel_key(*unit, *period, r.treatment, key)) c.accumulate(key, r.outcome);
              continue;
            }
            if (c.generation() != generation) {
              std::fill(slot_of.begin(), slot_of.end(), kUnset);
              generation = c.generation();
            }
            std::uint32_t s = slot_of[cls];
            if (s == kUnset) {
              if (builder.panel_key(*unit, *period, r.treatment, key)) {
                const std::size_t slot = c.locate(key);
                if (c.generation() != generation) {
                  std::fill(slot_of.begin(), slot_of.end(), kUnset);
                  generation = c.generation();
                }
                s = static_cast<std::uint32_t>(slot + 1);
              } else {
                s = kOutside;
              }
              slot_of[cls] = s;
            }
            if (s != kOutside) c.add_at(s - 1, r.outcome);
          }
        },
        part, parts);
    rows_seen[part] = count;
  });

  std::uint64_t total = 0;
  for (auto n : rows_seen) total += n;
  if (total != stats.total_rows) {
    throw ConsistencyError("second pass read " + std::to_string(total) + " rows but the first pass read " +
                           std::to_string(stats.total_rows));
  }
  for (std::size_t p = 1; p < parts; ++p) partials[0].merge(std::move(partials[p]));
  if (report) report->spilled_runs = partials[0].spilled_runs();
  auto out = std::move(partials[0]).finish();
  out.source_fingerprint = stats.fingerprint;
  return out;
}

}  // namespace panelreg
