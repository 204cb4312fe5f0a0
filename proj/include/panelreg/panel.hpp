#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace panelreg {

// One (unit, period) observation of the raw panel.
struct PanelRow {
  std::uint64_t unit_id = 0;
  std::int32_t time_id = 0;
  double outcome = 0.0;
  std::uint8_t treatment = 0;
};

enum class SourceFormat { kCsv, kPackedBinary, kMemory };

std::string to_string(SourceFormat format);
SourceFormat parse_source_format(std::string_view name);

struct ColumnMap {
  std::string unit = "unit_id";
  std::string time = "time_id";
  std::string outcome = "Y_it";
  std::string treatment = "W_it";
};

struct SourceDescriptor {
  std::string uri;
  SourceFormat format = SourceFormat::kCsv;
  ColumnMap columns;
  char delimiter = ',';
};

using RowBatchFn = std::function<void(std::span<const PanelRow>)>;

// A re-scannable stream of panel rows. Partition `part` of `parts` is a fixed,
// disjoint slice of the rows; the union over parts is the whole source and
// every scan of the same slice yields the same rows in the same order.
class PanelSource {
 public:
  virtual ~PanelSource() = default;
  virtual void scan(const RowBatchFn& fn, std::size_t part = 0, std::size_t parts = 1) const = 0;
  virtual const SourceDescriptor& descriptor() const = 0;
};

// Opens a csv or packed-binary file. Throws ParseError on a bad header.
std::unique_ptr<PanelSource> open_source(const SourceDescriptor& descriptor);

class MemorySource final : public PanelSource {
 public:
  explicit MemorySource(std::vector<PanelRow> rows, std::string name = "memory");

  void scan(const RowBatchFn& fn, std::size_t part = 0, std::size_t parts = 1) const override;
  const SourceDescriptor& descriptor() const override { return descriptor_; }
  std::span<const PanelRow> rows() const { return rows_; }

 private:
  std::vector<PanelRow> rows_;
  SourceDescriptor descriptor_;
};

// Text unit labels that are not plain unsigned integers are mapped to 64-bit
// ids with the top bit set; numeric labels map to themselves.
std::uint64_t unit_id_from_label(std::string_view label);

void write_csv(const std::filesystem::path& path, std::span<const PanelRow> rows,
               const ColumnMap& columns = {}, char delimiter = ',');

// Little-endian packed records: magic "PNL1", then per row
// u32 unit, u16 time, f64 outcome, u8 treatment (15 bytes, no padding).
void write_packed(const std::filesystem::path& path, std::span<const PanelRow> rows);

inline constexpr std::int32_t kNever = 0;

// First-pass summary of a panel. Units and periods are dictionary-encoded to
// dense indices in ascending order of their raw ids.
struct PanelStats {
  std::vector<std::uint64_t> unit_ids;
  std::vector<std::int32_t> periods;
  std::vector<std::uint32_t> unit_rows;
  std::vector<std::uint32_t> unit_treated;
  std::vector<std::int32_t> cohort;  // adoption period or kNever
  std::vector<std::uint64_t> time_rows;
  std::vector<std::uint64_t> time_treated;
  std::uint64_t total_rows = 0;
  std::uint64_t treated_rows = 0;
  std::uint64_t fingerprint = 0;  // order-invariant content hash

  std::size_t n_units() const { return unit_ids.size(); }
  std::size_t n_periods() const { return periods.size(); }
  bool balanced() const { return total_rows == n_units() * n_periods(); }

  // Means are ratios of exact integer counts, so equal fractions compare
  // bitwise equal.
  double unit_treat_mean(std::size_t unit) const {
    return static_cast<double>(unit_treated[unit]) / static_cast<double>(unit_rows[unit]);
  }
  double time_treat_mean(std::size_t period) const {
    return static_cast<double>(time_treated[period]) / static_cast<double>(time_rows[period]);
  }

  std::optional<std::uint32_t> unit_index(std::uint64_t unit_id) const;
  std::optional<std::uint32_t> period_index(std::int32_t time_id) const;

  // Distinct adoption periods of ever-treated units, ascending.
  std::vector<std::int32_t> treated_cohorts() const;
  std::size_t never_treated_units() const;

  // Rebuilds the id lookup tables from unit_ids / periods.
  void build_index();

  friend bool operator==(const PanelStats& a, const PanelStats& b) {
    return a.unit_ids == b.unit_ids && a.periods == b.periods && a.unit_rows == b.unit_rows &&
           a.unit_treated == b.unit_treated && a.cohort == b.cohort && a.time_rows == b.time_rows &&
           a.time_treated == b.time_treated && a.total_rows == b.total_rows &&
           a.treated_rows == b.treated_rows && a.fingerprint == b.fingerprint;
  }

 private:
  bool dense_units_ = false;
  std::uint64_t unit_base_ = 0;
  std::unordered_map<std::uint64_t, std::uint32_t> unit_lookup_;
  std::int32_t period_base_ = 0;
  std::vector<std::int32_t> period_table_;  // time_id - base -> index or -1
};

struct ScanOptions {
  std::size_t threads = 1;
};

// Pass 1: per-unit and per-period treatment counts, adoption periods, and the
// absorbing-treatment check. Throws DomainError naming the first offending
// unit when a unit is treated before one of its untreated periods.
PanelStats scan_pass1(const PanelSource& source, const ScanOptions& options = {});

// Runs fn(part) for part in [0, parts) on up to `threads` workers and
// rethrows the first exception by part order.
void parallel_for(std::size_t parts, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace panelreg
