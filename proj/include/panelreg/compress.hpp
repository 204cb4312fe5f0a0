#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "panelreg/design.hpp"
#include "panelreg/numeric.hpp"

namespace panelreg {

// Sufficient statistics of one stratum (a distinct design vector).
struct StratumRecord {
  std::vector<double> key;
  std::int64_t n = 0;
  double sum_y = 0.0;
  double sum_y_sq = 0.0;
};

struct CompressedDesign {
  ColumnSchema schema;
  std::vector<StratumRecord> strata;  // ascending key order, keys distinct
  std::uint64_t total_rows = 0;       // sum of n over strata
  std::uint64_t source_fingerprint = 0;
};

struct CompressorOptions {
  // Spill the in-memory table to a sorted run once it would exceed this many
  // bytes. 0 disables spilling.
  std::size_t memory_budget_bytes = 0;
  std::filesystem::path spill_dir;  // empty = system temp directory
};

// Hash aggregation of design rows into strata. Keys are grouped by exact bit
// pattern. Single writer; partials combine with merge().
class Compressor {
 public:
  explicit Compressor(ColumnSchema schema, CompressorOptions options = {});
  ~Compressor();
  Compressor(Compressor&&) noexcept;
  Compressor& operator=(Compressor&&) noexcept;
  Compressor(const Compressor&) = delete;
  Compressor& operator=(const Compressor&) = delete;

  const ColumnSchema& schema() const { return schema_; }
  std::size_t width() const { return width_; }

  // Slot of the in-memory stratum for `key`, created when absent. Slots stay
  // valid until generation() changes (a spill empties the table).
  std::size_t locate(std::span<const double> key);
  void add_at(std::size_t slot, double y);
  void add_stats_at(std::size_t slot, std::int64_t n, double sum_y, double sum_y_sq);
  std::uint64_t generation() const { return generation_; }

  void accumulate(std::span<const double> key, double y) { add_at(locate(key), y); }
  void accumulate(const DesignRow& row) { accumulate(row.key, row.outcome); }
  void accumulate_stats(std::span<const double> key, std::int64_t n, double sum_y, double sum_y_sq) {
    add_stats_at(locate(key), n, sum_y, sum_y_sq);
  }

  // Folds `other` (same schema) into this partial. Throws DomainError on a
  // schema mismatch.
  void merge(Compressor&& other);

  std::size_t strata_in_memory() const { return slots_; }
  std::size_t spilled_runs() const { return runs_.size(); }
  std::uint64_t total_rows() const { return total_rows_; }

  CompressedDesign finish() &&;

 private:
  struct Acc {
    std::int64_t n = 0;
    CompensatedSum y;
    CompensatedSum yy;
  };

  std::span<const double> key_at(std::size_t slot) const { return {keys_.data() + slot * width_, width_}; }
  void grow();
  void clear_table();
  void spill();
  std::size_t bytes_per_stratum() const;
  std::vector<std::size_t> sorted_slots() const;

  ColumnSchema schema_;
  CompressorOptions options_;
  std::size_t width_ = 0;
  std::vector<double> keys_;
  std::vector<Acc> accs_;
  std::vector<std::uint64_t> hashes_;
  std::vector<std::uint32_t> table_;  // slot + 1, 0 = empty
  std::size_t slots_ = 0;
  std::uint64_t total_rows_ = 0;
  std::uint64_t generation_ = 0;
  std::vector<std::filesystem::path> runs_;
};

CompressedDesign compress_rows(const ColumnSchema& schema, std::span<const DesignRow> rows);

// Componentwise sum of strata with equal keys; union otherwise.
CompressedDesign merge(const CompressedDesign& a, const CompressedDesign& b);

struct DesignShape {
  EstimatorKind kind = EstimatorKind::kTwmStatic;
  std::size_t n_periods = 0;
  std::size_t n_post_periods = 0;
  std::size_t cohorts = 2;  // adoption cohorts including never-treated
  std::optional<std::uint32_t> cuped_bins;
};

// Upper bound on strata for a balanced panel of the given shape.
std::size_t stratum_count(const DesignShape& shape);

// One header line (column labels, n, sum_y, sum_y_sq) then one line per
// stratum, numbers in shortest round-trip form.
void write_compressed_csv(std::ostream& out, const CompressedDesign& design);
CompressedDesign read_compressed_csv(std::istream& in, EstimatorKind kind, std::int32_t post_start = 0);

}  // namespace panelreg
