#pragma once

#include <cstddef>
#include <filesystem>

#include "panelreg/compress.hpp"
#include "panelreg/design.hpp"
#include "panelreg/panel.hpp"

namespace panelreg {

struct Pass2Options {
  std::size_t threads = 1;
  std::size_t memory_budget_bytes = 0;  // shared by all workers; 0 = unbounded
  std::filesystem::path spill_dir;
  bool check_duplicates = true;  // one bit per (unit, period)
};

struct Pass2Report {
  std::size_t excluded_units = 0;  // DIM/CUPED units without post (or pre) rows
  std::size_t spilled_runs = 0;
};

// Pass 2: maps every row to its design key and folds it into strata.
// Throws ConsistencyError for rows the first pass did not see, for duplicate
// (unit, period) rows, and when the row count differs from stats.total_rows.
CompressedDesign scan_pass2(const PanelSource& source, const PanelStats& stats, const EstimatorSpec& spec,
                            const Pass2Options& options = {}, Pass2Report* report = nullptr);

}  // namespace panelreg
