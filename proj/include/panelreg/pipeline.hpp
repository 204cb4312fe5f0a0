#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>

#include "panelreg/bootstrap.hpp"
#include "panelreg/compress.hpp"
#include "panelreg/estimate.hpp"
#include "panelreg/panel.hpp"
#include "panelreg/scan.hpp"

namespace panelreg {

struct FitRequest {
  EstimatorSpec spec;
  std::size_t threads = 1;
  std::size_t memory_budget_bytes = 0;
  std::filesystem::path spill_dir;
  bool hc1 = false;
  std::size_t bootstrap = 0;  // B; 0 = none
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  bool normal_ci = false;
};

struct FitRun {
  PanelStats stats;
  CompressedDesign design;
  FitResult fit;
  std::optional<BootResult> boot;
  Pass2Report report;
};

// Both passes, the fit and, when requested, the cluster bootstrap.
FitRun run_fit(const PanelSource& source, const FitRequest& request);

// Row table from parallel columns, copied once. Throws ConfigError on length
// mismatch and DomainError for treatment values other than 0 and 1.
std::unique_ptr<MemorySource> table_source(std::span<const std::uint64_t> unit, std::span<const std::int32_t> time,
                                           std::span<const double> outcome, std::span<const std::uint8_t> treatment);

// Failure classes: 2 configuration, 3 data, 4 estimation. 1 for anything the
// engine did not raise.
int exit_code(const std::exception& e);

}  // namespace panelreg
