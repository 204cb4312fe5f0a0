#include "panelreg/pipeline.hpp"

#include <string>

#include "panelreg/error.hpp"

namespace panelreg {

FitRun run_fit(const PanelSource& source, const FitRequest& request) {
  FitRun run;
  run.stats = scan_pass1(source, ScanOptions{request.threads});
  Pass2Options p2;
  p2.threads = request.threads;
  p2.memory_budget_bytes = request.memory_budget_bytes;
  p2.spill_dir = request.spill_dir;
  run.design = scan_pass2(source, run.stats, request.spec, p2, &run.report);
  FitOptions fo;
  fo.hc1 = request.hc1;
  run.fit = fit_wls(run.design, fo);
  if (request.bootstrap > 0) {
    ShardOptions so;
    so.threads = request.threads;
    so.memory_budget_bytes = request.memory_budget_bytes;
    const ShardSet shards = shard_units(source, run.stats, request.spec, so);
    BootOptions bo;
    bo.b = request.bootstrap;
    bo.seed = request.seed;
    bo.threads = request.threads;
    bo.ci_level = request.ci_level;
    bo.normal_ci = request.normal_ci;
    run.boot = cluster_bootstrap(shards, bo);
  }
  return run;
}

std::unique_ptr<MemorySource> table_source(std::span<const std::uint64_t> unit, std::span<const std::int32_t> time,
                                           std::span<const double> outcome, std::span<const std::uint8_t> treatment) {
  const std::size_t n = unit.size();
  if (time.size() != n || outcome.size() != n || treatment.size() != n) {
    throw ConfigError("table columns have unequal lengths");
  }
  std::vector<PanelRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (treatment[i] > 1) throw DomainError("treatment must be 0 or 1 (row " + std::to_string(i) + ")");
    rows[i] = PanelRow{unit[i], time[i], outcome[i], treatment[i]};
  }
  return std::make_unique<MemorySource>(std::move(rows), "table");
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const ConsistencyError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const EstimationError*>(&e) || dynamic_cast<const NumericalError*>(&e) ||
      dynamic_cast<const InferenceError*>(&e)) {
    return 4;
  }
  if (dynamic_cast<const std::ios_base::failure*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return 3;
  }
  return 1;
}

}  // namespace panelreg
