// panelreg command-line driver.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "panelreg/benchmark.hpp"
#include "panelreg/error.hpp"
#include "panelreg/io_json.hpp"
#include "panelreg/pipeline.hpp"
#include "panelreg/simlab.hpp"

using namespace panelreg;
namespace fs = std::filesystem;
namespace sl = panelreg::simlab;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "NaN";
  char b[32];
  auto [p, ec] = std::to_chars(b, b + sizeof b, v);
  return std::string(b, p);
}

// "--out res" and "--out res.json" both name the prefix "res".
std::string prefix_of(const std::string& out) {
  const fs::path p(out);
  if (p.extension() == ".json" || p.extension() == ".csv") return (p.parent_path() / p.stem()).string();
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot write " + path, 0);
  f << text;
  if (!f) throw ParseError("write failed for " + path, 0);
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path, 0);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

// Source flags shared by fit and ftest.
struct SourceFlags {
  std::string input;
  std::string format;
  ColumnMap columns;
  std::string delimiter = ",";

  void add(CLI::App* cmd) {
    cmd->add_option("--input,-i", input, "panel file (csv or packed binary)");
    cmd->add_option("--format", format, "csv | packed (default: from the file extension)");
    cmd->add_option("--unit-col", columns.unit, "unit id column")->capture_default_str();
    cmd->add_option("--time-col", columns.time, "period column")->capture_default_str();
    cmd->add_option("--outcome-col", columns.outcome, "outcome column")->capture_default_str();
    cmd->add_option("--treatment-col", columns.treatment, "treatment column")->capture_default_str();
    cmd->add_option("--delimiter", delimiter, "csv field delimiter")->capture_default_str();
  }

  SourceDescriptor descriptor() const {
    if (input.empty()) throw ConfigError("--input is required");
    if (delimiter.size() != 1) throw ConfigError("--delimiter must be one character");
    SourceDescriptor d;
    d.uri = input;
    d.columns = columns;
    d.delimiter = delimiter[0];
    if (!format.empty()) {
      d.format = parse_source_format(format);
    } else {
      const auto ext = fs::path(input).extension().string();
      d.format = ext == ".pnl" || ext == ".bin" ? SourceFormat::kPackedBinary : SourceFormat::kCsv;
    }
    return d;
  }
};

struct SpecFlags {
  std::string estimator = "TWM_STATIC";
  std::string spec_file;
  std::int32_t post_start = 0;
  std::optional<std::int32_t> reference_period;
  std::optional<std::uint32_t> cuped_bins;
  bool no_pre_treat = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--estimator,-e", estimator, "DIM | CUPED | TWM_STATIC | DYN_DIM | TWM_EVENT | TWM_COHORT")
        ->capture_default_str();
    cmd->add_option("--spec", spec_file, "estimator spec JSON (overrides --estimator)");
    cmd->add_option("--post-start", post_start, "first post period (default: earliest adoption)");
    cmd->add_option("--reference-period", reference_period, "omitted period for TWM_EVENT");
    cmd->add_option("--cuped-bins", cuped_bins, "bin the CUPED pre-period mean");
    cmd->add_flag("--no-pre-treat", no_pre_treat, "drop pre-adoption interactions");
  }

  EstimatorSpec spec() const {
    if (!spec_file.empty()) return spec_from_json(read_json(spec_file));
    EstimatorSpec s;
    s.kind = parse_estimator_kind(estimator);
    s.post_start = post_start;
    s.reference_period = reference_period;
    s.cuped_bins = cuped_bins;
    s.pre_treat_interactions = !no_pre_treat;
    return s;
  }
};

void print_fit(const FitResult& fit, const std::optional<BootResult>& boot) {
  std::printf("%s  n_obs=%llu  params=%zu  rss=%.6g  vcov=%s\n", to_string(fit.kind).c_str(),
              static_cast<unsigned long long>(fit.n_obs), fit.n_params, fit.rss, fit.hc1 ? "HC1" : "HC0");
  if (boot) {
    std::printf("%-24s %14s %12s %12s %12s %12s\n", "term", "estimate", "se", "boot_se", "ci_lower", "ci_upper");
  } else {
    std::printf("%-24s %14s %12s\n", "term", "estimate", "se");
  }
  for (std::size_t j = 0; j < fit.labels.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    const double se = fit.se.size() ? fit.se[i] : NAN;
    if (boot) {
      std::printf("%-24s %14.6g %12.6g %12.6g %12.6g %12.6g\n", fit.labels[j].c_str(), fit.beta[i], se, boot->se[i],
                  boot->ci_lower[i], boot->ci_upper[i]);
    } else {
      std::printf("%-24s %14.6g %12.6g\n", fit.labels[j].c_str(), fit.beta[i], se);
    }
  }
  if (!fit.dropped.empty()) {
    std::printf("dropped (collinear):");
    for (const auto& d : fit.dropped) std::printf(" %s", d.c_str());
    std::printf("\n");
  }
}

void write_manifest(const std::string& prefix, RunManifest m) {
  const std::string path = prefix + ".manifest.json";
  write_text(path, dump(manifest_to_json(m)));
}

// ---- fit ----

struct FitCmd {
  SourceFlags source;
  SpecFlags spec;
  std::size_t bootstrap = 0;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  bool normal_ci = false;
  bool hc1 = false;
  std::size_t threads = 1;
  std::size_t memory_mb = 0;
  std::string spill_dir;
  std::string emit_compressed;
  std::string from_compressed;
  std::string out;
};

int run_fit_cmd(const FitCmd& c, const std::vector<std::string>& args) {
  const EstimatorSpec spec = c.spec.spec();
  const std::string prefix = prefix_of(c.out);
  RunManifest m;
  m.command = "fit";
  m.args = args;
  m.seed = c.seed;
  m.b = c.bootstrap;

  FitResult fit;
  std::optional<BootResult> boot;
  if (!c.from_compressed.empty()) {
    if (c.bootstrap > 0) throw ConfigError("--bootstrap needs the raw panel; it cannot run on --from-compressed");
    std::ifstream in(c.from_compressed);
    if (!in) throw ParseError("cannot open " + c.from_compressed, 0);
    const auto design = read_compressed_csv(in, spec.kind, spec.post_start);
    FitOptions fo;
    fo.hc1 = c.hc1;
    fit = fit_wls(design, fo);
    m.source = {{"compressed", c.from_compressed}};
    m.spec = spec_to_json(spec);
  } else {
    const SourceDescriptor d = c.source.descriptor();
    const auto src = open_source(d);
    FitRequest req;
    req.spec = spec;
    req.threads = c.threads;
    req.memory_budget_bytes = c.memory_mb << 20;
    req.spill_dir = c.spill_dir;
    req.hc1 = c.hc1;
    req.bootstrap = c.bootstrap;
    req.seed = c.seed;
    req.ci_level = c.ci_level;
    req.normal_ci = c.normal_ci;
    FitRun run = run_fit(*src, req);
    if (!c.emit_compressed.empty()) {
      std::ostringstream os;
      write_compressed_csv(os, run.design);
      write_text(c.emit_compressed, os.str());
      m.outputs.push_back(c.emit_compressed);
    }
    if (run.report.excluded_units) {
      std::fprintf(stderr, "note: %zu units without usable pre/post rows were excluded\n", run.report.excluded_units);
    }
    fit = std::move(run.fit);
    boot = std::move(run.boot);
    m.source = source_to_json(d);
    EstimatorSpec resolved = resolve_spec(spec, run.stats);
    m.spec = spec_to_json(resolved);
  }

  write_text(prefix + ".json", dump(fit_to_json(fit)));
  m.outputs.push_back(prefix + ".json");
  if (boot) {
    write_text(prefix + ".bootstrap.json", dump(boot_to_json(*boot)));
    m.outputs.push_back(prefix + ".bootstrap.json");
  }
  write_manifest(prefix, m);
  print_fit(fit, boot);
  return 0;
}

// ---- ftest ----

struct FtestCmd {
  SourceFlags source;
  std::string restricted = "TWM_STATIC";
  std::string unrestricted = "TWM_EVENT";
  std::int32_t post_start = 0;
  std::size_t threads = 1;
  std::string out;
};

FitResult fit_or_load(const std::string& what, const FtestCmd& c, const PanelSource* src) {
  if (fs::path(what).extension() == ".json" || fs::exists(what)) return fit_from_json(read_json(what));
  EstimatorSpec spec;
  spec.kind = parse_estimator_kind(what);
  spec.post_start = c.post_start;
  if (!src) throw ConfigError("--input is required when a model is given by estimator name");
  FitRequest req;
  req.spec = spec;
  req.threads = c.threads;
  return run_fit(*src, req).fit;
}

int run_ftest_cmd(const FtestCmd& c, const std::vector<std::string>& args) {
  std::unique_ptr<PanelSource> src;
  RunManifest m;
  m.command = "ftest";
  m.args = args;
  if (!c.source.input.empty()) {
    const auto d = c.source.descriptor();
    src = open_source(d);
    m.source = source_to_json(d);
  }
  const FitResult r = fit_or_load(c.restricted, c, src.get());
  const FitResult u = fit_or_load(c.unrestricted, c, src.get());
  const FTestResult f = wald_f_test(r, u);
  json j = ftest_to_json(f);
  j["restricted"] = to_string(r.kind);
  j["unrestricted"] = to_string(u.kind);
  if (!c.out.empty()) {
    const std::string prefix = prefix_of(c.out);
    write_text(prefix + ".json", dump(j));
    m.outputs.push_back(prefix + ".json");
    write_manifest(prefix, m);
  }
  std::printf("F(%zu, %llu) = %.6g  p = %.6g  (%s within %s)\n", f.df_num, static_cast<unsigned long long>(f.df_den),
              f.f_stat, f.p_value, to_string(r.kind).c_str(), to_string(u.kind).c_str());
  return 0;
}

// ---- simulate / generate ----

struct DgpFlags {
  std::string dgp = "constant";
  std::optional<std::size_t> units;
  std::optional<std::int32_t> periods;
  std::optional<std::int32_t> t0;
  std::optional<double> tau;
  std::optional<double> rho;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* cmd) {
    cmd->add_option("--dgp", dgp, "effect form name or DGP config JSON")->capture_default_str();
    cmd->add_option("--units,-n", units, "number of units");
    cmd->add_option("--periods,-t", periods, "number of periods");
    cmd->add_option("--t0", t0, "last pre-treatment period");
    cmd->add_option("--tau", tau, "effect scale");
    cmd->add_option("--rho", rho, "AR(1) coefficient of the errors");
    cmd->add_option("--seed", seed, "random seed");
  }

  sl::DgpConfig config() const {
    sl::DgpConfig cfg;
    if (fs::path(dgp).extension() == ".json") {
      cfg = dgp_from_json(read_json(dgp));
    } else {
      cfg.effect = sl::parse_effect_kind(dgp);
    }
    if (units) cfg.n_units = *units;
    if (periods) cfg.n_periods = *periods;
    if (t0) cfg.t0 = *t0;
    if (tau) cfg.tau_base = *tau;
    if (rho) cfg.rho = *rho;
    if (seed) cfg.seed = *seed;
    sl::validate(cfg);
    return cfg;
  }
};

struct SimulateCmd {
  DgpFlags dgp;
  std::string scenario;
  std::string study = "rmse";
  std::size_t reps = 100;
  std::vector<double> sigma_beta;
  std::string psi = "both";
  double alpha = 0.05;
  std::size_t threads = 1;
  std::string out;
};

std::string curve_csv_header() { return "cohort,period,event_time,estimate,se,reference,truth\n"; }

std::string curve_csv_row(const CurvePoint& p, double truth) {
  return std::to_string(p.cohort) + "," + std::to_string(p.period) + "," + std::to_string(p.event_time) + "," +
         num(p.estimate) + "," + num(p.se) + "," + (p.reference ? "1" : "0") + "," + num(truth) + "\n";
}

double truth_at(const std::vector<sl::EffectCurve>& truth, const CurvePoint& p) {
  for (const auto& c : truth) {
    if (c.adoption == p.cohort) return c.at(p.event_time);
  }
  return 0.0;
}

int run_scenario(const SimulateCmd& c, RunManifest& m) {
  const std::string prefix = prefix_of(c.out);
  json summary;
  std::string csv;
  if (c.scenario == "anscombe") {
    const auto quartet = sl::anscombe_quartet(c.dgp.units.value_or(3000), c.dgp.seed.value_or(11));
    csv = "member," + curve_csv_header();
    summary["scenario"] = "anscombe";
    for (const auto& q : quartet) {
      for (const auto& p : q.curve) csv += q.name + "," + curve_csv_row(p, truth_at(q.truth, p));
      summary["members"].push_back({{"name", q.name}, {"dim_estimate", q.dim_estimate}, {"dim_se", q.dim_se}});
      std::printf("%-20s DIM %9.4f (se %.4f)\n", q.name.c_str(), q.dim_estimate, q.dim_se);
    }
  } else {
    const auto which = sl::parse_scenario(c.scenario);
    sl::DgpConfig cfg = sl::appendix_scenario(which, c.dgp.units.value_or(10000), c.dgp.seed.value_or(42));
    sl::SimPanel panel = sl::generate_panel(cfg);
    const auto truth = panel.truth;
    const MemorySource source(std::move(panel.rows));
    FitRequest req;
    req.threads = c.threads;
    req.spec.kind = EstimatorKind::kTwmCohort;
    const FitResult cohort_fit = run_fit(source, req).fit;
    req.spec.kind = EstimatorKind::kTwmStatic;
    const FitResult static_fit = run_fit(source, req).fit;
    csv = curve_csv_header();
    for (const auto& p : event_curve(cohort_fit)) csv += curve_csv_row(p, truth_at(truth, p));

    // Average effect over treated post-adoption cells.
    double num_sum = 0.0, den = 0.0;
    for (const auto& t : truth) {
      for (std::size_t i = 0; i < t.truth.size(); ++i) {
        if (t.event_time[i] < 1) continue;
        num_sum += t.truth[i] * static_cast<double>(t.units);
        den += static_cast<double>(t.units);
      }
    }
    summary["scenario"] = sl::to_string(which);
    summary["dgp"] = dgp_to_json(cfg);
    summary["cohorts"] = truth.size();
    summary["true_average_effect"] = den > 0 ? num_sum / den : 0.0;
    summary["twm_static_tau"] = *static_fit.coef("W");
    summary["twm_static_se"] = *static_fit.std_error("W");
    std::printf("%s: %zu treated cohorts, true average effect %.4f, TWM_STATIC tau %.4f (se %.4f)\n",
                sl::to_string(which).c_str(), truth.size(), summary["true_average_effect"].get<double>(),
                *static_fit.coef("W"), *static_fit.std_error("W"));
  }
  write_text(prefix + ".csv", csv);
  write_text(prefix + ".summary.json", dump(summary));
  m.outputs = {prefix + ".csv", prefix + ".summary.json"};
  write_manifest(prefix, m);
  return 0;
}

int run_simulate_cmd(const SimulateCmd& c, const std::vector<std::string>& args) {
  RunManifest m;
  m.command = "simulate";
  m.args = args;
  m.seed = c.dgp.seed.value_or(0);
  if (!c.scenario.empty()) return run_scenario(c, m);

  const std::string prefix = prefix_of(c.out);
  const sl::DgpConfig base = c.dgp.config();
  const std::uint64_t seed = c.dgp.seed.value_or(base.seed);
  m.seed = seed;
  json summary;
  std::string csv;
  if (c.study == "rmse") {
    if (c.reps < 2) throw ConfigError("--reps must be at least 2");
    if (c.psi != "both" && c.psi != "scalar" && c.psi != "random") throw ConfigError("--psi must be scalar, random or both");
    std::vector<double> levels = c.sigma_beta;
    if (levels.empty()) levels = {base.sigma_beta};
    const std::vector<sl::EffectKind> forms = {base.effect};
    std::vector<sl::DgpConfig> grid;
    for (const auto& g : sl::figure_grid(base, forms, levels)) {
      if (c.psi == "both" || (c.psi == "random") == g.psi.random) grid.push_back(g);
    }
    const auto study = sl::rmse_study(grid, c.reps, seed, c.threads);
    csv = "config,effect,psi,sigma_beta,rep,estimator,rmse\n";
    for (const auto& r : study.rows) {
      const auto& g = grid[r.config];
      csv += std::to_string(r.config) + "," + sl::to_string(g.effect) + "," + (g.psi.random ? "random" : "scalar") +
             "," + num(g.sigma_beta) + "," + std::to_string(r.rep) + "," + sl::to_string(r.estimator) + "," +
             num(r.rmse) + "\n";
    }
    summary["study"] = "rmse";
    summary["reps"] = c.reps;
    summary["seed"] = seed;
    std::printf("%-12s %-7s %10s", "effect", "psi", "sigma_beta");
    for (auto e : sl::kBattery) std::printf(" %14s", sl::to_string(e).c_str());
    std::printf("\n");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      json cfg = dgp_to_json(grid[i]);
      json rows = json::array();
      std::printf("%-12s %-7s %10g", sl::to_string(grid[i].effect).c_str(), grid[i].psi.random ? "random" : "scalar",
                  grid[i].sigma_beta);
      for (const auto& s : study.summary) {
        if (s.config != i) continue;
        rows.push_back({{"estimator", sl::to_string(s.estimator)}, {"mean_rmse", s.mean_rmse}, {"mc_se", s.mc_se}});
        std::printf(" %14.4f", s.mean_rmse);
      }
      std::printf("\n");
      summary["configs"].push_back({{"dgp", cfg}, {"summary", rows}});
    }
  } else if (c.study == "ftest") {
    const auto f = sl::ftest_study(base, c.reps, seed, c.alpha, c.threads);
    csv = "rep,p_value\n";
    for (std::size_t r = 0; r < f.p_values.size(); ++r) csv += std::to_string(r) + "," + num(f.p_values[r]) + "\n";
    summary = {{"study", "ftest"}, {"dgp", dgp_to_json(base)}, {"reps", f.reps}, {"seed", seed},
               {"alpha", c.alpha}, {"rejections", f.rejections}, {"rate", f.rate}, {"mc_se", f.mc_se}};
    std::printf("rejection rate %.4f (MC se %.4f) over %zu reps at alpha %.3g\n", f.rate, f.mc_se, f.reps, c.alpha);
  } else {
    throw ConfigError("--study must be rmse or ftest");
  }
  write_text(prefix + ".csv", csv);
  write_text(prefix + ".summary.json", dump(summary));
  m.outputs = {prefix + ".csv", prefix + ".summary.json"};
  m.spec = dgp_to_json(base);
  write_manifest(prefix, m);
  return 0;
}

struct GenerateCmd {
  DgpFlags dgp;
  std::string scenario;
  std::string format;
  std::string out;
};

int run_generate_cmd(const GenerateCmd& c, const std::vector<std::string>& args) {
  sl::DgpConfig cfg;
  if (!c.scenario.empty()) {
    cfg = sl::appendix_scenario(sl::parse_scenario(c.scenario), c.dgp.units.value_or(10000), c.dgp.seed.value_or(42));
  } else {
    cfg = c.dgp.config();
  }
  const sl::SimPanel panel = sl::generate_panel(cfg);
  const fs::path out(c.out);
  const std::string ext = out.extension().string();
  const bool packed = c.format.empty() ? ext == ".pnl" || ext == ".bin"
                                       : parse_source_format(c.format) == SourceFormat::kPackedBinary;
  if (packed) {
    write_packed(out, panel.rows);
  } else {
    write_csv(out, panel.rows);
  }
  const std::string stem = (out.parent_path() / out.stem()).string();
  std::string truth = "adoption,event_time,truth,units\n";
  for (const auto& t : panel.truth) {
    for (std::size_t i = 0; i < t.truth.size(); ++i) {
      truth += std::to_string(t.adoption) + "," + std::to_string(t.event_time[i]) + "," + num(t.truth[i]) + "," +
               std::to_string(t.units) + "\n";
    }
  }
  write_text(stem + ".truth.csv", truth);
  RunManifest m;
  m.command = "generate";
  m.args = args;
  m.seed = cfg.seed;
  m.spec = dgp_to_json(cfg);
  m.outputs = {c.out, stem + ".truth.csv"};
  write_manifest(stem, m);
  std::printf("wrote %zu rows (%zu units x %d periods) to %s\n", panel.rows.size(), cfg.n_units, cfg.n_periods,
              c.out.c_str());
  return 0;
}

// ---- benchmark ----

struct BenchmarkCmd {
  std::vector<std::size_t> units = {1000, 10000, 100000};
  std::vector<std::int32_t> periods = {14};
  std::vector<std::string> estimators = {"TWM_STATIC"};
  std::size_t repeats = 3;
  std::size_t dense_budget_mb = 2048;
  std::size_t threads = 1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_benchmark_cmd(const BenchmarkCmd& c, const std::vector<std::string>& args) {
  BenchOptions opts;
  opts.repeats = c.repeats;
  opts.dense_budget_bytes = c.dense_budget_mb << 20;
  opts.threads = c.threads;
  opts.seed = c.seed;
  std::string csv = "estimator,n_units,n_periods,strata,compressed_s,dense_s,max_coef_gap\n";
  for (const auto& name : c.estimators) {
    const EstimatorKind kind = parse_estimator_kind(name);
    if (is_cross_sectional(kind)) throw ConfigError("benchmark covers panel estimators only");
    std::map<std::pair<std::size_t, std::int32_t>, BenchCell> cells;
    for (auto n : c.units) {
      for (auto t : c.periods) {
        const BenchCell cell = bench_cell(n, t, kind, opts);
        cells[{n, t}] = cell;
        csv += to_string(kind) + "," + std::to_string(n) + "," + std::to_string(t) + "," +
               std::to_string(cell.strata) + "," + num(cell.compressed_s) + "," +
               (cell.dense_s ? num(*cell.dense_s) : std::string("x")) + "," +
               (cell.dense_s ? num(cell.max_coef_gap) : std::string("x")) + "\n";
      }
    }
    std::printf("%s, median of %zu (seconds: compressed / dense, x = over the dense memory budget)\n",
                to_string(kind).c_str(), c.repeats);
    std::printf("%10s", "units");
    for (auto t : c.periods) std::printf(" %22s", ("T=" + std::to_string(t)).c_str());
    std::printf("\n");
    for (auto n : c.units) {
      std::printf("%10zu", n);
      for (auto t : c.periods) {
        const auto& cell = cells[{n, t}];
        char b[64];
        if (cell.dense_s) {
          std::snprintf(b, sizeof b, "%.4f / %.4f", cell.compressed_s, *cell.dense_s);
        } else {
          std::snprintf(b, sizeof b, "%.4f / x", cell.compressed_s);
        }
        std::printf(" %22s", b);
      }
      std::printf("\n");
    }
  }
  if (!c.out.empty()) {
    const std::string prefix = prefix_of(c.out);
    write_text(prefix + ".csv", csv);
    RunManifest m;
    m.command = "benchmark";
    m.args = args;
    m.seed = c.seed;
    m.outputs = {prefix + ".csv"};
    write_manifest(prefix, m);
  }
  return 0;
}

int run(std::vector<std::string> args, bool allow_replay);

int run_replay_cmd(const std::string& manifest_path) {
  const RunManifest m = manifest_from_json(read_json(manifest_path));
  if (m.command == "replay") throw ConfigError("a replay manifest cannot be replayed");
  if (m.version != kEngineVersion) {
    std::fprintf(stderr, "warning: manifest written by engine %s, running %s\n", m.version.c_str(), kEngineVersion);
  }
  return run(m.args, false);
}

int run(std::vector<std::string> args, bool allow_replay) {
  CLI::App app{"panelreg: panel regressions on compressed sufficient statistics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kEngineVersion);

  FitCmd fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit one estimator, optionally with a cluster bootstrap");
  fit.source.add(fit_cmd);
  fit.spec.add(fit_cmd);
  fit_cmd->add_option("--bootstrap,-B", fit.bootstrap, "cluster bootstrap replicates");
  fit_cmd->add_option("--seed", fit.seed, "bootstrap seed")->capture_default_str();
  fit_cmd->add_option("--ci-level", fit.ci_level, "bootstrap interval level")->capture_default_str();
  fit_cmd->add_flag("--normal-ci", fit.normal_ci, "normal intervals instead of percentiles");
  fit_cmd->add_flag("--hc1", fit.hc1, "HC1 small-sample scaling of the sandwich");
  fit_cmd->add_option("--threads", fit.threads, "worker cap")->capture_default_str();
  fit_cmd->add_option("--memory-budget", fit.memory_mb, "MiB before strata spill to disk (0 = unbounded)");
  fit_cmd->add_option("--spill-dir", fit.spill_dir, "directory for spill runs");
  fit_cmd->add_option("--emit-compressed", fit.emit_compressed, "write the compressed design as csv");
  fit_cmd->add_option("--from-compressed", fit.from_compressed, "fit a compressed design csv instead of a panel");
  fit_cmd->add_option("--out,-o", fit.out, "output prefix")->required();

  FtestCmd ft;
  auto* ft_cmd = app.add_subcommand("ftest", "nested-model F test");
  ft.source.add(ft_cmd);
  ft_cmd->add_option("--restricted", ft.restricted, "fit JSON or estimator name")->capture_default_str();
  ft_cmd->add_option("--unrestricted", ft.unrestricted, "fit JSON or estimator name")->capture_default_str();
  ft_cmd->add_option("--post-start", ft.post_start, "first post period");
  ft_cmd->add_option("--threads", ft.threads, "worker cap");
  ft_cmd->add_option("--out,-o", ft.out, "output prefix");

  SimulateCmd sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo studies and scenario curves");
  sim.dgp.add(sim_cmd);
  sim_cmd->add_option("--scenario", sim.scenario, "sharkfin_oneshot | staggered | anscombe");
  sim_cmd->add_option("--study", sim.study, "rmse | ftest")->capture_default_str();
  sim_cmd->add_option("--reps", sim.reps, "replications")->capture_default_str();
  sim_cmd->add_option("--sigma-beta", sim.sigma_beta, "sigma_beta levels")->delimiter(',');
  sim_cmd->add_option("--psi", sim.psi, "scalar | random | both")->capture_default_str();
  sim_cmd->add_option("--alpha", sim.alpha, "test level for --study ftest")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "worker cap");
  sim_cmd->add_option("--out,-o", sim.out, "output prefix")->required();

  GenerateCmd gen;
  auto* gen_cmd = app.add_subcommand("generate", "write a simulated panel and its true effects");
  gen.dgp.add(gen_cmd);
  gen_cmd->add_option("--scenario", gen.scenario, "sharkfin_oneshot | staggered");
  gen_cmd->add_option("--format", gen.format, "csv | packed (default: from the extension)");
  gen_cmd->add_option("--out,-o", gen.out, "panel file")->required();

  BenchmarkCmd bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "compressed vs dense wall time");
  bench_cmd->add_option("--units", bench.units, "unit counts")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--periods", bench.periods, "period counts")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--estimator", bench.estimators, "panel estimators")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats, "timed repetitions per cell")->capture_default_str();
  bench_cmd->add_option("--dense-budget-mb", bench.dense_budget_mb, "largest dense design")->capture_default_str();
  bench_cmd->add_option("--threads", bench.threads, "worker cap");
  bench_cmd->add_option("--seed", bench.seed, "data seed");
  bench_cmd->add_option("--out,-o", bench.out, "csv output prefix");

  std::string manifest;
  auto* replay_cmd = app.add_subcommand("replay", "rerun the command recorded in a manifest");
  replay_cmd->add_option("--manifest,-m", manifest, "manifest JSON")->required();

  const std::vector<std::string> original = args;
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed()) return run_fit_cmd(fit, original);
    if (ft_cmd->parsed()) return run_ftest_cmd(ft, original);
    if (sim_cmd->parsed()) return run_simulate_cmd(sim, original);
    if (gen_cmd->parsed()) return run_generate_cmd(gen, original);
    if (bench_cmd->parsed()) return run_benchmark_cmd(bench, original);
    if (replay_cmd->parsed()) {
      if (!allow_replay) throw ConfigError("nested replay");
      return run_replay_cmd(manifest);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    for (auto* sub : app.get_subcommands()) std::cerr << sub->help();
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc), true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
}
