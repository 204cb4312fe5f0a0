#include "panelreg/io_json.hpp"

#include <set>

#include "panelreg/error.hpp"

namespace panelreg {

namespace {

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + what);
  }
}

}  // namespace

json spec_to_json(const EstimatorSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  j["post_start"] = spec.post_start;
  j["reference_period"] = spec.reference_period ? json(*spec.reference_period) : json(nullptr);
  j["cuped_bins"] = spec.cuped_bins ? json(*spec.cuped_bins) : json(nullptr);
  j["pre_treat_interactions"] = spec.pre_treat_interactions;
  return j;
}

EstimatorSpec spec_from_json(const json& j) {
  reject_unknown(j, {"kind", "estimator", "post_start", "reference_period", "cuped_bins", "pre_treat_interactions"},
                 "estimator spec");
  EstimatorSpec spec;
  try {
    if (j.contains("kind")) {
      spec.kind = parse_estimator_kind(j.at("kind").get<std::string>());
    } else if (j.contains("estimator")) {
      spec.kind = parse_estimator_kind(j.at("estimator").get<std::string>());
    } else {
      throw ConfigError("estimator spec needs a 'kind'");
    }
    if (j.contains("post_start") && !j.at("post_start").is_null()) spec.post_start = j.at("post_start").get<std::int32_t>();
    if (j.contains("reference_period") && !j.at("reference_period").is_null()) {
      spec.reference_period = j.at("reference_period").get<std::int32_t>();
    }
    if (j.contains("cuped_bins") && !j.at("cuped_bins").is_null()) {
      const auto bins = j.at("cuped_bins").get<std::int64_t>();
      if (bins <= 0) throw ConfigError("cuped_bins must be positive");
      spec.cuped_bins = static_cast<std::uint32_t>(bins);
    }
    if (j.contains("pre_treat_interactions")) spec.pre_treat_interactions = j.at("pre_treat_interactions").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad estimator spec: ") + e.what());
  }
  return spec;
}

json source_to_json(const SourceDescriptor& d) {
  json j;
  j["uri"] = d.uri;
  j["format"] = to_string(d.format);
  j["columns"] = {{"unit", d.columns.unit}, {"time", d.columns.time}, {"outcome", d.columns.outcome},
                  {"treatment", d.columns.treatment}};
  j["delimiter"] = std::string(1, d.delimiter);
  return j;
}

SourceDescriptor source_from_json(const json& j) {
  SourceDescriptor d;
  try {
    d.uri = j.at("uri").get<std::string>();
    d.format = parse_source_format(j.at("format").get<std::string>());
    if (j.contains("columns")) {
      const auto& c = j.at("columns");
      d.columns.unit = c.value("unit", d.columns.unit);
      d.columns.time = c.value("time", d.columns.time);
      d.columns.outcome = c.value("outcome", d.columns.outcome);
      d.columns.treatment = c.value("treatment", d.columns.treatment);
    }
    const auto delim = j.value("delimiter", std::string(","));
    if (delim.size() != 1) throw ConfigError("delimiter must be a single character");
    d.delimiter = delim[0];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad source descriptor: ") + e.what());
  }
  return d;
}

json fit_to_json(const FitResult& fit, bool with_vcov) {
  json j;
  j["estimator"] = to_string(fit.kind);
  j["post_start"] = fit.schema.post_start;
  j["labels"] = fit.labels;
  j["beta"] = vec(fit.beta);
  j["se"] = vec(fit.se);
  if (with_vcov) j["vcov"] = mat(fit.vcov);
  j["rss"] = fit.rss;
  j["n_obs"] = fit.n_obs;
  j["n_params"] = fit.n_params;
  j["dropped"] = fit.dropped;
  j["vcov_type"] = fit.hc1 ? "HC1" : "HC0";
  return j;
}

FitResult fit_from_json(const json& j) {
  FitResult fit;
  try {
    fit.kind = parse_estimator_kind(j.at("estimator").get<std::string>());
    fit.schema.kind = fit.kind;
    fit.schema.post_start = j.value("post_start", 0);
    fit.labels = j.at("labels").get<std::vector<std::string>>();
    fit.dropped = j.value("dropped", std::vector<std::string>{});
    const auto beta = j.at("beta").get<std::vector<double>>();
    fit.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    if (j.contains("se")) {
      const auto se = j.at("se").get<std::vector<double>>();
      fit.se = Eigen::Map<const Eigen::VectorXd>(se.data(), static_cast<Eigen::Index>(se.size()));
    }
    fit.rss = j.at("rss").get<double>();
    fit.n_obs = j.at("n_obs").get<std::uint64_t>();
    fit.n_params = j.value("n_params", fit.labels.size());
    fit.schema.labels = fit.labels;
    fit.schema.labels.insert(fit.schema.labels.end(), fit.dropped.begin(), fit.dropped.end());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad fit document: ") + e.what());
  }
  if (static_cast<std::size_t>(fit.beta.size()) != fit.labels.size()) {
    throw ConfigError("fit document has mismatched labels and beta");
  }
  return fit;
}

json boot_to_json(const BootResult& boot) {
  json j;
  j["b"] = boot.b;
  j["seed"] = boot.seed;
  j["labels"] = boot.labels;
  j["point"] = vec(boot.point);
  j["se"] = vec(boot.se);
  j["ci_level"] = boot.ci_level;
  j["ci_method"] = boot.normal_ci ? "normal" : "percentile";
  j["ci_lower"] = vec(boot.ci_lower);
  j["ci_upper"] = vec(boot.ci_upper);
  j["n_failed"] = boot.n_failed;
  return j;
}

json ftest_to_json(const FTestResult& f) {
  json j;
  j["f_stat"] = f.f_stat;
  j["df_num"] = f.df_num;
  j["df_den"] = f.df_den;
  j["p_value"] = f.p_value;
  return j;
}

namespace {

json shape_to_json(const simlab::EffectShape& s) {
  return {{"kind", simlab::to_string(s.kind)}, {"tau", s.tau}, {"a", s.a}, {"b", s.b}, {"width", s.width}};
}

simlab::EffectShape shape_from_json(const json& j) {
  reject_unknown(j, {"kind", "tau", "a", "b", "width"}, "effect shape");
  simlab::EffectShape s;
  s.kind = simlab::parse_effect_kind(j.at("kind").get<std::string>());
  s.tau = j.value("tau", s.tau);
  s.a = j.value("a", s.a);
  s.b = j.value("b", s.b);
  s.width = j.value("width", s.width);
  if (s.width < 1) throw ConfigError("effect width must be positive");
  return s;
}

}  // namespace

json dgp_to_json(const simlab::DgpConfig& cfg) {
  json j;
  j["n_units"] = cfg.n_units;
  j["n_periods"] = cfg.n_periods;
  j["t0"] = cfg.t0;
  j["sigma_alpha"] = cfg.sigma_alpha;
  j["sigma_gamma"] = cfg.sigma_gamma;
  j["sigma_beta"] = cfg.sigma_beta;
  j["sigma_eps"] = cfg.sigma_eps;
  j["rho"] = cfg.rho;
  j["tau_base"] = cfg.tau_base;
  j["effect"] = simlab::to_string(cfg.effect);
  j["psi"] = {{"random", cfg.psi.random}, {"value", cfg.psi.value}, {"mean", cfg.psi.mean}, {"sd", cfg.psi.sd}};
  j["treat_prob"] = cfg.treat_prob;
  j["exact_assignment"] = cfg.exact_assignment;
  json cohorts = json::array();
  for (const auto& c : cfg.cohorts) {
    cohorts.push_back({{"adoption", c.adoption}, {"share", c.share}, {"effect", shape_to_json(c.effect)}});
  }
  j["cohorts"] = std::move(cohorts);
  j["seed"] = cfg.seed;
  return j;
}

simlab::DgpConfig dgp_from_json(const json& j, const simlab::DgpConfig& base) {
  reject_unknown(j, {"n_units", "n_periods", "t0", "sigma_alpha", "sigma_gamma", "sigma_beta", "sigma_eps", "rho",
                     "tau_base", "effect", "psi", "treat_prob", "exact_assignment", "cohorts", "seed"},
                 "DGP config");
  simlab::DgpConfig cfg = base;
  try {
    cfg.n_units = j.value("n_units", cfg.n_units);
    cfg.n_periods = j.value("n_periods", cfg.n_periods);
    cfg.t0 = j.value("t0", cfg.t0);
    cfg.sigma_alpha = j.value("sigma_alpha", cfg.sigma_alpha);
    cfg.sigma_gamma = j.value("sigma_gamma", cfg.sigma_gamma);
    cfg.sigma_beta = j.value("sigma_beta", cfg.sigma_beta);
    cfg.sigma_eps = j.value("sigma_eps", cfg.sigma_eps);
    cfg.rho = j.value("rho", cfg.rho);
    cfg.tau_base = j.value("tau_base", cfg.tau_base);
    if (j.contains("effect")) cfg.effect = simlab::parse_effect_kind(j.at("effect").get<std::string>());
    if (j.contains("psi")) {
      const auto& p = j.at("psi");
      reject_unknown(p, {"random", "value", "mean", "sd"}, "psi");
      cfg.psi.random = p.value("random", cfg.psi.random);
      cfg.psi.value = p.value("value", cfg.psi.value);
      cfg.psi.mean = p.value("mean", cfg.psi.mean);
      cfg.psi.sd = p.value("sd", cfg.psi.sd);
    }
    cfg.treat_prob = j.value("treat_prob", cfg.treat_prob);
    cfg.exact_assignment = j.value("exact_assignment", cfg.exact_assignment);
    if (j.contains("cohorts")) {
      cfg.cohorts.clear();
      for (const auto& c : j.at("cohorts")) {
        reject_unknown(c, {"adoption", "share", "effect"}, "cohort");
        simlab::CohortSpec spec;
        spec.adoption = c.at("adoption").get<std::int32_t>();
        spec.share = c.at("share").get<double>();
        if (c.contains("effect")) spec.effect = shape_from_json(c.at("effect"));
        cfg.cohorts.push_back(spec);
      }
    }
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad DGP config: ") + e.what());
  }
  simlab::validate(cfg);
  return cfg;
}

json manifest_to_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["args"] = m.args;
  j["spec"] = m.spec;
  j["source"] = m.source;
  j["seed"] = m.seed;
  j["b"] = m.b;
  j["outputs"] = m.outputs;
  j["version"] = m.version;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.spec = j.value("spec", json(nullptr));
    m.source = j.value("source", json(nullptr));
    m.seed = j.value("seed", std::uint64_t{0});
    m.b = j.value("b", std::size_t{0});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.version = j.value("version", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run manifest: ") + e.what());
  }
  return m;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace panelreg
