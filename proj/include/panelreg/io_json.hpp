#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelreg/bootstrap.hpp"
#include "panelreg/design.hpp"
#include "panelreg/estimate.hpp"
#include "panelreg/panel.hpp"
#include "panelreg/simlab.hpp"

namespace panelreg {

inline constexpr const char* kEngineVersion = "0.3.0";

using json = nlohmann::ordered_json;

json spec_to_json(const EstimatorSpec& spec);
// Throws ConfigError on unknown keys or bad values.
EstimatorSpec spec_from_json(const json& j);

json source_to_json(const SourceDescriptor& d);
SourceDescriptor source_from_json(const json& j);

json fit_to_json(const FitResult& fit, bool with_vcov = true);
// Restores the fields the F test needs (kind, labels, beta, rss, n_obs,
// n_params, dropped).
FitResult fit_from_json(const json& j);
json boot_to_json(const BootResult& boot);
json ftest_to_json(const FTestResult& f);

json dgp_to_json(const simlab::DgpConfig& cfg);
// Missing keys keep the values of `base`. Throws ConfigError.
simlab::DgpConfig dgp_from_json(const json& j, const simlab::DgpConfig& base = {});

struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // argv after the program name, for replay
  json spec;                      // null when not applicable
  json source;
  std::uint64_t seed = 0;
  std::size_t b = 0;
  std::vector<std::string> outputs;
  std::string version = kEngineVersion;
};

json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);

// Stable text form: two-space indent and a trailing newline.
std::string dump(const json& j);

}  // namespace panelreg
