#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <doctest.h>

#include "panelreg/compress.hpp"
#include "panelreg/estimate.hpp"
#include "panelreg/panel.hpp"
#include "panelreg/scan.hpp"

namespace th {

using panelreg::PanelRow;

// Balanced panel, units 1..n, periods 1..t. Units with index < treated adopt
// at `adopt` (0 = never).
inline std::vector<PanelRow> balanced(int n, int t, int treated, int adopt,
                                      const std::function<double(int, int, bool)>& y) {
  std::vector<PanelRow> rows;
  for (int i = 0; i < n; ++i) {
    for (int s = 1; s <= t; ++s) {
      const bool w = i < treated && adopt > 0 && s >= adopt;
      rows.push_back(PanelRow{static_cast<std::uint64_t>(i + 1), s, y(i, s, w), static_cast<std::uint8_t>(w)});
    }
  }
  return rows;
}

inline std::vector<PanelRow> gaussian_panel(int n, int t, int treated, int adopt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> alpha(static_cast<std::size_t>(n));
  for (auto& a : alpha) a = 3.0 * z(rng);
  return balanced(n, t, treated, adopt, [&](int i, int s, bool w) {
    return alpha[static_cast<std::size_t>(i)] + 0.2 * s + (w ? 1.0 + 0.1 * s : 0.0) + z(rng);
  });
}

inline panelreg::EstimatorSpec spec_of(panelreg::EstimatorKind kind, std::int32_t post_start = 0) {
  panelreg::EstimatorSpec s;
  s.kind = kind;
  s.post_start = post_start;
  return s;
}

inline panelreg::CompressedDesign compress(const panelreg::PanelSource& src, panelreg::EstimatorKind kind,
                                           std::int32_t post_start = 0,
                                           const panelreg::Pass2Options& options = {}) {
  const auto stats = panelreg::scan_pass1(src);
  return panelreg::scan_pass2(src, stats, spec_of(kind, post_start), options);
}

inline panelreg::FitResult fit(const panelreg::PanelSource& src, panelreg::EstimatorKind kind,
                               std::int32_t post_start = 0) {
  return panelreg::fit_wls(compress(src, kind, post_start));
}

inline double rel_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

// Same keys bitwise, same counts, sums within `tol` relative.
inline void check_same_design(const panelreg::CompressedDesign& a, const panelreg::CompressedDesign& b,
                              double tol = 0.0) {
  REQUIRE(a.schema == b.schema);
  REQUIRE(a.strata.size() == b.strata.size());
  CHECK(a.total_rows == b.total_rows);
  for (std::size_t i = 0; i < a.strata.size(); ++i) {
    const auto& x = a.strata[i];
    const auto& y = b.strata[i];
    REQUIRE(x.key == y.key);
    CHECK(x.n == y.n);
    CHECK(std::abs(x.sum_y - y.sum_y) <= tol * std::max(1.0, std::abs(y.sum_y)));
    CHECK(std::abs(x.sum_y_sq - y.sum_y_sq) <= tol * std::max(1.0, std::abs(y.sum_y_sq)));
  }
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("panelreg-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace th
