#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "panelreg/error.hpp"

using namespace panelreg;

TEST_CASE("estimator names") {
  CHECK(parse_estimator_kind("TWM_STATIC") == EstimatorKind::kTwmStatic);
  CHECK(parse_estimator_kind("twm-event") == EstimatorKind::kTwmEvent);
  CHECK(parse_estimator_kind("dyn_dim") == EstimatorKind::kDynDim);
  CHECK_THROWS_AS(parse_estimator_kind("OLS"), ConfigError);
  CHECK(is_cross_sectional(EstimatorKind::kCuped));
  CHECK_FALSE(is_cross_sectional(EstimatorKind::kTwmCohort));
}

TEST_CASE("TWM_STATIC keys in the balanced half-treated design") {
  const auto rows = th::balanced(4, 4, 2, 3, [](int, int, bool) { return 0.0; });
  const PanelStats stats = scan_pass1(MemorySource(rows));
  const EstimatorSpec spec = th::spec_of(EstimatorKind::kTwmStatic);
  const DesignBuilder b(spec, stats);
  CHECK(b.schema().labels == std::vector<std::string>{"intercept", "W", "Wbar_i", "Wbar_t"});
  const auto treated_post = build_design_row(PanelRow{1, 4, 0.0, 1}, stats, spec, b.schema());
  CHECK(treated_post.key == std::vector<double>{1, 1, 0.5, 0.5});
  const auto control_pre = build_design_row(PanelRow{4, 1, 0.0, 0}, stats, spec, b.schema());
  CHECK(control_pre.key == std::vector<double>{1, 0, 0, 0});

  ColumnSchema wrong = b.schema();
  wrong.labels.pop_back();
  CHECK_THROWS_AS(build_design_row(PanelRow{1, 4, 0.0, 1}, stats, spec, wrong), std::logic_error);
}

TEST_CASE("TWM_EVENT on a two-period, two-unit toy matches hand coding") {
  // Unit 1 adopts at period 2, unit 2 never does; reference period is 1.
  const std::vector<PanelRow> rows = {{1, 1, 0.0, 0}, {1, 2, 0.0, 1}, {2, 1, 0.0, 0}, {2, 2, 0.0, 0}};
  const PanelStats stats = scan_pass1(MemorySource(rows));
  const DesignBuilder b(th::spec_of(EstimatorKind::kTwmEvent), stats);
  CHECK(b.schema().labels == std::vector<std::string>{"intercept", "D", "time_2", "D:time_2"});
  const std::vector<std::vector<double>> want = {{1, 1, 0, 0}, {1, 1, 1, 1}, {1, 0, 0, 0}, {1, 0, 1, 0}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(build_design_row(rows[i], stats, b.spec(), b.schema()).key == want[i]);
  }
}

TEST_CASE("TWM_COHORT and DYN_DIM schemas") {
  // Cohorts adopt at 3 and 5 over periods 1..6.
  std::vector<PanelRow> rows;
  for (std::uint64_t u = 1; u <= 3; ++u) {
    const int c = u == 1 ? 3 : u == 2 ? 5 : 0;
    for (int t = 1; t <= 6; ++t) rows.push_back({u, t, 0.0, static_cast<std::uint8_t>(c && t >= c)});
  }
  const PanelStats stats = scan_pass1(MemorySource(rows));
  const DesignBuilder cohort(th::spec_of(EstimatorKind::kTwmCohort), stats);
  const auto& l = cohort.schema().labels;
  CHECK(std::find(l.begin(), l.end(), "cohort_3") != l.end());
  CHECK(std::find(l.begin(), l.end(), "cohort_3:time_2") == l.end());  // reference of cohort 3
  CHECK(std::find(l.begin(), l.end(), "cohort_5:time_4") == l.end());  // reference of cohort 5
  CHECK(std::find(l.begin(), l.end(), "cohort_5:time_2") != l.end());
  CHECK(l.size() == 1 + 2 + 5 + 2 * 5);

  const DesignBuilder dyn(th::spec_of(EstimatorKind::kDynDim), stats);
  // Post periods 3..6: time dummies for 4..6, event times 1..4 for cohort 3 and 1..2 for cohort 5.
  CHECK(dyn.schema().labels ==
        std::vector<std::string>{"intercept", "time_4", "time_5", "time_6", "event_1", "event_2", "event_3", "event_4"});
  std::vector<double> key(dyn.width());
  CHECK_FALSE(dyn.panel_key(0, 1, 0, key));  // pre period
  REQUIRE(dyn.panel_key(1, 5, 1, key));        // unit 2 at t=6, event time 2
  CHECK(key == std::vector<double>{1, 0, 0, 1, 0, 1, 0, 0});

  CHECK_THROWS_AS(DesignBuilder(th::spec_of(EstimatorKind::kTwmEvent), stats), DomainError);
}

TEST_CASE("spec validation") {
  const auto rows = th::balanced(4, 4, 2, 3, [](int, int, bool) { return 0.0; });
  const PanelStats stats = scan_pass1(MemorySource(rows));
  CHECK(resolve_spec(th::spec_of(EstimatorKind::kTwmEvent), stats).post_start == 3);
  CHECK(*resolve_spec(th::spec_of(EstimatorKind::kTwmEvent), stats).reference_period == 2);
  CHECK_THROWS_AS(resolve_spec(th::spec_of(EstimatorKind::kDim, 1), stats), ConfigError);
  CHECK_THROWS_AS(resolve_spec(th::spec_of(EstimatorKind::kDim, 9), stats), ConfigError);
  auto bad_ref = th::spec_of(EstimatorKind::kTwmEvent);
  bad_ref.reference_period = 17;
  CHECK_THROWS_AS(resolve_spec(bad_ref, stats), ConfigError);
  const auto none = th::balanced(4, 4, 0, 0, [](int, int, bool) { return 0.0; });
  CHECK_THROWS_AS(resolve_spec(th::spec_of(EstimatorKind::kDim), scan_pass1(MemorySource(none))), ConfigError);
}

TEST_CASE("column labels parse back") {
  CHECK(parse_column_label("intercept").role == ColumnRole::kIntercept);
  CHECK(parse_column_label("time_7").period == 7);
  const auto c = parse_column_label("cohort_3:time_9");
  CHECK(c.role == ColumnRole::kInteraction);
  CHECK(c.cohort == 3);
  CHECK(c.period == 9);
  CHECK(parse_column_label("D:time_4").role == ColumnRole::kInteraction);
  CHECK(parse_column_label("event_2").event_time == 2);
  CHECK(parse_column_label("nonsense").role == ColumnRole::kOther);
}

TEST_CASE("binary CUPED takes at most four keys") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.4);
  auto rows = th::balanced(400, 2, 200, 2, [&](int, int, bool) { return coin(rng) ? 1.0 : 0.0; });
  const auto design = th::compress(MemorySource(rows), EstimatorKind::kCuped);
  CHECK(design.strata.size() <= 4);
  std::int64_t n = 0;
  for (const auto& s : design.strata) n += s.n;
  CHECK(n == 400);
}

TEST_CASE("DIM on a constant outcome") {
  const auto rows = th::balanced(20, 4, 10, 3, [](int, int, bool) { return 2.5; });
  const FitResult f = th::fit(MemorySource(rows), EstimatorKind::kDim);
  CHECK(*f.coef("W") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(*f.coef("intercept") == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("cross sections exclude units without post or pre rows") {
  std::vector<PanelRow> rows = th::balanced(6, 4, 3, 3, [](int i, int t, bool) { return i + 0.1 * t; });
  rows.push_back({50, 1, 1.0, 0});  // only a pre row
  rows.push_back({51, 4, 1.0, 0});  // only a post row
  const MemorySource src(rows);
  const PanelStats stats = scan_pass1(src);
  Pass2Report report;
  scan_pass2(src, stats, th::spec_of(EstimatorKind::kDim), {}, &report);
  CHECK(report.excluded_units == 1);
  scan_pass2(src, stats, th::spec_of(EstimatorKind::kCuped), {}, &report);
  CHECK(report.excluded_units == 2);
}

TEST_CASE("CUPED matches least squares on the per-unit table") {
  const auto rows = th::gaussian_panel(20, 6, 10, 4, 11);
  const FitResult f = th::fit(MemorySource(rows), EstimatorKind::kCuped);
  // Per-unit table by hand.
  Eigen::MatrixXd x(20, 3);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    double pre = 0, post = 0;
    for (const auto& r : rows) {
      if (r.unit_id != static_cast<std::uint64_t>(i + 1)) continue;
      (r.time_id >= 4 ? post : pre) += r.outcome;
    }
    x.row(i) << 1.0, i < 10 ? 1.0 : 0.0, pre / 3.0;
    y[i] = post / 3.0;
  }
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  CHECK(th::rel_gap(f.beta, beta) < 1e-10);
}

TEST_CASE("CUPED bins coarsen the pre-period mean") {
  const auto rows = th::gaussian_panel(200, 6, 100, 4, 12);
  auto spec = th::spec_of(EstimatorKind::kCuped);
  spec.cuped_bins = 5;
  const MemorySource src(rows);
  const auto design = scan_pass2(src, scan_pass1(src), spec);
  std::set<double> pre;
  for (const auto& s : design.strata) pre.insert(s.key[2]);
  CHECK(pre.size() <= 5);
}
