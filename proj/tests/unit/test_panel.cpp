#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "panelreg/error.hpp"

using namespace panelreg;

TEST_CASE("three-unit toy: cohorts and unit means") {
  // W paths (0,0,1,1), (0,0,0,0), (1,1,1,1)
  const std::vector<std::vector<int>> paths = {{0, 0, 1, 1}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  std::vector<PanelRow> rows;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (int t = 1; t <= 4; ++t) {
      rows.push_back({i + 1, t, 0.0, static_cast<std::uint8_t>(paths[i][static_cast<std::size_t>(t - 1)])});
    }
  }
  const PanelStats s = scan_pass1(MemorySource(rows));
  CHECK(s.cohort == std::vector<std::int32_t>{3, kNever, 1});
  CHECK(s.unit_treat_mean(0) == 0.5);
  CHECK(s.unit_treat_mean(1) == 0.0);
  CHECK(s.unit_treat_mean(2) == 1.0);
  CHECK(s.treated_cohorts() == std::vector<std::int32_t>{1, 3});
  CHECK(s.never_treated_units() == 1);
}

TEST_CASE("balanced half-treated design has means in {0, 0.5}") {
  const auto rows = th::balanced(10, 8, 5, 5, [](int, int, bool) { return 1.0; });
  const PanelStats s = scan_pass1(MemorySource(rows));
  for (std::size_t u = 0; u < s.n_units(); ++u) {
    const double m = s.unit_treat_mean(u);
    CHECK((m == 0.0 || m == 0.5));
  }
  for (std::size_t p = 0; p < s.n_periods(); ++p) {
    const double m = s.time_treat_mean(p);
    CHECK((m == 0.0 || m == 0.5));
  }
  CHECK(s.balanced());
}

TEST_CASE("all-control panel") {
  const auto rows = th::balanced(4, 3, 0, 0, [](int, int, bool) { return 0.0; });
  const PanelStats s = scan_pass1(MemorySource(rows));
  for (std::size_t u = 0; u < s.n_units(); ++u) {
    CHECK(s.unit_treat_mean(u) == 0.0);
    CHECK(s.cohort[u] == kNever);
  }
  for (std::size_t p = 0; p < s.n_periods(); ++p) CHECK(s.time_treat_mean(p) == 0.0);
}

TEST_CASE("assign_cohort") {
  const std::vector<std::uint8_t> a{0, 0, 1, 1}, b{0, 0, 0, 0}, c{1, 1, 1}, bad{0, 1, 0};
  CHECK(assign_cohort(a) == 3);
  CHECK(assign_cohort(b) == kNever);
  CHECK(assign_cohort(c) == 1);
  CHECK_THROWS_AS(assign_cohort(bad), DomainError);
}

TEST_CASE("non-absorbing treatment names the unit") {
  std::vector<PanelRow> rows = {{7, 1, 0, 0}, {7, 2, 0, 1}, {7, 3, 0, 0}, {8, 1, 0, 0}, {8, 2, 0, 0}, {8, 3, 0, 0}};
  try {
    scan_pass1(MemorySource(rows));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }
}

TEST_CASE("first pass is independent of worker count and row order") {
  auto rows = th::gaussian_panel(300, 9, 120, 5, 1);
  const PanelStats one = scan_pass1(MemorySource(rows));
  const PanelStats four = scan_pass1(MemorySource(rows), ScanOptions{4});
  CHECK(one == four);
  std::reverse(rows.begin(), rows.end());
  CHECK(scan_pass1(MemorySource(rows)) == one);
}

TEST_CASE("csv and packed round trips") {
  th::TempDir dir;
  const auto rows = th::gaussian_panel(50, 6, 20, 4, 2);
  write_csv(dir / "p.csv", rows);
  write_packed(dir / "p.pnl", rows);
  SourceDescriptor d;
  d.uri = dir / "p.csv";
  const auto csv = open_source(d);
  d.uri = dir / "p.pnl";
  d.format = SourceFormat::kPackedBinary;
  const auto packed = open_source(d);
  const MemorySource mem(rows);
  for (const PanelSource* src : {csv.get(), packed.get()}) {
    std::vector<PanelRow> back;
    src->scan([&](std::span<const PanelRow> b) { back.insert(back.end(), b.begin(), b.end()); });
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(back[i].unit_id == rows[i].unit_id);
      CHECK(back[i].time_id == rows[i].time_id);
      CHECK(back[i].outcome == rows[i].outcome);
      CHECK(back[i].treatment == rows[i].treatment);
    }
    // Partitions cover the rows exactly once.
    std::size_t total = 0;
    for (std::size_t p = 0; p < 3; ++p) src->scan([&](std::span<const PanelRow> b) { total += b.size(); }, p, 3);
    CHECK(total == rows.size());
  }
  CHECK(scan_pass1(*csv) == scan_pass1(mem));
}

TEST_CASE("csv errors carry the line number") {
  th::TempDir dir;
  {
    std::ofstream f(dir / "bad.csv");
    f << "unit_id,time_id,Y_it,W_it\n1,1,0.5,0\n1,2,0.5,2\n";
  }
  SourceDescriptor d;
  d.uri = dir / "bad.csv";
  const auto src = open_source(d);
  try {
    scan_pass1(*src);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  {
    std::ofstream f(dir / "nohead.csv");
    f << "a,b,c\n1,2,3\n";
  }
  d.uri = dir / "nohead.csv";
  CHECK_THROWS_AS(open_source(d)->scan([](std::span<const PanelRow>) {}), ParseError);
  d.uri = dir / "missing.csv";
  CHECK_THROWS_AS(open_source(d), ParseError);
}

TEST_CASE("text unit labels and custom columns") {
  th::TempDir dir;
  {
    std::ofstream f(dir / "lab.csv");
    f << "who;when;y;d\nalpha;1;1.0;0\nalpha;2;2.0;1\nbeta;1;0.5;0\nbeta;2;0.25;0\n";
  }
  SourceDescriptor d;
  d.uri = dir / "lab.csv";
  d.delimiter = ';';
  d.columns = ColumnMap{"who", "when", "y", "d"};
  const PanelStats s = scan_pass1(*open_source(d));
  CHECK(s.n_units() == 2);
  CHECK(s.total_rows == 4);
  CHECK(s.treated_cohorts() == std::vector<std::int32_t>{2});
  CHECK(unit_id_from_label("42") == 42);
  CHECK((unit_id_from_label("alpha") >> 63) == 1);
}

TEST_CASE("second pass rejects duplicates, unseen rows and count drift") {
  auto rows = th::balanced(3, 3, 1, 2, [](int, int, bool) { return 1.0; });
  const MemorySource src(rows);
  const PanelStats stats = scan_pass1(src);

  auto dup = rows;
  dup.push_back(rows.front());
  const MemorySource dup_src(dup);
  CHECK_THROWS_AS(scan_pass2(dup_src, scan_pass1(dup_src), th::spec_of(EstimatorKind::kTwmStatic)), ConsistencyError);

  auto other = rows;
  other.push_back({99, 1, 0.0, 0});
  CHECK_THROWS_AS(scan_pass2(MemorySource(other), stats, th::spec_of(EstimatorKind::kTwmStatic)), ConsistencyError);

  auto fewer = rows;
  fewer.pop_back();
  CHECK_THROWS_AS(scan_pass2(MemorySource(fewer), stats, th::spec_of(EstimatorKind::kTwmStatic)), ConsistencyError);
}
