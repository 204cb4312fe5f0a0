#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "helpers.hpp"
#include "panelreg/io_json.hpp"

using namespace panelreg;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const th::TempDir& dir, const std::string& args) {
  const std::string log = dir / "cli.log";
  const std::string cmd = std::string(PANELREG_CLI) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json load(const std::string& path) { return json::parse(slurp(path)); }

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_CASE("cli fit on a toy panel") {
  th::TempDir dir;
  write_csv(dir / "toy.csv", th::gaussian_panel(40, 6, 20, 4, 1));
  const Run r = cli(dir, "fit -i " + dir / "toy.csv" + " -e TWM_STATIC --out " + dir / "toy");
  REQUIRE(r.code == 0);
  const json j = load(dir / "toy.json");
  CHECK(j.at("labels") == json({"intercept", "W", "Wbar_i", "Wbar_t"}));
  CHECK(r.output.find("Wbar_t") != std::string::npos);
  CHECK(load(dir / "toy.manifest.json").at("command") == "fit");
}

TEST_CASE("cli exit codes") {
  th::TempDir dir;
  write_csv(dir / "toy.csv", th::gaussian_panel(20, 4, 10, 3, 2));

  Run r = cli(dir, "fit -i " + dir / "toy.csv" + " -e OLS --out " + dir / "x");
  CHECK(r.code == 2);
  CHECK(r.output.find("OLS") != std::string::npos);
  CHECK(r.output.find("--estimator") != std::string::npos);

  CHECK(cli(dir, "fit -i " + dir / "toy.csv" + " --bogus --out " + dir / "x").code == 2);
  CHECK(cli(dir, "fit -i " + dir / "missing.csv" + " --out " + dir / "x").code == 3);

  write(dir / "flip.csv", "unit_id,time_id,Y_it,W_it\n1,1,0,0\n1,2,0,1\n1,3,0,0\n2,1,0,0\n2,2,0,0\n2,3,0,0\n");
  r = cli(dir, "fit -i " + dir / "flip.csv" + " --out " + dir / "x");
  CHECK(r.code == 3);

  // Every unit adopts at period 2: DIM has no control group.
  write(dir / "all.csv", "unit_id,time_id,Y_it,W_it\n1,1,0,0\n1,2,1,1\n2,1,0.5,0\n2,2,2,1\n");
  CHECK(cli(dir, "fit -i " + dir / "all.csv" + " -e DIM --out " + dir / "x").code == 4);

  write(dir / "bad_dgp.json", R"({"units": 10})");
  CHECK(cli(dir, "generate --dgp " + dir / "bad_dgp.json" + " --out " + dir / "g.csv").code == 2);
}

TEST_CASE("cli F test on the sharkfin scenario") {
  th::TempDir dir;
  REQUIRE(cli(dir, "generate --scenario sharkfin_oneshot --units 2000 --seed 42 --out " + dir / "fin.csv").code == 0);
  const Run r = cli(dir, "ftest -i " + dir / "fin.csv" +
                             " --restricted TWM_STATIC --unrestricted TWM_EVENT --out " + dir / "ft");
  REQUIRE(r.code == 0);
  CHECK(load(dir / "ft.json").at("p_value").get<double>() < 1e-3);
}

TEST_CASE("cli F test from saved fits") {
  th::TempDir dir;
  write_csv(dir / "p.csv", th::gaussian_panel(100, 8, 50, 5, 3));
  REQUIRE(cli(dir, "fit -i " + dir / "p.csv" + " -e TWM_STATIC --out " + dir / "r").code == 0);
  REQUIRE(cli(dir, "fit -i " + dir / "p.csv" + " -e TWM_EVENT --out " + dir / "u").code == 0);
  const Run r = cli(dir, "ftest --restricted " + dir / "r.json" + " --unrestricted " + dir / "u.json");
  CHECK(r.code == 0);
  CHECK(r.output.find("F(") != std::string::npos);
  CHECK(cli(dir, "ftest --restricted " + dir / "u.json" + " --unrestricted " + dir / "r.json").code == 3);
}

TEST_CASE("cli scenario curves") {
  th::TempDir dir;
  const std::string args = "simulate --scenario staggered --units 1500 --seed 5 --out ";
  REQUIRE(cli(dir, args + dir / "a").code == 0);
  REQUIRE(cli(dir, args + dir / "b").code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(load(dir / "a.summary.json").at("cohorts") == 3);
  CHECK(slurp(dir / "a.csv").rfind("cohort,period,event_time,estimate,se,reference,truth", 0) == 0);
}

TEST_CASE("cli rmse study on sinusoidal effects") {
  th::TempDir dir;
  const Run r = cli(dir, "simulate --dgp sinusoidal --units 500 --reps 20 --psi scalar --sigma-beta 0.01 --seed 3 --out " +
                             dir / "s");
  REQUIRE(r.code == 0);
  const json rows = load(dir / "s.summary.json").at("configs").at(0).at("summary");
  double a = 0, e = 0;
  for (const auto& row : rows) {
    if (row.at("estimator") == "A_DIM") a = row.at("mean_rmse");
    if (row.at("estimator") == "E_EVENT_STUDY") e = row.at("mean_rmse");
  }
  CHECK(a > 0.0);
  CHECK(e < a);
}

TEST_CASE("cli benchmark reports both paths") {
  th::TempDir dir;
  const Run r = cli(dir, "benchmark --units 1000 --periods 14 --repeats 1 --out " + dir / "bench");
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "bench.csv");
  CHECK(csv.find("TWM_STATIC,1000,14,4,") != std::string::npos);
  CHECK(csv.find(",x,") == std::string::npos);
}

TEST_CASE("cli replay reproduces a bootstrap") {
  th::TempDir dir;
  write_csv(dir / "p.csv", th::gaussian_panel(60, 6, 30, 4, 4));
  REQUIRE(cli(dir, "fit -i " + dir / "p.csv" + " -B 50 --seed 11 --out " + dir / "run").code == 0);
  const std::string first = slurp(dir / "run.bootstrap.json");
  std::filesystem::remove(dir / "run.bootstrap.json");
  REQUIRE(cli(dir, "replay -m " + dir / "run.manifest.json").code == 0);
  CHECK(slurp(dir / "run.bootstrap.json") == first);
}

TEST_CASE("cli rmse study is deterministic") {
  th::TempDir dir;
  REQUIRE(cli(dir, "simulate --dgp constant --reps 2 --seed 7 --out " + dir / "a").code == 0);
  REQUIRE(cli(dir, "simulate --dgp constant --reps 2 --seed 7 --out " + dir / "b").code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.summary.json") == slurp(dir / "b.summary.json"));
}
