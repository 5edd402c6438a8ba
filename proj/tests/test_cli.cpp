#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("freqcert_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(FREQCERT_CLI) + " " + args + " >" + (workdir() / "stdout").string() + " 2>" +
                          (workdir() / "stderr").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json stdout_json() { return nlohmann::json::parse(slurp(workdir() / "stdout")); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("simulate is reproducible and seed dependent") {
  const auto a = workdir() / "sim_a", b = workdir() / "sim_b", c = workdir() / "sim_c";
  REQUIRE(run("--seed 11 simulate --out " + q(a)) == 0);
  REQUIRE(run("--seed 11 simulate --out " + q(b)) == 0);
  REQUIRE(run("--seed 12 simulate --out " + q(c)) == 0);
  const auto sa = slurp(a / "measurements.csv");
  CHECK(!sa.empty());
  CHECK(sa == slurp(b / "measurements.csv"));
  CHECK(sa != slurp(c / "measurements.csv"));
}

TEST_CASE("simulate emits 2d diagonal settings and 6(d-3) fringe groups") {
  for (int d : {20, 102}) {
    const auto dir = workdir() / ("count_" + std::to_string(d));
    REQUIRE(run("--d " + std::to_string(d) + " simulate --out " + q(dir)) == 0);
    std::ifstream in(dir / "measurements.csv");
    std::string line;
    std::getline(in, line);
    std::set<std::pair<std::string, std::string>> diag;
    std::set<std::string> groups;
    while (std::getline(in, line)) {
      std::stringstream row(line);
      std::string type, j, i;
      std::getline(row, type, ',');
      std::getline(row, j, ',');
      std::getline(row, i, ',');
      if (type == "corr" || type == "bucket")
        diag.insert({type, j});
      else
        groups.insert(type + ":" + j + ":" + i);
    }
    CHECK(diag.size() == static_cast<std::size_t>(2 * d));
    CHECK(groups.size() == static_cast<std::size_t>(6 * (d - 3)));
  }
}

TEST_CASE("belltest") {
  const auto dir = workdir() / "bell";
  REQUIRE(run("--noiseless belltest 7 --out " + q(dir)) == 0);
  std::ifstream in(dir / "fringe_d7.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "theta_rad,coincidences,singles_s,singles_i,normalized");
  double lo = 1e300, hi = 0.0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    const double c = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    lo = std::min(lo, c), hi = std::max(hi, c);
    ++rows;
  }
  CHECK(rows % 7 == 0);
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi > 0.0);
  const auto verdict = nlohmann::json::parse(slurp(dir / "verdict_d7.json"));
  CHECK(verdict["visibility"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(verdict["verdict"] == "violates");

  REQUIRE(run("--seed 4 belltest 3") == 0);
  CHECK(stdout_json()["visibility"].get<double>() > 0.775);

  CHECK(run("belltest 4") == 2);
  CHECK(slurp(workdir() / "stderr").find("d = 4") != std::string::npos);
}

TEST_CASE("certify") {
  REQUIRE(run("certify --reference") == 0);
  const auto full = stdout_json();
  CHECK(full["k_star"].get<int>() >= 31);
  CHECK(full["k_star"].get<int>() <= 35);
  CHECK(full["d"] == 102);

  REQUIRE(run("certify --reference --neighbors 1") == 0);
  CHECK(stdout_json()["k_star"].get<int>() < full["k_star"].get<int>());

  REQUIRE(run("certify --reference --dmax 11") == 0);
  CHECK(stdout_json()["k_star"] == 11);

  for (int d : {3, 8, 16}) {
    REQUIRE(run("--noiseless --d " + std::to_string(d) + " certify --neighbors 1,2") == 0);
    CHECK(stdout_json()["k_star"] == d);
  }

  SUBCASE("from a simulated dataset on disk") {
    const auto dir = workdir() / "cert_data";
    REQUIRE(run("--d 30 --seed 5 simulate --out " + q(dir)) == 0);
    REQUIRE(run("--d 30 certify --data " + q(dir) + " --out " + q(dir / "report.json")) == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["schema_version"] == 1);
    CHECK(rep["k_star"].get<int>() >= 2);

    // Drop one bucket setting: the dataset is incomplete.
    std::ifstream in(dir / "measurements.csv");
    std::ofstream out(dir / "cut.csv");
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("bucket,7,", 0) != 0) out << line << '\n';
    out.close();
    CHECK(run("--d 30 certify --data " + q(dir / "cut.csv")) == 3);
    CHECK(slurp(workdir() / "stderr").find("bucket j=7") != std::string::npos);
  }
}

TEST_CASE("Monte Carlo subcommand") {
  REQUIRE(run("--seed 9 mc --reference --mc 40 --dmax 40") == 0);
  const auto a = stdout_json();
  REQUIRE(a.contains("monte_carlo"));
  CHECK(a["monte_carlo"]["samples"] == 40);
  REQUIRE(run("--seed 9 mc --reference --mc 40 --dmax 40") == 0);
  CHECK(stdout_json()["monte_carlo"] == a["monte_carlo"]);
  CHECK(run("mc --reference --mc 1") == 2);
}

TEST_CASE("calibrate-dispersion") {
  REQUIRE(run("--c2 0.004 --noiseless calibrate-dispersion --separation 2") == 0);
  CHECK(stdout_json()["c2"].get<double>() == doctest::Approx(0.004).epsilon(1e-6));

  // Three modes, each probed with a different separation: no shared slope can be fit.
  const auto scans = workdir() / "split_scans.csv";
  {
    std::ofstream out(scans);
    out << "j,i,theta_rad,coincidences\n";
    const std::pair<int, int> groups[] = {{1, 1}, {2, 2}, {3, 6}};
    for (auto [j, i] : groups)
      for (int k = 0; k < 8; ++k) {
        const double theta = 3.141592653589793 * k / (8.0 * i);
        out << j << ',' << i << ',' << theta << ',' << 100 + 50 * std::cos(2 * i * theta + 0.1 * j) << '\n';
      }
  }
  CHECK(run("calibrate-dispersion --scans " + q(scans)) == 4);
}

TEST_CASE("configuration errors") {
  const auto cfg = workdir() / "bad.ini";
  std::ofstream(cfg) << "[grid]\nd = 12\nwidth = 4\n";
  CHECK(run("--config " + q(cfg) + " certify --reference") == 2);
  CHECK(run("--config " + q(workdir() / "missing.ini") + " certify --reference") == 2);
  CHECK(run("--d 1 certify --reference") == 2);
  CHECK(run("certify --reference --order sideways") == 2);
  CHECK(run("frobnicate") == 2);

  const auto good = workdir() / "good.ini";
  std::ofstream(good) << "[grid]\nd = 12\n[certify]\nneighbors = 1\n";
  REQUIRE(run("--config " + q(good) + " --noiseless certify") == 0);
  CHECK(stdout_json()["d"] == 12);
  CHECK(stdout_json()["neighbors"] == nlohmann::json::array({1}));
}
