#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "lprt/errors.hpp"
#include "lprt/scenario.hpp"

using namespace lprt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lprt_test_" + name);
  fs::remove_all(dir);
  return dir;
}

const char* kMinimal = R"(schema_version: 1
scenarios:
  - id: tiny
    domain: {type: ball, radius: 1}
    velocities: {type: sphere, order: 2}
    grid: {cells: 4}
    sigma: 1
    source: 1
    boundary: 0
    p: [1, 2, inf]
)";

}  // namespace

TEST_SUITE("scenario") {
  TEST_CASE("parses a minimal scenario") {
    const auto s = parse_scenarios(kMinimal);
    REQUIRE(s.size() == 1);
    CHECK(s[0].id == "tiny");
    REQUIRE(s[0].p.size() == 3);
    CHECK(s[0].p[2] == kInfinity);
    CHECK(s[0].domain.has_value());
    const Scenario r = refine(s[0], 2);
    CHECK(r.cells_longest == 8);
  }

  TEST_CASE("config errors") {
    std::string unknown = kMinimal;
    unknown += "    colour: red\n";
    CHECK_THROWS_WITH_AS(parse_scenarios(unknown), doctest::Contains("colour"), ConfigError);

    std::string version = kMinimal;
    version.replace(version.find("1"), 1, "2");
    CHECK_THROWS_AS(parse_scenarios(version), ConfigError);

    std::string low_p = kMinimal;
    low_p.replace(low_p.find("[1, 2, inf]"), 11, "[0.5]");
    CHECK_THROWS_AS(parse_scenarios(low_p), ConfigError);

    CHECK_THROWS_AS(parse_scenarios("schema_version: 1\nscenarios: [{id: x, domain: {type: torus}}]\n"), ConfigError);
    CHECK_THROWS_AS(load_scenarios("/nonexistent/file.cfg"), ConfigError);
  }

  TEST_CASE("stage lists") {
    CHECK(parse_stages("solve, bounds") == std::vector<std::string>{"solve", "bounds"});
    CHECK_THROWS_WITH_AS(parse_stages(""), "no stages requested", ConfigError);
    CHECK_THROWS_AS(parse_stages("solve,plot"), ConfigError);
  }

  TEST_CASE("number formatting") {
    CHECK(format_csv_number(-0.0) == "0");
    CHECK(format_csv_number(0.1) == "0.10000000000000001");
    CHECK(format_csv_number(kInfinity) == "inf");
    CHECK(format_csv_number(2.0) == "2");
  }

  TEST_CASE("empty stage list exits with a config error") {
    RunOptions o;
    o.scenario_path = LPRT_SUITE_DIR "/sharpness.cfg";
    o.out_dir = scratch("empty").string();
    std::ostringstream log;
    CHECK(run(o, log) == 2);
    CHECK(log.str().find("no stages requested") != std::string::npos);
  }

  TEST_CASE("sharpness stage writes one row per l") {
    RunOptions o;
    o.scenario_path = LPRT_SUITE_DIR "/sharpness.cfg";
    o.stages = {"sharpness"};
    o.out_dir = scratch("sharpness").string();
    std::ostringstream log;
    CHECK(run(o, log) == 0);
    const std::string csv = slurp(fs::path(o.out_dir) / "sharpness.csv");
    CHECK(csv.rfind("l,k,a,log_b,log_lhs,log_rhs,gap", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  }

  TEST_CASE("pure absorption runs are reproducible byte for byte") {
    std::string first;
    for (const char* name : {"repro_a", "repro_b"}) {
      RunOptions o;
      o.scenario_path = LPRT_SUITE_DIR "/pure_absorption.cfg";
      o.stages = {"validate", "solve", "bounds"};
      o.out_dir = scratch(name).string();
      std::ostringstream log;
      REQUIRE(run(o, log) == 0);
      const std::string csv = slurp(fs::path(o.out_dir) / "bounds.csv");
      CHECK(csv.find("false") == std::string::npos);
      CHECK(csv.find('\r') == std::string::npos);
      if (first.empty()) first = csv;
      else CHECK(csv == first);
    }
  }
}
