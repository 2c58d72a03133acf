#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef SEVMIX_CLI_PATH
#error "SEVMIX_CLI_PATH must point at the command-line binary"
#endif

namespace fs = std::filesystem;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "sevmix_cli_test";

int run_cli(const std::string& args) {
  std::string cmd = std::string("\"") + SEVMIX_CLI_PATH + "\" " + args + " > " +
                    (kScratch / "cli.log").string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (rc < 0) return -1;
#ifdef WEXITSTATUS
  return WEXITSTATUS(rc);
#else
  return rc;
#endif
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  REQUIRE(out.good());
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kModelJson = R"({
  "base_alternative": "possible_no",
  "terms": [
    {"alternative": "major", "constant": true, "coefficient": "asc_major"},
    {"alternative": "minor", "constant": true, "coefficient": "asc_minor"},
    {"alternative": "major", "covariate": "x1", "coefficient": "b_x1_major"},
    {"alternative": "minor", "covariate": "ind", "coefficient": "b_ind_minor"}
  ],
  "random": []
})";

std::string synth_config(const fs::path& out_csv) {
  std::ostringstream j;
  j << R"({
  "model": )" << kModelJson << R"(,
  "parameters": {
    "fixed": {"asc_major": -0.5, "asc_minor": 0.2, "b_x1_major": 0.8,
              "b_ind_minor": -0.4}
  },
  "covariates": [
    {"name": "x1", "kind": "normal", "mean": 0.0, "sd": 1.0},
    {"name": "ind", "kind": "indicator", "p": 0.5}
  ],
  "segments": [
    {"area": "rural", "lighting": "daylight", "share": 0.5,
     "overrides": {"asc_major": -0.8}},
    {"area": "urban", "lighting": "dark", "share": 0.5}
  ],
  "seed": 991,
  "n": 2500,
  "output": ")" << out_csv.generic_string() << R"("
})";
  return j.str();
}

std::string run_config(const fs::path& input, const fs::path& out_dir) {
  std::ostringstream j;
  j << R"({
  "input": ")" << input.generic_string() << R"(",
  "output_dir": ")" << out_dir.generic_string() << R"(",
  "schema": {
    "severity_column": "severity",
    "area_column": "area",
    "lighting_column": "lighting",
    "columns": [
      {"name": "x1", "kind": "numeric"},
      {"name": "ind", "kind": "indicator"}
    ]
  },
  "model": )" << kModelJson << R"(,
  "estimation": {"n_draws": 25, "discard": 10}
})";
  return j.str();
}

struct ScratchSetup {
  ScratchSetup() {
    fs::remove_all(kScratch);
    fs::create_directories(kScratch);
  }
};

}  // namespace

TEST_CASE("command-line pipeline end to end") {
  ScratchSetup scratch;

  fs::path data = kScratch / "data.csv";
  write_text(kScratch / "synth.json", synth_config(data));

  SECTION("synth produces deterministic data") {
    REQUIRE(run_cli("synth --config " + (kScratch / "synth.json").string()) == 0);
    REQUIRE(fs::exists(data));
    fs::path data2 = kScratch / "data2.csv";
    REQUIRE(run_cli("synth --config " + (kScratch / "synth.json").string() + " --out " +
                    data2.string()) == 0);
    CHECK(read_text(data) == read_text(data2));
  }

  REQUIRE(run_cli("synth --config " + (kScratch / "synth.json").string()) == 0);
  write_text(kScratch / "run.json", run_config(data, kScratch / "out1"));

  SECTION("describe writes tables") {
    REQUIRE(run_cli("describe --config " + (kScratch / "run.json").string()) == 0);
    CHECK(fs::exists(kScratch / "out1" / "describe.md"));
    CHECK(fs::exists(kScratch / "out1" / "describe_counts.csv"));
    CHECK(fs::exists(kScratch / "out1" / "describe_rural_daylight.csv"));
  }

  SECTION("tests demand fit evidence first") {
    CHECK(run_cli("tests --config " + (kScratch / "run.json").string()) == 3);
  }

  SECTION("fit then tests succeed and outputs are reproducible") {
    REQUIRE(run_cli("fit --config " + (kScratch / "run.json").string()) == 0);
    CHECK(fs::exists(kScratch / "out1" / "fit_rural_daylight.md"));
    CHECK(fs::exists(kScratch / "out1" / "fit_rural_daylight.csv"));
    CHECK(fs::exists(kScratch / "out1" / "fit_urban_dark.json"));

    // identical run into a second directory: byte-identical artifacts
    write_text(kScratch / "run2.json", run_config(data, kScratch / "out2"));
    REQUIRE(run_cli("fit --config " + (kScratch / "run2.json").string()) == 0);
    CHECK(read_text(kScratch / "out1" / "fit_rural_daylight.csv") ==
          read_text(kScratch / "out2" / "fit_rural_daylight.csv"));
    CHECK(read_text(kScratch / "out1" / "fit_urban_dark.csv") ==
          read_text(kScratch / "out2" / "fit_urban_dark.csv"));

    // worker count must not change the numbers
    write_text(kScratch / "run3.json", run_config(data, kScratch / "out3"));
    REQUIRE(run_cli("fit --config " + (kScratch / "run3.json").string() +
                    " --workers 3") == 0);
    CHECK(read_text(kScratch / "out1" / "fit_rural_daylight.csv") ==
          read_text(kScratch / "out3" / "fit_rural_daylight.csv"));

    REQUIRE(run_cli("tests --config " + (kScratch / "run.json").string()) == 0);
    CHECK(fs::exists(kScratch / "out1" / "tests.md"));
    CHECK(fs::exists(kScratch / "out1" / "tests.csv"));
  }

  SECTION("configuration errors exit with code 2") {
    write_text(kScratch / "broken.json", "{ not json");
    CHECK(run_cli("fit --config " + (kScratch / "broken.json").string()) == 2);

    write_text(kScratch / "badkind.json",
               run_config(data, kScratch / "outx"));
    std::string bad = read_text(kScratch / "badkind.json");
    bad.replace(bad.find("\"numeric\""), 9, "\"mystery\"");
    write_text(kScratch / "badkind.json", bad);
    CHECK(run_cli("describe --config " + (kScratch / "badkind.json").string()) == 2);
  }

  SECTION("missing input file exits with code 4") {
    write_text(kScratch / "noinput.json",
               run_config(kScratch / "absent.csv", kScratch / "outy"));
    CHECK(run_cli("describe --config " + (kScratch / "noinput.json").string()) == 4);
  }
}
