#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sevmix/modeltests.hpp"
#include "sevmix/synth.hpp"

using namespace sevmix;

namespace {

FitResult stub_fit(double ll, int n_params) {
  FitResult f;
  f.ll_converged = ll;
  f.theta = Eigen::VectorXd::Zero(n_params);
  return f;
}

Dataset choice_data(std::size_t n, unsigned seed, double asc_major, double b_x1) {
  Dataset d;
  d.covariate_names = {"x1", "ind"};
  d.covariate_kinds = {CovariateKind::Continuous, CovariateKind::Indicator};
  std::mt19937 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::bernoulli_distribution bern(0.5);
  std::uniform_real_distribution<double> unif(1e-12, 1.0);
  auto gumbel = [&] { return -std::log(-std::log(unif(rng))); };
  for (std::size_t i = 0; i < n; ++i) {
    CrashRecord r;
    r.area = AreaType::Rural;
    r.lighting = LightingCode::Daylight;
    double x1 = norm(rng), ind = bern(rng) ? 1.0 : 0.0;
    r.covariates = {x1, ind};
    double u0 = asc_major + b_x1 * x1 + gumbel();
    double u1 = 0.2 - 0.4 * ind + gumbel();
    double u2 = gumbel();
    r.severity = u0 >= u1 && u0 >= u2
                     ? SeverityClass::Major
                     : (u1 >= u2 ? SeverityClass::Minor : SeverityClass::PossibleNo);
    d.records.push_back(r);
  }
  return d;
}

ModelSpec demo_spec() {
  ModelSpec spec;
  spec.terms = {
      {SeverityClass::Major, "", "asc_major"},
      {SeverityClass::Minor, "", "asc_minor"},
      {SeverityClass::Major, "x1", "b_x1_major"},
      {SeverityClass::Minor, "ind", "b_ind_minor"},
  };
  return spec;
}

}  // namespace

TEST_CASE("pooled-versus-segments likelihood ratio test") {
  // stat = -2 [ -4290 - (-2886 - 1242 - 114) ] = 96, df = 65 - 25 = 40
  FitResult full = stub_fit(-4290.0, 25);
  std::vector<FitResult> subs = {stub_fit(-2886.0, 25), stub_fit(-1242.0, 25),
                                 stub_fit(-114.0, 15)};
  TestResult res = lr_partition_test(full, subs, 0.99);
  CHECK(res.statistic == Catch::Approx(96.0));
  CHECK(res.df == 40);
  CHECK(res.critical_value == Catch::Approx(63.69).margin(0.02));
  CHECK(res.reject_null);

  // stat = -2 [ -3232 - (-2401 - 379 - 426) ] = 52, df = 30
  FitResult full_u = stub_fit(-3232.0, 24);
  std::vector<FitResult> subs_u = {stub_fit(-2401.0, 24), stub_fit(-379.0, 18),
                                   stub_fit(-426.0, 12)};
  TestResult res_u = lr_partition_test(full_u, subs_u, 0.99);
  CHECK(res_u.statistic == Catch::Approx(52.0));
  CHECK(res_u.df == 30);
  CHECK(res_u.critical_value == Catch::Approx(50.89).margin(0.02));
  CHECK(res_u.reject_null);
}

TEST_CASE("partition test input screening") {
  FitResult full = stub_fit(-100.0, 10);
  CHECK_THROWS_AS(lr_partition_test(full, {}, 0.99), std::invalid_argument);

  // degenerate: subgroup parameters do not exceed the pooled count
  std::vector<FitResult> same = {stub_fit(-60.0, 10)};
  CHECK_THROWS_AS(lr_partition_test(full, same, 0.99), std::invalid_argument);

  // subgroup fits cannot be materially worse than the pooled fit
  std::vector<FitResult> worse = {stub_fit(-80.0, 10), stub_fit(-40.0, 10)};
  CHECK_THROWS_AS(lr_partition_test(full, worse, 0.99), ConsistencyError);

  // tiny negative rounding is clamped to zero
  std::vector<FitResult> tied = {stub_fit(-50.0, 10), stub_fit(-50.0 - 1e-8, 10)};
  TestResult res = lr_partition_test(full, tied, 0.99);
  CHECK(res.statistic == 0.0);
  CHECK_FALSE(res.reject_null);
}

TEST_CASE("parameter transfer across segments") {
  Dataset d1 = choice_data(3000, 101, -0.5, 0.8);
  Dataset d2 = choice_data(3000, 202, 1.0, -0.9);  // very different process
  FitResult f1 = fit_mnl(d1, demo_spec());
  FitResult f2 = fit_mnl(d2, demo_spec());

  // own parameters on own data: exactly zero by construction
  TestResult self = lr_transfer_test(f1, d1, f1, 0.99);
  CHECK(self.statistic == 0.0);
  CHECK_FALSE(self.reject_null);
  CHECK(self.df == 4);

  TestResult cross = lr_transfer_test(f1, d1, f2, 0.99);
  CHECK(cross.statistic > 0.0);
  CHECK(cross.df == 4);
  CHECK(cross.critical_value == Catch::Approx(chi_square_quantile(4, 0.99)));
  CHECK(cross.reject_null);  // strongly different generating processes
}

TEST_CASE("dropping an alternative restricts data and spec together") {
  Dataset d = choice_data(500, 7, -0.5, 0.8);
  ModelSpec spec = demo_spec();
  spec.random_ids = {"b_ind_minor", "b_x1_major"};

  RestrictedProblem rp = restrict_to_alternatives(d, spec, SeverityClass::Minor);
  CHECK(rp.spec.alternatives.size() == 2);
  for (const Term& t : rp.spec.terms) CHECK(t.alternative != SeverityClass::Minor);
  for (const CrashRecord& r : rp.data.records) CHECK(r.severity != SeverityClass::Minor);
  // random ids attached to dropped terms disappear with them
  CHECK(rp.spec.random_ids == std::vector<std::string>{"b_x1_major"});
  CHECK(rp.data.records.size() < d.records.size());

  CHECK_THROWS_AS(restrict_to_alternatives(d, spec, SeverityClass::PossibleNo),
                  std::invalid_argument);
}

TEST_CASE("alternative-independence test") {
  Dataset d = choice_data(8000, 56, -0.5, 0.8);
  ModelSpec spec = demo_spec();
  FitResult full = fit_mnl(d, spec);

  // identical fits share every parameter and differ by nothing
  TestResult self = hausman_iia_test(full, full, 0.95);
  CHECK(self.statistic == 0.0);
  CHECK(self.df == 4);
  CHECK_FALSE(self.reject_null);

  RestrictedProblem rp = restrict_to_alternatives(d, spec, SeverityClass::Minor);
  FitResult restricted = fit_mnl(rp.data, rp.spec);
  TestResult res = hausman_iia_test(full, restricted, 0.95);
  CHECK(res.df >= 1);
  CHECK(res.statistic >= 0.0);
  CHECK(res.critical_value == Catch::Approx(chi_square_quantile(res.df, 0.95)));
  // the data satisfy independence by construction; rejection would be a
  // small-probability event under the null
  CHECK_FALSE(res.reject_null);

  FitResult unrelated = stub_fit(-1.0, 2);
  unrelated.param_names = {"a", "b"};
  full.param_names = fit_mnl(d, spec).param_names;
  CHECK_THROWS_AS(hausman_iia_test(full, unrelated, 0.95), std::invalid_argument);
}

TEST_CASE("segment comparison battery") {
  DgpSpec dgp;
  dgp.spec = demo_spec();
  dgp.params.fixed = {{"asc_major", -0.5},
                      {"asc_minor", 0.2},
                      {"b_x1_major", 0.8},
                      {"b_ind_minor", -0.4}};
  dgp.covariates = {{"x1", CovariateGen::Kind::Normal},
                    {"ind", CovariateGen::Kind::Indicator}};
  dgp.segments = {
      {AreaType::Rural, LightingCode::Daylight, 0.3, {{"asc_major", -0.5}}},
      {AreaType::Rural, LightingCode::Dark, 0.3, {{"asc_major", 0.5}}},
      {AreaType::Urban, LightingCode::Daylight, 0.2, {{"b_x1_major", -0.2}}},
      {AreaType::Urban, LightingCode::Dark, 0.2, {}},
  };
  dgp.seed = 4242;
  Dataset data = simulate_dataset(dgp, 8000);

  BatteryReport report = run_battery(data, {}, demo_spec());
  CHECK(report.note.empty());
  CHECK(report.segment_fits.size() == 4);
  REQUIRE(report.partition_tests.size() == 3);  // all, rural, urban
  CHECK(report.partition_tests[0].label == "all");
  for (const auto& row : report.partition_tests) {
    CHECK(row.test.statistic >= 0.0);
    CHECK(row.test.df >= 1);
    double sum = 0.0;
    for (const auto& [name, ll] : row.segment_lls) sum += ll;
    CHECK(row.test.statistic == Catch::Approx(-2.0 * (row.ll_pooled - sum)).margin(1e-9));
  }
  // heterogeneous constants across segments should be detected on the pooled split
  CHECK(report.partition_tests[0].test.reject_null);

  REQUIRE(report.transfer_blocks.size() == 2);
  for (const auto& block : report.transfer_blocks) {
    REQUIRE(block.keys.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(block.cells[i][i].evaluable);
      CHECK(block.cells[i][i].statistic == 0.0);
      CHECK_FALSE(block.cells[i][i].reject);
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(block.cells[i][j].evaluable);
        CHECK(block.cells[i][j].statistic >= 0.0);
      }
    }
  }
}

TEST_CASE("battery with a single segment reports nothing to compare") {
  Dataset d = choice_data(200, 9, -0.5, 0.8);  // all rural daylight
  BatteryReport report = run_battery(d, {}, demo_spec());
  CHECK_FALSE(report.note.empty());
  CHECK(report.partition_tests.empty());
  CHECK(report.transfer_blocks.empty());
}
