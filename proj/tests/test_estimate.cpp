#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sevmix/estimate.hpp"

using namespace sevmix;

namespace {

// Choice data from known coefficients via Gumbel-error utility maximization.
Dataset simulated_mnl_data(std::size_t n, unsigned seed, bool add_noise_column = false) {
  Dataset d;
  d.covariate_names = {"x1", "ind"};
  d.covariate_kinds = {CovariateKind::Continuous, CovariateKind::Indicator};
  if (add_noise_column) {
    d.covariate_names.push_back("noise");
    d.covariate_kinds.push_back(CovariateKind::Continuous);
  }
  std::mt19937 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::bernoulli_distribution bern(0.5);
  std::uniform_real_distribution<double> unif(1e-12, 1.0);
  auto gumbel = [&] { return -std::log(-std::log(unif(rng))); };
  for (std::size_t i = 0; i < n; ++i) {
    CrashRecord r;
    r.area = AreaType::Rural;
    r.lighting = LightingCode::Daylight;
    double x1 = norm(rng);
    double ind = bern(rng) ? 1.0 : 0.0;
    r.covariates = {x1, ind};
    if (add_noise_column) r.covariates.push_back(norm(rng));
    double u0 = -0.5 + 0.8 * x1 + gumbel();
    double u1 = 0.2 - 0.4 * ind + gumbel();
    double u2 = gumbel();
    r.severity = u0 >= u1 && u0 >= u2
                     ? SeverityClass::Major
                     : (u1 >= u2 ? SeverityClass::Minor : SeverityClass::PossibleNo);
    d.records.push_back(r);
  }
  return d;
}

ModelSpec mnl_spec(bool with_noise = false) {
  ModelSpec spec;
  spec.terms = {
      {SeverityClass::Major, "", "asc_major"},
      {SeverityClass::Minor, "", "asc_minor"},
      {SeverityClass::Major, "x1", "b_x1_major"},
      {SeverityClass::Minor, "ind", "b_ind_minor"},
  };
  if (with_noise) spec.terms.push_back({SeverityClass::Major, "noise", "b_noise"});
  return spec;
}

}  // namespace

TEST_CASE("goodness-of-fit helpers") {
  CHECK(mcfadden_rho2(-4290.0, -16860.0) == Catch::Approx(1.0 - 4290.0 / 16860.0));
  CHECK_THROWS_AS(mcfadden_rho2(-10.0, -5.0), std::domain_error);   // below restricted
  CHECK_THROWS_AS(mcfadden_rho2(5.0, -10.0), std::domain_error);    // positive LL

  CHECK(two_tailed_normal_p(1.959964) == Catch::Approx(0.05).margin(1e-6));
  CHECK(two_tailed_normal_p(1.73) == Catch::Approx(0.08363).margin(1e-5));
  CHECK(two_tailed_normal_p(2.41) == Catch::Approx(0.01595).margin(1e-5));
  CHECK(two_tailed_normal_p(-2.41) == two_tailed_normal_p(2.41));
  CHECK(two_tailed_normal_p(0.0) == Catch::Approx(1.0));
}

TEST_CASE("restricted log-likelihood is the class-share benchmark") {
  Dataset d = simulated_mnl_data(100, 3);
  ModelSpec spec = mnl_spec();
  std::array<std::size_t, 3> counts{};
  for (const CrashRecord& r : d.records) ++counts[static_cast<int>(r.severity)];
  double manual = 0.0;
  for (std::size_t c : counts) manual += c * std::log(c / 100.0);
  CHECK(detail::restricted_log_likelihood(d, spec) == Catch::Approx(manual));

  Dataset one_class = d;
  for (CrashRecord& r : one_class.records) r.severity = SeverityClass::Major;
  CHECK_THROWS_AS(detail::restricted_log_likelihood(one_class, spec), std::domain_error);
}

TEST_CASE("mnl fit recovers generating coefficients") {
  Dataset d = simulated_mnl_data(20000, 2024);
  FitResult fit = fit_mnl(d, mnl_spec());

  CHECK(fit.convergence.converged);
  CHECK(fit.estimates.fixed.at("asc_major") == Catch::Approx(-0.5).margin(0.07));
  CHECK(fit.estimates.fixed.at("asc_minor") == Catch::Approx(0.2).margin(0.07));
  CHECK(fit.estimates.fixed.at("b_x1_major") == Catch::Approx(0.8).margin(0.07));
  CHECK(fit.estimates.fixed.at("b_ind_minor") == Catch::Approx(-0.4).margin(0.09));

  CHECK(fit.ll_converged < 0.0);
  CHECK(fit.ll_converged > fit.ll_restricted);
  CHECK(fit.rho2 == Catch::Approx(1.0 - fit.ll_converged / fit.ll_restricted));
  CHECK(fit.rho2 > 0.0);
  CHECK(fit.rho2 < 1.0);
  CHECK_FALSE(fit.covariance_pseudo_inverse);

  REQUIRE(fit.param_names.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(fit.std_errors[i] > 0.0);
    CHECK(fit.p_values[i] >= 0.0);
    CHECK(fit.p_values[i] <= 1.0);
    CHECK(fit.t_stats[i] == Catch::Approx(fit.theta[i] / fit.std_errors[i]));
  }
  // strong true effects register as significant at any common level
  CHECK(std::fabs(fit.t_stats[2]) > 5.0);

  // covariance is symmetric with positive diagonal
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(fit.covariance(i, j) == Catch::Approx(fit.covariance(j, i)).margin(1e-12));
}

TEST_CASE("fit dispatch and argument screening") {
  Dataset d = simulated_mnl_data(500, 5);
  ModelSpec fixed = mnl_spec();
  ModelSpec random = mnl_spec();
  random.random_ids = {"b_x1_major"};

  CHECK_THROWS_AS(fit_mnl(d, random), std::invalid_argument);
  CHECK_THROWS_AS(fit_mixed_logit(d, fixed), std::invalid_argument);
}

TEST_CASE("pinned-spread mixed fit collapses to the closed-form fit") {
  Dataset d = simulated_mnl_data(2000, 8);
  ModelSpec random = mnl_spec();
  random.random_ids = {"b_x1_major"};
  FitOptions opt;
  opt.pin_spread_to_zero = true;

  FitResult pinned = fit_mixed_logit(d, random, 25, 10, opt);
  FitResult plain = fit_mnl(d, mnl_spec());

  CHECK(pinned.estimates.random.at("b_x1_major").spread == 0.0);
  CHECK(pinned.ll_converged == Catch::Approx(plain.ll_converged).margin(1e-5));
  CHECK(pinned.estimates.random.at("b_x1_major").mean ==
        Catch::Approx(plain.estimates.fixed.at("b_x1_major")).margin(1e-3));
}

TEST_CASE("small mixed logit fit converges with sensible output") {
  Dataset d = simulated_mnl_data(2000, 17);
  ModelSpec random = mnl_spec();
  random.random_ids = {"b_x1_major"};
  FitResult fit = fit_mixed_logit(d, random, 50, 10);

  CHECK(fit.convergence.converged);
  CHECK(fit.n_draws == 50);
  CHECK(fit.discard == 10);
  const RandomCoef& rc = fit.estimates.random.at("b_x1_major");
  CHECK(rc.spread >= 0.0);  // reported as |spread|
  CHECK(std::isfinite(rc.mean));
  CHECK(fit.param_names == std::vector<std::string>{"asc_major", "asc_minor",
                                                    "b_x1_major.mean", "b_x1_major.sd",
                                                    "b_ind_minor"});
  CHECK(fit.ll_converged > fit.ll_restricted);
}

TEST_CASE("retention screen flags weak coefficients") {
  Dataset d = simulated_mnl_data(20000, 99, /*add_noise_column=*/true);
  FitResult fit = fit_mnl(d, mnl_spec(true));

  std::vector<RetentionFlag> flags = refine_specification(fit, 0.90);
  bool noise_flagged = false;
  for (const RetentionFlag& f : flags) {
    CHECK(std::fabs(f.t_stat) < std_normal_quantile(0.95));
    if (f.coef_id == "b_noise") {
      noise_flagged = true;
      CHECK(f.action == RetentionFlag::Action::DropFixed);
    }
    CHECK(f.coef_id != "b_x1_major");  // strong effect never flagged
  }
  CHECK(noise_flagged);
}

TEST_CASE("backward elimination reaches a clean specification") {
  Dataset d = simulated_mnl_data(20000, 99, /*add_noise_column=*/true);
  RefinementResult res = refine_to_fixpoint(d, mnl_spec(true), 0.90);

  CHECK(std::find(res.dropped.begin(), res.dropped.end(), "b_noise") !=
        res.dropped.end());
  CHECK(refine_specification(res.fit, 0.90).empty());
  for (const Term& t : res.fit.spec.terms) CHECK(t.coef_id != "b_noise");
}

TEST_CASE("estimation failure carries the best point found") {
  Dataset d = simulated_mnl_data(400, 21);
  // a column that perfectly separates one class drives the coefficient out
  d.covariate_names.push_back("sep");
  d.covariate_kinds.push_back(CovariateKind::Indicator);
  for (CrashRecord& r : d.records)
    r.covariates.push_back(r.severity == SeverityClass::Major ? 1.0 : 0.0);
  ModelSpec spec = mnl_spec();
  spec.terms.push_back({SeverityClass::Major, "sep", "b_sep"});

  try {
    FitOptions opt;
    opt.max_iterations = 200;
    fit_mnl(d, spec, opt);
    // convergence here would mean the diagnostic has nothing to report
  } catch (const EstimationError& e) {
    CHECK_FALSE(e.best_point.empty());
    CHECK(std::string(e.what()).find("separate") != std::string::npos);
  }
}
