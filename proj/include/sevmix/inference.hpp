#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sevmix/estimate.hpp"
#include "sevmix/model.hpp"
#include "sevmix/numeric.hpp"

namespace sevmix {

// [1(i = m) - P_m] * P_i * beta_k: probability-unit effect of attribute k in
// alternative m on the probability of alternative i.
inline double marginal_effect_point(std::span<const double> probabilities, double beta_k,
                                    int home_alternative, int target) {
  if (home_alternative < 0 || target < 0 ||
      home_alternative >= static_cast<int>(probabilities.size()) ||
      target >= static_cast<int>(probabilities.size()))
    throw std::invalid_argument("marginal_effect_point: alternative index out of range");
  double pm = probabilities[home_alternative];
  double pi = probabilities[target];
  double indicator = home_alternative == target ? 1.0 : 0.0;
  return (indicator - pm) * pi * beta_k;
}

struct MarginalEffectsRow {
  std::string covariate;
  std::string coef_id;
  int home_alternative;         // index into spec.alternatives
  std::vector<double> effects;  // one per alternative
};

struct MarginalEffectsTable {
  std::vector<MarginalEffectsRow> rows;
};

// Average marginal effects over the observations. Mixed fits evaluate
// probabilities by simulation and random coefficients at their means.
inline MarginalEffectsTable marginal_effects_average(const Dataset& data,
                                                     const FitResult& fit) {
  const ModelSpec& spec = fit.spec;
  CompiledModel cm = CompiledModel::build(spec, data);
  const std::size_t A = spec.n_alternatives();
  const std::size_t N = data.records.size();

  DrawMatrix draws;
  const DrawMatrix* dp = nullptr;
  if (cm.layout.n_random > 0) {
    draws = make_draws(N, fit.n_draws > 0 ? fit.n_draws : 500, cm.layout.n_random,
                       fit.discard);
    dp = &draws;
  }

  // Predicted probabilities per observation.
  std::vector<std::vector<double>> probs(N);
  Eigen::VectorXd theta = cm.layout.pack(fit.estimates);
  std::vector<double> beta, u;
  for (std::size_t n = 0; n < N; ++n) {
    if (!dp) {
      detail::realized_coefs(cm, theta, nullptr, beta);
      detail::utilities_at(cm, data, n, beta, u);
      probs[n] = mnl_probability(u);
    } else {
      std::vector<double> acc(A, 0.0);
      const double* block = dp->block(n);
      for (std::size_t r = 0; r < dp->n_draws; ++r) {
        detail::realized_coefs(cm, theta, block + r * dp->n_random, beta);
        detail::utilities_at(cm, data, n, beta, u);
        std::vector<double> p = mnl_probability(u);
        for (std::size_t a = 0; a < A; ++a) acc[a] += p[a];
      }
      for (double& v : acc) v /= static_cast<double>(dp->n_draws);
      probs[n] = std::move(acc);
    }
  }

  MarginalEffectsTable table;
  for (const Term& t : spec.terms) {
    if (t.is_constant()) continue;  // no marginal effect for constants
    double beta_k = fit.estimates.coef_mean(t.coef_id);
    int m = spec.alt_index(t.alternative);
    MarginalEffectsRow row;
    row.covariate = t.covariate;
    row.coef_id = t.coef_id;
    row.home_alternative = m;
    row.effects.assign(A, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < A; ++i)
        row.effects[i] +=
            marginal_effect_point(probs[n], beta_k, m, static_cast<int>(i));
    for (double& e : row.effects) e /= static_cast<double>(N);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Discrete-difference mode for indicator variables: average probability at
// x = 1 minus at x = 0, holding everything else fixed.
inline MarginalEffectsTable marginal_effects_discrete(const Dataset& data,
                                                      const FitResult& fit) {
  const ModelSpec& spec = fit.spec;
  CompiledModel cm = CompiledModel::build(spec, data);
  const std::size_t A = spec.n_alternatives();
  Eigen::VectorXd theta = cm.layout.pack(fit.estimates);

  auto mean_probs = [&](const Dataset& d) {
    std::vector<double> acc(A, 0.0);
    std::vector<double> beta, u;
    detail::realized_coefs(cm, theta, nullptr, beta);
    for (std::size_t n = 0; n < d.records.size(); ++n) {
      detail::utilities_at(cm, d, n, beta, u);
      std::vector<double> p = mnl_probability(u);
      for (std::size_t a = 0; a < A; ++a) acc[a] += p[a];
    }
    for (double& v : acc) v /= static_cast<double>(d.records.size());
    return acc;
  };

  MarginalEffectsTable table;
  for (const Term& t : spec.terms) {
    if (t.is_constant()) continue;
    int col = data.covariate_index(t.covariate);
    if (col < 0 || data.covariate_kinds[col] != CovariateKind::Indicator) continue;
    Dataset on = data, off = data;
    for (CrashRecord& r : on.records) r.covariates[col] = 1.0;
    for (CrashRecord& r : off.records) r.covariates[col] = 0.0;
    std::vector<double> p1 = mean_probs(on), p0 = mean_probs(off);
    MarginalEffectsRow row;
    row.covariate = t.covariate;
    row.coef_id = t.coef_id;
    row.home_alternative = spec.alt_index(t.alternative);
    row.effects.resize(A);
    for (std::size_t a = 0; a < A; ++a) row.effects[a] = p1[a] - p0[a];
    table.rows.push_back(std::move(row));
  }
  return table;
}

struct NormalShares {
  double positive;  // mass of Normal(mu, sigma^2) above zero
  double negative;
};

inline NormalShares share_positive(double mu, double sigma) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("share_positive: sigma must be positive");
  double pos = std_normal_cdf(mu / sigma);
  return {pos, 1.0 - pos};
}

}  // namespace sevmix
