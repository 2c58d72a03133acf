#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sevmix/model.hpp"
#include "sevmix/numeric.hpp"

namespace sevmix {

struct ConvergenceReport {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::string status;
};

struct FitResult {
  ModelSpec spec;
  ParameterVector estimates;          // spreads reported as absolute values
  std::vector<std::string> param_names;
  Eigen::VectorXd theta;              // packed free parameters
  Eigen::MatrixXd covariance;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd t_stats;
  Eigen::VectorXd p_values;
  double ll_converged = 0.0;
  double ll_restricted = 0.0;
  double rho2 = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_draws = 0;
  std::size_t discard = 0;
  std::size_t underflow_count = 0;
  bool covariance_pseudo_inverse = false;
  ConvergenceReport convergence;
};

struct FitOptions {
  int max_iterations = 500;
  double grad_tol = 1e-6;   // relative gradient norm
  double step_tol = 1e-8;
  double sigma_start = 0.5;
  bool pin_spread_to_zero = false;  // degenerate-mixing mode for testing
};

inline double mcfadden_rho2(double ll_converged, double ll_restricted) {
  if (!(ll_converged < 0.0) || !(ll_restricted < 0.0))
    throw std::domain_error("mcfadden_rho2: log-likelihoods must be negative");
  if (ll_converged < ll_restricted - 1e-9)
    throw std::domain_error("mcfadden_rho2: converged LL below restricted LL");
  return 1.0 - ll_converged / ll_restricted;
}

inline double two_tailed_normal_p(double t) {
  return 2.0 * (1.0 - std_normal_cdf(std::fabs(t)));
}

namespace detail {

// Restricted (constant-only) log-likelihood: sum_i n_i ln(n_i / N) over the
// spec's alternative set.
inline double restricted_log_likelihood(const Dataset& data, const ModelSpec& spec) {
  std::vector<std::size_t> counts(spec.n_alternatives(), 0);
  for (const CrashRecord& rec : data.records) {
    int idx = spec.alt_index(rec.severity);
    if (idx < 0) throw std::domain_error("restricted LL: severity not in alternative set");
    ++counts[idx];
  }
  double N = static_cast<double>(data.records.size());
  double ll = 0.0;
  for (std::size_t c : counts) {
    if (c == 0)
      throw std::domain_error("fit: an alternative is never chosen in the data");
    ll += static_cast<double>(c) * std::log(static_cast<double>(c) / N);
  }
  return ll;
}

struct BfgsResult {
  Eigen::VectorXd theta;
  double ll = 0.0;
  Eigen::VectorXd grad;
  ConvergenceReport report;
};

// Maximizes ll via BFGS with backtracking line search. eval fills the
// gradient and returns the log-likelihood; mask zeroes pinned components.
inline BfgsResult bfgs_maximize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& eval,
    Eigen::VectorXd theta, const FitOptions& opt,
    const std::vector<int>& pinned = {}) {
  const int P = static_cast<int>(theta.size());
  auto apply_mask = [&](Eigen::VectorXd& v) {
    for (int i : pinned) v[i] = 0.0;
  };
  Eigen::VectorXd g(P);
  double f = eval(theta, g);
  apply_mask(g);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(P, P);  // inverse Hessian approx
  BfgsResult res;
  auto rel_grad = [&](const Eigen::VectorXd& gr, const Eigen::VectorXd& th, double fv) {
    double m = 0.0;
    for (int i = 0; i < P; ++i)
      m = std::max(m, std::fabs(gr[i]) * std::max(std::fabs(th[i]), 1.0) /
                          std::max(std::fabs(fv), 1.0));
    return m;
  };
  int it = 0;
  std::string status = "max iterations reached";
  bool converged = false;
  for (; it < opt.max_iterations; ++it) {
    double gnorm = rel_grad(g, theta, f);
    if (gnorm <= opt.grad_tol) {
      converged = true;
      status = "gradient norm below tolerance";
      break;
    }
    Eigen::VectorXd dir = H * g;  // ascent direction
    apply_mask(dir);
    double slope = g.dot(dir);
    if (!(slope > 0.0)) {
      H.setIdentity();
      dir = g;
      slope = g.dot(g);
      if (!(slope > 0.0)) {
        converged = true;
        status = "zero gradient";
        break;
      }
    }
    double step = 1.0;
    double f_new = f;
    Eigen::VectorXd theta_new, g_new(P);
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      theta_new = theta + step * dir;
      f_new = eval(theta_new, g_new);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * slope) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      status = "line search failed";
      break;
    }
    apply_mask(g_new);
    Eigen::VectorXd s = theta_new - theta;
    Eigen::VectorXd y = g - g_new;  // gradient of -f increases
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      Eigen::VectorXd Hy = H * y;
      double yHy = y.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
    double step_size = s.cwiseAbs().maxCoeff();
    theta = theta_new;
    f = f_new;
    g = g_new;
    if (step_size <= opt.step_tol) {
      converged = true;
      status = "step size below tolerance";
      break;
    }
  }
  res.theta = theta;
  res.ll = f;
  res.grad = g;
  res.report.iterations = it;
  res.report.grad_norm = rel_grad(g, theta, f);
  res.report.converged = converged;
  res.report.status = status;
  return res;
}

// Hessian of the log-likelihood by central differences of the analytic
// gradient; h_j = 1e-5 * max(1, |theta_j|).
inline Eigen::MatrixXd fd_hessian(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& eval,
    const Eigen::VectorXd& theta) {
  const int P = static_cast<int>(theta.size());
  Eigen::MatrixXd H(P, P);
  Eigen::VectorXd gp(P), gm(P);
  for (int j = 0; j < P; ++j) {
    double h = 1e-5 * std::max(1.0, std::fabs(theta[j]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    eval(tp, gp);
    eval(tm, gm);
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

// Covariance = inverse of the negative Hessian; eigenvalue-clipped
// pseudo-inverse when that matrix is not positive definite.
inline Eigen::MatrixXd covariance_from_hessian(const Eigen::MatrixXd& hessian,
                                               bool* used_pseudo) {
  Eigen::MatrixXd negH = -hessian;
  Eigen::LLT<Eigen::MatrixXd> llt(negH);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd cov =
        llt.solve(Eigen::MatrixXd::Identity(negH.rows(), negH.cols()));
    if ((cov.diagonal().array() >= 0.0).all()) {
      if (used_pseudo) *used_pseudo = false;
      return 0.5 * (cov + cov.transpose());
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(negH);
  Eigen::VectorXd ev = es.eigenvalues();
  double thresh = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(ev.size());
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] > thresh) inv_ev[i] = 1.0 / ev[i];
  if (used_pseudo) *used_pseudo = true;
  return es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
}

inline FitResult finalize_fit(const Dataset& data, const ModelSpec& spec,
                              const LikelihoodEvaluator& ev, BfgsResult bfgs,
                              std::size_t n_draws, std::size_t discard,
                              const FitOptions& opt) {
  const ParamLayout& lay = ev.compiled().layout;
  FitResult fit;
  fit.spec = spec;
  fit.param_names = lay.free_names();
  fit.n_obs = data.records.size();
  fit.n_draws = n_draws;
  fit.discard = discard;
  fit.convergence = bfgs.report;

  // Spreads are sign-free: report them as absolute values.
  for (std::size_t i = 0; i < lay.coef_ids.size(); ++i)
    if (lay.random_flag[i])
      bfgs.theta[lay.sigma_slot[i]] = std::fabs(bfgs.theta[lay.sigma_slot[i]]);
  fit.theta = bfgs.theta;
  fit.estimates = lay.unpack(bfgs.theta);

  auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
    return ev.evaluate(th, &g);
  };
  std::vector<double> dummy;
  std::size_t uf = 0;
  fit.ll_converged = ev.evaluate(bfgs.theta, nullptr, &dummy, &uf);
  fit.underflow_count = uf;
  fit.ll_restricted = restricted_log_likelihood(data, spec);
  fit.rho2 = 1.0 - fit.ll_converged / fit.ll_restricted;

  Eigen::MatrixXd hess = fd_hessian(eval, bfgs.theta);
  fit.covariance = covariance_from_hessian(hess, &fit.covariance_pseudo_inverse);
  const int P = lay.n_free;
  fit.std_errors.resize(P);
  fit.t_stats.resize(P);
  fit.p_values.resize(P);
  for (int i = 0; i < P; ++i) {
    double se = std::sqrt(std::max(0.0, fit.covariance(i, i)));
    fit.std_errors[i] = se;
    fit.t_stats[i] = se > 0.0 ? fit.theta[i] / se : 0.0;
    fit.p_values[i] = two_tailed_normal_p(fit.t_stats[i]);
  }
  (void)opt;
  return fit;
}

}  // namespace detail

// Closed-form-checked quasi-Newton fit of the multinomial logit model.
inline FitResult fit_mnl(const Dataset& data, const ModelSpec& spec,
                         const FitOptions& opt = {}) {
  spec.validate();
  if (!spec.random_ids.empty())
    throw std::invalid_argument("fit_mnl: spec has random coefficients; use fit_mixed_logit");
  detail::restricted_log_likelihood(data, spec);  // empty-class check
  LikelihoodEvaluator ev(data, spec);
  const int P = ev.compiled().layout.n_free;
  auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
    return ev.evaluate(th, &g);
  };
  detail::BfgsResult res =
      detail::bfgs_maximize(eval, Eigen::VectorXd::Zero(P), opt);
  if (!res.report.converged) {
    std::vector<double> best(res.theta.data(), res.theta.data() + res.theta.size());
    if (res.theta.cwiseAbs().maxCoeff() > 30.0)
      throw EstimationError(
          "fit_mnl did not converge; a covariate may perfectly separate a class "
          "(" + res.report.status + ")", best);
    throw EstimationError("fit_mnl did not converge: " + res.report.status, best);
  }
  return detail::finalize_fit(data, spec, ev, std::move(res), 0, 0, opt);
}

// Simulated maximum likelihood over (fixed betas, means, spreads). Halton
// draws are built once and held constant across iterations.
inline FitResult fit_mixed_logit(const Dataset& data, const ModelSpec& spec,
                                 std::size_t n_draws = 500, std::size_t discard = 10,
                                 const FitOptions& opt = {}) {
  spec.validate();
  if (spec.random_ids.empty())
    throw std::invalid_argument("fit_mixed_logit: spec has no random coefficients");
  detail::restricted_log_likelihood(data, spec);
  ParamLayout lay = ParamLayout::build(spec);
  DrawMatrix draws = make_draws(data.records.size(), n_draws, lay.n_random, discard);
  LikelihoodEvaluator ev(data, spec, &draws);
  auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
    return ev.evaluate(th, &g);
  };
  Eigen::VectorXd start = Eigen::VectorXd::Zero(lay.n_free);
  std::vector<int> pinned;
  for (std::size_t i = 0; i < lay.coef_ids.size(); ++i) {
    if (lay.random_flag[i]) {
      start[lay.sigma_slot[i]] = opt.pin_spread_to_zero ? 0.0 : opt.sigma_start;
      if (opt.pin_spread_to_zero) pinned.push_back(lay.sigma_slot[i]);
    }
  }
  detail::BfgsResult res = detail::bfgs_maximize(eval, start, opt, pinned);
  if (!res.report.converged) {
    std::vector<double> best(res.theta.data(), res.theta.data() + res.theta.size());
    throw EstimationError("fit_mixed_logit did not converge: " + res.report.status,
                          best);
  }
  return detail::finalize_fit(data, spec, ev, std::move(res), n_draws, discard, opt);
}

inline FitResult fit_dispatch(const Dataset& data, const ModelSpec& spec,
                              std::size_t n_draws = 500, std::size_t discard = 10,
                              const FitOptions& opt = {}) {
  return spec.random_ids.empty() ? fit_mnl(data, spec, opt)
                                 : fit_mixed_logit(data, spec, n_draws, discard, opt);
}

inline Eigen::VectorXd standard_errors(const FitResult& fit) { return fit.std_errors; }

inline std::vector<std::pair<double, double>> t_stats_pvalues(const FitResult& fit) {
  std::vector<std::pair<double, double>> out;
  out.reserve(fit.t_stats.size());
  for (int i = 0; i < fit.t_stats.size(); ++i)
    out.emplace_back(fit.t_stats[i], fit.p_values[i]);
  return out;
}

struct RetentionFlag {
  std::string coef_id;
  enum class Action { DropFixed, DemoteToFixed } action;
  double t_stat;
};

// 90%-confidence retention screen: fixed coefficients are flagged for
// dropping when |t| falls below the two-tailed threshold; random ids are
// judged on the spread's t alone and demoted to fixed when it fails.
inline std::vector<RetentionFlag> refine_specification(const FitResult& fit,
                                                       double confidence = 0.90) {
  double thr = std_normal_quantile(0.5 + 0.5 * confidence);
  ParamLayout lay = ParamLayout::build(fit.spec);
  std::vector<RetentionFlag> flags;
  for (std::size_t i = 0; i < lay.coef_ids.size(); ++i) {
    if (lay.random_flag[i]) {
      if (std::fabs(fit.t_stats[lay.sigma_slot[i]]) < thr)
        flags.push_back({lay.coef_ids[i], RetentionFlag::Action::DemoteToFixed,
                         fit.t_stats[lay.sigma_slot[i]]});
    } else {
      if (std::fabs(fit.t_stats[lay.slot[i]]) < thr)
        flags.push_back({lay.coef_ids[i], RetentionFlag::Action::DropFixed,
                         fit.t_stats[lay.slot[i]]});
    }
  }
  return flags;
}

struct RefinementResult {
  FitResult fit;
  std::vector<std::string> dropped;
  std::vector<std::string> demoted;
};

// Backward elimination: repeatedly apply the worst single flag and refit
// until every remaining parameter clears the threshold.
inline RefinementResult refine_to_fixpoint(const Dataset& data, ModelSpec spec,
                                           double confidence = 0.90,
                                           std::size_t n_draws = 500,
                                           std::size_t discard = 10,
                                           const FitOptions& opt = {}) {
  RefinementResult out;
  for (;;) {
    FitResult fit = fit_dispatch(data, spec, n_draws, discard, opt);
    std::vector<RetentionFlag> flags = refine_specification(fit, confidence);
    if (flags.empty()) {
      out.fit = std::move(fit);
      return out;
    }
    const RetentionFlag* worst = &flags[0];
    for (const RetentionFlag& f : flags)
      if (std::fabs(f.t_stat) < std::fabs(worst->t_stat)) worst = &f;
    if (worst->action == RetentionFlag::Action::DemoteToFixed) {
      spec.random_ids.erase(
          std::remove(spec.random_ids.begin(), spec.random_ids.end(), worst->coef_id),
          spec.random_ids.end());
      out.demoted.push_back(worst->coef_id);
    } else {
      spec.terms.erase(std::remove_if(spec.terms.begin(), spec.terms.end(),
                                      [&](const Term& t) {
                                        return t.coef_id == worst->coef_id;
                                      }),
                       spec.terms.end());
      out.dropped.push_back(worst->coef_id);
      if (spec.terms.empty())
        throw std::domain_error("refine_to_fixpoint: all terms eliminated");
    }
  }
}

}  // namespace sevmix
