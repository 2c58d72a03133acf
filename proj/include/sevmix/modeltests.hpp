#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sevmix/estimate.hpp"
#include "sevmix/model.hpp"
#include "sevmix/numeric.hpp"

namespace sevmix {

struct TestResult {
  double statistic = 0.0;
  int df = 0;
  double critical_value = 0.0;
  double confidence = 0.0;
  bool reject_null = false;
  std::string inputs_digest;
  bool pseudo_inverse_used = false;
};

// -2 [ LL_pooled - sum_j LL_j ] against chi2 with df = sum_j p_j - p_pooled.
inline TestResult lr_partition_test(const FitResult& full,
                                    const std::vector<FitResult>& subgroups,
                                    double confidence = 0.99) {
  if (subgroups.empty())
    throw std::invalid_argument("lr_partition_test: no subgroup fits");
  double sum_ll = 0.0;
  int sum_params = 0;
  std::string digest = "full=" + std::to_string(full.ll_converged);
  for (const FitResult& f : subgroups) {
    sum_ll += f.ll_converged;
    sum_params += static_cast<int>(f.theta.size());
    digest += ";" + std::to_string(f.ll_converged);
  }
  int df = sum_params - static_cast<int>(full.theta.size());
  if (df < 1)
    throw std::invalid_argument("lr_partition_test: degenerate partition (df < 1)");
  double stat = -2.0 * (full.ll_converged - sum_ll);
  if (stat < -1e-6 * std::max(1.0, std::fabs(full.ll_converged)))
    throw ConsistencyError(
        "lr_partition_test: subgroup log-likelihoods below the pooled fit");
  if (stat < 0.0) stat = 0.0;
  TestResult res;
  res.statistic = stat;
  res.df = df;
  res.confidence = confidence;
  res.critical_value = chi_square_quantile(df, confidence);
  res.reject_null = res.statistic > res.critical_value;
  res.inputs_digest = digest;
  return res;
}

// -2 [ LL(k2's parameters on k1's data) - LL(k1's parameters on k1's data) ]
// with df = number of estimated parameters in the transferred model. Both
// log-likelihoods are evaluated here so that k1 == k2 gives exactly zero.
inline TestResult lr_transfer_test(const FitResult& fit_k1, const Dataset& data_k1,
                                   const FitResult& fit_k2, double confidence = 0.99) {
  auto eval_ll = [&](const FitResult& fit) {
    ParamLayout lay = ParamLayout::build(fit.spec);
    if (lay.n_random > 0) {
      DrawMatrix draws = make_draws(data_k1.records.size(),
                                    fit.n_draws > 0 ? fit.n_draws : 500,
                                    lay.n_random, fit.discard);
      return log_likelihood(data_k1, fit.spec, fit.estimates, &draws).total;
    }
    return log_likelihood(data_k1, fit.spec, fit.estimates).total;
  };
  double ll_native = eval_ll(fit_k1);
  double ll_transferred = eval_ll(fit_k2);
  TestResult res;
  res.statistic = -2.0 * (ll_transferred - ll_native);
  res.df = static_cast<int>(fit_k2.theta.size());
  res.confidence = confidence;
  res.critical_value = chi_square_quantile(res.df, confidence);
  res.reject_null = res.statistic > res.critical_value;
  res.inputs_digest = "native=" + std::to_string(ll_native) +
                      ";transferred=" + std::to_string(ll_transferred);
  return res;
}

// Drops one non-base alternative and its observations; the restricted spec
// keeps only terms on the remaining alternatives.
struct RestrictedProblem {
  Dataset data;
  ModelSpec spec;
};

inline RestrictedProblem restrict_to_alternatives(const Dataset& data,
                                                  const ModelSpec& spec,
                                                  SeverityClass dropped) {
  if (dropped == spec.base_alternative)
    throw std::invalid_argument("cannot drop the base alternative");
  RestrictedProblem out;
  out.spec = spec;
  out.spec.alternatives.clear();
  for (SeverityClass a : spec.alternatives)
    if (a != dropped) out.spec.alternatives.push_back(a);
  out.spec.terms.clear();
  for (const Term& t : spec.terms)
    if (t.alternative != dropped) out.spec.terms.push_back(t);
  out.spec.random_ids.clear();
  for (const std::string& id : spec.random_ids)
    for (const Term& t : out.spec.terms)
      if (t.coef_id == id) {
        out.spec.random_ids.push_back(id);
        break;
      }
  out.data.covariate_names = data.covariate_names;
  out.data.covariate_kinds = data.covariate_kinds;
  for (const CrashRecord& rec : data.records)
    if (rec.severity != dropped) out.data.records.push_back(rec);
  return out;
}

// Hausman-McFadden IIA test over the parameters shared between the full and
// restricted fits. A non-positive-definite variance difference falls back to
// an eigenvalue pseudo-inverse with the rank as df.
inline TestResult hausman_iia_test(const FitResult& full_fit,
                                   const FitResult& restricted_fit,
                                   double confidence = 0.95) {
  std::vector<int> idx_full, idx_restr;
  for (std::size_t i = 0; i < restricted_fit.param_names.size(); ++i) {
    for (std::size_t j = 0; j < full_fit.param_names.size(); ++j) {
      if (restricted_fit.param_names[i] == full_fit.param_names[j]) {
        idx_restr.push_back(static_cast<int>(i));
        idx_full.push_back(static_cast<int>(j));
        break;
      }
    }
  }
  const int k = static_cast<int>(idx_full.size());
  if (k == 0)
    throw std::invalid_argument("hausman_iia_test: no shared parameters");

  Eigen::VectorXd d(k);
  Eigen::MatrixXd vdiff(k, k);
  for (int i = 0; i < k; ++i) {
    d[i] = restricted_fit.theta[idx_restr[i]] - full_fit.theta[idx_full[i]];
    for (int j = 0; j < k; ++j)
      vdiff(i, j) = restricted_fit.covariance(idx_restr[i], idx_restr[j]) -
                    full_fit.covariance(idx_full[i], idx_full[j]);
  }

  TestResult res;
  res.confidence = confidence;
  res.inputs_digest = "shared=" + std::to_string(k);
  if (d.isZero(0.0)) {
    res.statistic = 0.0;
    res.df = k;
    res.critical_value = chi_square_quantile(res.df, confidence);
    res.reject_null = false;
    return res;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(vdiff);
  if (llt.info() == Eigen::Success) {
    res.statistic = d.dot(llt.solve(d));
    res.df = k;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(vdiff);
    Eigen::VectorXd ev = es.eigenvalues();
    double thresh = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(k);
    int rank = 0;
    for (int i = 0; i < k; ++i)
      if (ev[i] > thresh) {
        inv_ev[i] = 1.0 / ev[i];
        ++rank;
      }
    if (rank == 0)
      throw NumericError("hausman_iia_test: variance difference has no positive part");
    Eigen::MatrixXd pinv =
        es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
    res.statistic = d.dot(pinv * d);
    res.df = rank;
    res.pseudo_inverse_used = true;
  }
  if (res.statistic < 0.0) res.statistic = 0.0;
  res.critical_value = chi_square_quantile(res.df, confidence);
  res.reject_null = res.statistic > res.critical_value;
  return res;
}

struct BatterySettings {
  double confidence = 0.99;
  std::size_t n_draws = 500;
  std::size_t discard = 10;
  FitOptions fit_options;
};

struct BatteryReport {
  struct PartitionRow {
    std::string label;                                  // "all", "rural", "urban"
    double ll_pooled = 0.0;
    std::vector<std::pair<std::string, double>> segment_lls;
    TestResult test;
  };
  struct TransferCell {
    bool evaluable = false;
    double statistic = 0.0;
    int df = 0;
    double critical_value = 0.0;
    bool reject = false;
  };
  struct TransferBlock {
    std::string area;
    std::vector<std::string> keys;
    std::vector<std::vector<TransferCell>> cells;  // [k1][k2]
  };
  std::map<std::string, FitResult> segment_fits;
  std::vector<PartitionRow> partition_tests;
  std::vector<TransferBlock> transfer_blocks;
  std::string note;
};

// The four-test battery: pooled-vs-all-segments, pooled-vs-segments within
// each area, and all pairwise transfer tests within each area.
inline BatteryReport run_battery(
    const Dataset& data, const std::map<std::string, ModelSpec>& segment_specs,
    const ModelSpec& pooled_spec, const BatterySettings& settings = {}) {
  BatteryReport report;
  PartitionResult part = partition_dataset(data);
  if (part.segments.size() < 2) {
    report.note = "nothing to compare: fewer than two segments present";
    return report;
  }

  auto spec_for = [&](const std::string& name) -> const ModelSpec& {
    auto it = segment_specs.find(name);
    return it != segment_specs.end() ? it->second : pooled_spec;
  };
  auto fit_one = [&](const Dataset& d, const ModelSpec& spec, const std::string& what) {
    try {
      return fit_dispatch(d, spec, settings.n_draws, settings.discard,
                          settings.fit_options);
    } catch (const std::exception& e) {
      throw EstimationError("battery: fit failed for " + what + ": " + e.what());
    }
  };

  std::map<std::string, const Dataset*> seg_data;
  for (const auto& [key, seg] : part.segments) {
    std::string name = key.name();
    report.segment_fits.emplace(name, fit_one(seg, spec_for(name), name));
    seg_data.emplace(name, &seg);
  }

  auto partition_row = [&](const std::string& label, const Dataset& pooled,
                           const std::vector<std::string>& members) {
    FitResult pooled_fit = fit_one(pooled, pooled_spec, label + " pooled");
    BatteryReport::PartitionRow row;
    row.label = label;
    row.ll_pooled = pooled_fit.ll_converged;
    std::vector<FitResult> subs;
    for (const std::string& m : members) {
      subs.push_back(report.segment_fits.at(m));
      row.segment_lls.emplace_back(m, subs.back().ll_converged);
    }
    row.test = lr_partition_test(pooled_fit, subs, settings.confidence);
    report.partition_tests.push_back(std::move(row));
  };

  std::vector<std::string> all_names;
  std::map<std::string, std::vector<std::string>> by_area;
  for (const auto& [key, seg] : part.segments) {
    all_names.push_back(key.name());
    by_area[area_name(key.area)].push_back(key.name());
  }
  partition_row("all", data, all_names);
  for (const auto& [area, members] : by_area) {
    if (members.size() < 2) continue;
    Dataset pooled;
    pooled.covariate_names = data.covariate_names;
    pooled.covariate_kinds = data.covariate_kinds;
    for (const std::string& m : members)
      for (const CrashRecord& rec : seg_data.at(m)->records)
        pooled.records.push_back(rec);
    partition_row(area, pooled, members);
  }

  for (const auto& [area, members] : by_area) {
    if (members.size() < 2) continue;
    BatteryReport::TransferBlock block;
    block.area = area;
    block.keys = members;
    block.cells.resize(members.size(),
                       std::vector<BatteryReport::TransferCell>(members.size()));
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = 0; j < members.size(); ++j) {
        BatteryReport::TransferCell& cell = block.cells[i][j];
        try {
          TestResult t = lr_transfer_test(report.segment_fits.at(members[i]),
                                          *seg_data.at(members[i]),
                                          report.segment_fits.at(members[j]),
                                          settings.confidence);
          cell.evaluable = true;
          cell.statistic = i == j ? 0.0 : t.statistic;
          cell.df = t.df;
          cell.critical_value = t.critical_value;
          cell.reject = i == j ? false : t.reject_null;
        } catch (const SchemaError&) {
          cell.evaluable = false;  // covariate missing in k1's data
        }
      }
    }
    report.transfer_blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace sevmix
