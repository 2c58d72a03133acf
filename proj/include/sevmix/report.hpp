#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "sevmix/config.hpp"
#include "sevmix/domain.hpp"
#include "sevmix/estimate.hpp"
#include "sevmix/inference.hpp"
#include "sevmix/modeltests.hpp"

namespace sevmix {

namespace fmt {
inline std::string num(double v, int dp) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", dp, v);
  return buf;
}
inline std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace fmt

// ---- descriptive statistics -------------------------------------------

inline std::string describe_markdown(const std::string& segment,
                                     const DescriptiveStats& stats) {
  std::ostringstream out;
  out << "## Segment: " << segment << "\n\n";
  out << "Observations: " << stats.n << "\n\n";
  out << "| Severity class | Share |\n|---|---|\n";
  const char* names[3] = {"Major injury", "Minor injury", "Possible/no injury"};
  for (int i = 0; i < 3; ++i)
    out << "| " << names[i] << " | " << fmt::num(stats.severity_share_percent[i], 1)
        << "% |\n";
  out << "\n| Variable | Share / Mean | Standard deviation | Minimum | Maximum |\n";
  out << "|---|---|---|---|---|\n";
  for (const CovariateStats& cs : stats.covariates) {
    if (cs.kind == CovariateKind::Indicator) {
      out << "| " << cs.name << " | " << fmt::num(cs.share_percent, 1)
          << "% | - | - | - |\n";
    } else {
      out << "| " << cs.name << " | " << fmt::num(cs.mean, 1) << " | "
          << fmt::num(cs.sd, 1) << " | " << fmt::num(cs.min, 1) << " | "
          << fmt::num(cs.max, 1) << " |\n";
    }
  }
  out << "\n";
  return out.str();
}

inline std::string describe_csv(const std::string& segment,
                                const DescriptiveStats& stats) {
  std::ostringstream out;
  out << "segment,variable,kind,share_percent,mean,sd,min,max\n";
  const char* names[3] = {"major", "minor", "possible_no"};
  for (int i = 0; i < 3; ++i)
    out << segment << ",severity_" << names[i] << ",share,"
        << fmt::full(stats.severity_share_percent[i]) << ",,,,\n";
  for (const CovariateStats& cs : stats.covariates) {
    if (cs.kind == CovariateKind::Indicator) {
      out << segment << "," << cs.name << ",indicator," << fmt::full(cs.share_percent)
          << ",,,,\n";
    } else {
      out << segment << "," << cs.name << ",continuous,," << fmt::full(cs.mean) << ","
          << fmt::full(cs.sd) << "," << fmt::full(cs.min) << "," << fmt::full(cs.max)
          << "\n";
    }
  }
  return out.str();
}

// ---- fit tables ---------------------------------------------------------

inline std::string severity_heading(SeverityClass c) {
  switch (c) {
    case SeverityClass::Major: return "Defined for major injury";
    case SeverityClass::Minor: return "Defined for minor injury";
    case SeverityClass::PossibleNo: return "Defined for possible/no injury";
  }
  return "?";
}

inline std::string fit_markdown(const std::string& segment, const FitResult& fit,
                                const MarginalEffectsTable& effects,
                                const std::vector<RetentionFlag>& flags) {
  ParamLayout lay = ParamLayout::build(fit.spec);
  std::ostringstream out;
  out << "## Model: " << segment << "\n\n";
  out << "| Variable | Coefficient | t-statistic | p-value";
  for (SeverityClass a : fit.spec.alternatives)
    out << " | ME " << severity_name(a);
  out << " |\n|---|---|---|---|---|---|---|\n";

  auto effects_for = [&](const Term& t) -> const MarginalEffectsRow* {
    for (const MarginalEffectsRow& row : effects.rows)
      if (row.coef_id == t.coef_id && row.covariate == t.covariate &&
          row.home_alternative == fit.spec.alt_index(t.alternative))
        return &row;
    return nullptr;
  };

  for (SeverityClass alt : fit.spec.alternatives) {
    bool any = false;
    for (const Term& t : fit.spec.terms)
      if (t.alternative == alt) any = true;
    if (!any) continue;
    out << "| *" << severity_heading(alt) << "* | | | | | | |\n";
    for (const Term& t : fit.spec.terms) {
      if (t.alternative != alt) continue;
      int ci = lay.coef_index(t.coef_id);
      std::string label = t.is_constant() ? "Constant" : t.covariate;
      std::string coef_cell, t_cell, p_cell;
      if (lay.random_flag[ci]) {
        label += " (standard deviation of parameter distribution)";
        coef_cell = fmt::num(fit.theta[lay.slot[ci]], 2) + " (" +
                    fmt::num(fit.theta[lay.sigma_slot[ci]], 2) + ")";
        t_cell = fmt::num(fit.t_stats[lay.slot[ci]], 2) + " (" +
                 fmt::num(fit.t_stats[lay.sigma_slot[ci]], 2) + ")";
        p_cell = fmt::num(fit.p_values[lay.slot[ci]], 3) + " (" +
                 fmt::num(fit.p_values[lay.sigma_slot[ci]], 3) + ")";
      } else {
        coef_cell = fmt::num(fit.theta[lay.slot[ci]], 2);
        t_cell = fmt::num(fit.t_stats[lay.slot[ci]], 2);
        p_cell = fmt::num(fit.p_values[lay.slot[ci]], 3);
      }
      out << "| " << label << " | " << coef_cell << " | " << t_cell << " | " << p_cell;
      const MarginalEffectsRow* me = effects_for(t);
      for (std::size_t a = 0; a < fit.spec.n_alternatives(); ++a)
        out << " | " << (me ? fmt::num(me->effects[a], 4) : std::string("-"));
      out << " |\n";
    }
  }

  out << "\n**Model statistics**\n\n";
  out << "- Number of observations: " << fit.n_obs << "\n";
  out << "- Restricted log-likelihood (constant only): "
      << fmt::num(fit.ll_restricted, 2) << "\n";
  out << "- Log-likelihood at convergence: " << fmt::num(fit.ll_converged, 2) << "\n";
  out << "- McFadden pseudo R-squared: " << fmt::num(fit.rho2, 3) << "\n";
  if (fit.n_draws > 0) out << "- Halton draws: " << fit.n_draws << "\n";

  for (const auto& [id, rc] : fit.estimates.random) {
    if (rc.spread > 0.0) {
      NormalShares s = share_positive(rc.mean, rc.spread);
      out << "- " << id << ": " << fmt::num(100.0 * s.positive, 1)
          << "% of observations above zero, " << fmt::num(100.0 * s.negative, 1)
          << "% below\n";
    }
  }
  if (!flags.empty()) {
    out << "\n**Retention flags (|t| below threshold)**\n\n";
    for (const RetentionFlag& f : flags)
      out << "- " << f.coef_id << " (t = " << fmt::num(f.t_stat, 2) << "): "
          << (f.action == RetentionFlag::Action::DropFixed ? "candidate for removal"
                                                            : "demote to fixed")
          << "\n";
  }
  out << "\n";
  return out.str();
}

inline std::string fit_csv(const std::string& segment, const FitResult& fit,
                           const MarginalEffectsTable& effects) {
  ParamLayout lay = ParamLayout::build(fit.spec);
  std::ostringstream out;
  out << "segment,parameter,alternative,estimate,std_error,t_stat,p_value";
  for (SeverityClass a : fit.spec.alternatives) out << ",me_" << severity_name(a);
  out << "\n";
  auto effects_for = [&](const Term& t) -> const MarginalEffectsRow* {
    for (const MarginalEffectsRow& row : effects.rows)
      if (row.coef_id == t.coef_id && row.covariate == t.covariate &&
          row.home_alternative == fit.spec.alt_index(t.alternative))
        return &row;
    return nullptr;
  };
  auto emit = [&](const Term& t, int slot, const std::string& suffix) {
    out << segment << "," << t.coef_id << suffix << "," << severity_name(t.alternative)
        << "," << fmt::full(fit.theta[slot]) << "," << fmt::full(fit.std_errors[slot])
        << "," << fmt::full(fit.t_stats[slot]) << "," << fmt::full(fit.p_values[slot]);
    const MarginalEffectsRow* me = effects_for(t);
    for (std::size_t a = 0; a < fit.spec.n_alternatives(); ++a)
      out << "," << (me && suffix.empty() ? fmt::full(me->effects[a]) : std::string());
    out << "\n";
  };
  for (const Term& t : fit.spec.terms) {
    int ci = lay.coef_index(t.coef_id);
    emit(t, lay.slot[ci], "");
    if (lay.random_flag[ci]) emit(t, lay.sigma_slot[ci], ".sd");
  }
  out << segment << ",_n_obs,," << fit.n_obs << ",,,";
  for (std::size_t a = 0; a < fit.spec.n_alternatives(); ++a) out << ",";
  out << "\n";
  out << segment << ",_ll_restricted,," << fmt::full(fit.ll_restricted) << ",,,";
  for (std::size_t a = 0; a < fit.spec.n_alternatives(); ++a) out << ",";
  out << "\n";
  out << segment << ",_ll_converged,," << fmt::full(fit.ll_converged) << ",,,";
  for (std::size_t a = 0; a < fit.spec.n_alternatives(); ++a) out << ",";
  out << "\n";
  out << segment << ",_rho2,," << fmt::full(fit.rho2) << ",,,";
  for (std::size_t a = 0; a < fit.spec.n_alternatives(); ++a) out << ",";
  out << "\n";
  return out.str();
}

inline json fit_to_json(const std::string& segment, const FitResult& fit,
                        const MarginalEffectsTable& effects,
                        const std::vector<RetentionFlag>& flags) {
  json j;
  j["segment"] = segment;
  j["model"] = model_to_json(fit.spec);
  j["parameters"] = parameters_to_json(fit.estimates);
  j["n_obs"] = fit.n_obs;
  j["n_draws"] = fit.n_draws;
  j["discard"] = fit.discard;
  j["ll_restricted"] = fit.ll_restricted;
  j["ll_converged"] = fit.ll_converged;
  j["rho2"] = fit.rho2;
  j["convergence"] = {{"iterations", fit.convergence.iterations},
                      {"grad_norm", fit.convergence.grad_norm},
                      {"converged", fit.convergence.converged},
                      {"status", fit.convergence.status}};
  j["free_parameters"] = json::array();
  for (std::size_t i = 0; i < fit.param_names.size(); ++i) {
    j["free_parameters"].push_back({{"name", fit.param_names[i]},
                                    {"estimate", fit.theta[static_cast<int>(i)]},
                                    {"std_error", fit.std_errors[static_cast<int>(i)]},
                                    {"t_stat", fit.t_stats[static_cast<int>(i)]},
                                    {"p_value", fit.p_values[static_cast<int>(i)]}});
  }
  j["marginal_effects"] = json::array();
  for (const MarginalEffectsRow& row : effects.rows) {
    json r = {{"covariate", row.covariate},
              {"coefficient", row.coef_id},
              {"home_alternative", severity_name(fit.spec.alternatives[row.home_alternative])}};
    r["effects"] = row.effects;
    j["marginal_effects"].push_back(r);
  }
  j["retention_flags"] = json::array();
  for (const RetentionFlag& f : flags)
    j["retention_flags"].push_back(
        {{"coefficient", f.coef_id},
         {"t_stat", f.t_stat},
         {"action", f.action == RetentionFlag::Action::DropFixed ? "drop" : "demote"}});
  for (const auto& [id, rc] : fit.estimates.random) {
    if (rc.spread > 0.0) {
      NormalShares s = share_positive(rc.mean, rc.spread);
      j["normal_shares"][id] = {{"positive", s.positive}, {"negative", s.negative}};
    }
  }
  return j;
}

// ---- battery report ------------------------------------------------------

inline std::string battery_markdown(const BatteryReport& report) {
  std::ostringstream out;
  out << "## Model specification tests\n\n";
  if (!report.note.empty()) {
    out << report.note << "\n";
    return out.str();
  }
  out << "### (a) Partition tests\n\n";
  out << "| Pooled data | LL pooled | Segment LLs | LR | df | Critical value | "
         "Comment |\n|---|---|---|---|---|---|---|\n";
  for (const BatteryReport::PartitionRow& row : report.partition_tests) {
    out << "| " << row.label << " | " << fmt::num(row.ll_pooled, 2) << " | ";
    for (std::size_t i = 0; i < row.segment_lls.size(); ++i) {
      if (i) out << "; ";
      out << row.segment_lls[i].first << " " << fmt::num(row.segment_lls[i].second, 2);
    }
    out << " | " << fmt::num(row.test.statistic, 2) << " | " << row.test.df << " | "
        << fmt::num(row.test.critical_value, 2) << " | "
        << (row.test.reject_null ? "LR > chi2" : "LR <= chi2") << " |\n";
  }
  out << "\n### (b) Transfer tests\n\n";
  for (const BatteryReport::TransferBlock& block : report.transfer_blocks) {
    out << "Area: " << block.area << "\n\n| k1 \\ k2 |";
    for (const std::string& k : block.keys) out << " " << k << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < block.keys.size(); ++i) out << "---|";
    out << "\n";
    for (std::size_t i = 0; i < block.keys.size(); ++i) {
      out << "| " << block.keys[i] << " |";
      for (std::size_t jx = 0; jx < block.keys.size(); ++jx) {
        const BatteryReport::TransferCell& c = block.cells[i][jx];
        if (!c.evaluable) out << " not evaluable |";
        else if (i == jx) out << " 0 |";
        else out << " " << fmt::num(c.statistic, 0) << " (df = " << c.df << ") |";
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

inline std::string battery_csv(const BatteryReport& report) {
  std::ostringstream out;
  out << "kind,label,k1,k2,statistic,df,critical_value,reject\n";
  for (const BatteryReport::PartitionRow& row : report.partition_tests)
    out << "partition," << row.label << ",,," << fmt::full(row.test.statistic) << ","
        << row.test.df << "," << fmt::full(row.test.critical_value) << ","
        << (row.test.reject_null ? 1 : 0) << "\n";
  for (const BatteryReport::TransferBlock& block : report.transfer_blocks) {
    for (std::size_t i = 0; i < block.keys.size(); ++i)
      for (std::size_t j = 0; j < block.keys.size(); ++j) {
        const BatteryReport::TransferCell& c = block.cells[i][j];
        out << "transfer," << block.area << "," << block.keys[i] << "," << block.keys[j]
            << "," << (c.evaluable ? fmt::full(c.statistic) : std::string("NA")) << ","
            << c.df << "," << (c.evaluable ? fmt::full(c.critical_value) : std::string("NA"))
            << "," << (c.reject ? 1 : 0) << "\n";
      }
  }
  return out.str();
}

}  // namespace sevmix
