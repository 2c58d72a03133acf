#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sevmix/domain.hpp"
#include "sevmix/model.hpp"
#include "sevmix/numeric.hpp"

namespace sevmix {

struct CovariateGen {
  enum class Kind { Indicator, Uniform, Normal };
  std::string name;
  Kind kind;
  double p = 0.5;            // Indicator
  double lo = 0.0, hi = 1.0; // Uniform
  double mean = 0.0, sd = 1.0;
};

struct SegmentMix {
  AreaType area = AreaType::Rural;
  LightingCode lighting = LightingCode::Daylight;
  double share = 1.0;
  std::map<std::string, double> overrides;  // coef id -> fixed value / mean
};

struct DgpSpec {
  ModelSpec spec;
  ParameterVector params;
  std::vector<CovariateGen> covariates;
  std::vector<SegmentMix> segments;  // empty => everything rural daylight
  std::uint64_t seed = 0;
};

namespace detail {

// Uniform in (0,1) from raw generator bits; inverse-CDF transforms keep the
// sampler independent of library distribution implementations.
inline double uniform01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

inline double sample_gumbel(std::mt19937_64& rng) {
  return -std::log(-std::log(uniform01(rng)));
}

inline double sample_normal(std::mt19937_64& rng) {
  return std_normal_quantile(uniform01(rng));
}

}  // namespace detail

// Forward sampling: draw covariates, realize random coefficients per
// observation, add i.i.d. Gumbel errors, record the argmax-utility severity.
inline Dataset simulate_dataset(const DgpSpec& dgp, std::size_t n) {
  if (n < 1) throw std::invalid_argument("simulate_dataset: n must be >= 1");
  dgp.spec.validate();
  for (const CovariateGen& g : dgp.covariates)
    if (g.kind == CovariateGen::Kind::Indicator && !(g.p > 0.0 && g.p < 1.0))
      throw std::invalid_argument("simulate_dataset: indicator probability not in (0,1)");

  std::vector<SegmentMix> segments = dgp.segments;
  if (segments.empty()) segments.push_back(SegmentMix{});

  Dataset ds;
  for (const CovariateGen& g : dgp.covariates) {
    ds.covariate_names.push_back(g.name);
    ds.covariate_kinds.push_back(g.kind == CovariateGen::Kind::Indicator
                                     ? CovariateKind::Indicator
                                     : CovariateKind::Continuous);
  }

  std::mt19937_64 rng(dgp.seed);
  const std::size_t A = dgp.spec.n_alternatives();
  for (std::size_t i = 0; i < n; ++i) {
    // Segment pick by cumulative share.
    double u = detail::uniform01(rng);
    const SegmentMix* seg = &segments.back();
    double cum = 0.0;
    for (const SegmentMix& s : segments) {
      cum += s.share;
      if (u <= cum) {
        seg = &s;
        break;
      }
    }

    CrashRecord rec;
    rec.area = seg->area;
    rec.lighting = seg->lighting;
    rec.covariates.reserve(dgp.covariates.size());
    for (const CovariateGen& g : dgp.covariates) {
      switch (g.kind) {
        case CovariateGen::Kind::Indicator:
          rec.covariates.push_back(detail::uniform01(rng) < g.p ? 1.0 : 0.0);
          break;
        case CovariateGen::Kind::Uniform:
          rec.covariates.push_back(g.lo + (g.hi - g.lo) * detail::uniform01(rng));
          break;
        case CovariateGen::Kind::Normal:
          rec.covariates.push_back(g.mean + g.sd * detail::sample_normal(rng));
          break;
      }
    }

    // Realized coefficient values for this observation.
    std::map<std::string, double> realized;
    for (const auto& [id, value] : dgp.params.fixed) {
      auto ov = seg->overrides.find(id);
      realized[id] = ov != seg->overrides.end() ? ov->second : value;
    }
    for (const auto& [id, rc] : dgp.params.random) {
      auto ov = seg->overrides.find(id);
      double mean = ov != seg->overrides.end() ? ov->second : rc.mean;
      realized[id] = mean + std::fabs(rc.spread) * detail::sample_normal(rng);
    }

    std::vector<double> utilities(A, 0.0);
    for (const Term& t : dgp.spec.terms) {
      double x = 1.0;
      if (!t.is_constant()) {
        int col = ds.covariate_index(t.covariate);
        if (col < 0)
          throw SchemaError("simulate_dataset: term covariate '" + t.covariate +
                            "' has no generator");
        x = rec.covariates[col];
      }
      utilities[dgp.spec.alt_index(t.alternative)] += realized.at(t.coef_id) * x;
    }
    std::size_t best = 0;
    double best_u = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < A; ++a) {
      double total = utilities[a] + detail::sample_gumbel(rng);
      if (total > best_u) {
        best_u = total;
        best = a;
      }
    }
    rec.severity = dgp.spec.alternatives[best];
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// High-accuracy evaluation of the mixing integral by a dense trapezoid grid
// over z in [-8, 8] per random dimension (weights normalized to sum 1).
// Ground truth for simulated_probability; supports one or two random ids.
inline std::vector<double> quadrature_probability_oracle(const Dataset& data,
                                                         std::size_t row,
                                                         const ModelSpec& spec,
                                                         const ParameterVector& params,
                                                         std::size_t n_nodes) {
  if (n_nodes < 100)
    throw std::invalid_argument("quadrature_probability_oracle: n_nodes must be >= 100");
  CompiledModel cm = CompiledModel::build(spec, data);
  const int D = cm.layout.n_random;
  if (D > 2)
    throw std::invalid_argument(
        "quadrature_probability_oracle: more than two random coefficients unsupported");
  Eigen::VectorXd theta = cm.layout.pack(params);
  const std::size_t A = spec.n_alternatives();
  std::vector<double> beta, u;

  if (D == 0) {
    detail::realized_coefs(cm, theta, nullptr, beta);
    detail::utilities_at(cm, data, row, beta, u);
    return mnl_probability(u);
  }

  std::vector<double> nodes(n_nodes), weights(n_nodes);
  const double lo = -8.0, hi = 8.0;
  const double h = (hi - lo) / static_cast<double>(n_nodes - 1);
  double wsum = 0.0;
  for (std::size_t k = 0; k < n_nodes; ++k) {
    nodes[k] = lo + h * static_cast<double>(k);
    double w = std_normal_pdf(nodes[k]) * h;
    if (k == 0 || k + 1 == n_nodes) w *= 0.5;
    weights[k] = w;
    wsum += w;
  }
  for (double& w : weights) w /= wsum;

  std::vector<double> acc(A, 0.0);
  double z[2];
  if (D == 1) {
    for (std::size_t k = 0; k < n_nodes; ++k) {
      z[0] = nodes[k];
      detail::realized_coefs(cm, theta, z, beta);
      detail::utilities_at(cm, data, row, beta, u);
      std::vector<double> p = mnl_probability(u);
      for (std::size_t a = 0; a < A; ++a) acc[a] += weights[k] * p[a];
    }
  } else {
    for (std::size_t k1 = 0; k1 < n_nodes; ++k1) {
      for (std::size_t k2 = 0; k2 < n_nodes; ++k2) {
        z[0] = nodes[k1];
        z[1] = nodes[k2];
        detail::realized_coefs(cm, theta, z, beta);
        detail::utilities_at(cm, data, row, beta, u);
        std::vector<double> p = mnl_probability(u);
        double w = weights[k1] * weights[k2];
        for (std::size_t a = 0; a < A; ++a) acc[a] += w * p[a];
      }
    }
  }
  return acc;
}

struct GridSearchResult {
  std::vector<double> best_point;
  double ll = -std::numeric_limits<double>::infinity();
};

// Exhaustive log-likelihood evaluation over a finite grid, used to sandwich
// the optimizer: fit_mnl's optimum must be at least as good as the grid best.
inline GridSearchResult enumerate_small_mnl(const Dataset& data, const ModelSpec& spec,
                                            const std::vector<std::vector<double>>& grid) {
  LikelihoodEvaluator ev(data, spec);
  const int P = ev.compiled().layout.n_free;
  if (static_cast<int>(grid.size()) != P)
    throw std::invalid_argument("enumerate_small_mnl: grid axes must match free parameters");
  if (P > 3)
    throw std::invalid_argument("enumerate_small_mnl: at most 3 free parameters");
  std::size_t total = 1;
  for (const auto& axis : grid) {
    if (axis.empty()) throw std::invalid_argument("enumerate_small_mnl: empty grid axis");
    total *= axis.size();
    if (total > 10'000'000)
      throw std::length_error("enumerate_small_mnl: grid too large (> 1e7 points)");
  }
  GridSearchResult res;
  Eigen::VectorXd theta(P);
  std::vector<std::size_t> idx(P, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int j = 0; j < P; ++j) {
      idx[j] = rem % grid[j].size();
      rem /= grid[j].size();
      theta[j] = grid[j][idx[j]];
    }
    double ll = ev.evaluate(theta, nullptr);
    if (ll > res.ll) {
      res.ll = ll;
      res.best_point.assign(theta.data(), theta.data() + P);
    }
  }
  return res;
}

}  // namespace sevmix
