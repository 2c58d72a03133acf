#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sevmix/domain.hpp"
#include "sevmix/errors.hpp"
#include "sevmix/numeric.hpp"

namespace sevmix {

// One utility term: coefficient * covariate (or an alternative-specific
// constant when covariate is empty).
struct Term {
  SeverityClass alternative;
  std::string covariate;  // empty => constant
  std::string coef_id;

  bool is_constant() const { return covariate.empty(); }
};

struct ModelSpec {
  std::vector<SeverityClass> alternatives = {
      SeverityClass::Major, SeverityClass::Minor, SeverityClass::PossibleNo};
  SeverityClass base_alternative = SeverityClass::PossibleNo;
  std::vector<Term> terms;
  std::vector<std::string> random_ids;

  std::size_t n_alternatives() const { return alternatives.size(); }

  int alt_index(SeverityClass c) const {
    for (std::size_t i = 0; i < alternatives.size(); ++i)
      if (alternatives[i] == c) return static_cast<int>(i);
    return -1;
  }

  bool is_random(const std::string& id) const {
    return std::find(random_ids.begin(), random_ids.end(), id) != random_ids.end();
  }

  void validate() const {
    if (alternatives.size() < 2)
      throw SchemaError("model: needs at least two alternatives");
    if (alt_index(base_alternative) < 0)
      throw SchemaError("model: base alternative not in alternative set");
    std::set<std::string> ids;
    for (const Term& t : terms) {
      if (alt_index(t.alternative) < 0)
        throw SchemaError("model: term alternative not in alternative set");
      if (t.is_constant() && t.alternative == base_alternative)
        throw SchemaError("model: base alternative must not carry a constant");
      ids.insert(t.coef_id);
    }
    for (const std::string& r : random_ids)
      if (!ids.count(r))
        throw SchemaError("model: random id '" + r + "' appears in no term");
  }
};

struct RandomCoef {
  double mean = 0.0;
  double spread = 0.0;  // interpreted as |spread|
};

struct ParameterVector {
  std::map<std::string, double> fixed;
  std::map<std::string, RandomCoef> random;

  double coef_mean(const std::string& id) const {
    if (auto it = fixed.find(id); it != fixed.end()) return it->second;
    if (auto it = random.find(id); it != random.end()) return it->second.mean;
    throw SchemaError("parameters: unknown coefficient id '" + id + "'");
  }
};

// Flat layout of the free parameters: one slot per fixed coefficient,
// (mean, spread) pair per random coefficient. Order of first appearance.
struct ParamLayout {
  std::vector<std::string> coef_ids;
  std::vector<bool> random_flag;
  std::vector<int> slot;        // beta or mean slot
  std::vector<int> sigma_slot;  // -1 for fixed coefficients
  std::vector<int> draw_dim;    // -1 for fixed coefficients
  int n_free = 0;
  int n_random = 0;

  static ParamLayout build(const ModelSpec& spec) {
    ParamLayout lay;
    for (const Term& t : spec.terms) {
      if (std::find(lay.coef_ids.begin(), lay.coef_ids.end(), t.coef_id) !=
          lay.coef_ids.end())
        continue;
      bool rnd = spec.is_random(t.coef_id);
      lay.coef_ids.push_back(t.coef_id);
      lay.random_flag.push_back(rnd);
      lay.slot.push_back(lay.n_free++);
      if (rnd) {
        lay.sigma_slot.push_back(lay.n_free++);
        lay.draw_dim.push_back(lay.n_random++);
      } else {
        lay.sigma_slot.push_back(-1);
        lay.draw_dim.push_back(-1);
      }
    }
    return lay;
  }

  int coef_index(const std::string& id) const {
    for (std::size_t i = 0; i < coef_ids.size(); ++i)
      if (coef_ids[i] == id) return static_cast<int>(i);
    return -1;
  }

  Eigen::VectorXd pack(const ParameterVector& params) const {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(n_free);
    for (std::size_t i = 0; i < coef_ids.size(); ++i) {
      if (random_flag[i]) {
        auto it = params.random.find(coef_ids[i]);
        if (it == params.random.end())
          throw SchemaError("parameters: missing random coefficient '" + coef_ids[i] + "'");
        theta[slot[i]] = it->second.mean;
        theta[sigma_slot[i]] = it->second.spread;
      } else {
        auto it = params.fixed.find(coef_ids[i]);
        if (it == params.fixed.end())
          throw SchemaError("parameters: missing fixed coefficient '" + coef_ids[i] + "'");
        theta[slot[i]] = it->second;
      }
    }
    return theta;
  }

  ParameterVector unpack(const Eigen::VectorXd& theta) const {
    ParameterVector p;
    for (std::size_t i = 0; i < coef_ids.size(); ++i) {
      if (random_flag[i])
        p.random[coef_ids[i]] = {theta[slot[i]], theta[sigma_slot[i]]};
      else
        p.fixed[coef_ids[i]] = theta[slot[i]];
    }
    return p;
  }

  // One display name per free slot: "id" for fixed, "id.mean"/"id.sd" for random.
  std::vector<std::string> free_names() const {
    std::vector<std::string> names(n_free);
    for (std::size_t i = 0; i < coef_ids.size(); ++i) {
      if (random_flag[i]) {
        names[slot[i]] = coef_ids[i] + ".mean";
        names[sigma_slot[i]] = coef_ids[i] + ".sd";
      } else {
        names[slot[i]] = coef_ids[i];
      }
    }
    return names;
  }
};

// Spec bound to a dataset: term lists resolved to covariate columns and
// coefficient slots.
struct CompiledModel {
  struct CompiledTerm {
    int coef;  // index into layout.coef_ids
    int col;   // covariate column, -1 for constant
  };
  const ModelSpec* spec = nullptr;
  ParamLayout layout;
  std::vector<std::vector<CompiledTerm>> alt_terms;  // per alternative

  static CompiledModel build(const ModelSpec& spec, const Dataset& data) {
    spec.validate();
    CompiledModel cm;
    cm.spec = &spec;
    cm.layout = ParamLayout::build(spec);
    cm.alt_terms.resize(spec.n_alternatives());
    for (const Term& t : spec.terms) {
      int col = -1;
      if (!t.is_constant()) {
        col = data.covariate_index(t.covariate);
        if (col < 0)
          throw SchemaError("model references covariate '" + t.covariate +
                            "' absent from the dataset");
      }
      cm.alt_terms[spec.alt_index(t.alternative)].push_back(
          {cm.layout.coef_index(t.coef_id), col});
    }
    return cm;
  }
};

// Softmax with max-subtraction. Probabilities sum to 1.
inline std::vector<double> mnl_probability(std::span<const double> utilities) {
  std::vector<double> p(utilities.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double u : utilities) {
    if (!std::isfinite(u)) throw NumericError("mnl_probability: non-finite utility");
    mx = std::max(mx, u);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(utilities[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Systematic utilities for one record. Random coefficients use the realized
// value when supplied (mean + spread * z computed by the caller), otherwise
// the mean. Estimation uses the CompiledModel fast path instead.
inline std::vector<double> utility(const Dataset& data, std::size_t row,
                                   const ModelSpec& spec, const ParameterVector& params,
                                   const std::map<std::string, double>* realized = nullptr) {
  std::vector<double> u(spec.n_alternatives(), 0.0);
  for (const Term& t : spec.terms) {
    double beta;
    if (realized && realized->count(t.coef_id))
      beta = realized->at(t.coef_id);
    else
      beta = params.coef_mean(t.coef_id);
    double x = 1.0;
    if (!t.is_constant()) {
      int col = data.covariate_index(t.covariate);
      if (col < 0)
        throw SchemaError("utility: record lacks covariate '" + t.covariate + "'");
      x = data.value(row, col);
    }
    u[spec.alt_index(t.alternative)] += beta * x;
  }
  return u;
}

namespace detail {

inline void realized_coefs(const CompiledModel& cm, const Eigen::VectorXd& theta,
                           const double* z, std::vector<double>& beta) {
  const ParamLayout& lay = cm.layout;
  beta.resize(lay.coef_ids.size());
  for (std::size_t i = 0; i < lay.coef_ids.size(); ++i) {
    if (lay.random_flag[i] && z)
      beta[i] = theta[lay.slot[i]] + theta[lay.sigma_slot[i]] * z[lay.draw_dim[i]];
    else
      beta[i] = theta[lay.slot[i]];
  }
}

inline void utilities_at(const CompiledModel& cm, const Dataset& data, std::size_t row,
                         const std::vector<double>& beta, std::vector<double>& u) {
  u.assign(cm.alt_terms.size(), 0.0);
  const CrashRecord& rec = data.records[row];
  for (std::size_t a = 0; a < cm.alt_terms.size(); ++a)
    for (const CompiledModel::CompiledTerm& t : cm.alt_terms[a])
      u[a] += beta[t.coef] * (t.col < 0 ? 1.0 : rec.covariates[t.col]);
}

}  // namespace detail

// Average over the record's draw block of closed-form probabilities at
// draw-realized coefficients. draws: R x D row-major.
inline std::vector<double> simulated_probability(const Dataset& data, std::size_t row,
                                                 const ModelSpec& spec,
                                                 const ParameterVector& params,
                                                 std::span<const double> draws,
                                                 std::size_t n_random_dims) {
  CompiledModel cm = CompiledModel::build(spec, data);
  if (n_random_dims != static_cast<std::size_t>(cm.layout.n_random))
    throw std::invalid_argument("simulated_probability: draw dimension mismatch");
  if (draws.size() % std::max<std::size_t>(n_random_dims, 1) != 0)
    throw std::invalid_argument("simulated_probability: draw block size mismatch");
  std::size_t R = n_random_dims ? draws.size() / n_random_dims : 1;
  Eigen::VectorXd theta = cm.layout.pack(params);
  std::vector<double> beta, u;
  std::vector<double> acc(spec.n_alternatives(), 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    const double* z = n_random_dims ? draws.data() + r * n_random_dims : nullptr;
    detail::realized_coefs(cm, theta, z, beta);
    detail::utilities_at(cm, data, row, beta, u);
    std::vector<double> p = mnl_probability(u);
    for (std::size_t a = 0; a < acc.size(); ++a) acc[a] += p[a];
  }
  for (double& v : acc) v /= static_cast<double>(R);
  return acc;
}

struct LikelihoodValue {
  double total = 0.0;
  std::vector<double> contributions;  // per observation, fixed order
  std::size_t underflow_count = 0;    // probabilities floored at 1e-300
};

// Shared evaluation engine for log-likelihood and its analytic gradient.
// Per-observation contributions are computed independently and reduced in
// fixed observation order, so results do not depend on threading.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(const Dataset& data, const ModelSpec& spec,
                      const DrawMatrix* draws = nullptr)
      : data_(&data), cm_(CompiledModel::build(spec, data)), draws_(draws) {
    if (data.records.empty())
      throw std::domain_error("likelihood: empty dataset");
    if (cm_.layout.n_random > 0) {
      if (!draws_) throw std::invalid_argument("likelihood: spec has random ids but no draws");
      if (draws_->n_obs != data.records.size() ||
          draws_->n_random != static_cast<std::size_t>(cm_.layout.n_random))
        throw std::invalid_argument("likelihood: draw matrix dimensions mismatch");
    }
    chosen_.resize(data.records.size());
    for (std::size_t n = 0; n < data.records.size(); ++n) {
      int idx = spec.alt_index(data.records[n].severity);
      if (idx < 0)
        throw std::domain_error("likelihood: observed severity not in alternative set");
      chosen_[n] = idx;
    }
  }

  const CompiledModel& compiled() const { return cm_; }
  std::size_t n_obs() const { return data_->records.size(); }

  // grad may be null. Returns total LL; fills per-obs contributions.
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad,
                  std::vector<double>* contributions = nullptr,
                  std::size_t* underflows = nullptr) const {
    const std::size_t N = n_obs();
    const int P = cm_.layout.n_free;
    std::vector<double> contrib(N);
    Eigen::MatrixXd per_chunk_grad;
    const std::size_t chunk = 2048;  // fixed size keeps reduction order stable
    const std::size_t n_chunks = (N + chunk - 1) / chunk;
    if (grad) per_chunk_grad = Eigen::MatrixXd::Zero(P, n_chunks);
    std::vector<std::size_t> uf(n_chunks, 0);

    auto work = [&](std::size_t ci) {
      std::size_t lo = ci * chunk, hi = std::min(N, lo + chunk);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(P);
      std::vector<double> beta, u;
      Eigen::VectorXd acc(P);
      for (std::size_t n = lo; n < hi; ++n) {
        contrib[n] = observation(n, theta, grad ? &g : nullptr, beta, u, acc, uf[ci]);
      }
      if (grad) per_chunk_grad.col(ci) = g;
    };
    run_chunks(n_chunks, work);

    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) total += contrib[n];
    if (grad) {
      grad->setZero(P);
      for (std::size_t ci = 0; ci < n_chunks; ++ci) *grad += per_chunk_grad.col(ci);
    }
    if (contributions) *contributions = std::move(contrib);
    if (underflows) {
      *underflows = 0;
      for (std::size_t c : uf) *underflows += c;
    }
    return total;
  }

  static int& worker_count() {
    static int workers = 1;
    return workers;
  }

 private:
  double observation(std::size_t n, const Eigen::VectorXd& theta, Eigen::VectorXd* g,
                     std::vector<double>& beta, std::vector<double>& u,
                     Eigen::VectorXd& acc, std::size_t& underflows) const {
    const ParamLayout& lay = cm_.layout;
    const int chosen = chosen_[n];
    const CrashRecord& rec = data_->records[n];
    const std::size_t A = cm_.alt_terms.size();

    if (lay.n_random == 0) {
      detail::realized_coefs(cm_, theta, nullptr, beta);
      detail::utilities_at(cm_, *data_, n, beta, u);
      std::vector<double> p = mnl_probability(u);
      double pc = p[chosen];
      if (pc < 1e-300) {
        pc = 1e-300;
        ++underflows;
      }
      if (g) {
        for (std::size_t a = 0; a < A; ++a) {
          double w = (static_cast<int>(a) == chosen ? 1.0 : 0.0) - p[a];
          for (const CompiledModel::CompiledTerm& t : cm_.alt_terms[a]) {
            double x = t.col < 0 ? 1.0 : rec.covariates[t.col];
            (*g)[lay.slot[t.coef]] += w * x;
          }
        }
      }
      return std::log(pc);
    }

    const std::size_t R = draws_->n_draws;
    const std::size_t D = draws_->n_random;
    const double* block = draws_->block(n);
    double pbar = 0.0;
    acc.setZero();
    for (std::size_t r = 0; r < R; ++r) {
      const double* z = block + r * D;
      detail::realized_coefs(cm_, theta, z, beta);
      detail::utilities_at(cm_, *data_, n, beta, u);
      std::vector<double> p = mnl_probability(u);
      double pc = p[chosen];
      pbar += pc;
      if (g) {
        for (std::size_t a = 0; a < A; ++a) {
          double w = ((static_cast<int>(a) == chosen ? 1.0 : 0.0) - p[a]) * pc;
          for (const CompiledModel::CompiledTerm& t : cm_.alt_terms[a]) {
            double x = t.col < 0 ? 1.0 : rec.covariates[t.col];
            double wx = w * x;
            acc[lay.slot[t.coef]] += wx;
            if (lay.random_flag[t.coef])
              acc[lay.sigma_slot[t.coef]] += wx * z[lay.draw_dim[t.coef]];
          }
        }
      }
    }
    pbar /= static_cast<double>(R);
    double pfloor = pbar;
    if (pfloor < 1e-300) {
      pfloor = 1e-300;
      ++underflows;
    }
    if (g) *g += acc / (static_cast<double>(R) * pfloor);
    return std::log(pfloor);
  }

  template <typename F>
  static void run_chunks(std::size_t n_chunks, F&& work) {
    int workers = worker_count();
    if (workers <= 1 || n_chunks <= 1) {
      for (std::size_t ci = 0; ci < n_chunks; ++ci) work(ci);
      return;
    }
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
      for (;;) {
        std::size_t ci = next.fetch_add(1);
        if (ci >= n_chunks) break;
        work(ci);
      }
    };
    std::vector<std::thread> pool;
    int n_threads = std::min<int>(workers, static_cast<int>(n_chunks));
    pool.reserve(n_threads - 1);
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(loop);
    loop();
    for (std::thread& t : pool) t.join();
  }

  const Dataset* data_;
  CompiledModel cm_;
  const DrawMatrix* draws_;
  std::vector<int> chosen_;
};

inline LikelihoodValue log_likelihood(const Dataset& data, const ModelSpec& spec,
                                      const ParameterVector& params,
                                      const DrawMatrix* draws = nullptr) {
  LikelihoodEvaluator ev(data, spec, draws);
  Eigen::VectorXd theta = ev.compiled().layout.pack(params);
  LikelihoodValue lv;
  lv.total = ev.evaluate(theta, nullptr, &lv.contributions, &lv.underflow_count);
  return lv;
}

// Analytic gradient over all free parameters in layout order
// (fixed betas; mean and spread for random ids).
inline Eigen::VectorXd ll_gradient(const Dataset& data, const ModelSpec& spec,
                                   const ParameterVector& params,
                                   const DrawMatrix* draws = nullptr) {
  LikelihoodEvaluator ev(data, spec, draws);
  Eigen::VectorXd theta = ev.compiled().layout.pack(params);
  Eigen::VectorXd g;
  ev.evaluate(theta, &g);
  return g;
}

}  // namespace sevmix
