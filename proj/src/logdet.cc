// Covariance estimation and the pairwise graph emitted from a log-det
// solution.

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <set>

#include "ddinc/incremental.h"

namespace ddinc {

CovarianceEstimate estimate_covariance(const FactorGraph& graph,
                                       const SampleSet& samples) {
  if (samples.size() < 2) {
    throw InputError("covariance estimation needs at least 2 samples");
  }
  if (samples.num_vars() != graph.num_variables()) {
    throw InputError("samples do not match the graph");
  }
  CovarianceEstimate c;
  c.vars = graph.query_variables();
  const Eigen::Index n = static_cast<Eigen::Index>(c.vars.size());
  std::vector<Eigen::Index> index(graph.num_variables(), -1);
  for (Eigen::Index i = 0; i < n; ++i) index[c.vars[i]] = i;

  c.nz = PatternMat::Constant(n, n, false);
  std::set<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (const Factor& f : graph.factors()) {
    std::set<Eigen::Index> members;
    if (f.head && index[*f.head] >= 0) members.insert(index[*f.head]);
    for (const auto& g : f.groundings) {
      for (const auto& l : g) {
        if (index[l.var] >= 0) members.insert(index[l.var]);
      }
    }
    for (auto a = members.begin(); a != members.end(); ++a) {
      for (auto b = std::next(a); b != members.end(); ++b) {
        pairs.emplace(*a, *b);
      }
    }
  }
  for (auto [i, j] : pairs) c.nz(i, j) = c.nz(j, i) = true;

  const double N = static_cast<double>(samples.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  std::vector<double> cross(pairs.size(), 0.0);
  std::vector<double> s(n);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      s[i] = samples.bit(k, c.vars[i]) ? 1.0 : -1.0;
      sum(i) += s[i];
    }
    std::size_t p = 0;
    for (auto [i, j] : pairs) cross[p++] += s[i] * s[j];
  }
  c.mean = sum / N;
  c.M = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.M(i, i) = std::max(0.0, 1.0 - c.mean(i) * c.mean(i));
  }
  std::size_t p = 0;
  for (auto [i, j] : pairs) {
    double v = cross[p++] / N - c.mean(i) * c.mean(j);
    c.M(i, j) = c.M(j, i) = v;
  }
  return c;
}

ConstraintViolation check_constraints(const CovarianceEstimate& cov,
                                      const Eigen::MatrixXd& X,
                                      double lambda) {
  ConstraintViolation v;
  const Eigen::Index n = cov.M.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        v.diagonal =
            std::max(v.diagonal, std::abs(X(i, i) - cov.M(i, i) - 1.0 / 3.0));
      } else if (cov.nz(i, j)) {
        v.box = std::max(v.box, std::abs(X(i, j) - cov.M(i, j)) - lambda);
      } else {
        v.pattern = std::max(v.pattern, std::abs(X(i, j)));
      }
    }
  }
  v.box = std::max(v.box, 0.0);
  return v;
}

FactorGraph build_approx_graph(const FactorGraph& graph,
                               const CovarianceEstimate& cov,
                               const Eigen::MatrixXd& X, double prune,
                               std::size_t* pair_factors) {
  const Eigen::Index n = static_cast<Eigen::Index>(cov.vars.size());
  FactorGraph out;
  for (const Variable& v : graph.variables()) out.add_variable(v);

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  if (n > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(X);
    if (llt.info() != Eigen::Success) {
      throw ConvergenceError("log-det solution is not positive definite", 0);
    }
    K = llt.solve(Eigen::MatrixXd::Identity(n, n));
  }

  // Spin means recovered from the diagonal: X_kk - 1/3 = 1 - m_k^2.
  const double clip = 1.0 - 1e-6;
  Eigen::VectorXd m(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = std::sqrt(std::max(0.0, 4.0 / 3.0 - X(i, i)));
    m(i) = std::copysign(std::min(a, clip), cov.mean(i));
  }

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (cov.nz(i, j) && std::abs(K(i, j)) > prune) {
        J(i, j) = J(j, i) = -K(i, j);
      }
    }
  }

  // TAP fields reproducing the means under couplings J.
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double f = std::atanh(m(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      if (J(i, j) == 0) continue;
      f -= J(i, j) * m(j);
      f += m(i) * J(i, j) * J(i, j) * (1 - m(j) * m(j));
    }
    h(i) = f;
  }

  // A factor with head v_i and grounding [v_j] and weight w adds
  // (w/2) s_i + (w/2) s_i s_j, so the coupling is emitted with w = 2 J and
  // the unary field of v_i absorbs -J.
  Eigen::VectorXd unary = h;
  std::size_t pairs = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (J(i, j) == 0) continue;
      unary(i) -= J(i, j);
      WeightId w = out.add_weight(
          {2 * J(i, j), true,
           "pair:" + std::to_string(cov.vars[i] + 1) + "," +
               std::to_string(cov.vars[j] + 1)});
      Factor f;
      f.rule = "approx_pair";
      f.head = cov.vars[i];
      f.groundings = {{Literal{cov.vars[j], true}}};
      f.weight = w;
      out.add_factor(std::move(f));
      ++pairs;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    WeightId w = out.add_weight(
        {unary(i), true, "unary:" + std::to_string(cov.vars[i] + 1)});
    Factor f;
    f.rule = "approx_unary";
    f.head = cov.vars[i];
    f.groundings = {Grounding{}};
    f.weight = w;
    out.add_factor(std::move(f));
  }
  if (pair_factors) *pair_factors = pairs;
  return out;
}

}  // namespace ddinc
