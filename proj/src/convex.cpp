#include "suvm/srn.hpp"

#include "suvm/union_find.hpp"

#include <cmath>
#include <limits>

namespace suvm::srn {

namespace {

// Reduced incidence matrix: column e is +1 at j and -1 at i, anchor (last node) removed.
Eigen::MatrixXd incidence(const ConvexInstance& inst) {
  const Index anchor = inst.nodes - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(inst.nodes - 1, static_cast<Index>(inst.pairs.size()));
  for (Index e = 0; e < a.cols(); ++e) {
    const auto& p = inst.pairs[e];
    if (p.j != anchor) a(gmrf::reduced_index(p.j, anchor), e) += 1.0;
    if (p.i != anchor) a(gmrf::reduced_index(p.i, anchor), e) -= 1.0;
  }
  return a;
}

double objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  const Eigen::MatrixXd l = a * c.asDiagonal() * a.transpose();
  if (!gmrf::is_positive_definite(l)) return std::numeric_limits<double>::infinity();
  Eigen::LLT<Eigen::MatrixXd> llt(l);
  const Eigen::MatrixXd lower = llt.matrixL();
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  return -0.5 * log_det + 0.5 * c.dot(b);
}

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& c, const Eigen::VectorXd& g) {
  Eigen::VectorXd pg = g;
  for (Index e = 0; e < c.size(); ++e)
    if (c(e) <= 0.0) pg(e) = std::min(g(e), 0.0);
  return pg;
}

void validate(const ConvexInstance& inst, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::InvalidInput, "lambda must be positive");
  if (inst.nodes < 2) throw Error(ErrorCode::InvalidInput, "convex instance needs at least two nodes");
  UnionFind uf(static_cast<std::size_t>(inst.nodes));
  for (const auto& p : inst.pairs) {
    if (p.i == p.j || p.i < 0 || p.j < 0 || p.i >= inst.nodes || p.j >= inst.nodes)
      throw Error(ErrorCode::InvalidInput, "convex instance has an invalid pair");
    if (!(p.variance >= 0.0)) throw Error(ErrorCode::InvalidInput, "pair variance must be non-negative");
    uf.unite(static_cast<std::size_t>(p.i), static_cast<std::size_t>(p.j));
  }
  for (int n = 1; n < inst.nodes; ++n)
    if (!uf.connected(0, static_cast<std::size_t>(n)))
      throw Error(ErrorCode::InvalidInput, "candidate pairs do not connect every node");
}

}  // namespace

ConvexInstance convex_instance(const PairStats& stats, Axis axis, std::span<const int> words,
                               std::uint64_t min_support) {
  ConvexInstance inst;
  inst.nodes = static_cast<int>(words.size());
  for (int a = 0; a < inst.nodes; ++a) {
    for (int b = a + 1; b < inst.nodes; ++b) {
      const auto m = stats.moments(words[a], words[b]);
      if (!m || m->n < std::max<std::uint64_t>(min_support, 1)) continue;
      inst.pairs.push_back({a, b, m->variance()(static_cast<int>(axis))});
    }
  }
  return inst;
}

double convex_objective(const ConvexInstance& instance, double lambda, const Eigen::VectorXd& c) {
  Eigen::VectorXd b(static_cast<Index>(instance.pairs.size()));
  for (Index e = 0; e < b.size(); ++e) b(e) = instance.pairs[e].variance + lambda;
  return objective(incidence(instance), b, c);
}

ConvexSolution solve_convex_exact(const ConvexInstance& instance, double lambda, double tol, int max_iters) {
  validate(instance, lambda);
  const Index m = static_cast<Index>(instance.pairs.size());
  const Eigen::MatrixXd a = incidence(instance);
  Eigen::VectorXd b(m);
  for (Index e = 0; e < m; ++e) b(e) = instance.pairs[e].variance + lambda;

  // Start at the upper bound, which is feasible and keeps L positive definite.
  Eigen::VectorXd c = b.cwiseInverse();
  double f = objective(a, b, c);
  constexpr double kArmijo = 1e-4;

  ConvexSolution out;
  for (int it = 0; it <= max_iters; ++it) {
    const Eigen::MatrixXd l = a * c.asDiagonal() * a.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(l);
    const Eigen::MatrixXd sigma_a = llt.solve(a);
    const Eigen::MatrixXd coupling = a.transpose() * sigma_a;  // a_e' L^-1 a_f
    const Eigen::VectorXd g = 0.5 * (b - coupling.diagonal());
    const Eigen::VectorXd pg = projected_gradient(c, g);
    out.projected_gradient_norm = pg.norm();
    out.iterations = it;
    if (out.projected_gradient_norm < tol * b.norm()) {
      out.c = c;
      out.objective = f;
      return out;
    }
    if (it == max_iters) break;

    // Two-metric projection: variables pinned near zero with a pushing gradient
    // take a scaled gradient step, the rest a Newton step.
    const double eps = std::min(1e-3, (c - (c - g).cwiseMax(0.0)).norm());
    std::vector<Index> free;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
    for (Index e = 0; e < m; ++e) {
      if (c(e) <= eps && g(e) > 0.0) {
        d(e) = -c(e) - g(e);
      } else {
        free.push_back(e);
      }
    }
    if (!free.empty()) {
      const Index k = static_cast<Index>(free.size());
      Eigen::MatrixXd h(k, k);
      Eigen::VectorXd gf(k);
      for (Index r = 0; r < k; ++r) {
        gf(r) = g(free[r]);
        for (Index s = 0; s < k; ++s) h(r, s) = 0.5 * coupling(free[r], free[s]) * coupling(free[r], free[s]);
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      Eigen::VectorXd df = ldlt.solve(-gf);
      if (ldlt.info() != Eigen::Success || !df.allFinite() || df.dot(gf) >= 0.0) df = -gf;
      for (Index r = 0; r < k; ++r) d(free[r]) = df(r);
    }

    auto line_search = [&](const Eigen::VectorXd& dir, Eigen::VectorXd& next, double& fnext) {
      double alpha = 1.0;
      for (int t = 0; t < 80; ++t, alpha *= 0.5) {
        next = (c + alpha * dir).cwiseMax(0.0);
        fnext = objective(a, b, next);
        if (fnext <= f + kArmijo * g.dot(next - c)) return true;
      }
      return false;
    };

    Eigen::VectorXd next;
    double fnext = 0.0;
    if (!line_search(d, next, fnext) && !line_search(-g, next, fnext)) break;
    c = next;
    f = fnext;
  }
  throw Error(ErrorCode::NotConverged, "convex stiffness solver did not converge (projected gradient norm " +
                                           std::to_string(out.projected_gradient_norm) + ")");
}

}  // namespace suvm::srn
