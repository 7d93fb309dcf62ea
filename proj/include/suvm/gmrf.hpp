#pragma once

// Anchored Gaussian Markov random fields built from spring potentials.
//
// A spring (i, j, w, d) contributes w * (v_j - v_i - d)^2 to the energy E(v).
// One node, the anchor, is pinned at zero to remove the translation gauge, so
// the remaining n - 1 values are Gaussian with density proportional to
// exp(-E(v) / 2). Everything is templated on the scalar type.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace suvm::gmrf {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Spring {
  Index i = 0;
  Index j = 0;
  Scalar weight = 0;
  Scalar offset = 0;
};

/// Position of `node` once the anchor row/column is removed; -1 for the anchor.
constexpr Index reduced_index(Index node, Index anchor) {
  return node == anchor ? Index{-1} : (node < anchor ? node : node - 1);
}

/// E(v) = v' P v - 2 b' v + k over the reduced coordinates.
template <typename Scalar>
struct QuadraticForm {
  Matrix<Scalar> precision;
  Vector<Scalar> shift;
  Scalar constant = 0;
  Index anchor = 0;

  Index dimension() const { return precision.rows(); }
};

template <typename Scalar>
QuadraticForm<Scalar> assemble(Index nodes, Index anchor, std::span<const Spring<Scalar>> springs) {
  QuadraticForm<Scalar> form;
  form.anchor = anchor;
  form.precision = Matrix<Scalar>::Zero(nodes - 1, nodes - 1);
  form.shift = Vector<Scalar>::Zero(nodes - 1);
  for (const auto& s : springs) {
    const Index a = reduced_index(s.i, anchor);
    const Index b = reduced_index(s.j, anchor);
    if (a >= 0) {
      form.precision(a, a) += s.weight;
      form.shift(a) -= s.weight * s.offset;
    }
    if (b >= 0) {
      form.precision(b, b) += s.weight;
      form.shift(b) += s.weight * s.offset;
    }
    if (a >= 0 && b >= 0) {
      form.precision(a, b) -= s.weight;
      form.precision(b, a) -= s.weight;
    }
    form.constant += s.weight * s.offset * s.offset;
  }
  return form;
}

template <typename Scalar>
QuadraticForm<Scalar> assemble(Index nodes, Index anchor, const std::vector<Spring<Scalar>>& springs) {
  return assemble<Scalar>(nodes, anchor, std::span<const Spring<Scalar>>(springs));
}

/// Spring energy of a full configuration (one value per node, anchor included).
template <typename Scalar, typename Derived>
Scalar energy(std::span<const Spring<Scalar>> springs, const Eigen::MatrixBase<Derived>& values) {
  Scalar e = 0;
  for (const auto& s : springs) {
    const Scalar r = values(s.j) - values(s.i) - s.offset;
    e += s.weight * r * r;
  }
  return e;
}

/// Full configuration -> reduced coordinates relative to the anchor.
template <typename Derived>
Vector<typename Derived::Scalar> reduce(const Eigen::MatrixBase<Derived>& values, Index anchor) {
  using Scalar = typename Derived::Scalar;
  const Index n = values.size();
  Vector<Scalar> out(n - 1);
  for (Index k = 0; k < n; ++k) {
    const Index r = reduced_index(k, anchor);
    if (r >= 0) out(r) = values(k) - values(anchor);
  }
  return out;
}

/// Reduced coordinates -> full configuration with the anchor at `anchor_value`.
template <typename Derived>
Vector<typename Derived::Scalar> expand(const Eigen::MatrixBase<Derived>& reduced, Index anchor,
                                        typename Derived::Scalar anchor_value = 0) {
  using Scalar = typename Derived::Scalar;
  const Index n = reduced.size() + 1;
  Vector<Scalar> out(n);
  for (Index k = 0; k < n; ++k) {
    const Index r = reduced_index(k, anchor);
    out(k) = anchor_value + (r >= 0 ? reduced(r) : Scalar(0));
  }
  return out;
}

/// Cholesky with a relative pivot floor; exact singularity can otherwise leak
/// through as a rounding-sized positive pivot.
template <typename Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& m,
                          typename Derived::Scalar relative_floor = typename Derived::Scalar(1e-12)) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() == 0) return true;
  Eigen::LLT<Matrix<Scalar>> llt(m.derived());
  if (llt.info() != Eigen::Success) return false;
  const Scalar scale = m.diagonal().cwiseAbs().maxCoeff();
  const Matrix<Scalar> l = llt.matrixL();
  const Scalar min_pivot = l.diagonal().cwiseAbs2().minCoeff();
  return min_pivot > relative_floor * scale;
}

/// Factorized Gaussian view of a quadratic form.
template <typename Scalar>
class Gaussian {
 public:
  explicit Gaussian(const QuadraticForm<Scalar>& form)
      : precision_(form.precision), llt_(form.precision), anchor_(form.anchor) {
    ok_ = llt_.info() == Eigen::Success && is_positive_definite(form.precision);
    if (!ok_) return;
    mean_ = llt_.solve(form.shift);
    min_energy_ = form.constant - form.shift.dot(mean_);
    if (min_energy_ < Scalar(0)) min_energy_ = Scalar(0);
    const Matrix<Scalar> l = llt_.matrixL();
    log_det_ = 2 * l.diagonal().array().log().sum();
  }

  bool ok() const { return ok_; }
  Index dimension() const { return precision_.rows(); }
  Index anchor() const { return anchor_; }
  const Vector<Scalar>& mean() const { return mean_; }
  const Matrix<Scalar>& precision() const { return precision_; }
  Scalar log_det_precision() const { return log_det_; }
  /// Energy at the mode; nonzero when rest offsets around a loop disagree.
  Scalar min_energy() const { return min_energy_; }

  Matrix<Scalar> covariance() const {
    return llt_.solve(Matrix<Scalar>::Identity(dimension(), dimension()));
  }

  /// (v - m)' P (v - m) for reduced coordinates v.
  template <typename Derived>
  Scalar mahalanobis(const Eigen::MatrixBase<Derived>& reduced) const {
    const Vector<Scalar> d = reduced - mean_;
    return d.dot(precision_ * d);
  }

  template <typename Derived>
  Scalar log_density(const Eigen::MatrixBase<Derived>& reduced) const {
    const Scalar n = static_cast<Scalar>(dimension());
    return Scalar(0.5) * log_det_ - Scalar(0.5) * n * std::log(2 * std::numbers::pi_v<Scalar>) -
           Scalar(0.5) * mahalanobis(reduced);
  }

  /// Draw reduced coordinates given standard normal noise `z`.
  template <typename Derived>
  Vector<Scalar> transform_noise(const Eigen::MatrixBase<Derived>& z) const {
    return mean_ + llt_.matrixU().solve(z.derived());
  }

 private:
  Matrix<Scalar> precision_;
  Eigen::LLT<Matrix<Scalar>> llt_;
  Index anchor_ = 0;
  bool ok_ = false;
  Vector<Scalar> mean_;
  Scalar min_energy_ = 0;
  Scalar log_det_ = 0;
};

/// Linear map from reduced coordinates to values of `observed` nodes relative
/// to `reference` (reference itself omitted).
template <typename Scalar>
Matrix<Scalar> relative_selector(Index nodes, Index anchor, std::span<const Index> observed, Index reference) {
  Matrix<Scalar> t = Matrix<Scalar>::Zero(static_cast<Index>(observed.size()) - 1, nodes - 1);
  Index row = 0;
  const Index ref = reduced_index(reference, anchor);
  for (Index node : observed) {
    if (node == reference) continue;
    const Index col = reduced_index(node, anchor);
    if (col >= 0) t(row, col) += 1;
    if (ref >= 0) t(row, ref) -= 1;
    ++row;
  }
  return t;
}

/// Log density of the observed subset's values relative to `reference`,
/// marginalizing every unobserved node.
template <typename Scalar, typename Derived>
Scalar marginal_log_density(const Gaussian<Scalar>& g, std::span<const Index> observed, Index reference,
                            const Eigen::MatrixBase<Derived>& relative_values) {
  const Index nodes = g.dimension() + 1;
  const Matrix<Scalar> t = relative_selector<Scalar>(nodes, g.anchor(), observed, reference);
  if (t.rows() == 0) return Scalar(0);
  const Matrix<Scalar> cov = t * g.covariance() * t.transpose();
  const Vector<Scalar> d = relative_values - t * g.mean();
  Eigen::LLT<Matrix<Scalar>> llt(cov);
  const Matrix<Scalar> l = llt.matrixL();
  const Scalar log_det_cov = 2 * l.diagonal().array().log().sum();
  const Scalar k = static_cast<Scalar>(t.rows());
  return -Scalar(0.5) * k * std::log(2 * std::numbers::pi_v<Scalar>) - Scalar(0.5) * log_det_cov -
         Scalar(0.5) * d.dot(llt.solve(d));
}

/// Conditional mean of every node's value relative to `reference`, given the
/// observed relative values.
template <typename Scalar, typename Derived>
Vector<Scalar> conditional_relative_mean(const Gaussian<Scalar>& g, std::span<const Index> observed,
                                         Index reference, const Eigen::MatrixBase<Derived>& relative_values) {
  const Index nodes = g.dimension() + 1;
  const Matrix<Scalar> cov = g.covariance();
  Vector<Scalar> reduced_mean = g.mean();
  const Matrix<Scalar> t = relative_selector<Scalar>(nodes, g.anchor(), observed, reference);
  if (t.rows() > 0) {
    const Matrix<Scalar> cov_y = t * cov * t.transpose();
    const Vector<Scalar> innovation = relative_values - t * g.mean();
    reduced_mean += cov * t.transpose() * cov_y.llt().solve(innovation);
  }
  const Vector<Scalar> full = expand(reduced_mean, g.anchor());
  return full.array() - full(reference);
}

}  // namespace suvm::gmrf
