#pragma once

// Fixtures and independent oracles shared by the unit tests and the acceptance run.

#include "suvm/generative.hpp"
#include "suvm/srn.hpp"
#include "suvm/synthetic.hpp"
#include "suvm/union_find.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace suvm::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Random spanning tree plus `extra` chords, random stiffness and rest values.
inline srn::Srn random_srn(std::mt19937_64& rng, int n, int extra) {
  srn::Srn s;
  for (int k = 0; k < n; ++k) s.nodes.push_back(3 * k + 1);
  auto add = [&](int a, int b) {
    if (a == b || s.edge(a, b)) return;
    srn::SpringEdge e;
    e.i = std::min(a, b);
    e.j = std::max(a, b);
    e.stiffness = {uniform(rng, 1.0, 50.0), uniform(rng, 1.0, 50.0), uniform(rng, 1.0, 50.0)};
    e.rest = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -0.3, 0.3)};
    s.edges.push_back(e);
  };
  for (int k = 1; k < n; ++k) add(k, std::uniform_int_distribution<int>(0, k - 1)(rng));
  for (int t = 0; t < extra; ++t)
    add(std::uniform_int_distribution<int>(0, n - 1)(rng), std::uniform_int_distribution<int>(0, n - 1)(rng));
  s.extent_x = Eigen::VectorXd::Constant(n, 32.0);
  s.extent_y = Eigen::VectorXd::Constant(n, 24.0);
  return s;
}

inline srn::Configuration random_configuration(std::mt19937_64& rng, Index n) {
  srn::Configuration c;
  c.x.resize(n);
  c.y.resize(n);
  c.extent_x.resize(n);
  c.extent_y.resize(n);
  for (Index k = 0; k < n; ++k) {
    c.x(k) = uniform(rng, 0.0, 400.0);
    c.y(k) = uniform(rng, 0.0, 300.0);
    c.extent_x(k) = uniform(rng, 20.0, 60.0);
    c.extent_y(k) = c.extent_x(k) * 0.75;
  }
  return c;
}

/// Log density of one axis built term by term: each spring contributes
/// c (a'v - mu)^2 with a the normalized difference operator; the Gaussian is
/// then evaluated with a dense inverse and LU determinant.
inline double dense_axis_log_density(const srn::Srn& s, const srn::Configuration& cfg, srn::Axis axis) {
  const Index n = s.size();
  const Index m = n - 1;
  Eigen::MatrixXd a_mat = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v(n);
  for (Index k = 0; k < n; ++k) {
    if (axis == srn::Axis::S) {
      v(k) = std::log(cfg.extent_x(k) / cfg.extent_x(m));
    } else {
      const auto& p = axis == srn::Axis::X ? cfg.x : cfg.y;
      const auto& e = axis == srn::Axis::X ? cfg.extent_x : cfg.extent_y;
      v(k) = (p(k) - p(m)) / e(m);
    }
  }
  const int ax = static_cast<int>(axis);
  for (const auto& e : s.edges) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    double norm = 1.0;
    if (axis != srn::Axis::S) {
      const auto& ext = axis == srn::Axis::X ? cfg.extent_x : cfg.extent_y;
      norm = (ext(e.i) + ext(e.j)) / ext(m);
    }
    a(e.j) += 1.0 / norm;
    a(e.i) -= 1.0 / norm;
    a_mat += e.stiffness(ax) * a * a.transpose();
    b += e.stiffness(ax) * e.rest(ax) * a;
  }
  const Eigen::MatrixXd prec = a_mat.topLeftCorner(m, m);
  const Eigen::VectorXd shift = b.head(m);
  const Eigen::MatrixXd cov = prec.inverse();
  const Eigen::VectorXd mean = cov * shift;
  const Eigen::VectorXd d = v.head(m) - mean;
  return -0.5 * std::log((2.0 * std::numbers::pi * cov).determinant()) - 0.5 * d.dot(prec * d);
}

inline bool connected(const srn::Srn& s) {
  UnionFind uf(static_cast<std::size_t>(s.size()));
  std::size_t joins = 0;
  for (const auto& e : s.edges)
    if (uf.unite(e.i, e.j)) ++joins;
  return joins + 1 == static_cast<std::size_t>(s.size());
}

/// Textures and planted dictionary for the detection blueprint.
struct DetectionFixture {
  synth::Blueprint blueprint;
  dict::VisualDictionary dictionary;
  gen::SuvModel model;
};

inline DetectionFixture detection_fixture() {
  DetectionFixture f;
  f.blueprint = synth::detection_blueprint();
  std::vector<Image> textures;
  for (const auto& code : synth::distinct_codes(static_cast<int>(f.blueprint.size())))
    textures.push_back(synth::quadrant_texture(f.blueprint.window, code));
  for (auto& t : synth::background_textures(f.blueprint.window)) textures.push_back(std::move(t));
  f.dictionary = synth::planted_dictionary(textures, f.blueprint.window);
  f.model = synth::build_model(f.blueprint, &f.dictionary);
  return f;
}

}  // namespace suvm::testing
