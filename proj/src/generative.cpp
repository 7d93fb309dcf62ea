#include "suvm/generative.hpp"

#include "suvm/union_find.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace suvm::gen {

void SuvModel::refresh() {
  const std::size_t n = cipc.part.size();
  UnionFind uf(n);
  for (const auto& e : cipc.edges)
    if (e.kind == semantics::CipcKind::Exclusive) uf.unite(e.a, e.b);
  const auto label = uf.labels();
  const int count = n ? *std::max_element(label.begin(), label.end()) + 1 : 0;
  slots.assign(count, {});
  slot_of.assign(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    slots[label[k]].push_back(static_cast<int>(k));
    slot_of[k] = label[k];
  }
  part_slots.assign(cipc.part_count, {});
  for (int s = 0; s < count; ++s) part_slots[cipc.part[slots[s].front()]].push_back(s);
}

void SuvModel::validate() const {
  const auto n = static_cast<std::size_t>(size());
  if (n < 2) throw Error(ErrorCode::InvalidInput, "model needs at least two viewlets");
  if (srn.nodes.size() != n || cipc.part.size() != n || static_cast<std::size_t>(gpe.x.size()) != n ||
      static_cast<std::size_t>(gpe.y.size()) != n || static_cast<std::size_t>(gpe.scale.size()) != n)
    throw Error(ErrorCode::InvalidInput, "model components cover different viewlet sets");
  for (std::size_t k = 0; k < n; ++k) {
    if (viewlets[k].word != srn.nodes[k]) throw Error(ErrorCode::InvalidInput, "viewlet and network ids differ");
    if (!viewlets[k].centroid.allFinite() || !(viewlets[k].appearance_variance > 0.0))
      throw Error(ErrorCode::InvalidInput, "viewlet appearance statistics are not valid");
  }
  for (const auto& e : srn.edges) {
    if (!e.stiffness.allFinite() || !e.rest.allFinite() || (e.stiffness.array() < 0.0).any() ||
        e.stiffness.maxCoeff() <= 0.0)
      throw Error(ErrorCode::InvalidInput, "spring parameters are not valid");
  }
  if (!gpe.x.allFinite() || !gpe.y.allFinite() || !gpe.scale.allFinite())
    throw Error(ErrorCode::InvalidInput, "embedding is not finite");
  if (!(part_inclusion > 0.0 && part_inclusion <= 1.0))
    throw Error(ErrorCode::InvalidInput, "part inclusion probability must lie in (0, 1]");
  if (slot_of.size() != n) throw Error(ErrorCode::InvalidInput, "model slots not computed");
}

SuvModel make_model(srn::Srn network, semantics::CipcGraph cipc, semantics::GpeEmbedding gpe,
                    const dict::VisualDictionary& dictionary, double part_inclusion) {
  SuvModel m;
  m.window = dictionary.window;
  m.part_inclusion = part_inclusion;
  for (int w : network.nodes) {
    Viewlet v;
    v.word = w;
    v.centroid = dictionary.centroids.row(w).transpose();
    v.appearance_variance = dictionary.spread(w);
    if (static_cast<std::size_t>(w) < dictionary.mean_patches.size()) v.patch = dictionary.mean_patches[w];
    m.viewlets.push_back(std::move(v));
  }
  m.srn = std::move(network);
  m.cipc = std::move(cipc);
  m.gpe = std::move(gpe);
  m.refresh();
  return m;
}

// ---------------------------------------------------------------------------

Box Exemplar::box() const {
  Box b;
  for (std::size_t k = 0; k < count(); ++k) b = unite(b, Box{x(k), y(k), x(k) + extent_x(k), y(k) + extent_y(k)});
  return b;
}

void Exemplar::translate(double dx, double dy) {
  x.array() += dx;
  y.array() += dy;
}

namespace {

Eigen::VectorXd standard_normal(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Index k = 0; k < n; ++k) z(k) = normal(rng);
  return z;
}

Eigen::VectorXd sample_axis(const gmrf::Gaussian<double>& g, Index anchor, std::mt19937_64& rng) {
  if (!g.ok()) throw Error(ErrorCode::Singular, "model springs do not connect the network");
  return gmrf::expand(g.transform_noise(standard_normal(g.dimension(), rng)), anchor);
}

}  // namespace

Exemplar sample_exemplar(const SuvModel& model, std::uint64_t seed, const SampleOptions& options) {
  if (!(options.global_scale > 0.0)) throw Error(ErrorCode::InvalidInput, "global scale must be positive");
  if (model.slot_of.size() != static_cast<std::size_t>(model.size()))
    throw Error(ErrorCode::InvalidInput, "model slots not computed");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index n = model.size();
  const Index anchor = model.srn.anchor();

  Exemplar ex;
  ex.global_scale = options.global_scale;
  for (int attempt = 0; ex.parts.empty(); ++attempt) {
    if (attempt >= options.max_redraws) throw Error(ErrorCode::InvalidInput, "part selection stayed empty");
    for (int p = 0; p < model.cipc.part_count; ++p)
      if (unit(rng) < model.part_inclusion) ex.parts.push_back(p);
  }
  for (int p : ex.parts) {
    for (int s : model.part_slots[p]) {
      const auto& members = model.slots[s];
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      ex.viewlets.push_back(members[pick(rng)]);
    }
  }
  std::sort(ex.viewlets.begin(), ex.viewlets.end());

  for (int v : ex.viewlets) {
    const auto& vl = model.viewlets[v];
    Eigen::VectorXd a = vl.centroid;
    if (options.sample_appearance)
      a += std::sqrt(vl.appearance_variance) * standard_normal(vl.centroid.size(), rng);
    ex.appearances.push_back(std::move(a));
  }

  const Eigen::VectorXd log_scale =
      sample_axis(srn::axis_gaussian(model.srn, srn::Axis::S, Eigen::VectorXd::Ones(n)), anchor, rng);
  const Eigen::VectorXd scale = log_scale.array().exp();
  const Eigen::VectorXd u = sample_axis(srn::axis_gaussian(model.srn, srn::Axis::X, scale), anchor, rng);
  const Eigen::VectorXd v = sample_axis(srn::axis_gaussian(model.srn, srn::Axis::Y, scale), anchor, rng);

  const double unit_x = options.global_scale * model.window.width;
  const double unit_y = options.global_scale * model.window.height;
  const auto k = static_cast<Index>(ex.viewlets.size());
  ex.scale.resize(k);
  ex.x.resize(k);
  ex.y.resize(k);
  ex.extent_x.resize(k);
  ex.extent_y.resize(k);
  for (Index i = 0; i < k; ++i) {
    const int node = ex.viewlets[i];
    ex.scale(i) = scale(node);
    ex.x(i) = u(node) * unit_x;
    ex.y(i) = v(node) * unit_y;
    ex.extent_x(i) = scale(node) * unit_x;
    ex.extent_y(i) = scale(node) * unit_y;
  }
  return ex;
}

// ---------------------------------------------------------------------------

Observation observe(const SuvModel& model, const Exemplar& exemplar) {
  Observation o;
  o.viewlets = exemplar.viewlets;
  o.x = exemplar.x;
  o.y = exemplar.y;
  o.extent_x = exemplar.extent_x;
  o.extent_y = exemplar.extent_y;
  if (!exemplar.appearances.empty()) {
    o.appearance_sq.resize(static_cast<Index>(exemplar.viewlets.size()));
    for (std::size_t i = 0; i < exemplar.viewlets.size(); ++i)
      o.appearance_sq(static_cast<Index>(i)) =
          (exemplar.appearances[i] - model.viewlets[exemplar.viewlets[i]].centroid).squaredNorm();
  }
  return o;
}

double viewlet_set_log_probability(const SuvModel& model, const std::vector<int>& viewlets) {
  const double p = model.part_inclusion;
  std::vector<int> per_slot(model.slots.size(), 0);
  std::vector<bool> part_seen(model.cipc.part_count, false);
  for (int v : viewlets) {
    if (v < 0 || v >= model.size()) throw Error(ErrorCode::InvalidInput, "viewlet outside the model");
    if (++per_slot[model.slot_of[v]] > 1) return -std::numeric_limits<double>::infinity();
    part_seen[model.cipc.part[v]] = true;
  }
  const int parts = model.cipc.part_count;
  double lp = -std::log1p(-std::pow(1.0 - p, parts));
  for (int q = 0; q < parts; ++q) {
    if (!part_seen[q]) {
      lp += std::log1p(-p);
      continue;
    }
    lp += std::log(p);
    for (int s : model.part_slots[q])
      if (per_slot[s] == 1) lp -= std::log(static_cast<double>(model.slots[s].size()));
  }
  return lp;
}

LikelihoodBreakdown exemplar_log_likelihood(const SuvModel& model, const Observation& obs) {
  const auto k = static_cast<Index>(obs.viewlets.size());
  if (k == 0) throw Error(ErrorCode::InvalidInput, "observation has no viewlets");
  if (obs.x.size() != k || obs.y.size() != k || obs.extent_x.size() != k || obs.extent_y.size() != k)
    throw Error(ErrorCode::InvalidInput, "observation arrays disagree in length");
  if ((obs.extent_x.array() <= 0.0).any() || (obs.extent_y.array() <= 0.0).any())
    throw Error(ErrorCode::InvalidInput, "observation extents must be positive");

  LikelihoodBreakdown out;
  out.viewlets = viewlet_set_log_probability(model, obs.viewlets);
  if (!std::isfinite(out.viewlets)) return out;

  if (obs.appearance_sq.size() == k) {
    for (Index i = 0; i < k; ++i) {
      const auto& vl = model.viewlets[obs.viewlets[i]];
      const double var = vl.appearance_variance;
      const double d = static_cast<double>(vl.centroid.size());
      out.appearance += -0.5 * d * std::log(2.0 * std::numbers::pi * var) - 0.5 * obs.appearance_sq(i) / var;
    }
  }

  const Index n = model.size();
  const Index anchor = model.srn.anchor();
  // Observed nodes in ascending order, with their rows in the observation.
  std::vector<std::pair<Index, Index>> order;
  for (Index i = 0; i < k; ++i) order.push_back({obs.viewlets[i], i});
  std::sort(order.begin(), order.end());
  std::vector<Index> nodes;
  for (auto [node, row] : order) nodes.push_back(node);
  const Index ref_node = std::binary_search(nodes.begin(), nodes.end(), anchor) ? anchor : nodes.back();
  Index ref_row = 0;
  for (auto [node, row] : order)
    if (node == ref_node) ref_row = row;
  const std::span<const Index> observed(nodes);

  const auto gs = srn::axis_gaussian(model.srn, srn::Axis::S, Eigen::VectorXd::Ones(n));
  if (!gs.ok()) throw Error(ErrorCode::Singular, "scale springs do not connect the network");
  Eigen::VectorXd rel_scale(k - 1);
  {
    Index r = 0;
    for (auto [node, row] : order)
      if (node != ref_node) rel_scale(r++) = std::log(obs.extent_x(row) / obs.extent_x(ref_row));
  }
  if (k > 1) out.scale = gmrf::marginal_log_density(gs, observed, ref_node, rel_scale);

  Eigen::VectorXd log_scale = gmrf::conditional_relative_mean(gs, observed, ref_node, rel_scale);
  for (auto [node, row] : order) log_scale(node) = std::log(obs.extent_x(row) / obs.extent_x(ref_row));
  const double anchor_log = log_scale(anchor);
  const Eigen::VectorXd normalized = (log_scale.array() - anchor_log).exp();

  for (srn::Axis axis : {srn::Axis::X, srn::Axis::Y}) {
    const bool is_x = axis == srn::Axis::X;
    const Eigen::VectorXd& pos = is_x ? obs.x : obs.y;
    const Eigen::VectorXd& ext = is_x ? obs.extent_x : obs.extent_y;
    const double anchor_extent = ext(ref_row) * std::exp(anchor_log);
    const auto g = srn::axis_gaussian(model.srn, axis, normalized);
    if (!g.ok()) throw Error(ErrorCode::Singular, "position springs do not connect the network");
    if (k < 2) continue;
    Eigen::VectorXd rel(k - 1);
    Index r = 0;
    for (auto [node, row] : order)
      if (node != ref_node) rel(r++) = (pos(row) - pos(ref_row)) / anchor_extent;
    (is_x ? out.x : out.y) = gmrf::marginal_log_density(g, observed, ref_node, rel);
  }
  return out;
}

LikelihoodBreakdown exemplar_log_likelihood(const SuvModel& model, const Exemplar& exemplar) {
  return exemplar_log_likelihood(model, observe(model, exemplar));
}

// ---------------------------------------------------------------------------

void paste_patch(Image& canvas, const Image& patch, double x, double y, double extent_x, double extent_y) {
  const int w = std::max(1, static_cast<int>(std::lround(extent_x)));
  const int h = std::max(1, static_cast<int>(std::lround(extent_y)));
  const Image scaled = imaging::resize(patch, w, h);
  const int x0 = static_cast<int>(std::lround(x));
  const int y0 = static_cast<int>(std::lround(y));
  for (int r = 0; r < h; ++r) {
    const int cy = y0 + r;
    if (cy < 0 || cy >= canvas.rows()) continue;
    for (int c = 0; c < w; ++c) {
      const int cx = x0 + c;
      if (cx < 0 || cx >= canvas.cols()) continue;
      canvas(cy, cx) = scaled(r, c);
    }
  }
}

Rendered render_exemplar(const Exemplar& exemplar, const SuvModel& model, int width, int height, float background) {
  Rendered out;
  const Box b = exemplar.box();
  out.offset_x = b.x0 < 0.0 ? std::ceil(-b.x0) : 0.0;
  out.offset_y = b.y0 < 0.0 ? std::ceil(-b.y0) : 0.0;
  const int need_w = static_cast<int>(std::ceil(b.x1 + out.offset_x)) + 1;
  const int need_h = static_cast<int>(std::ceil(b.y1 + out.offset_y)) + 1;
  out.image = Image::Constant(std::max(height, need_h), std::max(width, need_w), background);
  for (std::size_t i = 0; i < exemplar.count(); ++i) {
    const auto& patch = model.viewlets[exemplar.viewlets[i]].patch;
    if (patch.size() == 0) throw Error(ErrorCode::InvalidInput, "viewlet has no representative patch");
    const auto k = static_cast<Index>(i);
    paste_patch(out.image, patch, exemplar.x(k) + out.offset_x, exemplar.y(k) + out.offset_y, exemplar.extent_x(k),
                exemplar.extent_y(k));
  }
  return out;
}

}  // namespace suvm::gen
