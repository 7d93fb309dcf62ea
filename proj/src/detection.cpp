#include "suvm/detection.hpp"

#include "suvm/union_find.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <unordered_map>

namespace suvm::detect {

double chi_square_quantile(double probability, int dof) {
  if (!(probability > 0.0 && probability < 1.0) || dof < 1)
    throw Error(ErrorCode::InvalidInput, "chi-square quantile needs p in (0, 1) and dof >= 1");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), probability);
}

namespace {

struct OrientedSpring {
  Eigen::Vector3d stiffness;
  Eigen::Vector3d rest;
};

// Spring from node a to node b, rest values oriented a -> b.
std::optional<OrientedSpring> oriented_spring(const gen::SuvModel& model, Index a, Index b) {
  const auto* e = model.srn.edge(a, b);
  if (!e) return std::nullopt;
  return OrientedSpring{e->stiffness, e->i == a ? e->rest : Eigen::Vector3d(-e->rest)};
}

Eigen::Vector3d soften(const Eigen::Vector3d& c, const Eigen::Vector3d& noise) {
  Eigen::Vector3d out;
  for (int k = 0; k < 3; ++k) out(k) = c(k) > 0.0 ? 1.0 / (1.0 / c(k) + noise(k)) : 0.0;
  return out;
}

double residual(const WordDetection& a, const WordDetection& b, const OrientedSpring& s,
                const Eigen::Vector3d& stiffness) {
  const Eigen::Vector3d z = srn::pair_statistics(a, b);
  return stiffness.dot((z - s.rest).cwiseAbs2());
}

}  // namespace

Compatibility pairwise_compatibility(const WordDetection& a, const WordDetection& b, const gen::SuvModel& model,
                                     double threshold, const Eigen::Vector3d& noise) {
  const Index u = model.srn.local(a.word);
  const Index v = model.srn.local(b.word);
  const auto spring = (u >= 0 && v >= 0) ? oriented_spring(model, u, v) : std::nullopt;
  if (!spring) throw Error(ErrorCode::InvalidInput, "words share no spring in the model");
  Compatibility c;
  c.residual = residual(a, b, *spring, soften(spring->stiffness, noise));
  c.pass = c.residual <= threshold;
  return c;
}

Eigen::Vector3d quantization_variance(const WordDetection& a, const WordDetection& b, imaging::WindowSize window,
                                      int stride, double ratio) {
  const double step_a = stride * a.extent_x / window.width;
  const double step_b = stride * b.extent_x / window.width;
  const double step_ay = stride * a.extent_y / window.height;
  const double step_by = stride * b.extent_y / window.height;
  const double sx = a.extent_x + b.extent_x;
  const double sy = a.extent_y + b.extent_y;
  const double log_step = std::log(ratio);
  return {(step_a * step_a + step_b * step_b) / 12.0 / (sx * sx),
          (step_ay * step_ay + step_by * step_by) / 12.0 / (sy * sy), 2.0 * log_step * log_step / 12.0};
}

// ---------------------------------------------------------------------------

namespace {

struct CellKey {
  int node;
  int layer;
  std::int64_t cx;
  std::int64_t cy;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.node) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.layer) + 0x632BE59BD9B4E019ull + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.cx) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.cy) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct LayerInfo {
  int layer;
  double extent_x;
  double extent_y;
};

}  // namespace

std::vector<ObjectDetection> group_detections(const std::vector<WordDetection>& all, const gen::SuvModel& model,
                                              const DetectParams& params, GroupingStats* stats) {
  GroupingStats gs;
  std::vector<WordDetection> dets;
  std::vector<int> node;
  for (const auto& d : all) {
    const Index n = model.srn.local(d.word);
    if (n < 0) continue;
    dets.push_back(d);
    node.push_back(static_cast<int>(n));
  }
  gs.detections = dets.size();

  // Spatial hash per (node, layer) with cells twice the layer's window.
  std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
  std::vector<std::vector<LayerInfo>> layers_of(model.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    const CellKey key{node[i], d.layer, static_cast<std::int64_t>(std::floor(d.x / (2.0 * d.extent_x))),
                      static_cast<std::int64_t>(std::floor(d.y / (2.0 * d.extent_y)))};
    grid[key].push_back(static_cast<int>(i));
    auto& ls = layers_of[node[i]];
    if (std::none_of(ls.begin(), ls.end(), [&](const LayerInfo& l) { return l.layer == d.layer; }))
      ls.push_back({d.layer, d.extent_x, d.extent_y});
  }

  const auto adjacency = model.srn.adjacency();
  auto linked = [&](int u, int v) {
    return std::find(adjacency[u].begin(), adjacency[u].end(), v) != adjacency[u].end();
  };
  const double chi2 = params.chi2_threshold;
  UnionFind uf(dets.size());
  std::vector<std::vector<int>> compatible(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& a = dets[i];
    const int u = node[i];
    for (Index v : adjacency[u]) {
      const auto spring = *oriented_spring(model, u, v);
      for (const auto& layer : layers_of[v]) {
        WordDetection probe = a;
        probe.extent_x = layer.extent_x;
        probe.extent_y = layer.extent_y;
        const Eigen::Vector3d noise = params.quantization_noise
                                          ? quantization_variance(a, probe, model.window, params.scan.stride,
                                                                  params.scan.pyramid_ratio)
                                          : Eigen::Vector3d::Zero();
        const Eigen::Vector3d c = soften(spring.stiffness, noise);
        // Scale gate, then a box around the predicted position.
        const double dl = std::log(layer.extent_x / a.extent_x) - spring.rest(2);
        if (c(2) * dl * dl > chi2) continue;
        const double span_x = a.extent_x + layer.extent_x;
        const double span_y = a.extent_y + layer.extent_y;
        const double px = a.x + spring.rest(0) * span_x;
        const double py = a.y + spring.rest(1) * span_y;
        const double rx = c(0) > 0.0 ? std::sqrt(chi2 / c(0)) * span_x : 4.0 * span_x;
        const double ry = c(1) > 0.0 ? std::sqrt(chi2 / c(1)) * span_y : 4.0 * span_y;
        const double cell_x = 2.0 * layer.extent_x;
        const double cell_y = 2.0 * layer.extent_y;
        const auto cx0 = static_cast<std::int64_t>(std::floor((px - rx) / cell_x));
        const auto cx1 = static_cast<std::int64_t>(std::floor((px + rx) / cell_x));
        const auto cy0 = static_cast<std::int64_t>(std::floor((py - ry) / cell_y));
        const auto cy1 = static_cast<std::int64_t>(std::floor((py + ry) / cell_y));
        for (auto cy = cy0; cy <= cy1; ++cy) {
          for (auto cx = cx0; cx <= cx1; ++cx) {
            const auto it = grid.find({static_cast<int>(v), layer.layer, cx, cy});
            if (it == grid.end()) continue;
            for (int j : it->second) {
              if (static_cast<std::size_t>(j) <= i) continue;
              ++gs.pair_tests;
              const auto& b = dets[j];
              const Eigen::Vector3d q =
                  params.quantization_noise
                      ? quantization_variance(a, b, model.window, params.scan.stride, params.scan.pyramid_ratio)
                      : Eigen::Vector3d::Zero();
              if (residual(a, b, spring, soften(spring.stiffness, q)) <= chi2) {
                ++gs.edges;
                uf.unite(i, static_cast<std::size_t>(j));
                compatible[i].push_back(j);
                compatible[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
              }
            }
          }
        }
      }
    }
  }

  std::map<std::size_t, std::vector<int>> groups;
  for (std::size_t i = 0; i < dets.size(); ++i) groups[uf.find(i)].push_back(static_cast<int>(i));
  gs.components = groups.size();

  std::vector<ObjectDetection> out;
  for (const auto& [root, members] : groups) {
    // Members: one detection per slot, grown from a seed along compatibility
    // edges; a candidate must pass against every member it shares a spring with.
    std::map<int, int> best_of_slot;
    std::size_t best_parts = 0;
    double best_distance = 0.0;
    for (int seed : members) {
      std::map<int, int> chosen{{model.slot_of[node[seed]], seed}};
      for (;;) {
        int pick = -1;
        for (const auto& [slot, m] : chosen)
          for (int j : compatible[m]) {
            if (chosen.count(model.slot_of[node[j]])) continue;
            if (pick >= 0 && dets[j].distance >= dets[pick].distance) continue;
            const bool fits = std::all_of(chosen.begin(), chosen.end(), [&](const auto& entry) {
              const int other = entry.second;
              return !linked(node[other], node[j]) ||
                     std::find(compatible[other].begin(), compatible[other].end(), j) != compatible[other].end();
            });
            if (fits) pick = j;
          }
        if (pick < 0) break;
        chosen.emplace(model.slot_of[node[pick]], pick);
      }
      std::set<int> covered;
      double distance = 0.0;
      for (const auto& [slot, i] : chosen) {
        covered.insert(model.cipc.part[node[i]]);
        distance += dets[i].distance;
      }
      if (covered.size() > best_parts || (covered.size() == best_parts && distance < best_distance)) {
        best_parts = covered.size();
        best_distance = distance;
        best_of_slot = std::move(chosen);
      }
    }
    std::vector<int> parts;
    for (const auto& [slot, i] : best_of_slot) parts.push_back(model.cipc.part[node[i]]);
    std::sort(parts.begin(), parts.end());
    parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
    if (static_cast<int>(parts.size()) < params.min_parts) continue;

    ObjectDetection od;
    od.parts = std::move(parts);
    od.group_size = members.size();
    gen::Observation obs;
    const auto k = static_cast<Index>(best_of_slot.size());
    obs.x.resize(k);
    obs.y.resize(k);
    obs.extent_x.resize(k);
    obs.extent_y.resize(k);
    obs.appearance_sq.resize(k);
    Index r = 0;
    for (const auto& [slot, i] : best_of_slot) {
      const auto& d = dets[i];
      od.members.push_back(d);
      od.nodes.push_back(node[i]);
      od.box = unite(od.box, d.box());
      obs.viewlets.push_back(node[i]);
      obs.x(r) = d.x;
      obs.y(r) = d.y;
      obs.extent_x(r) = d.extent_x;
      obs.extent_y(r) = d.extent_y;
      obs.appearance_sq(r) = d.distance * d.distance;
      ++r;
    }
    od.breakdown = gen::exemplar_log_likelihood(model, obs);
    od.score = od.breakdown.total();
    out.push_back(std::move(od));
  }
  if (stats) *stats = gs;
  return out;
}

std::vector<ObjectDetection> detect_objects(const Image& image, const dict::VisualDictionary& dictionary,
                                            const gen::SuvModel& model, const DetectParams& params) {
  const auto words = dict::scan_image(image, dictionary, params.scan);
  return suppress_duplicates(group_detections(words, model, params), params.suppression_iou);
}

std::vector<ObjectDetection> suppress_duplicates(std::vector<ObjectDetection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(), [](const ObjectDetection& a, const ObjectDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.box.x0, a.box.y0, a.box.x1, a.box.y1) < std::tie(b.box.x0, b.box.y0, b.box.x1, b.box.y1);
  });
  std::vector<ObjectDetection> kept;
  for (auto& d : detections) {
    const bool overlaps = std::any_of(kept.begin(), kept.end(),
                                      [&](const ObjectDetection& k) { return iou(k.box, d.box) > iou_threshold; });
    if (!overlaps) kept.push_back(std::move(d));
  }
  return kept;
}

// ---------------------------------------------------------------------------

Eigen::Vector2d geometric_median(const std::vector<Eigen::Vector2d>& points, int max_iters, double tol) {
  if (points.empty()) throw Error(ErrorCode::InvalidInput, "geometric median of no points");
  Eigen::Vector2d y = Eigen::Vector2d::Zero();
  for (const auto& p : points) y += p;
  y /= static_cast<double>(points.size());
  for (int it = 0; it < max_iters; ++it) {
    Eigen::Vector2d num = Eigen::Vector2d::Zero();
    double den = 0.0;
    for (const auto& p : points) {
      const double d = (p - y).norm();
      if (d < 1e-12) continue;
      num += p / d;
      den += 1.0 / d;
    }
    if (den == 0.0) return y;
    const Eigen::Vector2d next = num / den;
    const double step = (next - y).norm();
    y = next;
    if (step < tol) break;
  }
  return y;
}

PartLocalization localize_part(const ObjectDetection& detection, const gen::SuvModel& model, int part) {
  if (part < 0 || part >= model.cipc.part_count) throw Error(ErrorCode::InvalidInput, "no such part");
  const auto regions = semantics::part_regions(model.gpe, model.cipc);
  const auto& region = regions[part];
  PartLocalization out;

  std::vector<Eigen::Vector2d> centers;
  std::vector<double> widths;
  std::vector<double> heights;
  for (std::size_t m = 0; m < detection.members.size(); ++m) {
    const auto& d = detection.members[m];
    const int u = detection.nodes[m];
    const double s = model.gpe.scale(u);
    const double unit_x = d.extent_x / s;
    const double unit_y = d.extent_y / s;
    const double x0 = d.x + (region.box.x0 - model.gpe.x(u)) * unit_x;
    const double x1 = d.x + (region.box.x1 - model.gpe.x(u)) * unit_x;
    const double y0 = d.y + (region.box.y0 - model.gpe.y(u)) * unit_y;
    const double y1 = d.y + (region.box.y1 - model.gpe.y(u)) * unit_y;
    centers.push_back({0.5 * (x0 + x1), 0.5 * (y0 + y1)});
    widths.push_back(x1 - x0);
    heights.push_back(y1 - y0);
  }
  if (centers.empty()) return out;

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  };
  const Eigen::Vector2d c = geometric_median(centers);
  const double w = median(widths);
  const double h = median(heights);
  out.present = true;
  out.votes = static_cast<int>(centers.size());
  out.box = {c.x() - 0.5 * w, c.y() - 0.5 * h, c.x() + 0.5 * w, c.y() + 0.5 * h};
  double spread = 0.0;
  for (const auto& p : centers) spread += (p - c).norm();
  out.dispersion = spread / static_cast<double>(centers.size()) / std::hypot(w, h);
  return out;
}

}  // namespace suvm::detect
