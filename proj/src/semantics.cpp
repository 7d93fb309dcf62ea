#include "suvm/semantics.hpp"

#include "suvm/union_find.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <random>
#include <sstream>

namespace suvm::semantics {

std::optional<Eigen::Vector3d> oriented_rest(const srn::Srn& srn, Index a, Index b) {
  const auto* e = srn.edge(a, b);
  if (!e) return std::nullopt;
  return e->i == a ? e->rest : Eigen::Vector3d(-e->rest);
}

std::vector<std::vector<int>> CipcGraph::members() const {
  std::vector<std::vector<int>> out(part_count);
  for (std::size_t n = 0; n < part.size(); ++n) out[part[n]].push_back(static_cast<int>(n));
  return out;
}

namespace {

std::vector<Index> shared_neighbors(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool same_geometry(const srn::Srn& srn, Index u, Index v, const std::vector<Index>& shared, double tol) {
  for (Index w : shared) {
    const Eigen::Vector3d d = *oriented_rest(srn, u, w) - *oriented_rest(srn, v, w);
    if (d.cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

// Whether going u -> v -> w lands where the direct u -> w spring rests.
bool consistent_triangles(const srn::Srn& srn, Index u, Index v, const std::vector<Index>& shared, double tol) {
  const Eigen::Vector3d uv = *oriented_rest(srn, u, v);
  for (Index w : shared) {
    const Eigen::Vector3d uw = *oriented_rest(srn, u, w);
    const Eigen::Vector3d vw = *oriented_rest(srn, v, w);
    for (int a = 0; a < 2; ++a) {
      const Eigen::VectorXd& e = a == 0 ? srn.extent_x : srn.extent_y;
      const double direct = uw(a) * (e(u) + e(w));
      const double via = uv(a) * (e(u) + e(v)) + vw(a) * (e(v) + e(w));
      if (std::abs(direct - via) / (e(u) + e(w)) > tol) return false;
    }
    if (std::abs(uw(2) - uv(2) - vw(2)) > tol) return false;
  }
  return true;
}

}  // namespace

CipcGraph cipc_build(const srn::Srn& srn, const srn::PairStats& stats, const CipcParams& params) {
  const Index n = srn.size();
  const auto adj = srn.adjacency();
  CipcGraph g;

  std::vector<std::uint64_t> images(n, 0);
  for (Index k = 0; k < n; ++k)
    if (const auto* rec = stats.word(srn.nodes[k])) images[k] = rec->images;

  // Rule (i).
  for (Index u = 0; u < n; ++u) {
    for (Index v = u + 1; v < n; ++v) {
      if (srn.edge(u, v)) continue;
      const double cap = params.exclusion_fraction * static_cast<double>(std::min(images[u], images[v]));
      if (static_cast<double>(stats.co_occurrences(srn.nodes[u], srn.nodes[v])) > cap) continue;
      const auto shared = shared_neighbors(adj[u], adj[v]);
      if (static_cast<int>(shared.size()) < params.min_shared_neighbors) continue;
      if (!same_geometry(srn, u, v, shared, params.geometric_tolerance)) continue;
      g.edges.push_back({static_cast<int>(u), static_cast<int>(v), CipcKind::Exclusive});
    }
  }

  // Rule (ii).
  const auto stable_count =
      static_cast<std::size_t>(std::floor(params.stable_fraction * static_cast<double>(srn.edges.size())));
  if (stable_count > 0) {
    std::vector<double> variances;
    for (const auto& e : srn.edges) variances.push_back(e.variance);
    std::sort(variances.begin(), variances.end());
    const std::size_t count = stable_count;
    const double cutoff = variances[count - 1];
    for (const auto& e : srn.edges) {
      if (e.variance > cutoff) continue;
      const auto shared = shared_neighbors(adj[e.i], adj[e.j]);
      if (static_cast<int>(shared.size()) < params.min_shared_neighbors) continue;
      if (!consistent_triangles(srn, e.i, e.j, shared, params.geometric_tolerance)) continue;
      g.edges.push_back({e.i, e.j, CipcKind::Stable});
    }
  }

  UnionFind uf(static_cast<std::size_t>(n));
  for (const auto& e : g.edges) uf.unite(e.a, e.b);
  g.part = uf.labels();
  g.part_count = g.part.empty() ? 0 : *std::max_element(g.part.begin(), g.part.end()) + 1;
  return g;
}

// ---------------------------------------------------------------------------

namespace {

using Springs = std::vector<gmrf::Spring<double>>;

Springs scale_springs(const srn::Srn& srn) {
  Springs out;
  for (const auto& e : srn.edges)
    if (e.stiffness(2) > 0.0) out.push_back({e.i, e.j, e.stiffness(2), e.rest(2)});
  return out;
}

Springs position_springs(const srn::Srn& srn, int axis, const Eigen::VectorXd& scale) {
  Springs out;
  for (const auto& e : srn.edges) {
    if (e.stiffness(axis) <= 0.0) continue;
    const double span = scale(e.i) + scale(e.j);
    out.push_back({e.i, e.j, e.stiffness(axis) / (span * span), e.rest(axis) * span});
  }
  return out;
}

double spring_energy(const Springs& springs, const Eigen::VectorXd& v) {
  return gmrf::energy<double>(std::span<const gmrf::Spring<double>>(springs), v);
}

Eigen::VectorXd bfs_start(Index n, Index anchor, const Springs& springs) {
  std::vector<std::vector<std::pair<Index, double>>> out(n);
  for (const auto& s : springs) {
    out[s.i].push_back({s.j, s.offset});
    out[s.j].push_back({s.i, -s.offset});
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  std::vector<bool> placed(n, false);
  std::deque<Index> queue{anchor};
  placed[anchor] = true;
  while (!queue.empty()) {
    const Index k = queue.front();
    queue.pop_front();
    for (auto [m, off] : out[k]) {
      if (placed[m]) continue;
      placed[m] = true;
      v(m) = v(k) + off;
      queue.push_back(m);
    }
  }
  return v;
}

struct SweepResult {
  double stress = 0.0;
  int sweeps = 0;
  bool converged = false;
};

SweepResult gauss_seidel(Index n, Index anchor, const Springs& springs, Eigen::VectorXd& v, const GpeParams& params) {
  std::vector<std::vector<const gmrf::Spring<double>*>> touching(n);
  for (const auto& s : springs) {
    touching[s.i].push_back(&s);
    touching[s.j].push_back(&s);
  }
  SweepResult r;
  r.stress = spring_energy(springs, v);
  constexpr double kStepTol = 1e-11;
  while (r.sweeps < params.max_iters) {
    double max_step = 0.0;
    for (Index k = 0; k < n; ++k) {
      if (k == anchor || touching[k].empty()) continue;
      double num = 0.0;
      double den = 0.0;
      for (const auto* s : touching[k]) {
        const double target = s->i == k ? v(s->j) - s->offset : v(s->i) + s->offset;
        num += s->weight * target;
        den += s->weight;
      }
      const double next = num / den;
      max_step = std::max(max_step, std::abs(next - v(k)));
      v(k) = next;
    }
    ++r.sweeps;
    const double stress = spring_energy(springs, v);
    if (stress > r.stress + 1e-12 * std::max(1.0, r.stress))
      throw std::logic_error("embedding stress increased during a sweep");
    const double improvement = r.stress - stress;
    r.stress = stress;
    if (improvement < params.tol * std::max(1.0, stress) && max_step < kStepTol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace

std::array<double, 3> gpe_stress(const srn::Srn& srn, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& scale) {
  const Eigen::VectorXd log_scale = scale.array().log();
  return {spring_energy(position_springs(srn, 0, scale), x), spring_energy(position_springs(srn, 1, scale), y),
          spring_energy(scale_springs(srn), log_scale)};
}

GpeEmbedding gpe_embed(const srn::Srn& srn, const GpeParams& params) {
  const Index n = srn.size();
  const Index anchor = srn.anchor();
  if (n < 1) throw Error(ErrorCode::InvalidInput, "empty spring network");
  {
    UnionFind uf(static_cast<std::size_t>(n));
    for (const auto& e : srn.edges) uf.unite(e.i, e.j);
    for (Index k = 0; k < n; ++k)
      if (!uf.connected(k, anchor)) throw Error(ErrorCode::InvalidInput, "embedding needs a connected network");
  }

  std::mt19937_64 rng(params.init_seed);
  std::uniform_real_distribution<double> uniform(-5.0, 5.0);
  auto start = [&](const Springs& springs) {
    if (params.bfs_init) return bfs_start(n, anchor, springs);
    Eigen::VectorXd v(n);
    for (Index k = 0; k < n; ++k) v(k) = k == anchor ? 0.0 : uniform(rng);
    return v;
  };

  GpeEmbedding out;
  const Springs ss = scale_springs(srn);
  Eigen::VectorXd log_scale = start(ss);
  const SweepResult rs = gauss_seidel(n, anchor, ss, log_scale, params);
  out.scale = log_scale.array().exp();
  out.axis_stress[2] = rs.stress;

  const Springs sx = position_springs(srn, 0, out.scale);
  const Springs sy = position_springs(srn, 1, out.scale);
  out.x = start(sx);
  out.y = start(sy);
  const SweepResult rx = gauss_seidel(n, anchor, sx, out.x, params);
  const SweepResult ry = gauss_seidel(n, anchor, sy, out.y, params);
  out.axis_stress[0] = rx.stress;
  out.axis_stress[1] = ry.stress;
  out.stress = rx.stress + ry.stress + rs.stress;
  out.iterations = rs.sweeps + rx.sweeps + ry.sweeps;
  out.converged = rs.converged && rx.converged && ry.converged;
  if (!out.converged) log_warning("embedding stopped at the sweep cap before converging");
  return out;
}

std::vector<PartRegion> part_regions(const GpeEmbedding& embedding, const CipcGraph& cipc) {
  if (static_cast<Index>(cipc.part.size()) != embedding.x.size())
    throw Error(ErrorCode::InvalidInput, "parts and embedding cover different node sets");
  std::vector<PartRegion> out;
  const auto groups = cipc.members();
  for (int p = 0; p < cipc.part_count; ++p) {
    PartRegion r;
    r.part = p;
    r.members = groups[p];
    r.min_scale = std::numeric_limits<double>::infinity();
    r.max_scale = 0.0;
    bool first = true;
    for (int k : r.members) {
      const double s = embedding.scale(k);
      r.x += embedding.x(k);
      r.y += embedding.y(k);
      r.center_x += embedding.x(k) + 0.5 * s;
      r.center_y += embedding.y(k) + 0.5 * s;
      r.mean_scale += s;
      r.min_scale = std::min(r.min_scale, s);
      r.max_scale = std::max(r.max_scale, s);
      const Box w{embedding.x(k), embedding.y(k), embedding.x(k) + s, embedding.y(k) + s};
      r.box = first ? w : unite(r.box, w);
      first = false;
    }
    const double m = static_cast<double>(r.members.size());
    r.x /= m;
    r.y /= m;
    r.center_x /= m;
    r.center_y /= m;
    r.mean_scale /= m;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string part_color(int part) {
  const double h = std::fmod(part * 0.61803398875, 1.0) * 6.0;
  const double s = 0.65;
  const double v = 0.9;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (i % 6) {
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    case 5: r = v, g = p, b = q; break;
    default: break;
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", int(r * 255), int(g * 255), int(b * 255));
  return buf;
}

}  // namespace

std::string embedding_svg(const GpeEmbedding& embedding, const CipcGraph& cipc, const std::vector<int>& words) {
  const Index n = embedding.x.size();
  Eigen::ArrayXd cx = embedding.x.array() + 0.5 * embedding.scale.array();
  Eigen::ArrayXd cy = embedding.y.array() + 0.5 * embedding.scale.array();
  const double lo_x = n ? cx.minCoeff() : 0.0, hi_x = n ? cx.maxCoeff() : 1.0;
  const double lo_y = n ? cy.minCoeff() : 0.0, hi_y = n ? cy.maxCoeff() : 1.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  constexpr double kSize = 640.0, kMargin = 40.0;
  const double unit = (kSize - 2 * kMargin) / span;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Index k = 0; k < n; ++k) {
    const double px = kMargin + (cx(k) - lo_x) * unit;
    const double py = kMargin + (cy(k) - lo_y) * unit;
    const double r = 3.0 + 4.0 * embedding.scale(k);
    const int part = k < static_cast<Index>(cipc.part.size()) ? cipc.part[k] : 0;
    svg << "<circle class=\"viewlet\" cx=\"" << px << "\" cy=\"" << py << "\" r=\"" << r << "\" fill=\""
        << part_color(part) << "\" fill-opacity=\"0.75\" data-part=\"" << part << "\"><title>word "
        << (k < static_cast<Index>(words.size()) ? words[k] : static_cast<int>(k)) << ", part " << part
        << "</title></circle>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string embedding_table(const GpeEmbedding& embedding, const CipcGraph& cipc, const std::vector<int>& words) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%8s %6s %12s %12s %10s\n", "word", "part", "x", "y", "scale");
  out << line;
  for (Index k = 0; k < embedding.x.size(); ++k) {
    std::snprintf(line, sizeof line, "%8d %6d %12.6f %12.6f %10.6f\n",
                  k < static_cast<Index>(words.size()) ? words[k] : static_cast<int>(k),
                  k < static_cast<Index>(cipc.part.size()) ? cipc.part[k] : -1, embedding.x(k), embedding.y(k),
                  embedding.scale(k));
    out << line;
  }
  out << "stress " << embedding.stress << '\n';
  return out.str();
}

}  // namespace suvm::semantics
