#include "suvm/srn.hpp"

#include "suvm/union_find.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace suvm::srn {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::S: return "s";
  }
  return "?";
}

Eigen::Vector3d pair_statistics(const WordDetection& i, const WordDetection& j) {
  return {(j.x - i.x) / (i.extent_x + j.extent_x), (j.y - i.y) / (i.extent_y + j.extent_y),
          std::log(j.extent_x / i.extent_x)};
}

// ---------------------------------------------------------------------------

void Moments::push(const Eigen::Vector3d& z) {
  ++n;
  const Eigen::Vector3d delta = z - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta.cwiseProduct(z - mean);
}

void Moments::merge(const Moments& other) {
  if (other.n == 0) return;
  if (n == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n);
  const double nb = static_cast<double>(other.n);
  const double total = na + nb;
  const Eigen::Vector3d delta = other.mean - mean;
  mean += delta * (nb / total);
  m2 += other.m2 + delta.cwiseAbs2() * (na * nb / total);
  n += other.n;
}

Moments Moments::flipped() const {
  Moments m = *this;
  m.mean = -mean;
  return m;
}

void PairStats::add_image(std::span<const WordDetection> detections, bool one_per_word) {
  ++images_;
  std::vector<const WordDetection*> kept;
  kept.reserve(detections.size());
  for (const auto& d : detections) {
    if (!(d.extent_x > 0.0 && d.extent_y > 0.0) || !std::isfinite(d.x) || !std::isfinite(d.y)) {
      ++skipped_;
      continue;
    }
    kept.push_back(&d);
  }
  if (one_per_word) {
    std::map<int, const WordDetection*> best;
    for (const auto* d : kept) {
      auto [it, fresh] = best.emplace(d->word, d);
      if (!fresh && d->distance < it->second->distance) it->second = d;
    }
    kept.clear();
    for (const auto& [w, d] : best) kept.push_back(d);
  } else {
    std::stable_sort(kept.begin(), kept.end(),
                     [](const WordDetection* a, const WordDetection* b) { return a->word < b->word; });
  }

  int last_word = std::numeric_limits<int>::min();
  for (const auto* d : kept) {
    auto& rec = words_[d->word];
    if (d->word != last_word) ++rec.images;
    last_word = d->word;
    ++rec.detections;
    rec.extent_x_sum += d->extent_x;
    rec.extent_y_sum += d->extent_y;
  }

  std::set<PairKey> seen;
  for (std::size_t a = 0; a < kept.size(); ++a) {
    for (std::size_t b = a + 1; b < kept.size(); ++b) {
      const WordDetection* lo = kept[a];
      const WordDetection* hi = kept[b];
      if (lo->word == hi->word) continue;
      const PairKey key{lo->word, hi->word};
      auto& rec = pairs_[key];
      rec.moments.push(pair_statistics(*lo, *hi));
      if (one_per_word || seen.insert(key).second) ++rec.images;
    }
  }
}

void PairStats::merge(const PairStats& other) {
  for (const auto& [key, rec] : other.pairs_) {
    auto& mine = pairs_[key];
    mine.moments.merge(rec.moments);
    mine.images += rec.images;
  }
  for (const auto& [w, rec] : other.words_) {
    auto& mine = words_[w];
    mine.images += rec.images;
    mine.detections += rec.detections;
    mine.extent_x_sum += rec.extent_x_sum;
    mine.extent_y_sum += rec.extent_y_sum;
  }
  images_ += other.images_;
  skipped_ += other.skipped_;
}

std::optional<Moments> PairStats::moments(int i, int j) const {
  if (i == j) return std::nullopt;
  const auto it = pairs_.find({std::min(i, j), std::max(i, j)});
  if (it == pairs_.end()) return std::nullopt;
  return i < j ? it->second.moments : it->second.moments.flipped();
}

std::uint64_t PairStats::co_occurrences(int i, int j) const {
  const auto it = pairs_.find({std::min(i, j), std::max(i, j)});
  return it == pairs_.end() ? 0 : it->second.images;
}

const WordRecord* PairStats::word(int w) const {
  const auto it = words_.find(w);
  return it == words_.end() ? nullptr : &it->second;
}

double combined_variance(const PairStats& stats, int i, int j, std::uint64_t min_support) {
  const auto m = stats.moments(i, j);
  if (!m || m->n < std::max<std::uint64_t>(min_support, 1)) return std::numeric_limits<double>::infinity();
  return m->variance().sum();
}

// ---------------------------------------------------------------------------

std::vector<SpringEdge> sparsify(const PairStats& stats, const SparsifyParams& params) {
  if (!(params.lambda > 0.0)) throw Error(ErrorCode::InvalidInput, "lambda must be positive");
  std::vector<SpringEdge> edges;
  for (const auto& [key, rec] : stats.pairs()) {
    const double v = combined_variance(stats, key.first, key.second, params.min_support);
    if (!std::isfinite(v) || v > params.variance_threshold) continue;
    SpringEdge e;
    e.i = key.first;
    e.j = key.second;
    e.stiffness = (rec.moments.variance().array() + params.lambda).inverse();
    e.rest = rec.moments.mean;
    e.variance = v;
    e.support = rec.moments.n;
    edges.push_back(e);
  }
  return edges;
}

Index Srn::local(int word) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), word);
  return (it != nodes.end() && *it == word) ? static_cast<Index>(it - nodes.begin()) : -1;
}

const SpringEdge* Srn::edge(Index a, Index b) const {
  if (a > b) std::swap(a, b);
  for (const auto& e : edges)
    if (e.i == a && e.j == b) return &e;
  return nullptr;
}

std::vector<std::vector<Index>> Srn::adjacency() const {
  std::vector<std::vector<Index>> adj(nodes.size());
  for (const auto& e : edges) {
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

std::vector<Srn> giant_components(const std::vector<SpringEdge>& edges, std::size_t min_size,
                                  const PairStats* stats) {
  std::vector<int> words;
  for (const auto& e : edges) {
    words.push_back(e.i);
    words.push_back(e.j);
  }
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  auto dense = [&](int w) {
    return static_cast<std::size_t>(std::lower_bound(words.begin(), words.end(), w) - words.begin());
  };

  UnionFind uf(words.size());
  for (const auto& e : edges) uf.unite(dense(e.i), dense(e.j));
  std::map<std::size_t, std::vector<int>> groups;
  for (std::size_t k = 0; k < words.size(); ++k) groups[uf.find(k)].push_back(words[k]);

  std::vector<Srn> out;
  for (auto& [root, members] : groups) {
    if (members.size() < std::max<std::size_t>(min_size, 2)) continue;
    Srn s;
    s.nodes = members;
    s.extent_x = Eigen::VectorXd::Ones(s.size());
    s.extent_y = Eigen::VectorXd::Ones(s.size());
    if (stats) {
      for (Index n = 0; n < s.size(); ++n) {
        if (const auto* rec = stats->word(s.nodes[n]); rec && rec->detections > 0) {
          s.extent_x(n) = rec->mean_extent_x();
          s.extent_y(n) = rec->mean_extent_y();
        }
      }
    }
    for (const auto& e : edges) {
      const Index a = s.local(e.i);
      if (a < 0) continue;
      SpringEdge le = e;
      le.i = static_cast<int>(a);
      le.j = static_cast<int>(s.local(e.j));
      if (le.i > le.j) {
        std::swap(le.i, le.j);
        le.rest = -le.rest;
      }
      s.edges.push_back(le);
    }
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const Srn& a, const Srn& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.nodes.front() < b.nodes.front();
  });
  return out;
}

// ---------------------------------------------------------------------------

std::vector<gmrf::Spring<double>> axis_springs(const Srn& srn, Axis axis, const Eigen::VectorXd& extents) {
  const int a = static_cast<int>(axis);
  std::vector<gmrf::Spring<double>> springs;
  springs.reserve(srn.edges.size());
  for (const auto& e : srn.edges) {
    const double c = e.stiffness(a);
    if (c <= 0.0) continue;
    if (axis == Axis::S) {
      springs.push_back({e.i, e.j, c, e.rest(a)});
    } else {
      const double span = extents(e.i) + extents(e.j);
      springs.push_back({e.i, e.j, c / (span * span), e.rest(a) * span});
    }
  }
  return springs;
}

PrecisionMatrix assemble_precision(const Srn& srn, Axis axis, const Eigen::VectorXd& extents) {
  const auto springs = axis_springs(srn, axis, extents);
  PrecisionMatrix p;
  p.axis = axis;
  p.lambda = gmrf::assemble<double>(srn.size(), srn.anchor(), springs).precision;
  for (Index n = 0; n < srn.size(); ++n)
    if (n != srn.anchor()) p.order.push_back(srn.nodes[n]);
  return p;
}

PrecisionMatrix precision_matrix(const Srn& srn, Axis axis, const Eigen::VectorXd& extents) {
  if (srn.size() < 2) throw Error(ErrorCode::InvalidInput, "spring network needs at least two nodes");
  UnionFind uf(srn.nodes.size());
  for (const auto& s : axis_springs(srn, axis, extents)) uf.unite(s.i, s.j);
  std::vector<int> detached;
  for (Index n = 0; n < srn.size(); ++n)
    if (!uf.connected(n, srn.anchor())) detached.push_back(srn.nodes[n]);
  if (!detached.empty()) {
    std::ostringstream msg;
    msg << axis_name(axis) << "-axis precision matrix is singular: words {";
    for (std::size_t k = 0; k < detached.size(); ++k) msg << (k ? ", " : "") << detached[k];
    msg << "} are not connected to anchor word " << srn.nodes.back();
    throw Error(ErrorCode::Singular, msg.str());
  }
  return assemble_precision(srn, axis, extents);
}

// ---------------------------------------------------------------------------

gmrf::Gaussian<double> axis_gaussian(const Srn& srn, Axis axis, const Eigen::VectorXd& normalized_extents) {
  const auto springs = axis_springs(srn, axis, normalized_extents);
  return gmrf::Gaussian<double>(gmrf::assemble<double>(srn.size(), srn.anchor(), springs));
}

Likelihood log_likelihood(const Srn& srn, const Configuration& config) {
  const Index n = srn.size();
  if (config.x.size() != n || config.y.size() != n || config.extent_x.size() != n || config.extent_y.size() != n)
    throw Error(ErrorCode::InvalidInput, "configuration does not cover every node");
  if (!config.x.allFinite() || !config.y.allFinite() || !config.extent_x.allFinite() ||
      !config.extent_y.allFinite())
    throw Error(ErrorCode::InvalidInput, "configuration is not finite");
  if ((config.extent_x.array() <= 0.0).any() || (config.extent_y.array() <= 0.0).any())
    throw Error(ErrorCode::InvalidInput, "configuration extents must be positive");

  const Index m = srn.anchor();
  Likelihood out;
  for (Axis axis : kAxes) {
    Eigen::VectorXd extents;
    Eigen::VectorXd values;
    if (axis == Axis::S) {
      extents = Eigen::VectorXd::Ones(n);
      values = (config.extent_x.array() / config.extent_x(m)).log();
    } else {
      const Eigen::VectorXd& e = axis == Axis::X ? config.extent_x : config.extent_y;
      const Eigen::VectorXd& p = axis == Axis::X ? config.x : config.y;
      extents = e / e(m);
      values = (p.array() - p(m)) / e(m);
    }
    const auto springs = axis_springs(srn, axis, extents);
    const gmrf::Gaussian<double> g(gmrf::assemble<double>(n, m, springs));
    if (!g.ok())
      throw Error(ErrorCode::Singular,
                  std::string(axis_name(axis)) + "-axis springs do not connect the network");
    auto& a = out.axes[static_cast<int>(axis)];
    a.log_det = g.log_det_precision();
    a.stress = gmrf::energy<double>(std::span<const gmrf::Spring<double>>(springs), values);
    a.value = g.log_density(gmrf::reduce(values, m));
  }
  return out;
}

}  // namespace suvm::srn
