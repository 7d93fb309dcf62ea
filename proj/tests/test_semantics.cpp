#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "suvm/semantics.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <regex>

using namespace suvm;
using namespace suvm::semantics;

namespace {

struct Learned {
  srn::Srn network;
  srn::PairStats stats;
};

// Exemplars of a blueprint through accumulation, sparsification and component extraction.
Learned learn(const synth::Blueprint& bp, std::uint64_t images, double threshold = 0.1) {
  const auto model = synth::build_model(bp);
  Learned out;
  for (std::uint64_t i = 0; i < images; ++i) {
    const auto ex = gen::sample_exemplar(model, 77 + i, {.global_scale = 1.5});
    out.stats.add_image(synth::exemplar_detections(model, ex));
  }
  const auto edges = srn::sparsify(out.stats, {.lambda = 0.01, .variance_threshold = threshold});
  auto comps = srn::giant_components(edges, 3, &out.stats);
  REQUIRE(comps.size() == 1);
  out.network = std::move(comps.front());
  return out;
}

srn::Srn line_network(const std::vector<std::tuple<int, int, double>>& springs, int n) {
  srn::Srn s;
  for (int k = 0; k < n; ++k) s.nodes.push_back(k);
  for (auto [i, j, mu] : springs) s.edges.push_back({i, j, Eigen::Vector3d(1.0, 2.0, 3.0), Eigen::Vector3d(mu, 0.0, 0.0)});
  s.extent_x = Eigen::VectorXd::Ones(n);
  s.extent_y = Eigen::VectorXd::Ones(n);
  return s;
}

// Weighted least squares for one axis with the anchor pinned at zero.
double least_squares_stress(const std::vector<gmrf::Spring<double>>& springs, Index n) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Index>(springs.size()), n - 1);
  Eigen::VectorXd b(static_cast<Index>(springs.size()));
  for (std::size_t r = 0; r < springs.size(); ++r) {
    const auto& s = springs[r];
    const double w = std::sqrt(s.weight);
    if (s.j < n - 1) a(static_cast<Index>(r), s.j) += w;
    if (s.i < n - 1) a(static_cast<Index>(r), s.i) -= w;
    b(static_cast<Index>(r)) = w * s.offset;
  }
  const Eigen::VectorXd v = a.colPivHouseholderQr().solve(b);
  return (a * v - b).squaredNorm();
}

}  // namespace

TEST_CASE("exclusive slot-mates form one part") {
  synth::Blueprint bp;
  bp.x = Eigen::Vector4d(-2.0, -2.0, -1.0, 0.0);
  bp.y = Eigen::Vector4d(0.0, 0.0, 1.0, 0.0);
  bp.scale = Eigen::Vector4d(1.0, 1.0, 1.0, 1.0);
  bp.part = {0, 0, 1, 2};
  bp.words = {0, 1, 2, 3};
  bp.exclusive = {{0, 1}};
  bp.springs = {{0, 2}, {1, 2}, {2, 3}};
  bp.part_inclusion = 1.0;
  const auto l = learn(bp, 400);
  REQUIRE(l.network.size() == 4);
  const auto g = cipc_build(l.network, l.stats, {});
  CHECK(g.part[0] == g.part[1]);
  CHECK(g.part_count == 3);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].kind == CipcKind::Exclusive);
}

TEST_CASE("three appearance variants merge and nothing else does") {
  synth::Blueprint bp;
  bp.x.resize(6);
  bp.y.resize(6);
  bp.x << -3.0, -3.0, -3.0, -1.5, -1.0, 0.0;
  bp.y << 1.0, 1.0, 1.0, 0.0, -1.5, 0.0;
  bp.scale = Eigen::VectorXd::Ones(6);
  bp.part = {0, 0, 0, 1, 2, 3};
  bp.words = {0, 1, 2, 3, 4, 5};
  bp.exclusive = {{0, 1}, {1, 2}};
  bp.springs = {{0, 3}, {1, 3}, {2, 3}, {3, 4}, {4, 5}, {3, 5}};
  bp.part_inclusion = 1.0;
  const auto l = learn(bp, 600);
  REQUIRE(l.network.size() == 6);
  const CipcParams only_exclusion{.stable_fraction = 0.0};
  const auto g = cipc_build(l.network, l.stats, only_exclusion);
  CHECK(g.part[0] == g.part[1]);
  CHECK(g.part[1] == g.part[2]);
  CHECK(g.part_count == 4);
  const auto members = g.members();
  REQUIRE(members.size() == 4);
  CHECK(members[0] == std::vector<int>{0, 1, 2});

  for (const auto& e : g.edges) CHECK(e.kind == CipcKind::Exclusive);
  const auto again = cipc_build(l.network, l.stats, only_exclusion);
  CHECK(again.part == g.part);
}

TEST_CASE("parts partition the nodes") {
  const auto l = learn(synth::recovery_blueprint(), 500);
  const auto g = cipc_build(l.network, l.stats, {});
  std::vector<int> seen(g.part_count, 0);
  for (int p : g.part) {
    REQUIRE(p >= 0);
    REQUIRE(p < g.part_count);
    ++seen[p];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c > 0; }));
  CHECK(g.part.size() == static_cast<std::size_t>(l.network.size()));
}

TEST_CASE("embedding of a consistent chain") {
  const auto s = line_network({{0, 1, 0.5}, {1, 2, 0.5}}, 3);
  const auto e = gpe_embed(s);
  CHECK(e.x(0) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(e.x(1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(e.x(2) == 0.0);
  CHECK((e.y.array().abs() < 1e-12).all());
  CHECK((e.scale.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(e.stress < 1e-9);
  CHECK(e.converged);
}

TEST_CASE("contradictory triangle settles at the least-squares optimum") {
  const auto s = line_network({{0, 1, 0.5}, {1, 2, 0.5}, {0, 2, 0.5}}, 3);
  const auto e = gpe_embed(s);
  std::vector<gmrf::Spring<double>> springs;
  for (const auto& edge : s.edges)
    springs.push_back({edge.i, edge.j, edge.stiffness(0) / 4.0, edge.rest(0) * 2.0});
  const double oracle = least_squares_stress(springs, 3);
  CHECK(oracle > 0.0);
  CHECK(e.axis_stress[0] == doctest::Approx(oracle).epsilon(1e-6));
  const auto check = gpe_stress(s, e.x, e.y, e.scale);
  CHECK(check[0] == doctest::Approx(e.axis_stress[0]).epsilon(1e-9));
}

TEST_CASE("random and breadth-first starts agree") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 5; ++t) {
    const auto s = testing::random_srn(rng, 7, 3);
    const auto a = gpe_embed(s);
    const auto b = gpe_embed(s, {.bfs_init = false, .init_seed = 99u + static_cast<unsigned>(t)});
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.scale - b.scale).cwiseAbs().maxCoeff() < 1e-6);
    // The optimum of each axis is the dense least-squares solution.
    const auto sx = srn::axis_springs(s, srn::Axis::S, Eigen::VectorXd::Ones(7));
    CHECK(a.axis_stress[2] == doctest::Approx(least_squares_stress(sx, 7)).epsilon(1e-6));
  }
}

TEST_CASE("planted layout is recovered") {
  const auto bp = synth::recovery_blueprint();
  const auto l = learn(bp, 500);
  const auto e = gpe_embed(l.network);
  REQUIRE(e.x.size() == bp.size());
  Eigen::Matrix2Xd learned(2, bp.size());
  Eigen::Matrix2Xd planted(2, bp.size());
  learned << e.x.transpose(), e.y.transpose();
  planted << bp.x.transpose(), bp.y.transpose();
  // Compared up to a similarity transform.
  const Eigen::Matrix3d sim = Eigen::umeyama(learned, planted, true);
  const Eigen::Matrix2Xd aligned = (sim.topLeftCorner<2, 2>() * learned).colwise() + sim.topRightCorner<2, 1>();
  CHECK(std::sqrt((aligned - planted).colwise().squaredNorm().mean()) < 0.05);
}

TEST_CASE("part regions") {
  SUBCASE("singleton") {
    GpeEmbedding e;
    e.x = Eigen::Vector2d(1.5, 0.0);
    e.y = Eigen::Vector2d(-2.0, 0.0);
    e.scale = Eigen::Vector2d(0.5, 1.0);
    CipcGraph g;
    g.part = {0, 1};
    g.part_count = 2;
    const auto r = part_regions(e, g);
    REQUIRE(r.size() == 2);
    CHECK(r[0].x == 1.5);
    CHECK(r[0].y == -2.0);
    CHECK(r[0].min_scale == 0.5);
    CHECK(r[0].max_scale == 0.5);
    CHECK(r[0].box == Box{1.5, -2.0, 2.0, -1.5});
  }
  SUBCASE("a large viewlet widens its part's scale span") {
    GpeEmbedding e;
    e.x = Eigen::Vector4d(-1.0, -1.0, 0.0, 0.0);
    e.y = Eigen::Vector4d(0.0, 0.0, 0.0, 0.5);
    e.scale = Eigen::Vector4d(2.0, 0.8, 1.0, 1.2);
    CipcGraph g;
    g.part = {0, 0, 1, 2};
    g.part_count = 3;
    const auto r = part_regions(e, g);
    REQUIRE(r.size() == 3);
    for (int p : {1, 2}) {
      CHECK(r[0].min_scale < r[p].min_scale);
      CHECK(r[0].max_scale > r[p].max_scale);
    }
    CHECK(r[0].box.x1 == doctest::Approx(1.0));
  }
  SUBCASE("parts cluster in the embedding") {
    const auto model = synth::build_model(synth::recovery_blueprint());
    const auto regions = part_regions(model.gpe, model.cipc);
    double spread = 0.0;
    for (const auto& r : regions)
      for (int m : r.members) spread = std::max(spread, std::hypot(model.gpe.x(m) - r.x, model.gpe.y(m) - r.y));
    double spacing = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < regions.size(); ++a)
      for (std::size_t b = a + 1; b < regions.size(); ++b)
        spacing = std::min(spacing, std::hypot(regions[a].x - regions[b].x, regions[a].y - regions[b].y));
    CHECK(spread < spacing);
  }
}

TEST_CASE("embedding export") {
  const auto model = synth::build_model(synth::recovery_blueprint());
  const std::string svg = embedding_svg(model.gpe, model.cipc, model.srn.nodes);
  const std::regex marker("<circle[^>]*data-part=\"(\\d+)\"");
  std::size_t markers = 0;
  std::vector<int> parts;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), marker); it != std::sregex_iterator(); ++it) {
    ++markers;
    parts.push_back(std::stoi((*it)[1]));
  }
  CHECK(markers == 20);
  CHECK(parts == model.cipc.part);
  const std::string table = embedding_table(model.gpe, model.cipc, model.srn.nodes);
  CHECK(std::count(table.begin(), table.end(), '\n') >= 21);
}
