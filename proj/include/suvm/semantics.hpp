#pragma once

#include "suvm/core.hpp"
#include "suvm/srn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace suvm::semantics {

// ---------------------------------------------------------------------------
// Configuration-independent parts clustering

enum class CipcKind {
  Exclusive,  ///< rule (i): never together, same geometry to shared neighbors
  Stable,     ///< rule (ii): joined by a very stable spring
};

struct CipcEdge {
  int a = 0;  ///< local node indices, a < b
  int b = 0;
  CipcKind kind = CipcKind::Exclusive;
};

struct CipcParams {
  /// Co-occurrence cap as a fraction of the smaller per-word image count.
  double exclusion_fraction = 0.05;
  int min_shared_neighbors = 1;
  /// Per-axis tolerance on rest values (x, y, log scale), normalized units.
  double geometric_tolerance = 0.15;
  /// Fraction of retained edges, by ascending combined variance, that count as stable.
  double stable_fraction = 0.1;
};

struct CipcGraph {
  std::vector<CipcEdge> edges;
  std::vector<int> part;  ///< part id per node, numbered by smallest member
  int part_count = 0;

  std::vector<std::vector<int>> members() const;
};

CipcGraph cipc_build(const srn::Srn& srn, const srn::PairStats& stats, const CipcParams& params);

/// Rest values of node b relative to node a, or nullopt without an edge.
std::optional<Eigen::Vector3d> oriented_rest(const srn::Srn& srn, Index a, Index b);

// ---------------------------------------------------------------------------
// Global positional embedding

struct GpeParams {
  int max_iters = 20000;
  double tol = 1e-13;  ///< stop once a sweep improves the stress by less than tol * max(1, stress)
  bool bfs_init = true;
  std::uint64_t init_seed = 0;  ///< random start when bfs_init is false
};

struct GpeEmbedding {
  Eigen::VectorXd x;  ///< window corners in units of the anchor's extent
  Eigen::VectorXd y;
  Eigen::VectorXd scale;  ///< relative to the anchor
  std::array<double, 3> axis_stress{};
  double stress = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Three decoupled weighted least-squares problems (log-scale first, then x
/// and y under the embedded scales) solved by Gauss-Seidel sweeps with the
/// anchor pinned at the origin with unit scale.
GpeEmbedding gpe_embed(const srn::Srn& srn, const GpeParams& params = {});

/// Stress of an arbitrary embedding under the network's springs.
std::array<double, 3> gpe_stress(const srn::Srn& srn, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& scale);

struct PartRegion {
  int part = 0;
  std::vector<int> members;
  double x = 0.0;  ///< mean member window corner
  double y = 0.0;
  double center_x = 0.0;  ///< mean member window center
  double center_y = 0.0;
  double min_scale = 0.0;
  double max_scale = 0.0;
  double mean_scale = 0.0;
  Box box;  ///< union of member windows
};

std::vector<PartRegion> part_regions(const GpeEmbedding& embedding, const CipcGraph& cipc);

// ---------------------------------------------------------------------------
// Export

std::string embedding_svg(const GpeEmbedding& embedding, const CipcGraph& cipc, const std::vector<int>& words);
std::string embedding_table(const GpeEmbedding& embedding, const CipcGraph& cipc, const std::vector<int>& words);

}  // namespace suvm::semantics
