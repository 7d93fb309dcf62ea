#pragma once

#include "suvm/core.hpp"
#include "suvm/gmrf.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace suvm::srn {

/// Z^(x), Z^(y) and log Z^(s).
enum class Axis { X = 0, Y = 1, S = 2 };
constexpr std::array<Axis, 3> kAxes{Axis::X, Axis::Y, Axis::S};
const char* axis_name(Axis a);

/// Normalized pair statistics of detection j relative to detection i.
Eigen::Vector3d pair_statistics(const WordDetection& i, const WordDetection& j);

// ---------------------------------------------------------------------------
// Pair statistics

/// Streaming mean and population variance of the three pair statistics.
struct Moments {
  std::uint64_t n = 0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d m2 = Eigen::Vector3d::Zero();

  void push(const Eigen::Vector3d& z);
  void merge(const Moments& other);
  Eigen::Vector3d variance() const { return n > 0 ? Eigen::Vector3d(m2 / double(n)) : Eigen::Vector3d::Zero(); }
  /// Same moments seen from the other end of the pair.
  Moments flipped() const;
};

struct PairRecord {
  Moments moments;                ///< oriented from the lower to the higher word id
  std::uint64_t images = 0;       ///< images in which both words were detected
};

struct WordRecord {
  std::uint64_t images = 0;
  std::uint64_t detections = 0;
  double extent_x_sum = 0.0;
  double extent_y_sum = 0.0;

  double mean_extent_x() const { return detections ? extent_x_sum / double(detections) : 0.0; }
  double mean_extent_y() const { return detections ? extent_y_sum / double(detections) : 0.0; }
};

using PairKey = std::pair<int, int>;

class PairStats {
 public:
  /// Adds every co-occurring pair of one image. With `one_per_word`, each word
  /// contributes only its lowest-distance detection.
  void add_image(std::span<const WordDetection> detections, bool one_per_word = true);
  /// Order-independent combination of two partial accumulations.
  void merge(const PairStats& other);

  /// Moments of Z_ij for words i != j, oriented i -> j; empty if never seen.
  std::optional<Moments> moments(int i, int j) const;
  std::uint64_t co_occurrences(int i, int j) const;
  const WordRecord* word(int w) const;

  const std::map<PairKey, PairRecord>& pairs() const { return pairs_; }
  const std::map<int, WordRecord>& words() const { return words_; }
  std::uint64_t images() const { return images_; }
  std::uint64_t skipped() const { return skipped_; }

  void insert(PairKey key, const PairRecord& record) { pairs_[key] = record; }
  void insert_word(int w, const WordRecord& record) { words_[w] = record; }
  void set_counters(std::uint64_t images, std::uint64_t skipped) {
    images_ = images;
    skipped_ = skipped;
  }

 private:
  std::map<PairKey, PairRecord> pairs_;
  std::map<int, WordRecord> words_;
  std::uint64_t images_ = 0;
  std::uint64_t skipped_ = 0;
};

constexpr std::uint64_t kDefaultMinSupport = 20;

/// Var(Z^(x)) + Var(Z^(y)) + Var(log Z^(s)); +inf below the minimum support.
double combined_variance(const PairStats& stats, int i, int j, std::uint64_t min_support = kDefaultMinSupport);

// ---------------------------------------------------------------------------
// Spring network

struct SpringEdge {
  int i = 0;  ///< endpoints: word ids from sparsify, local node indices inside an Srn
  int j = 0;
  Eigen::Vector3d stiffness = Eigen::Vector3d::Zero();  ///< c^(x), c^(y), c^(s)
  Eigen::Vector3d rest = Eigen::Vector3d::Zero();       ///< mu^(x), mu^(y), log of the scale ratio
  double variance = 0.0;                                ///< combined variance
  std::uint64_t support = 0;

  double scale_ratio() const { return std::exp(rest(2)); }
};

struct SparsifyParams {
  double lambda = 1e-2;
  double variance_threshold = 0.1;
  std::uint64_t min_support = kDefaultMinSupport;
};

/// Threshold rule on combined variance; retained pairs get c = 1 / (Var + lambda)
/// per axis and their empirical means as rest values. Edges come out with i < j.
std::vector<SpringEdge> sparsify(const PairStats& stats, const SparsifyParams& params);

/// The variance threshold implied by a target stiffness.
inline double threshold_for_stiffness(double target_c, double lambda) { return 1.0 / target_c - lambda; }

struct Srn {
  std::vector<int> nodes;         ///< word ids, ascending
  std::vector<SpringEdge> edges;  ///< local indices, i < j
  Eigen::VectorXd extent_x;       ///< per-node mean observed extents
  Eigen::VectorXd extent_y;

  Index size() const { return static_cast<Index>(nodes.size()); }
  Index anchor() const { return size() - 1; }
  /// Local index of a word, -1 if absent.
  Index local(int word) const;
  /// Edge between two local indices, nullptr if none.
  const SpringEdge* edge(Index a, Index b) const;
  std::vector<std::vector<Index>> adjacency() const;
};

/// Connected components with at least `min_size` nodes, largest first (ties by
/// smallest word id). Extents come from `stats` when given, else 1.
std::vector<Srn> giant_components(const std::vector<SpringEdge>& edges, std::size_t min_size,
                                  const PairStats* stats = nullptr);

/// Springs of one axis under the given per-node extents. x and y weights are
/// c / (e_i + e_j)^2 with offsets mu (e_i + e_j); the scale axis is unweighted.
std::vector<gmrf::Spring<double>> axis_springs(const Srn& srn, Axis axis, const Eigen::VectorXd& extents);

struct PrecisionMatrix {
  Axis axis = Axis::X;
  Eigen::MatrixXd lambda;  ///< (M-1) x (M-1), anchor removed
  std::vector<int> order;  ///< word id per row
};

/// Anchored precision matrix. Throws Singular, naming the detached words, when
/// the axis's springs do not connect every node to the anchor.
PrecisionMatrix precision_matrix(const Srn& srn, Axis axis, const Eigen::VectorXd& extents);
/// Same assembly without the connectivity check.
PrecisionMatrix assemble_precision(const Srn& srn, Axis axis, const Eigen::VectorXd& extents);

// ---------------------------------------------------------------------------
// Likelihood

/// Per-node positions (window corners) and extents in base-image pixels.
struct Configuration {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd extent_x;
  Eigen::VectorXd extent_y;
};

struct AxisLikelihood {
  double log_det = 0.0;  ///< log |Lambda|
  double stress = 0.0;   ///< sum over edges of c (Z - mu)^2
  double value = 0.0;    ///< log density
};

struct Likelihood {
  std::array<AxisLikelihood, 3> axes;
  double total() const { return axes[0].value + axes[1].value + axes[2].value; }
};

/// Anchored Gaussian log density of a configuration. Positions are measured
/// relative to the anchor in units of the anchor's extent; the scale axis uses
/// log(e_i / e_anchor). Per axis the value is
///   1/2 log|Lambda| - (M-1)/2 log(2 pi) - 1/2 (stress - min_stress),
/// where min_stress is zero whenever rest values around every loop agree.
Likelihood log_likelihood(const Srn& srn, const Configuration& config);

/// The Gaussian of one axis in anchor-normalized coordinates.
gmrf::Gaussian<double> axis_gaussian(const Srn& srn, Axis axis, const Eigen::VectorXd& normalized_extents);

// ---------------------------------------------------------------------------
// Exact convex estimation (verification oracle)

struct ConvexPair {
  int i = 0;
  int j = 0;
  double variance = 0.0;
};

struct ConvexInstance {
  int nodes = 0;
  std::vector<ConvexPair> pairs;  ///< candidate edges; absent pairs stay at c = 0
};

struct ConvexSolution {
  Eigen::VectorXd c;  ///< one stiffness per candidate pair
  double objective = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
};

/// Candidate pairs of one axis among the given words.
ConvexInstance convex_instance(const PairStats& stats, Axis axis, std::span<const int> words,
                               std::uint64_t min_support = kDefaultMinSupport);

/// -1/2 log|L(c)| + 1/2 sum c_e (V_e + lambda) with L the anchored
/// unit-normalization Laplacian; +inf where L(c) is not positive definite.
double convex_objective(const ConvexInstance& instance, double lambda, const Eigen::VectorXd& c);

/// Projected Newton on c >= 0 until the projected gradient norm drops below
/// tol times the norm of (V + lambda), which carries the gradient's units.
ConvexSolution solve_convex_exact(const ConvexInstance& instance, double lambda, double tol = 1e-8,
                                  int max_iters = 500);

}  // namespace suvm::srn
