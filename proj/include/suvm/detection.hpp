#pragma once

#include "suvm/core.hpp"
#include "suvm/dictionary.hpp"
#include "suvm/generative.hpp"

#include <vector>

namespace suvm::detect {

/// Quantile of the chi-square distribution.
double chi_square_quantile(double probability, int dof);

struct DetectParams {
  dict::ScanParams scan{8, imaging::kDefaultPyramidRatio, 95.0};
  double chi2_threshold = chi_square_quantile(0.99, 3);
  int min_parts = 4;
  double suppression_iou = 0.5;
  /// Fold the stride and pyramid-step quantization of detections into the
  /// spring variances before testing compatibility.
  bool quantization_noise = true;
};

struct ObjectDetection {
  Box box;                             ///< union of the member windows
  std::vector<WordDetection> members;  ///< one detection per model viewlet in the group
  std::vector<int> nodes;              ///< model node of each member
  std::vector<int> parts;              ///< distinct parts covered, ascending
  double score = 0.0;
  gen::LikelihoodBreakdown breakdown;
  std::size_t group_size = 0;  ///< detections in the connected component
};

struct Compatibility {
  double residual = 0.0;
  bool pass = false;
};

/// Stiffness-weighted squared deviation of the pair from its spring's rest
/// values. The words must share a spring in the model. A measurement noise
/// variance per statistic softens each stiffness to 1 / (1/c + noise).
Compatibility pairwise_compatibility(const WordDetection& a, const WordDetection& b, const gen::SuvModel& model,
                                     double threshold = chi_square_quantile(0.99, 3),
                                     const Eigen::Vector3d& noise = Eigen::Vector3d::Zero());

/// Extra variance of the pair statistics caused by window quantization:
/// stride steps in position and pyramid steps in scale.
Eigen::Vector3d quantization_variance(const WordDetection& a, const WordDetection& b, imaging::WindowSize window,
                                      int stride, double ratio);

struct GroupingStats {
  std::size_t detections = 0;   ///< viewlet detections considered
  std::size_t pair_tests = 0;   ///< compatibility evaluations
  std::size_t edges = 0;        ///< passing pairs
  std::size_t components = 0;
};

/// Steps 2-4 of detection over already scanned word detections: keep viewlet
/// words, link compatible pairs found through a spatial hash, and emit every
/// connected group covering at least min_parts parts.
std::vector<ObjectDetection> group_detections(const std::vector<WordDetection>& detections,
                                              const gen::SuvModel& model, const DetectParams& params,
                                              GroupingStats* stats = nullptr);

/// Dense scan, grouping and duplicate suppression.
std::vector<ObjectDetection> detect_objects(const Image& image, const dict::VisualDictionary& dictionary,
                                            const gen::SuvModel& model, const DetectParams& params);

/// Greedy: keep the best-scoring box, drop boxes overlapping it above the threshold.
std::vector<ObjectDetection> suppress_duplicates(std::vector<ObjectDetection> detections, double iou_threshold);

struct PartLocalization {
  bool present = false;
  Box box;
  int votes = 0;
  double dispersion = 0.0;  ///< mean vote distance from the fused center over the box diagonal
};

/// Each member votes for the part's region through the embedding offsets,
/// scaled by its observed window; votes are fused by the geometric median.
PartLocalization localize_part(const ObjectDetection& detection, const gen::SuvModel& model, int part);

/// Weiszfeld iteration for the geometric median of 2-D points.
Eigen::Vector2d geometric_median(const std::vector<Eigen::Vector2d>& points, int max_iters = 200, double tol = 1e-9);

}  // namespace suvm::detect
