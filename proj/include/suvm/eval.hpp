#pragma once

#include "suvm/core.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace suvm::eval {

struct TruthObject {
  std::string label;
  Box box;
  std::map<std::string, Box> parts;  ///< optional named part boxes
};

struct TruthImage {
  std::string file;
  int width = 0;
  int height = 0;
  std::vector<TruthObject> objects;
};

/// Annotations for a corpus. Only ever read by evaluation.
struct GroundTruth {
  std::vector<std::string> categories;
  std::vector<TruthImage> images;

  /// Throws InvalidInput on undeclared labels or boxes outside the image.
  void validate() const;
  const TruthImage* find(const std::string& file) const;
};

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);
GroundTruth load_ground_truth(const std::string& path);
void save_ground_truth(const GroundTruth& truth, const std::string& path);

struct ScoredBox {
  Box box;
  double score = 0.0;
};

struct Counts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;

  long long positives() const { return tp + fn; }
  /// 0 when nothing was detected.
  double precision() const { return tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  /// 0 when there is nothing to find.
  double recall() const { return positives() > 0 ? static_cast<double>(tp) / static_cast<double>(positives()) : 0.0; }

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

struct Matching {
  Counts counts;
  std::vector<int> truth_of;  ///< per input detection, matched truth index or -1
};

/// Greedy one-to-one matching in descending score order (ties by box
/// coordinates); each detection takes the unclaimed truth box of highest IoU
/// at or above the threshold.
Matching match_detections(const std::vector<ScoredBox>& detections, const std::vector<Box>& truth,
                          double iou_threshold = 0.5);

/// Summed over images; detections[i] and truth[i] describe image i.
Counts match_corpus(const std::vector<std::vector<ScoredBox>>& detections, const std::vector<std::vector<Box>>& truth,
                    double iou_threshold = 0.5);

struct SweepPoint {
  double threshold = 0.0;
  Counts counts;
};

/// Counts after keeping only detections scoring at or above each cutoff.
std::vector<SweepPoint> threshold_sweep(const std::vector<std::vector<ScoredBox>>& detections,
                                        const std::vector<std::vector<Box>>& truth, const std::vector<double>& thresholds,
                                        double iou_threshold = 0.5);

/// Entry (i, j): fraction of category-i query images in which model j fires.
/// A category without query images gets a NaN row and is listed in `empty_rows`.
struct ConfusionMatrix {
  std::vector<std::string> queries;
  std::vector<std::string> models;
  Eigen::MatrixXd rate;
  Eigen::MatrixXi hits;
  std::vector<int> images;  ///< query images per row
  std::vector<int> empty_rows;
};

/// `fires(j, image)` runs model j on one image.
ConfusionMatrix confusion_matrix(const std::vector<std::string>& query_labels, const std::vector<ImageSource>& queries,
                                 const std::vector<std::string>& model_labels,
                                 const std::function<bool(std::size_t, const Image&)>& fires);

struct MetricsReport {
  Counts counts;
  double iou_threshold = 0.5;
  std::vector<SweepPoint> curve;
  std::optional<ConfusionMatrix> confusion;
};

nlohmann::json to_json(const MetricsReport& report);
/// Aligned plain-text rendering.
std::string to_table(const MetricsReport& report);

}  // namespace suvm::eval
