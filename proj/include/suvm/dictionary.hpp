#pragma once

#include "suvm/core.hpp"
#include "suvm/imaging.hpp"

#include <optional>
#include <vector>

namespace suvm::dict {

// ---------------------------------------------------------------------------
// k-means

struct KMeansParams {
  Index k = 64;
  std::uint64_t seed = 1;
  int max_iters = 100;
  double tol = 1e-6;  ///< stop once no centroid moves farther than this
  int restarts = 1;   ///< independent k-means++ starts; the lowest inertia wins
};

struct KMeansResult {
  Eigen::MatrixXd centroids;  ///< k x d
  std::vector<int> labels;
  std::vector<double> inertia_history;  ///< one entry per assignment step
  int iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

/// Lloyd iterations from a k-means++ start. Rows of `samples` are points.
/// An emptied cluster is re-seeded at the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& samples, const KMeansParams& params);

// ---------------------------------------------------------------------------
// Visual dictionary

constexpr int kQuantileCount = 101;

struct VisualDictionary {
  imaging::WindowSize window;
  imaging::HogParams hog;
  imaging::PcaProjection pca;
  Eigen::MatrixXd centroids;  ///< k x d, in PCA space
  std::vector<std::uint64_t> counts;
  /// Per-word mean squared distance to the centroid, per descriptor dimension.
  Eigen::VectorXd spread;
  /// Row w holds the 0th..100th percentiles of training assignment distances of word w.
  Eigen::MatrixXd distance_quantiles;
  /// Per-pixel mean of each word's member windows.
  std::vector<Image> mean_patches;

  Index k() const { return centroids.rows(); }
  Index dimension() const { return centroids.cols(); }

  /// PCA-space descriptor of one canonical window.
  Eigen::VectorXd describe(const Eigen::Ref<const Image>& window_pixels) const {
    return pca.project(imaging::hog(window_pixels, hog));
  }

  /// Assignment distance at `percentile` (0..100) for word w.
  double distance_percentile(int word, double percentile) const;
};

struct Assignment {
  int word = -1;
  double distance = 0.0;
};

/// Nearest centroid in Euclidean distance; ties go to the lowest word id.
Assignment assign_word(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const VisualDictionary& dict);
Assignment assign_word(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const Eigen::MatrixXd& centroids);

/// Fills counts, spread and distance quantiles from labeled training descriptors.
void fill_word_statistics(VisualDictionary& dict, const Eigen::MatrixXd& descriptors, const std::vector<int>& labels);

struct DictionaryParams {
  KMeansParams kmeans;
  Index pca_dim = 64;
  std::size_t patches_per_image = 25;
  imaging::WindowSize window;
  imaging::HogParams hog;
  double pyramid_ratio = imaging::kDefaultPyramidRatio;
};

struct LearnDiagnostics {
  std::size_t images = 0;
  std::size_t patches = 0;
  std::vector<std::size_t> failed_images;
  std::vector<double> inertia_history;
  Eigen::VectorXd explained_variance_ratio;
};

/// Random patches from every image -> HOG -> PCA -> k-means -> word statistics.
/// Images that fail to load are listed in diagnostics and skipped.
VisualDictionary learn_dictionary(const ImageSource& corpus, const DictionaryParams& params,
                                  LearnDiagnostics* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Dense scanning

struct ScanParams {
  int stride = 8;
  double pyramid_ratio = imaging::kDefaultPyramidRatio;
  /// Drop detections whose distance exceeds this percentile of the word's
  /// training distances. Unset keeps every window.
  std::optional<double> distance_cutoff;
};

/// One WordDetection per window position per pyramid layer.
std::vector<WordDetection> scan_image(const Image& image, const VisualDictionary& dict, const ScanParams& params);

/// Same as scan_image over an already built pyramid.
std::vector<WordDetection> scan_pyramid(const imaging::ScalePyramid& pyramid, const VisualDictionary& dict,
                                        const ScanParams& params);

}  // namespace suvm::dict
