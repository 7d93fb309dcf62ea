#pragma once

#include "suvm/core.hpp"

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

namespace suvm::imaging {

struct WindowSize {
  int width = 128;
  int height = 96;

  friend bool operator==(const WindowSize&, const WindowSize&) = default;
};

// ---------------------------------------------------------------------------
// Image I/O and resampling

/// Reads a PNG/JPEG file and converts it to luma in [0, 1].
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);
/// Image files of a corpus directory, sorted lexicographically.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& directory);

/// Luma of an interleaved 8-bit RGB buffer.
Image luma_from_rgb(const std::uint8_t* rgb, int width, int height);

/// Area averaging when shrinking, bilinear when enlarging.
Image resize(const Image& image, int width, int height);

// ---------------------------------------------------------------------------
// Scale pyramid

struct PyramidLayer {
  Image image;
  double factor = 1.0;
};

struct ScalePyramid {
  std::vector<PyramidLayer> layers;
  int base_width = 0;
  int base_height = 0;
  double ratio = 0.0;
  WindowSize min_size;
};

constexpr double kDefaultPyramidRatio = 0.70710678118654752440;

/// Number of layers of a pyramid over a width x height base image.
std::size_t layer_count(int width, int height, double ratio, WindowSize min_size);

/// Layer i holds the base image scaled by ratio^i, down to min_size.
ScalePyramid build_pyramid(const Image& image, double ratio, WindowSize min_size);

// ---------------------------------------------------------------------------
// Patches

struct Patch {
  std::size_t image_id = 0;
  std::size_t layer = 0;
  int x = 0;  ///< window origin in layer pixels
  int y = 0;
  WindowSize window;
  double extent_x = 0.0;  ///< window size back-projected to the base image
  double extent_y = 0.0;
  double factor = 1.0;

  double base_x() const { return x / factor; }
  double base_y() const { return y / factor; }
};

struct RandomSampling {
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

struct DenseSampling {
  int stride = 8;
};

using SamplingMode = std::variant<RandomSampling, DenseSampling>;

/// Number of stride-aligned window positions in a width x height layer.
std::size_t tiling_count(int width, int height, WindowSize window, int stride);

std::vector<Patch> sample_patches(const ScalePyramid& pyramid, WindowSize window, const SamplingMode& mode,
                                  std::size_t image_id = 0);

/// Pixels of a patch's window inside its pyramid layer.
inline auto patch_pixels(const ScalePyramid& pyramid, const Patch& p) {
  return pyramid.layers[p.layer].image.block(p.y, p.x, p.window.height, p.window.width);
}

// ---------------------------------------------------------------------------
// HOG

struct HogParams {
  int cell = 8;
  int bins = 9;
  int block = 2;  ///< cells per block side; blocks tile the window without overlap
  double clip = 0.2;

  friend bool operator==(const HogParams&, const HogParams&) = default;
};

/// cells_x * cells_y * bins.
Index hog_dimension(WindowSize window, const HogParams& params = {});

/// Unsigned-orientation HOG over one canonical window, L2-Hys normalized per block.
/// Gradients are central differences with replicated borders.
Eigen::VectorXd hog(const Eigen::Ref<const Image>& window, const HogParams& params = {});

/// Gradient votes of a whole image, computed once and shared by every window
/// scanned from it. Only pixels on a window's border are recomputed, with the
/// window's replicated borders, so hog(x, y, w) equals hog(image.block(y, x, ...)).
class GradientField {
 public:
  explicit GradientField(Image image, const HogParams& params = {});

  Eigen::VectorXd hog(int x, int y, WindowSize window) const;

 private:
  Image image_;
  HogParams params_;
  Raster<double> magnitude_;
  Raster<double> fraction_;
  Raster<int> bin_;
};

/// Orientation bin (unsigned, bin b centered at b * 180 / bins degrees) of a gradient.
int orientation_bin(double gx, double gy, int bins);

// ---------------------------------------------------------------------------
// PCA

/// Streaming first and second moments; merge is a plain sum of the parts.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(Index dimension = 0);

  void add(const Eigen::Ref<const Eigen::VectorXd>& sample);
  void merge(const CovarianceAccumulator& other);

  Index dimension() const { return sum_.size(); }
  std::uint64_t count() const { return count_; }
  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;

 private:
  std::uint64_t count_ = 0;
  Eigen::VectorXd sum_;
  Eigen::MatrixXd outer_;
};

struct PcaProjection {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  ///< input_dim x output_dim, orthonormal columns
  Eigen::VectorXd explained_variance_ratio;
  bool rank_reduced = false;

  Index input_dim() const { return basis.rows(); }
  Index output_dim() const { return basis.cols(); }

  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return basis.transpose() * (x - mean);
  }
  Eigen::VectorXd reconstruct(const Eigen::Ref<const Eigen::VectorXd>& y) const { return mean + basis * y; }
};

/// Top-d principal directions of the rows of `samples`. Rank-deficient input
/// shrinks d to the numerical rank and sets rank_reduced.
PcaProjection fit_pca(const Eigen::MatrixXd& samples, Index d);
PcaProjection fit_pca(const CovarianceAccumulator& moments, Index d);

// ---------------------------------------------------------------------------
// Descriptor dumps: 16-byte header (magic, version, rows, cols as LE uint32)
// followed by rows * cols little-endian float32 values in row order.

constexpr std::uint32_t kDescriptorMagic = 0x44565553;  // "SUVD"
constexpr std::uint32_t kDescriptorVersion = 1;

void write_descriptor_dump(const std::filesystem::path& path, const Eigen::MatrixXd& rows);
Eigen::MatrixXd read_descriptor_dump(const std::filesystem::path& path);

}  // namespace suvm::imaging
