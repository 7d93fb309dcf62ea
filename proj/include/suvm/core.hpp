#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace suvm {

using Index = Eigen::Index;

/// Row-major raster, one channel. Pixel (x, y) lives at (row y, column x).
template <typename Scalar>
using Raster = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grayscale image with intensities in [0, 1].
using Image = Raster<float>;

enum class ErrorCode {
  InvalidInput,
  Singular,
  NotConverged,
  Io,
  Format,
  Usage,
  NoCategory,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Axis-aligned box in base-image pixels, half-open on the far edges.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return std::max(0.0, x1 - x0); }
  double height() const { return std::max(0.0, y1 - y0); }
  double area() const { return width() * height(); }
  bool empty() const { return width() <= 0.0 || height() <= 0.0; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline Box unite(const Box& a, const Box& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// One patch mapped to a visual word. Location is the window's top-left corner
/// and extents are the window size, both back-projected to base-image pixels.
struct WordDetection {
  int word = -1;
  double x = 0.0;
  double y = 0.0;
  double extent_x = 0.0;
  double extent_y = 0.0;
  double distance = 0.0;
  int layer = 0;

  Box box() const { return {x, y, x + extent_x, y + extent_y}; }
};

void log_warning(const std::string& message);

/// Independent stream seed derived from a run seed (splitmix64 finalizer).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Random-access corpus of images, loaded on demand.
struct ImageSource {
  std::size_t size = 0;
  std::function<Image(std::size_t)> load;
};

}  // namespace suvm
