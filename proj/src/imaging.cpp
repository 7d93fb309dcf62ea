#include "suvm/imaging.hpp"

#include "bytes.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

namespace suvm {

void log_warning(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

}  // namespace suvm

namespace suvm::imaging {

namespace {

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

// Per-output-sample source weights along one axis.
std::vector<Taps> axis_taps(int src, int dst) {
  std::vector<Taps> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  if (dst <= src) {
    for (int o = 0; o < dst; ++o) {
      const double a = o * scale;
      const double b = (o + 1) * scale;
      const int first = static_cast<int>(std::floor(a));
      const int last = std::min(src - 1, static_cast<int>(std::ceil(b)) - 1);
      taps[o].first = first;
      for (int s = first; s <= last; ++s) {
        const double cover = std::min(b, s + 1.0) - std::max(a, static_cast<double>(s));
        taps[o].weights.push_back(cover / scale);
      }
    }
  } else {
    for (int o = 0; o < dst; ++o) {
      const double c = std::clamp((o + 0.5) * scale - 0.5, 0.0, src - 1.0);
      const int s0 = std::min(static_cast<int>(std::floor(c)), src - 1);
      const double f = c - s0;
      taps[o].first = s0;
      if (s0 + 1 < src && f > 0.0) {
        taps[o].weights = {1.0 - f, f};
      } else {
        taps[o].weights = {1.0};
      }
    }
  }
  return taps;
}

}  // namespace

Image resize(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidInput, "resize: non-positive target size");
  if (width == image.cols() && height == image.rows()) return image;
  const auto tx = axis_taps(static_cast<int>(image.cols()), width);
  const auto ty = axis_taps(static_cast<int>(image.rows()), height);

  Raster<double> horizontal(image.rows(), width);
  for (Index r = 0; r < image.rows(); ++r) {
    for (int o = 0; o < width; ++o) {
      double acc = 0.0;
      const auto& t = tx[o];
      for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * image(r, t.first + Index(k));
      horizontal(r, o) = acc;
    }
  }
  Image out(height, width);
  for (int o = 0; o < height; ++o) {
    const auto& t = ty[o];
    for (Index c = 0; c < width; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * horizontal(t.first + Index(k), c);
      out(o, c) = static_cast<float>(acc);
    }
  }
  return out;
}

Image luma_from_rgb(const std::uint8_t* rgb, int width, int height) {
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::uint8_t* p = rgb + 3 * (static_cast<std::size_t>(y) * width + x);
      out(y, x) = static_cast<float>((0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t layer_count(int width, int height, double ratio, WindowSize min_size) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidInput, "pyramid ratio must lie in (0, 1)");
  if (width < min_size.width || height < min_size.height)
    throw Error(ErrorCode::InvalidInput, "image is smaller than the patch window");
  const double lr = std::log(ratio);
  const double nx = std::floor(std::log(static_cast<double>(min_size.width) / width) / lr + 1e-9);
  const double ny = std::floor(std::log(static_cast<double>(min_size.height) / height) / lr + 1e-9);
  return static_cast<std::size_t>(std::min(nx, ny)) + 1;
}

ScalePyramid build_pyramid(const Image& image, double ratio, WindowSize min_size) {
  const int w = static_cast<int>(image.cols());
  const int h = static_cast<int>(image.rows());
  const std::size_t n = layer_count(w, h, ratio, min_size);

  ScalePyramid pyramid;
  pyramid.base_width = w;
  pyramid.base_height = h;
  pyramid.ratio = ratio;
  pyramid.min_size = min_size;
  pyramid.layers.reserve(n);
  double factor = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) {
      pyramid.layers.push_back({image, 1.0});
    } else {
      const int lw = std::max(min_size.width, static_cast<int>(std::lround(w * factor)));
      const int lh = std::max(min_size.height, static_cast<int>(std::lround(h * factor)));
      pyramid.layers.push_back({resize(image, lw, lh), factor});
    }
    factor *= ratio;
  }
  return pyramid;
}

// ---------------------------------------------------------------------------

std::size_t tiling_count(int width, int height, WindowSize window, int stride) {
  if (width < window.width || height < window.height) return 0;
  const std::size_t nx = static_cast<std::size_t>((width - window.width) / stride + 1);
  const std::size_t ny = static_cast<std::size_t>((height - window.height) / stride + 1);
  return nx * ny;
}

namespace {

Patch make_patch(const ScalePyramid& pyramid, std::size_t layer, int x, int y, WindowSize window,
                 std::size_t image_id) {
  Patch p;
  p.image_id = image_id;
  p.layer = layer;
  p.x = x;
  p.y = y;
  p.window = window;
  p.factor = pyramid.layers[layer].factor;
  p.extent_x = window.width / p.factor;
  p.extent_y = window.height / p.factor;
  return p;
}

}  // namespace

std::vector<Patch> sample_patches(const ScalePyramid& pyramid, WindowSize window, const SamplingMode& mode,
                                  std::size_t image_id) {
  for (const auto& layer : pyramid.layers) {
    if (layer.image.cols() < window.width || layer.image.rows() < window.height)
      throw Error(ErrorCode::InvalidInput, "window does not fit every pyramid layer");
  }
  std::vector<Patch> out;

  if (const auto* dense = std::get_if<DenseSampling>(&mode)) {
    if (dense->stride <= 0) throw Error(ErrorCode::InvalidInput, "stride must be positive");
    for (std::size_t l = 0; l < pyramid.layers.size(); ++l) {
      const auto& img = pyramid.layers[l].image;
      for (int y = 0; y + window.height <= img.rows(); y += dense->stride)
        for (int x = 0; x + window.width <= img.cols(); x += dense->stride)
          out.push_back(make_patch(pyramid, l, x, y, window, image_id));
    }
    return out;
  }

  const auto& random = std::get<RandomSampling>(mode);
  // Uniform over every valid window placement in the pyramid.
  std::vector<std::uint64_t> cumulative;
  std::uint64_t total = 0;
  for (const auto& layer : pyramid.layers) {
    total += static_cast<std::uint64_t>(layer.image.cols() - window.width + 1) *
             static_cast<std::uint64_t>(layer.image.rows() - window.height + 1);
    cumulative.push_back(total);
  }
  std::mt19937_64 rng(random.seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  out.reserve(random.count);
  for (std::size_t k = 0; k < random.count; ++k) {
    std::uint64_t idx = pick(rng);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), idx);
    const std::size_t layer = static_cast<std::size_t>(it - cumulative.begin());
    if (layer > 0) idx -= cumulative[layer - 1];
    const auto span_x = static_cast<std::uint64_t>(pyramid.layers[layer].image.cols() - window.width + 1);
    out.push_back(make_patch(pyramid, layer, static_cast<int>(idx % span_x), static_cast<int>(idx / span_x), window,
                             image_id));
  }
  return out;
}

// ---------------------------------------------------------------------------

Index hog_dimension(WindowSize window, const HogParams& params) {
  return Index(window.width / params.cell) * Index(window.height / params.cell) * params.bins;
}

int orientation_bin(double gx, double gy, int bins) {
  double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
  if (angle < 0.0) angle += 180.0;
  if (angle >= 180.0) angle -= 180.0;
  const int b = static_cast<int>(std::lround(angle / (180.0 / bins)));
  return b % bins;
}

namespace {
constexpr double kBlockEpsilon = 1e-2;
}

namespace {

struct Vote {
  double magnitude = 0.0;
  double fraction = 0.0;
  int bin = 0;
};

Vote vote(double gx, double gy, int bins) {
  Vote v;
  v.magnitude = std::sqrt(gx * gx + gy * gy);
  if (v.magnitude == 0.0) return v;
  double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
  if (angle < 0.0) angle += 180.0;
  if (angle >= 180.0) angle -= 180.0;
  const double t = angle / (180.0 / bins);
  v.bin = static_cast<int>(std::floor(t)) % bins;
  v.fraction = t - std::floor(t);
  return v;
}

// Central difference at (y, x) of pixels(r, c) with replicated borders.
template <class Pixels>
Vote vote_at(const Pixels& pixels, Index y, Index x, int bins) {
  const Index h = pixels.rows();
  const Index w = pixels.cols();
  const double gx = double(pixels(y, std::min<Index>(x + 1, w - 1))) - double(pixels(y, std::max<Index>(x - 1, 0)));
  const double gy = double(pixels(std::min<Index>(y + 1, h - 1), x)) - double(pixels(std::max<Index>(y - 1, 0), x));
  return vote(gx, gy, bins);
}

void check_window(Index w, Index h, const HogParams& params) {
  if (w % params.cell != 0 || h % params.cell != 0)
    throw Error(ErrorCode::InvalidInput, "HOG window must be a whole number of cells");
}

// Histograms from per-pixel votes, then L2-Hys over non-overlapping blocks.
template <class VoteAt>
Eigen::VectorXd accumulate(Index w, Index h, const HogParams& params, const VoteAt& vote_of) {
  const Index cells_x = w / params.cell;
  const Index cells_y = h / params.cell;
  const int bins = params.bins;
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(cells_x * cells_y * bins);
  for (Index y = 0; y < h; ++y) {
    const Index cy = y / params.cell;
    for (Index x = 0; x < w; ++x) {
      const Vote v = vote_of(y, x);
      if (v.magnitude == 0.0) continue;
      const Index base = ((cy * cells_x) + x / params.cell) * bins;
      hist(base + v.bin) += v.magnitude * (1.0 - v.fraction);
      hist(base + (v.bin + 1) % bins) += v.magnitude * v.fraction;
    }
  }

  std::vector<Index> members;
  for (Index by = 0; by < cells_y; by += params.block) {
    for (Index bx = 0; bx < cells_x; bx += params.block) {
      members.clear();
      for (Index cy = by; cy < std::min(by + params.block, cells_y); ++cy)
        for (Index cx = bx; cx < std::min(bx + params.block, cells_x); ++cx) members.push_back(cy * cells_x + cx);
      auto normalize = [&] {
        double sq = 0.0;
        for (Index c : members) sq += hist.segment(c * bins, bins).squaredNorm();
        const double inv = 1.0 / std::sqrt(sq + kBlockEpsilon * kBlockEpsilon);
        for (Index c : members) hist.segment(c * bins, bins) *= inv;
      };
      normalize();
      for (Index c : members) hist.segment(c * bins, bins) = hist.segment(c * bins, bins).cwiseMin(params.clip);
      normalize();
    }
  }
  return hist;
}

}  // namespace

Eigen::VectorXd hog(const Eigen::Ref<const Image>& window, const HogParams& params) {
  check_window(window.cols(), window.rows(), params);
  return accumulate(window.cols(), window.rows(), params,
                    [&](Index y, Index x) { return vote_at(window, y, x, params.bins); });
}

GradientField::GradientField(Image image, const HogParams& params)
    : image_(std::move(image)),
      params_(params),
      magnitude_(image_.rows(), image_.cols()),
      fraction_(image_.rows(), image_.cols()),
      bin_(image_.rows(), image_.cols()) {
  for (Index y = 0; y < image_.rows(); ++y)
    for (Index x = 0; x < image_.cols(); ++x) {
      const Vote v = vote_at(image_, y, x, params_.bins);
      magnitude_(y, x) = v.magnitude;
      fraction_(y, x) = v.fraction;
      bin_(y, x) = v.bin;
    }
}

Eigen::VectorXd GradientField::hog(int x, int y, WindowSize window) const {
  if (x < 0 || y < 0 || x + window.width > image_.cols() || y + window.height > image_.rows())
    throw Error(ErrorCode::InvalidInput, "HOG window outside the image");
  check_window(window.width, window.height, params_);
  const auto pixels = image_.block(y, x, window.height, window.width);
  const Index last_y = window.height - 1;
  const Index last_x = window.width - 1;
  return accumulate(window.width, window.height, params_, [&](Index wy, Index wx) {
    if (wy == 0 || wx == 0 || wy == last_y || wx == last_x) return vote_at(pixels, wy, wx, params_.bins);
    return Vote{magnitude_(y + wy, x + wx), fraction_(y + wy, x + wx), bin_(y + wy, x + wx)};
  });
}

// ---------------------------------------------------------------------------

CovarianceAccumulator::CovarianceAccumulator(Index dimension)
    : sum_(Eigen::VectorXd::Zero(dimension)), outer_(Eigen::MatrixXd::Zero(dimension, dimension)) {}

void CovarianceAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& sample) {
  if (sum_.size() == 0) {
    sum_ = Eigen::VectorXd::Zero(sample.size());
    outer_ = Eigen::MatrixXd::Zero(sample.size(), sample.size());
  }
  if (sample.size() != sum_.size()) throw Error(ErrorCode::InvalidInput, "descriptor dimension mismatch");
  ++count_;
  sum_ += sample;
  outer_.selfadjointView<Eigen::Lower>().rankUpdate(sample);
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (other.dimension() != dimension()) throw Error(ErrorCode::InvalidInput, "descriptor dimension mismatch");
  count_ += other.count_;
  sum_ += other.sum_;
  outer_ += other.outer_;
}

Eigen::VectorXd CovarianceAccumulator::mean() const { return sum_ / static_cast<double>(count_); }

Eigen::MatrixXd CovarianceAccumulator::covariance() const {
  const double n = static_cast<double>(count_);
  const Eigen::VectorXd m = mean();
  Eigen::MatrixXd c = outer_.selfadjointView<Eigen::Lower>();
  c /= n;
  c.noalias() -= m * m.transpose();
  return c;
}

namespace {

PcaProjection pca_from_covariance(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Index d) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double total = values.sum();
  const double floor = 1e-10 * std::max(values(0), std::numeric_limits<double>::min());
  const Index rank = (values.array() > floor).count();
  if (rank == 0) throw Error(ErrorCode::InvalidInput, "PCA input has zero variance");

  PcaProjection p;
  if (rank < d) {
    log_warning("PCA input rank " + std::to_string(rank) + " is below the requested dimension " +
                std::to_string(d) + "; reducing");
    d = rank;
    p.rank_reduced = true;
  }
  p.mean = mean;
  p.basis = vectors.leftCols(d);
  for (Index k = 0; k < d; ++k) {
    Index arg = 0;
    p.basis.col(k).cwiseAbs().maxCoeff(&arg);
    if (p.basis(arg, k) < 0.0) p.basis.col(k) *= -1.0;
  }
  p.explained_variance_ratio = values.head(d) / total;
  return p;
}

}  // namespace

PcaProjection fit_pca(const Eigen::MatrixXd& samples, Index d) {
  if (d <= 0 || d > samples.cols()) throw Error(ErrorCode::InvalidInput, "PCA dimension must lie in [1, D]");
  if (samples.rows() < d + 1) throw Error(ErrorCode::InvalidInput, "PCA needs at least d + 1 samples");
  const Eigen::VectorXd mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(samples.rows());
  return pca_from_covariance(mean, cov, d);
}

PcaProjection fit_pca(const CovarianceAccumulator& moments, Index d) {
  if (d <= 0 || d > moments.dimension()) throw Error(ErrorCode::InvalidInput, "PCA dimension must lie in [1, D]");
  if (moments.count() < static_cast<std::uint64_t>(d + 1))
    throw Error(ErrorCode::InvalidInput, "PCA needs at least d + 1 samples");
  return pca_from_covariance(moments.mean(), moments.covariance(), d);
}

// ---------------------------------------------------------------------------

void write_descriptor_dump(const std::filesystem::path& path, const Eigen::MatrixXd& rows) {
  bytes::Writer w;
  w.put<std::uint32_t>(kDescriptorMagic);
  w.put<std::uint32_t>(kDescriptorVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rows.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rows.cols()));
  for (Index r = 0; r < rows.rows(); ++r)
    for (Index c = 0; c < rows.cols(); ++c) w.put<float>(static_cast<float>(rows(r, c)));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
}

Eigen::MatrixXd read_descriptor_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bytes::Reader r(buf);
  if (r.get<std::uint32_t>() != kDescriptorMagic) throw Error(ErrorCode::Format, "not a descriptor dump");
  if (r.get<std::uint32_t>() != kDescriptorVersion)
    throw Error(ErrorCode::Format, "unsupported descriptor dump version");
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.get<float>();
  return m;
}

}  // namespace suvm::imaging
