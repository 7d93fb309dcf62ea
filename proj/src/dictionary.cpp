#include "suvm/dictionary.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace suvm::dict {

namespace {

struct Nearest {
  int index = -1;
  double squared = std::numeric_limits<double>::infinity();
};

Nearest nearest_row(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::MatrixXd& centroids) {
  Nearest best;
  for (Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - x).squaredNorm();
    if (d < best.squared) {
      best.squared = d;
      best.index = static_cast<int>(c);
    }
  }
  return best;
}

Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& samples, Index k, std::mt19937_64& rng) {
  const Index n = samples.rows();
  Eigen::MatrixXd centroids(k, samples.cols());
  std::uniform_int_distribution<Index> uniform(0, n - 1);
  centroids.row(0) = samples.row(uniform(rng));
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = (samples.row(i) - centroids.row(0)).squaredNorm();

  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double r = u(rng);
      double acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > r && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform(rng);
    }
    centroids.row(c) = samples.row(pick);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (samples.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

double assign_all(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& centroids, std::vector<int>& labels,
                  Eigen::VectorXd& squared) {
  double inertia = 0.0;
  for (Index i = 0; i < samples.rows(); ++i) {
    const Nearest best = nearest_row(samples.row(i).transpose(), centroids);
    labels[i] = best.index;
    squared(i) = best.squared;
    inertia += best.squared;
  }
  return inertia;
}

void push_inertia(KMeansResult& r, double inertia) {
  if (!r.inertia_history.empty()) {
    const double prev = r.inertia_history.back();
    if (inertia > prev + 1e-12 * std::max(1.0, prev))
      throw std::logic_error("k-means inertia increased between iterations");
  }
  r.inertia_history.push_back(inertia);
}

KMeansResult lloyd(const Eigen::MatrixXd& samples, const KMeansParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index n = samples.rows();
  KMeansResult r;
  r.centroids = kmeans_plus_plus(samples, params.k, rng);
  r.labels.assign(n, -1);
  Eigen::VectorXd squared(n);

  for (int it = 0; it < params.max_iters; ++it) {
    push_inertia(r, assign_all(samples, r.centroids, r.labels, squared));

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(params.k, samples.cols());
    std::vector<Index> members(params.k, 0);
    for (Index i = 0; i < n; ++i) {
      next.row(r.labels[i]) += samples.row(i);
      ++members[r.labels[i]];
    }
    for (Index c = 0; c < params.k; ++c) {
      if (members[c] > 0) {
        next.row(c) /= static_cast<double>(members[c]);
        continue;
      }
      Index far = 0;
      squared.maxCoeff(&far);
      next.row(c) = samples.row(far);
      squared(far) = 0.0;
    }
    const double shift = (next - r.centroids).rowwise().norm().maxCoeff();
    r.centroids = std::move(next);
    ++r.iterations;
    if (shift < params.tol) {
      r.converged = true;
      break;
    }
  }
  push_inertia(r, assign_all(samples, r.centroids, r.labels, squared));
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& samples, const KMeansParams& params) {
  if (params.k < 2) throw Error(ErrorCode::InvalidInput, "k-means needs k >= 2");
  if (samples.rows() < params.k) throw Error(ErrorCode::InvalidInput, "k-means needs at least k samples");
  if (!samples.allFinite()) throw Error(ErrorCode::InvalidInput, "k-means input is not finite");
  KMeansResult best;
  for (int r = 0; r < std::max(1, params.restarts); ++r) {
    const std::uint64_t seed = r == 0 ? params.seed : mix_seed(params.seed, static_cast<std::uint64_t>(r));
    KMeansResult run = lloyd(samples, params, seed);
    if (r == 0 || run.inertia() < best.inertia()) best = std::move(run);
  }
  return best;
}

// ---------------------------------------------------------------------------

Assignment assign_word(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const Eigen::MatrixXd& centroids) {
  if (descriptor.size() != centroids.cols())
    throw Error(ErrorCode::InvalidInput, "descriptor dimension does not match the dictionary");
  const Nearest best = nearest_row(descriptor, centroids);
  return {best.index, std::sqrt(best.squared)};
}

Assignment assign_word(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const VisualDictionary& dict) {
  return assign_word(descriptor, dict.centroids);
}

double VisualDictionary::distance_percentile(int word, double percentile) const {
  const double p = std::clamp(percentile, 0.0, 100.0) * (kQuantileCount - 1) / 100.0;
  const int lo = static_cast<int>(std::floor(p));
  const int hi = std::min(lo + 1, kQuantileCount - 1);
  const double a = distance_quantiles(word, lo);
  const double b = distance_quantiles(word, hi);
  if (!std::isfinite(a) || !std::isfinite(b)) return std::numeric_limits<double>::infinity();
  return a + (p - lo) * (b - a);
}

void fill_word_statistics(VisualDictionary& dict, const Eigen::MatrixXd& descriptors,
                          const std::vector<int>& labels) {
  const Index k = dict.k();
  const Index d = dict.dimension();
  std::vector<std::vector<double>> distances(k);
  dict.counts.assign(k, 0);
  dict.spread = Eigen::VectorXd::Zero(k);
  for (Index i = 0; i < descriptors.rows(); ++i) {
    const int w = labels[i];
    const double sq = (descriptors.row(i) - dict.centroids.row(w)).squaredNorm();
    ++dict.counts[w];
    dict.spread(w) += sq;
    distances[w].push_back(std::sqrt(sq));
  }
  constexpr double kSpreadFloor = 1e-6;
  dict.distance_quantiles.resize(k, kQuantileCount);
  for (Index w = 0; w < k; ++w) {
    if (dict.counts[w] > 0) dict.spread(w) /= static_cast<double>(dict.counts[w] * d);
    dict.spread(w) = std::max(dict.spread(w), kSpreadFloor);
    auto& v = distances[w];
    if (v.empty()) {
      dict.distance_quantiles.row(w).setConstant(std::numeric_limits<double>::infinity());
      continue;
    }
    std::sort(v.begin(), v.end());
    for (int q = 0; q < kQuantileCount; ++q) {
      const double pos = q / double(kQuantileCount - 1) * double(v.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, v.size() - 1);
      dict.distance_quantiles(w, q) = v[lo] + (pos - lo) * (v[hi] - v[lo]);
    }
  }
}

// ---------------------------------------------------------------------------

VisualDictionary learn_dictionary(const ImageSource& corpus, const DictionaryParams& params,
                                  LearnDiagnostics* diagnostics) {
  using namespace imaging;
  if (corpus.size == 0) throw Error(ErrorCode::InvalidInput, "corpus is empty");

  struct Sampled {
    std::size_t image;
    std::vector<Patch> patches;
  };
  std::vector<Sampled> sampled;
  LearnDiagnostics diag;
  diag.images = corpus.size;

  auto pyramid_of = [&](std::size_t i) -> std::optional<ScalePyramid> {
    try {
      const Image img = corpus.load(i);
      return build_pyramid(img, params.pyramid_ratio, params.window);
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  // Pass 1: sample windows, accumulate HOG moments.
  CovarianceAccumulator moments(hog_dimension(params.window, params.hog));
  for (std::size_t i = 0; i < corpus.size; ++i) {
    const auto pyramid = pyramid_of(i);
    if (!pyramid) {
      diag.failed_images.push_back(i);
      log_warning("skipping unreadable or undersized image #" + std::to_string(i));
      continue;
    }
    Sampled s{i, sample_patches(*pyramid, params.window, RandomSampling{params.patches_per_image, mix_seed(params.kmeans.seed, i)}, i)};
    for (const auto& p : s.patches) moments.add(hog(patch_pixels(*pyramid, p), params.hog));
    diag.patches += s.patches.size();
    sampled.push_back(std::move(s));
  }
  if (diag.patches == 0) throw Error(ErrorCode::InvalidInput, "no usable images in corpus");

  Index d = params.pca_dim;
  if (d > moments.dimension()) {
    log_warning("PCA dimension clamped to the HOG dimension " + std::to_string(moments.dimension()));
    d = moments.dimension();
  }
  VisualDictionary dict;
  dict.window = params.window;
  dict.hog = params.hog;
  dict.pca = fit_pca(moments, d);

  // Pass 2: projected descriptors.
  Eigen::MatrixXd descriptors(static_cast<Index>(diag.patches), dict.pca.output_dim());
  Index row = 0;
  for (const auto& s : sampled) {
    const auto pyramid = pyramid_of(s.image);
    for (const auto& p : s.patches) descriptors.row(row++) = dict.describe(patch_pixels(*pyramid, p)).transpose();
  }

  const KMeansResult km = kmeans(descriptors, params.kmeans);
  dict.centroids = km.centroids;
  fill_word_statistics(dict, descriptors, km.labels);

  // Pass 3: per-pixel mean window of every word.
  std::vector<Raster<double>> sums(dict.k(), Raster<double>::Zero(params.window.height, params.window.width));
  row = 0;
  for (const auto& s : sampled) {
    const auto pyramid = pyramid_of(s.image);
    for (const auto& p : s.patches) sums[km.labels[row++]] += patch_pixels(*pyramid, p).cast<double>();
  }
  dict.mean_patches.resize(dict.k());
  for (Index w = 0; w < dict.k(); ++w) {
    const double n = std::max<double>(1.0, static_cast<double>(dict.counts[w]));
    dict.mean_patches[w] = (sums[w] / n).cast<float>();
  }

  diag.inertia_history = km.inertia_history;
  diag.explained_variance_ratio = dict.pca.explained_variance_ratio;
  if (diagnostics) *diagnostics = std::move(diag);
  return dict;
}

// ---------------------------------------------------------------------------

std::vector<WordDetection> scan_pyramid(const imaging::ScalePyramid& pyramid, const VisualDictionary& dict,
                                        const ScanParams& params) {
  if (params.stride <= 0) throw Error(ErrorCode::InvalidInput, "stride must be positive");
  const auto window = dict.window;
  std::vector<WordDetection> out;
  for (std::size_t l = 0; l < pyramid.layers.size(); ++l) {
    const auto& layer = pyramid.layers[l];
    const double f = layer.factor;
    const imaging::GradientField field(layer.image, dict.hog);
    for (int y = 0; y + window.height <= layer.image.rows(); y += params.stride) {
      for (int x = 0; x + window.width <= layer.image.cols(); x += params.stride) {
        const Assignment a = assign_word(dict.pca.project(field.hog(x, y, window)), dict.centroids);
        if (params.distance_cutoff && a.distance > dict.distance_percentile(a.word, *params.distance_cutoff))
          continue;
        WordDetection det;
        det.word = a.word;
        det.x = x / f;
        det.y = y / f;
        det.extent_x = window.width / f;
        det.extent_y = window.height / f;
        det.distance = a.distance;
        det.layer = static_cast<int>(l);
        out.push_back(det);
      }
    }
  }
  return out;
}

std::vector<WordDetection> scan_image(const Image& image, const VisualDictionary& dict, const ScanParams& params) {
  return scan_pyramid(imaging::build_pyramid(image, params.pyramid_ratio, dict.window), dict, params);
}

}  // namespace suvm::dict
