#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "suvm/imaging.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

using namespace suvm;
using namespace suvm::imaging;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) img(y, x) = u(rng);
  return img;
}

// Per-pixel nearest-bin histogram of the whole window, no cells or blocks.
int naive_dominant_bin(const Image& img, int bins) {
  std::vector<double> hist(bins, 0.0);
  const Index h = img.rows();
  const Index w = img.cols();
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double gx = img(y, std::min(x + 1, w - 1)) - img(y, std::max<Index>(x - 1, 0));
      const double gy = img(std::min(y + 1, h - 1), x) - img(std::max<Index>(y - 1, 0), x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      while (deg < 0.0) deg += 180.0;
      while (deg >= 180.0) deg -= 180.0;
      hist[static_cast<int>(std::lround(deg / (180.0 / bins))) % bins] += mag;
    }
  }
  return static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

}  // namespace

TEST_CASE("pyramid factors") {
  SUBCASE("halving") {
    const auto p = build_pyramid(Image::Constant(512, 512, 0.5f), 0.5, {128, 128});
    REQUIRE(p.layers.size() == 3);
    CHECK(p.layers[0].factor == 1.0);
    CHECK(p.layers[1].factor == 0.5);
    CHECK(p.layers[2].factor == 0.25);
    CHECK(p.layers[2].image.cols() == 128);
  }
  SUBCASE("window-sized image") {
    const auto p = build_pyramid(Image::Constant(96, 128, 0.5f), 0.8, {128, 96});
    CHECK(p.layers.size() == 1);
  }
  SUBCASE("reference loop") {
    std::vector<double> expected;
    for (double f = 1.0; 1000 * f >= 200.0 - 1e-9 && 800 * f >= 200.0 - 1e-9; f *= 0.8) expected.push_back(f);
    const auto p = build_pyramid(Image::Constant(800, 1000, 0.5f), 0.8, {200, 200});
    REQUIRE(p.layers.size() == 7);
    REQUIRE(expected.size() == 7);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(p.layers[i].factor == doctest::Approx(expected[i]).epsilon(1e-12));
      CHECK(p.layers[i].image.rows() >= 200);
    }
  }
  SUBCASE("too small") {
    CHECK_THROWS_AS(build_pyramid(Image::Constant(50, 50, 0.5f), 0.8, {64, 64}), Error);
  }
}

TEST_CASE("dense tiling") {
  const auto p = build_pyramid(random_image(256, 256, 2), 0.5, {64, 64});
  REQUIRE(p.layers.size() == 3);
  const auto patches = sample_patches(p, {64, 64}, DenseSampling{64});
  std::size_t expected = 0;
  for (const auto& layer : p.layers) {
    const auto w = layer.image.cols();
    const auto h = layer.image.rows();
    expected += static_cast<std::size_t>((w - 64) / 64 + 1) * static_cast<std::size_t>((h - 64) / 64 + 1);
  }
  CHECK(patches.size() == expected);
  CHECK(expected == 16 + 4 + 1);

  const auto q = build_pyramid(random_image(400, 300, 1), kDefaultPyramidRatio, {64, 48});
  std::size_t closed = 0;
  for (const auto& layer : q.layers)
    closed += tiling_count(static_cast<int>(layer.image.cols()), static_cast<int>(layer.image.rows()), {64, 48}, 8);
  const auto strided = sample_patches(q, {64, 48}, DenseSampling{8});
  CHECK(strided.size() == closed);
  for (const auto& patch : strided) {
    CHECK(patch.extent_x * patch.factor == doctest::Approx(64.0));
    CHECK(patch.extent_y * patch.factor == doctest::Approx(48.0));
  }
}

TEST_CASE("random sampling is seeded") {
  const auto p = build_pyramid(random_image(320, 240, 3), kDefaultPyramidRatio, {64, 48});
  const auto a = sample_patches(p, {64, 48}, RandomSampling{200, 42});
  const auto b = sample_patches(p, {64, 48}, RandomSampling{200, 42});
  const auto c = sample_patches(p, {64, 48}, RandomSampling{200, 43});
  REQUIRE(a.size() == 200);
  bool same = true;
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].layer == b[i].layer && a[i].x == b[i].x && a[i].y == b[i].y;
    differs = differs || a[i].x != c[i].x || a[i].y != c[i].y || a[i].layer != c[i].layer;
    const auto& img = p.layers[a[i].layer].image;
    CHECK(a[i].x + 64 <= img.cols());
    CHECK(a[i].y + 48 <= img.rows());
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("hog on flat and edge windows") {
  CHECK(hog_dimension({32, 32}) == 144);
  CHECK(hog_dimension({128, 96}) == 16 * 12 * 9);

  const Eigen::VectorXd flat = hog(Image::Constant(32, 32, 0.37f));
  CHECK(flat.size() == 144);
  CHECK(flat.cwiseAbs().maxCoeff() == 0.0);

  Image step = Image::Zero(32, 32);
  step.rightCols(16).setOnes();
  const Eigen::VectorXd d = hog(step);
  Eigen::VectorXd per_bin = Eigen::VectorXd::Zero(9);
  for (Index c = 0; c < 16; ++c) per_bin += d.segment(c * 9, 9);
  Index best = 0;
  per_bin.maxCoeff(&best);
  CHECK(best == naive_dominant_bin(step, 9));
  CHECK(best == 0);
  CHECK(d.allFinite());

  Image diagonal = Image::Zero(32, 32);
  for (Index y = 0; y < 32; ++y)
    for (Index x = 0; x < 32; ++x) diagonal(y, x) = x + y >= 32 ? 1.0f : 0.0f;
  const Eigen::VectorXd dd = hog(diagonal);
  Eigen::VectorXd diag_bins = Eigen::VectorXd::Zero(9);
  for (Index c = 0; c < 16; ++c) diag_bins += dd.segment(c * 9, 9);
  diag_bins.maxCoeff(&best);
  CHECK(best == naive_dominant_bin(diagonal, 9));
}

TEST_CASE("hog of a half-turned window permutes cells") {
  const Image img = random_image(32, 32, 10);
  const Eigen::VectorXd a = hog(img);
  const Eigen::VectorXd b = hog(Image(img.reverse()));
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) {
      const Index src = (y * 4 + x) * 9;
      const Index dst = ((3 - y) * 4 + (3 - x)) * 9;
      CHECK((a.segment(src, 9) - b.segment(dst, 9)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("orientation bins") {
  CHECK(orientation_bin(1.0, 0.0, 9) == 0);
  CHECK(orientation_bin(-1.0, 0.0, 9) == 0);
  CHECK(orientation_bin(std::cos(1.4), std::sin(1.4), 9) == 4);
  CHECK(orientation_bin(std::cos(0.7), std::sin(0.7), 9) == orientation_bin(-std::cos(0.7), -std::sin(0.7), 9));
}

TEST_CASE("descriptors are deterministic") {
  const Image img = random_image(32, 32, 11);
  const Eigen::VectorXd a = hog(img);
  const Eigen::VectorXd b = hog(Image(img));
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("shared gradient field reproduces per-window descriptors") {
  const Image img = random_image(72, 56, 5);
  const GradientField field(img);
  for (int y : {0, 3, 8, 24})
    for (int x : {0, 1, 16, 40}) {
      const Eigen::VectorXd a = hog(img.block(y, x, 32, 32));
      const Eigen::VectorXd b = field.hog(x, y, {32, 32});
      CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    }
  CHECK(field.hog(40, 24, {32, 32}).size() == hog_dimension({32, 32}));
  CHECK_THROWS_AS(field.hog(41, 0, {32, 32}), Error);
  CHECK_THROWS_AS(field.hog(0, 0, {30, 32}), Error);
}

TEST_CASE("pca on exact low-rank data") {
  SUBCASE("line in R3") {
    Eigen::MatrixXd s(50, 3);
    for (int i = 0; i < 50; ++i) s.row(i) = Eigen::RowVector3d(1.0, -2.0, 0.5) * (i - 20.0) + Eigen::RowVector3d(3, 1, 4);
    const auto p = fit_pca(s, 1);
    CHECK(p.explained_variance_ratio(0) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("full dimension reconstructs") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Eigen::MatrixXd s(200, 2);
    for (Index i = 0; i < 200; ++i) s.row(i) << g(rng), g(rng);
    const auto p = fit_pca(s, 2);
    double err = 0.0;
    for (Index i = 0; i < 200; ++i) {
      const Eigen::VectorXd x = s.row(i).transpose();
      err = std::max(err, (p.reconstruct(p.project(x)) - x).norm());
    }
    CHECK(err < 1e-9);
    CHECK((p.basis.transpose() * p.basis - Eigen::Matrix2d::Identity()).norm() < 1e-12);
  }
  SUBCASE("rank deficiency shrinks d") {
    Eigen::MatrixXd s(40, 4);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (Index i = 0; i < 40; ++i) {
      const double a = g(rng);
      const double b = g(rng);
      s.row(i) << a, b, a + b, a - b;
    }
    const auto p = fit_pca(s, 3);
    CHECK(p.rank_reduced);
    CHECK(p.output_dim() == 2);
  }
}

TEST_CASE("pca recovers a planted subspace") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  const Index dim = 50;
  Eigen::MatrixXd raw(dim, 5);
  for (Index i = 0; i < dim; ++i)
    for (Index j = 0; j < 5; ++j) raw(i, j) = g(rng);
  const Eigen::MatrixXd planted = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() * Eigen::MatrixXd::Identity(dim, 5);
  Eigen::MatrixXd s(2000, dim);
  for (Index i = 0; i < s.rows(); ++i) {
    Eigen::VectorXd z(5);
    for (Index j = 0; j < 5; ++j) z(j) = g(rng) * (5.0 - j);
    Eigen::VectorXd noise(dim);
    for (Index j = 0; j < dim; ++j) noise(j) = 0.05 * g(rng);
    s.row(i) = (planted * z + noise).transpose();
  }
  const auto p = fit_pca(s, 5);

  // Oracle: right singular vectors of the centered data.
  const Eigen::MatrixXd centered = s.rowwise() - s.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::MatrixXd oracle = svd.matrixV().leftCols(5);
  const Eigen::VectorXd cosines = Eigen::JacobiSVD<Eigen::MatrixXd>(p.basis.transpose() * oracle).singularValues();
  const double worst = std::acos(std::min(1.0, cosines.minCoeff())) * 180.0 / std::numbers::pi;
  CHECK(worst < 5.0);
  const Eigen::VectorXd to_planted = Eigen::JacobiSVD<Eigen::MatrixXd>(p.basis.transpose() * planted).singularValues();
  CHECK(std::acos(std::min(1.0, to_planted.minCoeff())) * 180.0 / std::numbers::pi < 5.0);
}

TEST_CASE("streaming moments match the batch fit") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  Eigen::MatrixXd s(300, 6);
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < 6; ++j) s(i, j) = g(rng) * (j + 1);
  CovarianceAccumulator a;
  CovarianceAccumulator b;
  for (Index i = 0; i < s.rows(); ++i) (i % 3 == 0 ? a : b).add(s.row(i).transpose());
  a.merge(b);
  CHECK(a.count() == 300);
  const auto batch = fit_pca(s, 3);
  const auto stream = fit_pca(a, 3);
  CHECK((batch.mean - stream.mean).norm() < 1e-10);
  const Eigen::MatrixXd overlap = batch.basis.transpose() * stream.basis;
  CHECK((overlap.cwiseAbs() - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-8);
}

TEST_CASE("descriptor dump round trip") {
  const auto path = std::filesystem::temp_directory_path() / "suvm_test_dump.bin";
  Eigen::MatrixXd rows(3, 4);
  rows << 1, 2, 3, 4, 0.5, -0.25, 0.125, 8, 9, 10, 11, 12;
  write_descriptor_dump(path, rows);
  const auto back = read_descriptor_dump(path);
  CHECK(back == rows);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_descriptor_dump(path), Error);
}

TEST_CASE("image io and resampling") {
  const std::uint8_t rgb[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
  const Image l = luma_from_rgb(rgb, 2, 2);
  CHECK(l(0, 0) == doctest::Approx(0.299).epsilon(1e-3));
  CHECK(l(0, 1) == doctest::Approx(0.587).epsilon(1e-3));
  CHECK(l(1, 0) == doctest::Approx(0.114).epsilon(1e-3));
  CHECK(l(1, 1) == doctest::Approx(1.0).epsilon(1e-3));

  const Image img = random_image(40, 30, 12);
  CHECK((resize(img, 40, 30) - img).cwiseAbs().maxCoeff() < 1e-6f);
  const Image half = resize(Image::Constant(30, 40, 0.25f), 20, 15);
  CHECK(half.cols() == 20);
  CHECK((half.array() - 0.25f).abs().maxCoeff() < 1e-6f);

  const auto path = std::filesystem::temp_directory_path() / "suvm_test_io.png";
  save_image(path, img);
  const Image back = load_image(path);
  CHECK(back.rows() == 30);
  CHECK((back - img).cwiseAbs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_image(path), Error);
}
