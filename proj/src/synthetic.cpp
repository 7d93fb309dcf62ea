#include "suvm/synthetic.hpp"

#include "suvm/union_find.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace suvm::synth {

gen::SuvModel build_model(const Blueprint& bp, const dict::VisualDictionary* dictionary) {
  const Index n = bp.size();
  if (n < 2 || bp.y.size() != n || bp.scale.size() != n || static_cast<Index>(bp.part.size()) != n ||
      static_cast<Index>(bp.words.size()) != n)
    throw Error(ErrorCode::InvalidInput, "blueprint arrays disagree in length");
  if ((bp.scale.array() <= 0.0).any()) throw Error(ErrorCode::InvalidInput, "blueprint scales must be positive");
  if (!std::is_sorted(bp.words.begin(), bp.words.end()))
    throw Error(ErrorCode::InvalidInput, "blueprint words must ascend");

  gen::SuvModel m;
  m.window = bp.window;
  m.part_inclusion = bp.part_inclusion;

  m.srn.nodes = bp.words;
  m.srn.extent_x = bp.scale * bp.window.width;
  m.srn.extent_y = bp.scale * bp.window.height;
  for (const auto& s : bp.springs) {
    srn::SpringEdge e;
    e.i = std::min(s.i, s.j);
    e.j = std::max(s.i, s.j);
    const double span = bp.scale(e.i) + bp.scale(e.j);
    e.stiffness = s.stiffness;
    e.rest = {(bp.x(e.j) - bp.x(e.i)) / span, (bp.y(e.j) - bp.y(e.i)) / span, std::log(bp.scale(e.j) / bp.scale(e.i))};
    e.variance = s.stiffness.cwiseInverse().sum();
    m.srn.edges.push_back(e);
  }
  std::sort(m.srn.edges.begin(), m.srn.edges.end(),
            [](const auto& a, const auto& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });

  m.cipc.part = bp.part;
  m.cipc.part_count = *std::max_element(bp.part.begin(), bp.part.end()) + 1;
  UnionFind uf(static_cast<std::size_t>(n));
  for (auto [a, b] : bp.exclusive) {
    if (bp.part[a] != bp.part[b]) throw Error(ErrorCode::InvalidInput, "slot-mates must share a part");
    m.cipc.edges.push_back({std::min(a, b), std::max(a, b), semantics::CipcKind::Exclusive});
    uf.unite(a, b);
  }
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b)
      if (bp.part[a] == bp.part[b] && uf.unite(a, b))
        m.cipc.edges.push_back({static_cast<int>(a), static_cast<int>(b), semantics::CipcKind::Stable});

  m.gpe.x = bp.x;
  m.gpe.y = bp.y;
  m.gpe.scale = bp.scale;
  m.gpe.converged = true;

  for (Index k = 0; k < n; ++k) {
    gen::Viewlet v;
    v.word = bp.words[k];
    if (dictionary) {
      v.centroid = dictionary->centroids.row(v.word).transpose();
      v.appearance_variance = dictionary->spread(v.word);
      if (static_cast<std::size_t>(v.word) < dictionary->mean_patches.size())
        v.patch = dictionary->mean_patches[v.word];
    } else {
      v.centroid = Eigen::VectorXd::Zero(1);
      v.appearance_variance = bp.appearance_variance;
    }
    m.viewlets.push_back(std::move(v));
  }
  m.provenance.corpus = "planted";
  m.refresh();
  m.validate();
  return m;
}

Blueprint recovery_blueprint() {
  Blueprint bp;
  // x, y, scale per node; the anchor (19) sits at the origin.
  const double layout[20][3] = {
      {-6.0, -3.0, 0.8}, {-6.0, -3.0, 0.8}, {-4.5, -3.0, 1.0}, {-6.0, 3.0, 0.8},  {-6.0, 3.0, 0.8},
      {-4.5, 3.0, 1.0},  {3.0, -4.5, 0.9},  {4.2, -4.5, 0.9},  {3.5, -3.0, 1.1},  {3.0, 4.5, 0.9},
      {4.2, 4.5, 0.9},   {3.5, 3.0, 1.1},   {-3.0, -1.2, 1.2}, {-3.0, 1.2, 1.2},  {-1.5, 0.0, 1.0},
      {0.5, -1.0, 1.0},  {2.0, -1.8, 1.1},  {2.0, 0.3, 0.9},   {2.5, 1.8, 1.0},   {0.0, 0.0, 1.0}};
  bp.x.resize(20);
  bp.y.resize(20);
  bp.scale.resize(20);
  for (int k = 0; k < 20; ++k) {
    bp.x(k) = layout[k][0];
    bp.y(k) = layout[k][1];
    bp.scale(k) = layout[k][2];
    bp.words.push_back(k);
  }
  bp.exclusive = {{0, 1}, {3, 4}};
  bp.part.resize(20);
  // Slot-mates and stiff pairs share a part; everything else stands alone.
  const int part_of[20] = {0, 0, 1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  std::copy(std::begin(part_of), std::end(part_of), bp.part.begin());

  const Eigen::Vector3d c = Eigen::Vector3d::Constant(40.0);
  const int loose[][2] = {{0, 2},   {1, 2},   {3, 5},   {4, 5},   {6, 8},   {7, 8},   {9, 11},
                          {10, 11}, {12, 13}, {13, 14}, {12, 14}, {2, 12},  {5, 13},  {14, 15},
                          {15, 16}, {16, 17}, {15, 17}, {8, 16},  {17, 18}, {11, 18}, {18, 19}};
  for (const auto& e : loose) bp.springs.push_back({e[0], e[1], c});
  bp.springs.push_back({6, 7, 20.0 * c});
  bp.springs.push_back({9, 10, 20.0 * c});
  return bp;
}

Blueprint detection_blueprint() {
  Blueprint bp;
  constexpr int cols = 4;
  constexpr int rows = 3;
  constexpr double spacing = 1.5;
  const int n = cols * rows;
  bp.x.resize(n);
  bp.y.resize(n);
  bp.scale = Eigen::VectorXd::Ones(n);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int k = r * cols + c;
      bp.x(k) = (c - (cols - 1)) * spacing;
      bp.y(k) = (r - (rows - 1)) * spacing;
      bp.words.push_back(k);
      bp.part.push_back(k);
    }
  }
  const Eigen::Vector3d stiff = Eigen::Vector3d::Constant(400.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int k = r * cols + c;
      if (c + 1 < cols) bp.springs.push_back({k, k + 1, stiff});
      if (r + 1 < rows) bp.springs.push_back({k, k + cols, stiff});
    }
  }
  bp.part_inclusion = 0.8;
  return bp;
}

std::vector<WordDetection> exemplar_detections(const gen::SuvModel& model, const gen::Exemplar& ex) {
  std::vector<WordDetection> out;
  for (std::size_t i = 0; i < ex.count(); ++i) {
    const auto k = static_cast<Index>(i);
    WordDetection d;
    d.word = model.viewlets[ex.viewlets[i]].word;
    d.x = ex.x(k);
    d.y = ex.y(k);
    d.extent_x = ex.extent_x(k);
    d.extent_y = ex.extent_y(k);
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------

Image stripes(int width, int height, int orientation, double period) {
  const double theta = orientation * std::numbers::pi / 4.0;
  const double kx = std::cos(theta) * 2.0 * std::numbers::pi / period;
  const double ky = std::sin(theta) * 2.0 * std::numbers::pi / period;
  Image img(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) img(r, c) = static_cast<float>(0.5 + 0.4 * std::sin(kx * (c + 0.5) + ky * (r + 0.5)));
  return img;
}

Image quadrant_texture(imaging::WindowSize window, const std::array<int, 4>& orientations) {
  Image img(window.height, window.width);
  const int hw = window.width / 2;
  const int hh = window.height / 2;
  for (int q = 0; q < 4; ++q) {
    const int x0 = (q % 2) * hw;
    const int y0 = (q / 2) * hh;
    const int w = q % 2 ? window.width - hw : hw;
    const int h = q / 2 ? window.height - hh : hh;
    img.block(y0, x0, h, w) = stripes(window.width, window.height, orientations[q]).block(y0, x0, h, w);
  }
  return img;
}

std::vector<std::array<int, 4>> distinct_codes(int count) {
  std::vector<std::array<int, 4>> out;
  for (int min_diff : {3, 2}) {
    out.clear();
    for (int v = 0; v < 256 && static_cast<int>(out.size()) < count; ++v) {
      const std::array<int, 4> code{v & 3, (v >> 2) & 3, (v >> 4) & 3, (v >> 6) & 3};
      if (code[0] == code[1] && code[1] == code[2] && code[2] == code[3]) continue;
      const bool far = std::all_of(out.begin(), out.end(), [&](const auto& o) {
        int diff = 0;
        for (int q = 0; q < 4; ++q) diff += o[q] != code[q];
        return diff >= min_diff;
      });
      if (far) out.push_back(code);
    }
    if (static_cast<int>(out.size()) == count) return out;
  }
  throw Error(ErrorCode::InvalidInput, "too many texture codes requested");
}

std::vector<Image> background_textures(imaging::WindowSize window) {
  std::vector<Image> out;
  out.push_back(Image::Constant(window.height, window.width, 0.5f));
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 0.1);
  Image noise(window.height, window.width);
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<float>(0.5 + normal(rng));
  out.push_back(noise);
  for (int o = 0; o < 4; ++o) out.push_back(stripes(window.width, window.height, o));
  return out;
}

namespace {

void add_noise(Image& img, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> normal(0.0, sigma);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(img.data()[i] + normal(rng));
}

}  // namespace

dict::VisualDictionary planted_dictionary(const std::vector<Image>& textures, imaging::WindowSize window,
                                          const PlantedDictionaryParams& params) {
  if (textures.empty()) throw Error(ErrorCode::InvalidInput, "planted dictionary needs textures");
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int cw = 2 * window.width;
  const int ch = 2 * window.height;
  const int max_dx = static_cast<int>(std::floor(params.max_shift * window.width));
  const int max_dy = static_cast<int>(std::floor(params.max_shift * window.height));
  std::uniform_int_distribution<int> shift_x(-max_dx, max_dx);
  std::uniform_int_distribution<int> shift_y(-max_dy, max_dy);

  dict::VisualDictionary d;
  d.window = window;
  const int total = static_cast<int>(textures.size()) * params.views_per_word;
  Eigen::MatrixXd raw(total, imaging::hog_dimension(window, d.hog));
  std::vector<int> labels;
  int row = 0;
  for (std::size_t t = 0; t < textures.size(); ++t) {
    for (int v = 0; v < params.views_per_word; ++v) {
      // Render at a random magnification, then come back down through resize
      // the way a pyramid layer would.
      const double g = 1.0 + 2.0 * unit(rng);
      const double a = std::exp((2.0 * unit(rng) - 1.0) * params.max_log_scale);
      Image canvas = Image::Constant(static_cast<int>(std::lround(ch * g)), static_cast<int>(std::lround(cw * g)), 0.5f);
      add_noise(canvas, 0.02, rng);
      gen::paste_patch(canvas, textures[t], 0.25 * cw * g, 0.25 * ch * g, window.width * g * a, window.height * g * a);
      const Image small = imaging::resize(canvas, cw, ch);
      const int x0 = window.width / 2 + shift_x(rng);
      const int y0 = window.height / 2 + shift_y(rng);
      raw.row(row++) = imaging::hog(small.block(y0, x0, window.height, window.width), d.hog).transpose();
      labels.push_back(static_cast<int>(t));
    }
  }
  d.pca = imaging::fit_pca(raw, std::min<Index>(params.pca_dim, raw.cols()));
  Eigen::MatrixXd projected(total, d.pca.output_dim());
  for (int i = 0; i < total; ++i) projected.row(i) = d.pca.project(raw.row(i).transpose()).transpose();
  d.centroids = Eigen::MatrixXd::Zero(static_cast<Index>(textures.size()), projected.cols());
  for (int i = 0; i < total; ++i) d.centroids.row(labels[i]) += projected.row(i);
  d.centroids /= static_cast<double>(params.views_per_word);
  dict::fill_word_statistics(d, projected, labels);
  d.mean_patches = textures;
  return d;
}

// ---------------------------------------------------------------------------

namespace {

bool overlaps_any(const Box& b, const std::vector<Box>& taken) {
  return std::any_of(taken.begin(), taken.end(), [&](const Box& t) { return intersection_area(b, t) > 0.0; });
}

Box inflate(const Box& b, double m) { return {b.x0 - m, b.y0 - m, b.x1 + m, b.y1 + m}; }

}  // namespace

Scene render_scene(const gen::SuvModel& model, const SceneParams& params, std::size_t index) {
  std::mt19937_64 rng(mix_seed(params.seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene scene;
  scene.image = Image::Constant(params.height, params.width, 0.5f);

  for (int c = 0; c < params.clutter; ++c) {
    const double w = 24.0 + 72.0 * unit(rng);
    const double h = 24.0 + 72.0 * unit(rng);
    const double x = unit(rng) * (params.width - w);
    const double y = unit(rng) * (params.height - h);
    const int kind = static_cast<int>(unit(rng) * 5.0);
    const int iw = static_cast<int>(std::lround(w));
    const int ih = static_cast<int>(std::lround(h));
    Image blob = kind < 4 ? stripes(iw, ih, kind, 6.0 * (1.0 + 2.0 * unit(rng)))
                          : Image::Constant(ih, iw, static_cast<float>(0.2 + 0.6 * unit(rng)));
    gen::paste_patch(scene.image, blob, x, y, w, h);
  }

  std::uniform_int_distribution<int> count(params.min_instances, params.max_instances);
  const int instances = count(rng);
  std::vector<Box> taken;
  for (int k = 0; k < instances; ++k) {
    gen::SampleOptions opt;
    opt.global_scale = params.base_scale * (params.min_scale + (params.max_scale - params.min_scale) * unit(rng));
    gen::Exemplar ex = gen::sample_exemplar(model, rng(), opt);
    const Box b = ex.box();
    const double margin = 0.5 * model.window.width * opt.global_scale;
    if (b.width() > params.width || b.height() > params.height) continue;
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double tx = -b.x0 + unit(rng) * (params.width - b.width());
      const double ty = -b.y0 + unit(rng) * (params.height - b.height());
      const Box placed{b.x0 + tx, b.y0 + ty, b.x1 + tx, b.y1 + ty};
      if (overlaps_any(inflate(placed, margin), taken)) continue;
      ex.translate(tx, ty);
      taken.push_back(placed);
      scene.boxes.push_back(placed);
      scene.exemplars.push_back(std::move(ex));
      break;
    }
  }

  std::vector<Box> windows;
  for (const auto& ex : scene.exemplars) {
    for (std::size_t i = 0; i < ex.count(); ++i) {
      const auto k = static_cast<Index>(i);
      double x = ex.x(k);
      double y = ex.y(k);
      const double w = ex.extent_x(k);
      const double h = ex.extent_y(k);
      if (params.shuffle_positions) {
        for (int attempt = 0; attempt < 200; ++attempt) {
          x = unit(rng) * (params.width - w);
          y = unit(rng) * (params.height - h);
          if (!overlaps_any({x, y, x + w, y + h}, windows)) break;
        }
      }
      windows.push_back({x, y, x + w, y + h});
      gen::paste_patch(scene.image, model.viewlets[ex.viewlets[i]].patch, x, y, w, h);
    }
  }
  add_noise(scene.image, params.noise, rng);
  scene.image = scene.image.cwiseMax(0.0f).cwiseMin(1.0f);
  return scene;
}

Image noise_image(int width, int height, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  Image img = Image::Constant(height, width, 0.5f);
  add_noise(img, sigma, rng);
  return img.cwiseMax(0.0f).cwiseMin(1.0f);
}

std::string scene_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu.png", index);
  return buf;
}

eval::TruthImage truth_image(const Scene& scene, const std::string& label, std::size_t index) {
  eval::TruthImage t;
  t.file = scene_name(index);
  t.width = static_cast<int>(scene.image.cols());
  t.height = static_cast<int>(scene.image.rows());
  for (const auto& b : scene.boxes) {
    const Box clipped{std::max(0.0, b.x0), std::max(0.0, b.y0), std::min<double>(t.width, b.x1),
                      std::min<double>(t.height, b.y1)};
    t.objects.push_back({label, clipped, {}});
  }
  return t;
}

}  // namespace suvm::synth
