#pragma once

#include "suvm/core.hpp"
#include "suvm/dictionary.hpp"
#include "suvm/eval.hpp"
#include "suvm/generative.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace suvm::synth {

/// A hand-specified category: layout in anchor units (anchor = last node, at
/// the origin with unit scale), parts, slot-mates and spring stiffnesses.
struct Blueprint {
  struct Spring {
    int i = 0;
    int j = 0;
    Eigen::Vector3d stiffness = Eigen::Vector3d::Constant(100.0);
  };

  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd scale;
  std::vector<int> part;
  std::vector<std::pair<int, int>> exclusive;  ///< mutually exclusive viewlets sharing a slot
  std::vector<Spring> springs;
  std::vector<int> words;  ///< word id per node, ascending
  imaging::WindowSize window{32, 32};
  double part_inclusion = 0.9;
  double appearance_variance = 1.0;

  Index size() const { return x.size(); }
};

/// Rest values follow the layout exactly: mu = (X_j - X_i) / (S_i + S_j) on
/// x and y, log(S_j / S_i) on scale. Viewlet appearance comes from the
/// dictionary when one is given.
gen::SuvModel build_model(const Blueprint& blueprint, const dict::VisualDictionary* dictionary = nullptr);

/// 20 viewlets, 23 springs, 16 parts: two variant slots, two stiff pairs and
/// a loopy backbone. Every node has at most three springs.
Blueprint recovery_blueprint();

/// 12 viewlets on a 4 x 3 grid, each its own part, 17 springs.
Blueprint detection_blueprint();

/// Word detections for a sampled exemplar, distance zero.
std::vector<WordDetection> exemplar_detections(const gen::SuvModel& model, const gen::Exemplar& exemplar);

// ---------------------------------------------------------------------------
// Textures

/// Oriented sinusoidal stripes; orientation 0..3 in 45 degree steps.
Image stripes(int width, int height, int orientation, double period = 6.0);

/// Window split into 2 x 2 quadrants with one stripe orientation each.
Image quadrant_texture(imaging::WindowSize window, const std::array<int, 4>& orientations);

/// `count` quadrant codes, pairwise differing in at least two quadrants and
/// never uniform.
std::vector<std::array<int, 4>> distinct_codes(int count);

/// Flat, noise and the four uniform stripe textures.
std::vector<Image> background_textures(imaging::WindowSize window);

struct PlantedDictionaryParams {
  int views_per_word = 60;
  Index pca_dim = 64;
  double max_shift = 0.125;       ///< of the window, per axis
  double max_log_scale = 0.1733;  ///< half a pyramid step at the default ratio
  std::uint64_t seed = 7;
};

/// Words are the given textures in order. Centroids and distance statistics
/// come from jittered renderings passed through the real resize and HOG path.
dict::VisualDictionary planted_dictionary(const std::vector<Image>& textures, imaging::WindowSize window,
                                          const PlantedDictionaryParams& params = {});

// ---------------------------------------------------------------------------
// Scenes

struct SceneParams {
  int width = 800;
  int height = 600;
  int min_instances = 1;
  int max_instances = 3;
  double min_scale = 0.5;  ///< instance scale range, relative to base_scale
  double max_scale = 1.5;
  double base_scale = 2.0;
  int clutter = 6;  ///< stripe and flat blobs in the background
  double noise = 0.02;
  /// Scatter every viewlet window to an unrelated random spot.
  bool shuffle_positions = false;
  std::uint64_t seed = 1;
};

struct Scene {
  Image image;
  std::vector<gen::Exemplar> exemplars;
  std::vector<Box> boxes;  ///< union of each instance's windows
};

/// Background with clutter and non-overlapping instances fully inside the
/// frame. Deterministic in (params.seed, index).
Scene render_scene(const gen::SuvModel& model, const SceneParams& params, std::size_t index);

/// Gaussian noise around mid gray.
Image noise_image(int width, int height, std::uint64_t seed, double sigma = 0.2);

/// Ground-truth record of one scene, filed as scene_name(index).
eval::TruthImage truth_image(const Scene& scene, const std::string& label, std::size_t index);
std::string scene_name(std::size_t index);

}  // namespace suvm::synth
