#pragma once

#include "suvm/detection.hpp"
#include "suvm/dictionary.hpp"
#include "suvm/semantics.hpp"
#include "suvm/srn.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace suvm {

/// Every knob of a run. Serialized into each artifact.
struct RunConfig {
  // dictionary
  int k = 64;
  std::uint64_t seed = 1;
  int pca_dim = 64;
  int patches_per_image = 25;
  int window_width = 128;
  int window_height = 96;
  int kmeans_iters = 100;
  int kmeans_restarts = 1;

  // scanning; a negative percentile disables the distance cutoff
  int stride = 8;
  double pyramid_ratio = imaging::kDefaultPyramidRatio;
  double learn_distance_cutoff = -1.0;
  double distance_cutoff = 95.0;

  // learning
  double lambda = 1e-2;
  double variance_threshold = 0.1;
  std::uint64_t min_support = srn::kDefaultMinSupport;
  int min_component = 5;
  bool one_per_word = true;
  double part_inclusion = 0.9;

  // parts and embedding
  double exclusion_fraction = 0.05;
  int min_shared_neighbors = 1;
  double geometric_tolerance = 0.15;
  double stable_fraction = 0.1;
  int gpe_max_iters = 20000;
  double gpe_tol = 1e-13;

  // detection and evaluation
  double chi2_probability = 0.99;
  int min_parts = 4;
  double suppression_iou = 0.5;
  bool quantization_noise = true;
  double iou_threshold = 0.5;

  // paths
  std::string corpus;
  std::string dictionary;
  std::string model;
  std::string output;
  std::string truth;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& config);
/// Keys absent from `j` keep the values already in `base`; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Throws Usage when a value is out of range.
void validate(const RunConfig& config);

imaging::WindowSize window_of(const RunConfig& config);
dict::DictionaryParams dictionary_params(const RunConfig& config);
dict::ScanParams learn_scan_params(const RunConfig& config);
srn::SparsifyParams sparsify_params(const RunConfig& config);
semantics::CipcParams cipc_params(const RunConfig& config);
semantics::GpeParams gpe_params(const RunConfig& config);
detect::DetectParams detect_params(const RunConfig& config);

}  // namespace suvm
