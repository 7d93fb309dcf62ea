#include "suvm/config.hpp"

#include <fstream>

namespace suvm {

namespace {

// One table drives both directions of the JSON mapping.
template <typename F>
void for_each_field(RunConfig& c, F&& f) {
  f("k", c.k);
  f("seed", c.seed);
  f("pca_dim", c.pca_dim);
  f("patches_per_image", c.patches_per_image);
  f("window_width", c.window_width);
  f("window_height", c.window_height);
  f("kmeans_iters", c.kmeans_iters);
  f("kmeans_restarts", c.kmeans_restarts);
  f("stride", c.stride);
  f("pyramid_ratio", c.pyramid_ratio);
  f("learn_distance_cutoff", c.learn_distance_cutoff);
  f("distance_cutoff", c.distance_cutoff);
  f("lambda", c.lambda);
  f("variance_threshold", c.variance_threshold);
  f("min_support", c.min_support);
  f("min_component", c.min_component);
  f("one_per_word", c.one_per_word);
  f("part_inclusion", c.part_inclusion);
  f("exclusion_fraction", c.exclusion_fraction);
  f("min_shared_neighbors", c.min_shared_neighbors);
  f("geometric_tolerance", c.geometric_tolerance);
  f("stable_fraction", c.stable_fraction);
  f("gpe_max_iters", c.gpe_max_iters);
  f("gpe_tol", c.gpe_tol);
  f("chi2_probability", c.chi2_probability);
  f("min_parts", c.min_parts);
  f("suppression_iou", c.suppression_iou);
  f("quantization_noise", c.quantization_noise);
  f("iou_threshold", c.iou_threshold);
  f("corpus", c.corpus);
  f("dictionary", c.dictionary);
  f("model", c.model);
  f("output", c.output);
  f("truth", c.truth);
}

}  // namespace

nlohmann::json to_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  RunConfig copy = config;
  for_each_field(copy, [&](const char* key, auto& value) { j[key] = value; });
  return j;
}

RunConfig config_from_json(const nlohmann::json& j, RunConfig base) {
  if (!j.is_object()) throw Error(ErrorCode::Usage, "config must be a JSON object");
  std::size_t known = 0;
  for_each_field(base, [&](const char* key, auto& value) {
    if (!j.contains(key)) return;
    ++known;
    try {
      j.at(key).get_to(value);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Usage, std::string("config key '") + key + "': " + e.what());
    }
  });
  if (known != j.size()) {
    const auto all = to_json(RunConfig{});
    for (const auto& [key, value] : j.items())
      if (!all.contains(key)) throw Error(ErrorCode::Usage, "unknown config key '" + key + "'");
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Usage, path + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::Usage, what);
  };
  require(c.k >= 1, "k must be positive");
  require(c.pca_dim >= 1, "pca_dim must be positive");
  require(c.patches_per_image >= 1, "patches_per_image must be positive");
  require(c.window_width >= 16 && c.window_height >= 16, "window must be at least 16 pixels per side");
  require(c.stride >= 1, "stride must be positive");
  require(c.pyramid_ratio > 0.0 && c.pyramid_ratio < 1.0, "pyramid_ratio must lie in (0, 1)");
  require(c.distance_cutoff <= 100.0 && c.learn_distance_cutoff <= 100.0, "distance cutoffs are percentiles");
  require(c.lambda >= 0.0, "lambda must be non-negative");
  require(c.variance_threshold > 0.0, "variance_threshold must be positive");
  require(c.min_component >= 2, "min_component must be at least 2");
  require(c.part_inclusion > 0.0 && c.part_inclusion <= 1.0, "part_inclusion must lie in (0, 1]");
  require(c.chi2_probability > 0.0 && c.chi2_probability < 1.0, "chi2_probability must lie in (0, 1)");
  require(c.min_parts >= 1, "min_parts must be positive");
  require(c.iou_threshold > 0.0 && c.iou_threshold <= 1.0, "iou_threshold must lie in (0, 1]");
}

imaging::WindowSize window_of(const RunConfig& c) { return {c.window_width, c.window_height}; }

dict::DictionaryParams dictionary_params(const RunConfig& c) {
  dict::DictionaryParams p;
  p.kmeans.k = c.k;
  p.kmeans.seed = c.seed;
  p.kmeans.max_iters = c.kmeans_iters;
  p.kmeans.restarts = c.kmeans_restarts;
  p.pca_dim = c.pca_dim;
  p.patches_per_image = static_cast<std::size_t>(c.patches_per_image);
  p.window = window_of(c);
  p.pyramid_ratio = c.pyramid_ratio;
  return p;
}

namespace {

dict::ScanParams scan_params(const RunConfig& c, double cutoff) {
  dict::ScanParams p;
  p.stride = c.stride;
  p.pyramid_ratio = c.pyramid_ratio;
  if (cutoff >= 0.0) p.distance_cutoff = cutoff;
  return p;
}

}  // namespace

dict::ScanParams learn_scan_params(const RunConfig& c) { return scan_params(c, c.learn_distance_cutoff); }

srn::SparsifyParams sparsify_params(const RunConfig& c) {
  srn::SparsifyParams p;
  p.lambda = c.lambda;
  p.variance_threshold = c.variance_threshold;
  p.min_support = c.min_support;
  return p;
}

semantics::CipcParams cipc_params(const RunConfig& c) {
  semantics::CipcParams p;
  p.exclusion_fraction = c.exclusion_fraction;
  p.min_shared_neighbors = c.min_shared_neighbors;
  p.geometric_tolerance = c.geometric_tolerance;
  p.stable_fraction = c.stable_fraction;
  return p;
}

semantics::GpeParams gpe_params(const RunConfig& c) {
  semantics::GpeParams p;
  p.max_iters = c.gpe_max_iters;
  p.tol = c.gpe_tol;
  p.init_seed = c.seed;
  return p;
}

detect::DetectParams detect_params(const RunConfig& c) {
  detect::DetectParams p;
  p.scan = scan_params(c, c.distance_cutoff);
  p.chi2_threshold = detect::chi_square_quantile(c.chi2_probability, 3);
  p.min_parts = c.min_parts;
  p.suppression_iou = c.suppression_iou;
  p.quantization_noise = c.quantization_noise;
  return p;
}

}  // namespace suvm
