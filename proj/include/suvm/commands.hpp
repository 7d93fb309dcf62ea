#pragma once

#include "suvm/config.hpp"
#include "suvm/eval.hpp"
#include "suvm/model_io.hpp"
#include "suvm/synthetic.hpp"

#include <json.hpp>

#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace suvm::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kUsage = 2,
  kNoCategory = 3,
  kIoFailure = 4,
};

int exit_code(const std::exception& e);

/// Loads images lazily from a list of paths.
ImageSource file_source(std::vector<std::string> paths);

/// Learns a visual dictionary from cfg.corpus and writes it (as a model file
/// without models) to cfg.output. Returns the file checksum.
std::uint32_t cmd_dict(const RunConfig& cfg);

struct LearnSummary {
  std::uint32_t checksum = 0;
  std::size_t images = 0;
  std::size_t pairs = 0;
  std::size_t edges = 0;  ///< springs surviving sparsification
  std::vector<std::size_t> model_sizes;
};

/// Scans cfg.corpus with the dictionary in cfg.dictionary, estimates the spring
/// network, and writes one model per giant component to cfg.output.
/// Throws NoCategory when no component is large enough.
LearnSummary cmd_learn(const RunConfig& cfg);

/// Per-image detections from the model file cfg.model, in input order. When
/// `overlay_dir` is set, annotated copies of the images are written there.
nlohmann::json cmd_detect(const RunConfig& cfg, const std::vector<std::string>& images,
                          const std::string& overlay_dir = {});

/// Detections plus one localized box per part (or just `part` when >= 0).
nlohmann::json cmd_localize(const RunConfig& cfg, const std::vector<std::string>& images, int part = -1);

struct SynthOptions {
  std::size_t images = 200;
  synth::SceneParams scene;
  /// Pure noise images without objects or model.
  bool noise_only = false;
  std::string label = "object";
};

/// Writes scene images, truth.json and the planted model.suvm to cfg.output.
void cmd_synth(const RunConfig& cfg, const SynthOptions& options);

struct EvalOptions {
  std::string detections;            ///< JSON written by cmd_detect
  std::vector<double> thresholds;    ///< score cutoffs; empty picks a spread from the scores
  std::optional<eval::Counts> counts;  ///< evaluate given counts instead of files
  std::vector<std::pair<std::string, std::string>> queries;  ///< (label, image directory) for a confusion matrix
};

eval::MetricsReport cmd_eval(const RunConfig& cfg, const EvalOptions& options);

struct VizOptions {
  std::size_t model = 0;
  std::string table;  ///< optional plain-text table path
  std::optional<std::uint64_t> sample_seed;  ///< also render one sampled exemplar
  std::string sample_path;
};

/// Embedding map of one model as SVG at cfg.output.
void cmd_viz(const RunConfig& cfg, const VizOptions& options);

}  // namespace suvm::cli
