#include "suvm/commands.hpp"

#include "suvm/detection.hpp"
#include "suvm/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

namespace fs = std::filesystem;

namespace suvm::cli {

int exit_code(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->code()) {
      case ErrorCode::Usage:
      case ErrorCode::InvalidInput:
        return kUsage;
      case ErrorCode::NoCategory:
        return kNoCategory;
      case ErrorCode::Io:
      case ErrorCode::Format:
        return kIoFailure;
      default:
        return kFailure;
    }
  }
  return kFailure;
}

ImageSource file_source(std::vector<std::string> paths) {
  ImageSource src;
  src.size = paths.size();
  src.load = [paths = std::move(paths)](std::size_t i) { return imaging::load_image(paths[i]); };
  return src;
}

namespace {

std::vector<std::string> corpus_paths(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::Usage, "no corpus directory given");
  std::vector<std::string> out;
  for (const auto& p : imaging::list_images(dir)) out.push_back(p.string());
  if (out.empty()) throw Error(ErrorCode::InvalidInput, "corpus directory " + dir + " holds no images");
  return out;
}

ModelFile require_model_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::Usage, std::string("no ") + what + " file given");
  if (!fs::exists(path)) throw Error(ErrorCode::Usage, std::string(what) + " file " + path + " does not exist");
  return load_model_file(path);
}

void require_output(const RunConfig& cfg) {
  if (cfg.output.empty()) throw Error(ErrorCode::Usage, "no output path given");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
}

std::uint32_t write_model(const ModelFile& file, const std::string& path) {
  const auto data = serialize(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
  return file_checksum(data);
}

// More than half the corpus unreadable ends the run.
void check_failure_quota(std::size_t failed, std::size_t total) {
  if (failed * 2 > total)
    throw Error(ErrorCode::Io, std::to_string(failed) + " of " + std::to_string(total) + " images could not be read");
}

nlohmann::json box_json(const Box& b) { return {b.x0, b.y0, b.x1, b.y1}; }

void draw_box(Image& img, const Box& b, float value) {
  const int x0 = std::clamp(static_cast<int>(std::lround(b.x0)), 0, static_cast<int>(img.cols()) - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround(b.x1)) - 1, 0, static_cast<int>(img.cols()) - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(b.y0)), 0, static_cast<int>(img.rows()) - 1);
  const int y1 = std::clamp(static_cast<int>(std::lround(b.y1)) - 1, 0, static_cast<int>(img.rows()) - 1);
  for (int t = 0; t < 2; ++t) {
    for (int x = x0; x <= x1; ++x) {
      img(std::min(y0 + t, y1), x) = value;
      img(std::max(y1 - t, y0), x) = value;
    }
    for (int y = y0; y <= y1; ++y) {
      img(y, std::min(x0 + t, x1)) = value;
      img(y, std::max(x1 - t, x0)) = value;
    }
  }
}

nlohmann::json detection_json(std::size_t model, const detect::ObjectDetection& d) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : d.members)
    members.push_back({{"word", m.word}, {"box", box_json(m.box())}, {"distance", m.distance}, {"layer", m.layer}});
  return {{"model", model},
          {"box", box_json(d.box)},
          {"score", d.score},
          {"parts", d.parts},
          {"group_size", d.group_size},
          {"likelihood",
           {{"x", d.breakdown.x},
            {"y", d.breakdown.y},
            {"scale", d.breakdown.scale},
            {"appearance", d.breakdown.appearance},
            {"viewlets", d.breakdown.viewlets}}},
          {"members", members}};
}

template <typename PerDetection>
nlohmann::json run_detection(const RunConfig& cfg, const std::vector<std::string>& images, PerDetection&& extra,
                             const std::string& overlay_dir) {
  if (images.empty()) throw Error(ErrorCode::Usage, "no images given");
  const ModelFile file = require_model_file(cfg.model, "model");
  if (file.models.empty()) throw Error(ErrorCode::Usage, "model file " + cfg.model + " holds no category model");
  const auto params = detect_params(cfg);
  if (!overlay_dir.empty()) fs::create_directories(overlay_dir);

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& path : images) {
    const Image img = imaging::load_image(path);
    Image overlay = overlay_dir.empty() ? Image() : img;
    nlohmann::json dets = nlohmann::json::array();
    for (std::size_t m = 0; m < file.models.size(); ++m) {
      for (const auto& d : detect::detect_objects(img, file.dictionary, file.models[m], params)) {
        auto j = detection_json(m, d);
        extra(j, d, file.models[m]);
        dets.push_back(std::move(j));
        if (!overlay_dir.empty()) draw_box(overlay, d.box, 1.0f);
      }
    }
    if (!overlay_dir.empty()) imaging::save_image(fs::path(overlay_dir) / fs::path(path).filename(), overlay);
    entries.push_back({{"file", fs::path(path).filename().string()},
                       {"path", path},
                       {"width", img.cols()},
                       {"height", img.rows()},
                       {"detections", dets}});
  }
  return {{"config", to_json(cfg)}, {"images", entries}};
}

}  // namespace

std::uint32_t cmd_dict(const RunConfig& cfg) {
  validate(cfg);
  require_output(cfg);
  const auto paths = corpus_paths(cfg.corpus);
  dict::LearnDiagnostics diag;
  ModelFile file;
  file.config = cfg;
  file.dictionary = dict::learn_dictionary(file_source(paths), dictionary_params(cfg), &diag);
  for (auto i : diag.failed_images) std::cerr << "unreadable: " << paths[i] << '\n';
  check_failure_quota(diag.failed_images.size(), paths.size());
  const auto checksum = write_model(file, cfg.output);

  nlohmann::json report{{"config", to_json(cfg)},
                        {"images", diag.images},
                        {"patches", diag.patches},
                        {"failed", diag.failed_images.size()},
                        {"inertia", diag.inertia_history},
                        {"explained_variance_ratio",
                         std::vector<double>(diag.explained_variance_ratio.data(),
                                             diag.explained_variance_ratio.data() + diag.explained_variance_ratio.size())},
                        {"checksum", checksum}};
  write_text(cfg.output + ".json", report.dump(2) + "\n");
  std::cerr << "dictionary: " << file.dictionary.k() << " words, " << diag.patches << " patches from " << diag.images
            << " images\n";
  return checksum;
}

LearnSummary cmd_learn(const RunConfig& cfg) {
  validate(cfg);
  require_output(cfg);
  const ModelFile dict_file = require_model_file(cfg.dictionary, "dictionary");
  const auto& dictionary = dict_file.dictionary;
  if (dictionary.k() == 0) throw Error(ErrorCode::Usage, "dictionary file holds no words");
  if (dictionary.pca.input_dim() != imaging::hog_dimension(dictionary.window, dictionary.hog))
    throw Error(ErrorCode::Usage, "dictionary descriptor dimension does not match its window");
  const auto paths = corpus_paths(cfg.corpus);
  const auto scan = learn_scan_params(cfg);

  LearnSummary summary;
  srn::PairStats stats;
  std::size_t failed = 0;
  for (const auto& path : paths) {
    Image img;
    try {
      img = imaging::load_image(path);
    } catch (const Error& e) {
      std::cerr << "unreadable: " << path << " (" << e.what() << ")\n";
      ++failed;
      continue;
    }
    const auto dets = dict::scan_image(img, dictionary, scan);
    stats.add_image(dets, cfg.one_per_word);
    ++summary.images;
  }
  check_failure_quota(failed, paths.size());
  summary.pairs = stats.pairs().size();

  const auto sp = sparsify_params(cfg);
  const auto edges = srn::sparsify(stats, sp);
  summary.edges = edges.size();
  std::cerr << "learn: " << summary.images << " images, " << summary.pairs << " word pairs, " << edges.size()
            << " springs (threshold " << sp.variance_threshold << ", lambda " << sp.lambda
            << ", stiffness target " << 1.0 / (sp.variance_threshold + sp.lambda) << ")\n";

  const auto components = srn::giant_components(edges, static_cast<std::size_t>(cfg.min_component), &stats);
  if (components.empty())
    throw Error(ErrorCode::NoCategory, "no category discovered: no spring component reaches " +
                                           std::to_string(cfg.min_component) + " viewlets");

  ModelFile file;
  file.config = cfg;
  file.dictionary = dictionary;
  const std::string params = to_json(cfg).dump();
  for (const auto& network : components) {
    auto cipc = semantics::cipc_build(network, stats, cipc_params(cfg));
    auto gpe = semantics::gpe_embed(network, gpe_params(cfg));
    if (!gpe.converged) log_warning("embedding stopped at the iteration limit");
    auto model = gen::make_model(network, std::move(cipc), std::move(gpe), dictionary, cfg.part_inclusion);
    model.provenance.corpus = cfg.corpus;
    model.provenance.parameters = params;
    model.provenance.notes = std::to_string(summary.images) + " images";
    summary.model_sizes.push_back(static_cast<std::size_t>(model.size()));
    std::cerr << "model " << file.models.size() << ": " << model.size() << " viewlets, " << model.srn.edges.size()
              << " springs, " << model.cipc.part_count << " parts\n";
    file.models.push_back(std::move(model));
  }
  summary.checksum = write_model(file, cfg.output);
  return summary;
}

nlohmann::json cmd_detect(const RunConfig& cfg, const std::vector<std::string>& images,
                          const std::string& overlay_dir) {
  validate(cfg);
  return run_detection(
      cfg, images, [](nlohmann::json&, const detect::ObjectDetection&, const gen::SuvModel&) {}, overlay_dir);
}

nlohmann::json cmd_localize(const RunConfig& cfg, const std::vector<std::string>& images, int part) {
  validate(cfg);
  return run_detection(
      cfg, images,
      [part](nlohmann::json& j, const detect::ObjectDetection& d, const gen::SuvModel& model) {
        if (part >= model.cipc.part_count) throw Error(ErrorCode::Usage, "part index beyond the model's parts");
        nlohmann::json parts = nlohmann::json::array();
        for (int p = 0; p < model.cipc.part_count; ++p) {
          if (part >= 0 && p != part) continue;
          const auto loc = detect::localize_part(d, model, p);
          if (!loc.present) continue;
          parts.push_back(
              {{"part", p}, {"box", box_json(loc.box)}, {"votes", loc.votes}, {"dispersion", loc.dispersion}});
        }
        j["localized"] = parts;
      },
      {});
}

void cmd_synth(const RunConfig& cfg, const SynthOptions& options) {
  validate(cfg);
  require_output(cfg);
  fs::create_directories(cfg.output);
  auto scene = options.scene;
  scene.seed = cfg.seed;
  const fs::path out(cfg.output);

  if (options.noise_only) {
    for (std::size_t i = 0; i < options.images; ++i)
      imaging::save_image(out / synth::scene_name(i),
                          synth::noise_image(scene.width, scene.height, mix_seed(cfg.seed, i)));
    std::cerr << "synth: " << options.images << " noise images\n";
    return;
  }

  const auto bp = synth::detection_blueprint();
  std::vector<Image> textures;
  for (const auto& code : synth::distinct_codes(static_cast<int>(bp.size())))
    textures.push_back(synth::quadrant_texture(bp.window, code));
  for (auto& t : synth::background_textures(bp.window)) textures.push_back(std::move(t));
  ModelFile file;
  file.config = cfg;
  file.config.window_width = bp.window.width;
  file.config.window_height = bp.window.height;
  file.dictionary = synth::planted_dictionary(textures, bp.window);
  file.models.push_back(synth::build_model(bp, &file.dictionary));
  file.models.back().provenance.notes = "planted grid category";
  write_model(file, (out / "model.suvm").string());

  eval::GroundTruth truth;
  truth.categories = {options.label};
  for (std::size_t i = 0; i < options.images; ++i) {
    const auto s = synth::render_scene(file.models.back(), scene, i);
    imaging::save_image(out / synth::scene_name(i), s.image);
    truth.images.push_back(synth::truth_image(s, options.label, i));
  }
  auto j = eval::to_json(truth);
  j["generator"] = {{"config", to_json(cfg)},
                    {"width", scene.width},
                    {"height", scene.height},
                    {"min_instances", scene.min_instances},
                    {"max_instances", scene.max_instances},
                    {"min_scale", scene.min_scale},
                    {"max_scale", scene.max_scale},
                    {"base_scale", scene.base_scale},
                    {"clutter", scene.clutter},
                    {"noise", scene.noise},
                    {"shuffle_positions", scene.shuffle_positions}};
  write_text((out / "truth.json").string(), j.dump(2) + "\n");
  std::cerr << "synth: " << options.images << " scenes in " << cfg.output << '\n';
}

eval::MetricsReport cmd_eval(const RunConfig& cfg, const EvalOptions& options) {
  validate(cfg);
  eval::MetricsReport report;
  report.iou_threshold = cfg.iou_threshold;
  if (options.counts) {
    const auto& c = *options.counts;
    if (c.tp < 0 || c.fp < 0 || c.fn < 0) throw Error(ErrorCode::Usage, "counts must be non-negative");
    report.counts = c;
    return report;
  }

  if (!options.queries.empty()) {
    const ModelFile file = require_model_file(cfg.model, "model");
    const auto params = detect_params(cfg);
    std::vector<std::string> labels;
    std::vector<ImageSource> sources;
    for (const auto& [label, dir] : options.queries) {
      labels.push_back(label);
      std::vector<std::string> paths;
      if (fs::is_directory(dir))
        for (const auto& p : imaging::list_images(dir)) paths.push_back(p.string());
      sources.push_back(file_source(std::move(paths)));
    }
    std::vector<std::string> models;
    for (std::size_t m = 0; m < file.models.size(); ++m)
      models.push_back(file.models[m].provenance.corpus.empty() ? "model " + std::to_string(m)
                                                                : file.models[m].provenance.corpus);
    report.confusion = eval::confusion_matrix(labels, sources, models, [&](std::size_t m, const Image& img) {
      return !detect::detect_objects(img, file.dictionary, file.models[m], params).empty();
    });
    for (int r : report.confusion->empty_rows)
      log_warning("query set '" + labels[r] + "' is empty; its row is undefined");
  }

  if (!options.detections.empty()) {
    if (cfg.truth.empty()) throw Error(ErrorCode::Usage, "evaluating detections needs a ground truth file");
    const auto truth = eval::load_ground_truth(cfg.truth);
    std::ifstream in(options.detections);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + options.detections);
    nlohmann::json dj;
    try {
      in >> dj;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Format, options.detections + ": " + e.what());
    }

    std::vector<std::vector<eval::ScoredBox>> dets;
    std::vector<std::vector<Box>> boxes;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    try {
      for (const auto& entry : dj.at("images")) {
        const auto file = entry.at("file").get<std::string>();
        const auto* t = truth.find(file);
        if (!t) throw Error(ErrorCode::InvalidInput, "image " + file + " has no ground truth");
        std::vector<eval::ScoredBox> d;
        for (const auto& det : entry.at("detections")) {
          const auto b = det.at("box");
          d.push_back({{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                       det.at("score").get<double>()});
          lo = std::min(lo, d.back().score);
          hi = std::max(hi, d.back().score);
        }
        std::vector<Box> tb;
        for (const auto& o : t->objects) tb.push_back(o.box);
        dets.push_back(std::move(d));
        boxes.push_back(std::move(tb));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Format, options.detections + ": " + e.what());
    }
    report.counts = eval::match_corpus(dets, boxes, cfg.iou_threshold);
    auto thresholds = options.thresholds;
    if (thresholds.empty() && std::isfinite(lo)) {
      constexpr int steps = 10;
      for (int s = 0; s <= steps; ++s) thresholds.push_back(hi - (hi - lo) * s / steps);
    }
    report.curve = eval::threshold_sweep(dets, boxes, thresholds, cfg.iou_threshold);
  }
  if (options.detections.empty() && options.queries.empty())
    throw Error(ErrorCode::Usage, "eval needs detections, query sets or counts");
  return report;
}

void cmd_viz(const RunConfig& cfg, const VizOptions& options) {
  validate(cfg);
  require_output(cfg);
  const ModelFile file = require_model_file(cfg.model, "model");
  if (options.model >= file.models.size()) throw Error(ErrorCode::Usage, "model index out of range");
  const auto& m = file.models[options.model];
  write_text(cfg.output, semantics::embedding_svg(m.gpe, m.cipc, m.srn.nodes));
  if (!options.table.empty()) write_text(options.table, semantics::embedding_table(m.gpe, m.cipc, m.srn.nodes));
  if (options.sample_seed) {
    if (options.sample_path.empty()) throw Error(ErrorCode::Usage, "sample rendering needs an output path");
    gen::SampleOptions so;
    so.global_scale = 1.0;
    const auto ex = gen::sample_exemplar(m, *options.sample_seed, so);
    imaging::save_image(options.sample_path, gen::render_exemplar(ex, m).image);
  }
}

}  // namespace suvm::cli
