#include "suvm/commands.hpp"

#include <CLI11.hpp>

#include <cstring>
#include <fstream>
#include <iostream>

using namespace suvm;

namespace {

// The config file must be read before the flags so that flags win.
std::string find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return argv[i + 1];
    if (std::strncmp(argv[i], "--config=", 9) == 0) return argv[i] + 9;
  }
  return {};
}

void add_config_options(CLI::App& app, RunConfig& c) {
  app.add_option("--k", c.k, "dictionary size")->capture_default_str();
  app.add_option("--seed", c.seed, "seed for every random choice")->capture_default_str();
  app.add_option("--pca-dim", c.pca_dim, "descriptor dimension after PCA")->capture_default_str();
  app.add_option("--patches-per-image", c.patches_per_image)->capture_default_str();
  app.add_option("--window-width", c.window_width)->capture_default_str();
  app.add_option("--window-height", c.window_height)->capture_default_str();
  app.add_option("--kmeans-iters", c.kmeans_iters)->capture_default_str();
  app.add_option("--kmeans-restarts", c.kmeans_restarts)->capture_default_str();
  app.add_option("--stride", c.stride, "scan stride in layer pixels")->capture_default_str();
  app.add_option("--pyramid-ratio", c.pyramid_ratio)->capture_default_str();
  app.add_option("--learn-distance-cutoff", c.learn_distance_cutoff,
                 "percentile cutoff while learning; negative keeps every window")
      ->capture_default_str();
  app.add_option("--distance-cutoff", c.distance_cutoff, "percentile cutoff while detecting; negative disables")
      ->capture_default_str();
  app.add_option("--lambda", c.lambda, "L1 weight")->capture_default_str();
  app.add_option("--variance-threshold", c.variance_threshold, "combined-variance cut for springs")
      ->capture_default_str();
  app.add_option("--min-support", c.min_support)->capture_default_str();
  app.add_option("--min-component", c.min_component, "smallest spring component kept as a category")
      ->capture_default_str();
  app.add_option("--one-per-word", c.one_per_word)->capture_default_str();
  app.add_option("--part-inclusion", c.part_inclusion)->capture_default_str();
  app.add_option("--exclusion-fraction", c.exclusion_fraction)->capture_default_str();
  app.add_option("--min-shared-neighbors", c.min_shared_neighbors)->capture_default_str();
  app.add_option("--geometric-tolerance", c.geometric_tolerance)->capture_default_str();
  app.add_option("--stable-fraction", c.stable_fraction)->capture_default_str();
  app.add_option("--gpe-max-iters", c.gpe_max_iters)->capture_default_str();
  app.add_option("--gpe-tol", c.gpe_tol)->capture_default_str();
  app.add_option("--chi2-probability", c.chi2_probability, "pairwise compatibility level")->capture_default_str();
  app.add_option("--min-parts", c.min_parts, "distinct parts a detection must cover")->capture_default_str();
  app.add_option("--suppression-iou", c.suppression_iou)->capture_default_str();
  app.add_option("--quantization-noise", c.quantization_noise)->capture_default_str();
  app.add_option("--iou-threshold", c.iou_threshold)->capture_default_str();
  app.add_option("--dictionary", c.dictionary, "dictionary file");
  app.add_option("--model", c.model, "model file");
  app.add_option("--truth", c.truth, "ground truth JSON");
  app.add_option("-o,--output", c.output, "output path");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    if (const auto path = find_config(argc, argv); !path.empty()) cfg = load_config(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code(e);
  }

  CLI::App app{"Structural unsupervised viewlet models: learning, detection and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration; flags override it");
  add_config_options(app, cfg);

  auto* dict_cmd = app.add_subcommand("dict", "learn a visual dictionary from an image directory");
  dict_cmd->add_option("corpus", cfg.corpus, "image directory")->required();

  auto* learn_cmd = app.add_subcommand("learn", "learn category models from an image directory");
  learn_cmd->add_option("corpus", cfg.corpus, "image directory")->required();

  std::vector<std::string> images;
  std::string overlay;
  auto* detect_cmd = app.add_subcommand("detect", "detect objects; writes detections JSON");
  detect_cmd->add_option("images", images, "image files")->required();
  detect_cmd->add_option("--overlay", overlay, "directory for annotated images");

  int part = -1;
  auto* localize_cmd = app.add_subcommand("localize", "detect objects and localize their parts");
  localize_cmd->add_option("images", images, "image files")->required();
  localize_cmd->add_option("--part", part, "single part index; all parts by default");

  cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "render a synthetic corpus with ground truth and planted model");
  synth_cmd->add_option("--images", synth.images)->capture_default_str();
  synth_cmd->add_option("--width", synth.scene.width)->capture_default_str();
  synth_cmd->add_option("--height", synth.scene.height)->capture_default_str();
  synth_cmd->add_option("--min-instances", synth.scene.min_instances)->capture_default_str();
  synth_cmd->add_option("--max-instances", synth.scene.max_instances)->capture_default_str();
  synth_cmd->add_option("--min-scale", synth.scene.min_scale)->capture_default_str();
  synth_cmd->add_option("--max-scale", synth.scene.max_scale)->capture_default_str();
  synth_cmd->add_option("--base-scale", synth.scene.base_scale)->capture_default_str();
  synth_cmd->add_option("--clutter", synth.scene.clutter)->capture_default_str();
  synth_cmd->add_flag("--shuffle", synth.scene.shuffle_positions, "scatter viewlet windows");
  synth_cmd->add_flag("--noise", synth.noise_only, "pure noise images only");
  synth_cmd->add_option("--label", synth.label)->capture_default_str();

  cli::EvalOptions ev;
  std::string format = "table";
  long long tp = -1;
  long long fp = -1;
  long long fn = -1;
  std::vector<std::string> queries;
  auto* eval_cmd = app.add_subcommand("eval", "score detections, counts or a confusion matrix");
  eval_cmd->add_option("--detections", ev.detections, "detections JSON from detect");
  eval_cmd->add_option("--thresholds", ev.thresholds, "score cutoffs")->delimiter(',');
  eval_cmd->add_option("--tp", tp, "true positives");
  eval_cmd->add_option("--fp", fp, "false positives");
  eval_cmd->add_option("--fn", fn, "false negatives");
  eval_cmd->add_option("--query", queries, "LABEL=DIR query set for the confusion matrix");
  eval_cmd->add_option("--format", format, "table or json")->check(CLI::IsMember({"table", "json"}));

  cli::VizOptions viz;
  std::uint64_t sample_seed = 0;
  auto* viz_cmd = app.add_subcommand("viz", "export the positional embedding as SVG");
  viz_cmd->add_option("--index", viz.model, "model index in the file")->capture_default_str();
  viz_cmd->add_option("--table", viz.table, "also write a plain-text table");
  auto* sample_opt = viz_cmd->add_option("--sample-seed", sample_seed, "also render one sampled exemplar");
  viz_cmd->add_option("--sample-out", viz.sample_path, "PNG path for the sampled exemplar");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kUsage;
  }

  try {
    if (dict_cmd->parsed()) {
      const auto checksum = cli::cmd_dict(cfg);
      std::cout << "checksum " << std::hex << checksum << std::dec << '\n';
    } else if (learn_cmd->parsed()) {
      const auto s = cli::cmd_learn(cfg);
      std::cout << "checksum " << std::hex << s.checksum << std::dec << '\n';
    } else if (detect_cmd->parsed()) {
      const auto j = cli::cmd_detect(cfg, images, overlay);
      emit(cfg.output, j.dump(2) + "\n");
    } else if (localize_cmd->parsed()) {
      const auto j = cli::cmd_localize(cfg, images, part);
      emit(cfg.output, j.dump(2) + "\n");
    } else if (synth_cmd->parsed()) {
      cli::cmd_synth(cfg, synth);
    } else if (eval_cmd->parsed()) {
      if (tp >= 0 || fp >= 0 || fn >= 0) {
        if (tp < 0 || fp < 0 || fn < 0) throw Error(ErrorCode::Usage, "--tp, --fp and --fn go together");
        ev.counts = eval::Counts{tp, fp, fn};
      }
      for (const auto& q : queries) {
        const auto eq = q.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::Usage, "query sets are given as LABEL=DIR");
        ev.queries.emplace_back(q.substr(0, eq), q.substr(eq + 1));
      }
      const auto report = cli::cmd_eval(cfg, ev);
      auto j = eval::to_json(report);
      j["config"] = to_json(cfg);
      emit(cfg.output, format == "json" ? j.dump(2) + "\n" : eval::to_table(report));
    } else if (viz_cmd->parsed()) {
      if (sample_opt->count() > 0) viz.sample_seed = sample_seed;
      cli::cmd_viz(cfg, viz);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code(e);
  }
  return cli::kSuccess;
}
