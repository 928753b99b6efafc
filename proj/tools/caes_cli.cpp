#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "caes/checkpoint.hpp"
#include "caes/classifier.hpp"
#include "caes/config.hpp"
#include "caes/imaging.hpp"
#include "caes/ncc.hpp"
#include "caes/pipeline.hpp"
#include "caes/saliency.hpp"
#include "caes/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  bool dry_run = false;
};

caes::RunConfig load_config(const CliOptions& opts) {
  std::string path = opts.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("CAES_CONFIG")) path = env;
  }

  json j;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw caes::ConfigInvalidError("--config", "cannot read " + path);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw caes::ConfigInvalidError("--config", std::string("parse error: ") + e.what());
    }
  } else {
    j = json::object();
  }
  for (const std::string& assignment : opts.overrides) caes::apply_override(j, assignment);
  return caes::parse_run_config(j);
}

void print_plan(const std::string& command, const caes::RunConfig& cfg,
                const std::vector<std::string>& steps) {
  std::cout << "dry-run: " << command << "\n";
  std::cout << "  output_dir: " << cfg.output_dir << "\n";
  for (const auto& step : steps) std::cout << "  - " << step << "\n";
}

int cmd_gen_data(const caes::RunConfig& cfg, bool dry_run) {
  const fs::path corpus_path = cfg.ncc_corpus_path.empty()
                                   ? fs::path(cfg.output_dir) / "ncc_corpus.jsonl"
                                   : fs::path(cfg.ncc_corpus_path);
  std::vector<std::string> steps = {"generate " + std::to_string(cfg.ncc_corpus_pairs) +
                                    " synthetic cause-effect pairs -> " + corpus_path.string()};
  if (cfg.dataset_source == "synthetic")
    steps.push_back("generate blob dataset -> " +
                    (fs::path(cfg.output_dir) / "dataset").string());
  if (dry_run) {
    print_plan("gen-data", cfg, steps);
    return 0;
  }

  fs::create_directories(corpus_path.parent_path().empty() ? "." : corpus_path.parent_path());
  caes::SyntheticPairConfig pair_cfg = cfg.pair_cfg;
  pair_cfg.rng_seed = cfg.seed_data;
  const auto corpus = caes::make_training_corpus(pair_cfg, cfg.ncc_corpus_pairs);
  caes::save_pairs_jsonl(corpus_path, corpus);
  std::cout << "wrote " << corpus.size() << " pairs to " << corpus_path << "\n";

  if (cfg.dataset_source == "synthetic") {
    const caes::ImageDataset ds = caes::dataset_from_config(cfg);
    caes::save_dataset_png(ds, fs::path(cfg.output_dir) / "dataset");
    std::cout << "wrote " << ds.images.size() << " images to "
              << fs::path(cfg.output_dir) / "dataset" << "\n";
  }
  return 0;
}

int cmd_train_ncc(const caes::RunConfig& cfg, bool dry_run) {
  if (dry_run) {
    print_plan("train-ncc", cfg,
               {"train NCC on " + std::to_string(cfg.ncc_corpus_pairs) + " pairs, " +
                    std::to_string(cfg.ncc_epochs) + " epochs",
                "save checkpoint -> " + cfg.ncc_checkpoint});
    return 0;
  }
  caes::NccTrainHistory hist;
  const caes::NccModel model = caes::train_ncc_from_config(cfg, &hist);
  const fs::path out = cfg.ncc_checkpoint;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  caes::save_ncc(model, out);
  std::cout << "best epoch " << hist.best_epoch << ", held-out accuracy " << hist.best_accuracy
            << "\n";
  std::cout << "saved " << out << "\n";
  return 0;
}

int cmd_eval_ncc(const caes::RunConfig& cfg, bool dry_run) {
  if (cfg.tuebingen_dir.empty() || !fs::is_directory(cfg.tuebingen_dir))
    throw caes::ConfigInvalidError("ncc.tuebingen_dir",
                                   "benchmark directory not found: " + cfg.tuebingen_dir);
  if (!fs::exists(cfg.ncc_checkpoint))
    throw caes::ConfigInvalidError("ncc.checkpoint", "missing checkpoint: " + cfg.ncc_checkpoint);
  if (dry_run) {
    print_plan("eval-ncc", cfg, {"load " + cfg.ncc_checkpoint,
                                 "evaluate benchmark pairs in " + cfg.tuebingen_dir});
    return 0;
  }

  const caes::NccModel model = caes::load_ncc(cfg.ncc_checkpoint);
  caes::TubingenLoadLog log;
  const auto pairs = caes::load_tubingen(cfg.tuebingen_dir, &log);
  for (const auto& id : log.skipped_multivariate)
    std::clog << "skipping multivariate pair " << id << "\n";

  for (const auto& p : pairs) {
    double score = 0.5;
    try {
      score = caes::ncc_score_symmetric(model, caes::standardize_pair(p)).p_xy;
    } catch (const caes::ZeroVarianceError&) {
    }
    std::cout << p.id << '\t' << score << '\t' << caes::to_string(p.direction) << '\t'
              << p.weight << "\n";
  }
  std::cout << "weighted_accuracy=" << caes::evaluate_weighted_accuracy(model, pairs) << "\n";
  return 0;
}

int cmd_train_classifier(const caes::RunConfig& cfg, bool dry_run) {
  if (dry_run) {
    print_plan("train-classifier", cfg,
               {"train classifier, " + std::to_string(cfg.classifier_epochs) + " epochs, lr " +
                    std::to_string(cfg.classifier_lr),
                "save checkpoint -> " + cfg.classifier_checkpoint});
    return 0;
  }
  caes::ClassifierTrainHistory hist;
  const caes::ClassifierModel model = caes::train_classifier_from_config(cfg, &hist);
  const fs::path out = cfg.classifier_checkpoint;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  caes::save_classifier(model, out);
  std::cout << "best epoch " << hist.best_epoch << ", val accuracy " << hist.best_val_accuracy
            << "\n";
  std::cout << "saved " << out << "\n";
  return 0;
}

std::vector<caes::MaskSource> requested_sources(const caes::RunConfig& cfg) {
  if (cfg.mask_source == "both")
    return {caes::MaskSource::human, caes::MaskSource::gradcam};
  return {caes::mask_source_from_string(cfg.mask_source)};
}

int cmd_make_masks(const caes::RunConfig& cfg, bool dry_run) {
  if (!fs::exists(cfg.classifier_checkpoint))
    throw caes::ConfigInvalidError("classifier.checkpoint",
                                   "missing checkpoint: " + cfg.classifier_checkpoint);
  if (dry_run) {
    std::vector<std::string> steps;
    for (auto source : requested_sources(cfg))
      steps.push_back("write " + caes::to_string(source) + " masks -> " +
                      (fs::path(cfg.output_dir) / ("masks_" + caes::to_string(source))).string());
    print_plan("make-masks", cfg, steps);
    return 0;
  }

  const caes::ClassifierModel model = caes::load_classifier(cfg.classifier_checkpoint);
  const caes::ImageDataset ds = caes::dataset_from_config(cfg);
  for (auto source : requested_sources(cfg)) {
    const auto result = caes::masks_for_dataset(model, ds, source, cfg.retain_fraction);
    const fs::path out_dir = fs::path(cfg.output_dir) / ("masks_" + caes::to_string(source));
    caes::save_mask_set(result, out_dir);
    std::cout << "wrote " << result.masks.size() << " " << caes::to_string(source)
              << " masks (" << result.degenerate_excluded.size() << " excluded) to " << out_dir
              << "\n";
  }
  return 0;
}

int cmd_score(const caes::RunConfig& cfg, bool dry_run) {
  if (dry_run) {
    std::vector<std::string> steps;
    for (auto source : requested_sources(cfg))
      steps.push_back("score with " + caes::to_string(source) + " masks -> " +
                      (fs::path(cfg.output_dir) / caes::to_string(source)).string());
    print_plan("score", cfg, steps);
    return 0;
  }
  for (const auto& path : caes::run_score_command(cfg))
    std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_report(const caes::RunConfig& cfg, bool dry_run) {
  std::vector<fs::path> found;
  for (const char* source : {"human", "gradcam"}) {
    const fs::path report_path = fs::path(cfg.output_dir) / source / "caes.json";
    if (fs::exists(report_path)) found.push_back(report_path);
  }
  if (found.empty())
    throw caes::ConfigInvalidError("output_dir",
                                   "no caes.json found under " + cfg.output_dir);
  if (dry_run) {
    std::vector<std::string> steps;
    for (const auto& path : found) steps.push_back("re-emit report from " + path.string());
    print_plan("report", cfg, steps);
    return 0;
  }
  for (const auto& path : found) {
    std::ifstream in(path);
    const caes::CaesRunReport report = caes::report_from_json(json::parse(in));
    caes::emit_report(report, path.parent_path());
    std::cout << "re-emitted " << path.parent_path() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CaES: causal explanation scoring for image classifiers"};
  app.require_subcommand(1);

  CliOptions opts;
  app.add_option("--config", opts.config_path,
                 "JSON config file (falls back to $CAES_CONFIG, then defaults)");
  app.add_option("--set", opts.overrides, "override a config field: key.path=value");
  app.add_flag("--dry-run", opts.dry_run, "validate config and print the plan, no side effects");
  app.fallthrough();  // global flags may follow the subcommand

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const caes::RunConfig&, bool);
  };
  const std::vector<Command> commands = {
      {"gen-data", "generate the synthetic NCC corpus and blob dataset", cmd_gen_data},
      {"train-ncc", "train the NCC on the synthetic corpus", cmd_train_ncc},
      {"eval-ncc", "evaluate the NCC on a benchmark directory", cmd_eval_ncc},
      {"train-classifier", "train the image classifier", cmd_train_classifier},
      {"make-masks", "compute human/gradcam masks for the dataset", cmd_make_masks},
      {"score", "run the full scoring pipeline and write reports", cmd_score},
      {"report", "re-emit CSV and charts from existing caes.json files", cmd_report},
  };
  for (const auto& command : commands) app.add_subcommand(command.name, command.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const caes::RunConfig cfg = load_config(opts);
    for (const auto& command : commands)
      if (app.got_subcommand(command.name)) return command.run(cfg, opts.dry_run);
    return 1;
  } catch (const caes::ConfigInvalidError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
