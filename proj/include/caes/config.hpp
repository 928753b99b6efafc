#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caes/errors.hpp"
#include "caes/pairs.hpp"

namespace caes {

// Declarative run configuration. One JSON file drives every CLI command;
// `--set key=value` overrides individual fields by dot path.
struct RunConfig {
  // Three-tier seeding: dataset generation and training vary independently.
  std::uint64_t seed_global = 1;
  std::uint64_t seed_data = 2;
  std::uint64_t seed_train = 3;

  // dataset
  std::string dataset_source = "synthetic";  // "synthetic" | "path"
  std::string dataset_path;
  int synthetic_classes = 4;
  int synthetic_per_class = 100;
  int synthetic_image_size = 64;
  double train_frac = 0.8;
  double val_frac = 0.1;

  // classifier
  std::vector<int> block_channels = {16, 32, 64};
  int head_width = 64;
  int input_size = 64;
  int classifier_epochs = 30;
  double classifier_lr = 1e-4;
  int classifier_batch = 16;
  std::string classifier_checkpoint = "out/classifier.ckpt";

  // ncc
  int ncc_corpus_pairs = 10000;
  int ncc_epochs = 8;
  int ncc_batch_pairs = 32;
  double ncc_lr = 1e-3;
  double ncc_dropout = 0.1;
  int ncc_hidden = 100;
  std::string ncc_checkpoint = "out/ncc.ckpt";
  std::string ncc_corpus_path;  // optional persisted corpus (JSON lines)
  std::string tuebingen_dir;    // benchmark directory for eval-ncc
  SyntheticPairConfig pair_cfg;

  // saliency
  double retain_fraction = 0.30;
  std::string mask_source = "gradcam";  // "gradcam" | "human" | "both"

  // caes
  double fraction = 0.01;
  std::string effect_variable = "prob";  // "prob" | "logit"
  int score_batch_images = 0;            // 0 = single batch per feature

  std::string output_dir = "out";

  nlohmann::json snapshot;  // the validated JSON this config came from
};

// The full schema with default values; also serves as documentation.
nlohmann::json default_config_json();

// Parses and validates; throws ConfigInvalidError carrying the field path.
RunConfig parse_run_config(const nlohmann::json& j);

// Applies one "dot.path=value" override onto the JSON tree. Values parse as
// JSON when possible and fall back to strings.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace caes
