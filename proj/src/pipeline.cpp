#include "caes/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "caes/checkpoint.hpp"
#include "caes/saliency.hpp"

namespace caes {

namespace fs = std::filesystem;

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ImageDataset dataset_from_config(const RunConfig& cfg) {
  if (cfg.dataset_source == "synthetic")
    return generate_blob_dataset(cfg.synthetic_classes, cfg.synthetic_per_class,
                                 cfg.synthetic_image_size, cfg.seed_data);
  if (cfg.dataset_path.empty() || !fs::is_directory(cfg.dataset_path))
    throw ConfigInvalidError("dataset.path", "directory does not exist: " + cfg.dataset_path);
  return load_image_dataset(cfg.dataset_path, cfg.input_size);
}

std::vector<SamplePairSet> ncc_corpus_from_config(const RunConfig& cfg) {
  if (!cfg.ncc_corpus_path.empty() && fs::exists(cfg.ncc_corpus_path))
    return load_pairs_jsonl(cfg.ncc_corpus_path);
  SyntheticPairConfig pair_cfg = cfg.pair_cfg;
  pair_cfg.rng_seed = cfg.seed_data;
  return make_training_corpus(pair_cfg, cfg.ncc_corpus_pairs);
}

NccModel train_ncc_from_config(const RunConfig& cfg, NccTrainHistory* history) {
  NccTrainConfig tc;
  tc.epochs = cfg.ncc_epochs;
  tc.batch_pairs = cfg.ncc_batch_pairs;
  tc.learning_rate = cfg.ncc_lr;
  tc.dropout_rate = cfg.ncc_dropout;
  tc.hidden = cfg.ncc_hidden;
  tc.rng_seed = cfg.seed_train;
  return train_ncc(ncc_corpus_from_config(cfg), tc, history);
}

ClassifierModel train_classifier_from_config(const RunConfig& cfg,
                                             ClassifierTrainHistory* history) {
  const ImageDataset ds = dataset_from_config(cfg);
  const DatasetSplits splits = split_dataset(ds, cfg.train_frac, cfg.val_frac, cfg.seed_data);

  ClassifierConfig cc;
  cc.input_size = cfg.dataset_source == "synthetic" ? cfg.synthetic_image_size : cfg.input_size;
  cc.block_channels = cfg.block_channels;
  cc.head_width = cfg.head_width;
  cc.num_classes = ds.num_classes();
  cc.epochs = cfg.classifier_epochs;
  cc.learning_rate = cfg.classifier_lr;
  cc.batch_size = cfg.classifier_batch;
  cc.rng_seed = cfg.seed_train;
  return train_classifier(splits.train, splits.val, cc, history);
}

CaesRunReport run_caes_scoring(const RunConfig& cfg, const ClassifierModel& classifier,
                               const NccModel& ncc, const ImageDataset& ds, MaskSource source,
                               const std::map<std::string, std::string>& checksums,
                               const fs::path& out_dir) {
  fs::create_directories(out_dir);

  const MaskSetResult masks =
      masks_for_dataset(classifier, ds, source, cfg.retain_fraction);
  save_mask_set(masks, out_dir / "masks");

  const FeatureTable table = build_feature_table(
      classifier, ds, masks.masks, effect_variable_from_string(cfg.effect_variable));
  save_feature_table(table, out_dir / "feature_table.json");

  std::map<int, int> excluded_by_class;
  for (const std::string& id : masks.degenerate_excluded)
    for (const auto& img : ds.images)
      if (img.id == id) ++excluded_by_class[img.label];

  std::map<int, std::vector<FeatureCausalScore>> scores;
  for (int k = 0; k < ds.num_classes(); ++k) {
    if (table.class_rows(k).empty()) continue;
    scores[k] = score_features_ncc(ncc, table, k, cfg.score_batch_images);
  }

  CaesRunReport report =
      build_run_report(table, scores, ds.class_names, cfg.fraction, source, excluded_by_class,
                       cfg.snapshot, checksums);
  report.timestamp = iso_timestamp();
  emit_report(report, out_dir);
  return report;
}

std::vector<fs::path> run_score_command(const RunConfig& cfg) {
  if (!fs::exists(cfg.classifier_checkpoint))
    throw ConfigInvalidError("classifier.checkpoint",
                             "missing checkpoint: " + cfg.classifier_checkpoint);
  if (!fs::exists(cfg.ncc_checkpoint))
    throw ConfigInvalidError("ncc.checkpoint", "missing checkpoint: " + cfg.ncc_checkpoint);

  const ClassifierModel classifier = load_classifier(cfg.classifier_checkpoint);
  const NccModel ncc = load_ncc(cfg.ncc_checkpoint);
  const ImageDataset ds = dataset_from_config(cfg);

  const std::map<std::string, std::string> checksums = {
      {"classifier", checkpoint_checksum(cfg.classifier_checkpoint)},
      {"ncc", checkpoint_checksum(cfg.ncc_checkpoint)}};

  std::vector<MaskSource> sources;
  if (cfg.mask_source == "both")
    sources = {MaskSource::human, MaskSource::gradcam};
  else
    sources = {mask_source_from_string(cfg.mask_source)};

  std::vector<fs::path> report_paths;
  for (MaskSource source : sources) {
    const fs::path out_dir = fs::path(cfg.output_dir) / to_string(source);
    run_caes_scoring(cfg, classifier, ncc, ds, source, checksums, out_dir);
    report_paths.push_back(out_dir / "caes.json");
  }
  return report_paths;
}

}  // namespace caes
