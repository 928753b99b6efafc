#include "caes/config.hpp"

#include <set>

namespace caes {

using nlohmann::json;

json default_config_json() {
  return json{
      {"seeds", {{"global", 1}, {"data", 2}, {"train", 3}}},
      {"dataset",
       {{"source", "synthetic"},
        {"path", ""},
        {"synthetic", {{"classes", 4}, {"per_class", 100}, {"image_size", 64}}},
        {"train_frac", 0.8},
        {"val_frac", 0.1}}},
      {"classifier",
       {{"block_channels", {16, 32, 64}},
        {"head_width", 64},
        {"input_size", 64},
        {"epochs", 30},
        {"lr", 1e-4},
        {"batch", 16},
        {"checkpoint", "out/classifier.ckpt"}}},
      {"ncc",
       {{"corpus_pairs", 10000},
        {"epochs", 16},
        {"batch_pairs", 32},
        {"lr", 2e-3},
        {"dropout", 0.1},
        {"hidden", 100},
        {"checkpoint", "out/ncc.ckpt"},
        {"corpus_path", ""},
        {"tuebingen_dir", ""},
        {"synthetic",
         {{"n_samples", {100, 500}},
          {"gaussian_components", {1, 5}},
          {"mechanism_knots", {4, 10}},
          {"noise_scale", {0.0, 0.75}}}}}},
      {"saliency", {{"retain_fraction", 0.30}, {"mask_source", "gradcam"}}},
      {"caes", {{"fraction", 0.01}, {"effect_variable", "prob"}, {"batch_images", 0}}},
      {"output_dir", "out"}};
}

namespace {

const json& at_path(const json& j, const std::string& path) {
  const json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (!cur->is_object() || !cur->contains(key))
      throw ConfigInvalidError(path, "missing field");
    cur = &(*cur)[key];
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

template <typename T>
T get(const json& j, const std::string& path) {
  try {
    return at_path(j, path).get<T>();
  } catch (const ConfigInvalidError&) {
    throw;
  } catch (const json::exception&) {
    throw ConfigInvalidError(path, "wrong type");
  }
}

IntRange get_int_range(const json& j, const std::string& path) {
  const auto v = get<std::vector<int>>(j, path);
  if (v.size() != 2) throw ConfigInvalidError(path, "expected [lo, hi]");
  return {v[0], v[1]};
}

RealRange get_real_range(const json& j, const std::string& path) {
  const auto v = get<std::vector<double>>(j, path);
  if (v.size() != 2) throw ConfigInvalidError(path, "expected [lo, hi]");
  return {v[0], v[1]};
}

void require(bool ok, const std::string& path, const std::string& why) {
  if (!ok) throw ConfigInvalidError(path, why);
}

}  // namespace

RunConfig parse_run_config(const json& input) {
  // Unknown fields are rejected at the top level only; nested objects accept
  // extras so snapshots stay forward-compatible.
  static const std::set<std::string> known = {"seeds",      "dataset", "classifier", "ncc",
                                              "saliency",   "caes",    "output_dir"};
  for (const auto& [key, value] : input.items())
    if (!known.count(key)) throw ConfigInvalidError(key, "unknown top-level field");

  json j = default_config_json();
  j.merge_patch(input);

  RunConfig cfg;
  cfg.snapshot = j;

  cfg.seed_global = get<std::uint64_t>(j, "seeds.global");
  cfg.seed_data = get<std::uint64_t>(j, "seeds.data");
  cfg.seed_train = get<std::uint64_t>(j, "seeds.train");

  cfg.dataset_source = get<std::string>(j, "dataset.source");
  require(cfg.dataset_source == "synthetic" || cfg.dataset_source == "path",
          "dataset.source", "must be 'synthetic' or 'path'");
  cfg.dataset_path = get<std::string>(j, "dataset.path");
  require(cfg.dataset_source != "path" || !cfg.dataset_path.empty(), "dataset.path",
          "required when dataset.source is 'path'");
  cfg.synthetic_classes = get<int>(j, "dataset.synthetic.classes");
  cfg.synthetic_per_class = get<int>(j, "dataset.synthetic.per_class");
  cfg.synthetic_image_size = get<int>(j, "dataset.synthetic.image_size");
  require(cfg.synthetic_classes >= 2, "dataset.synthetic.classes", "must be >= 2");
  require(cfg.synthetic_per_class >= 1, "dataset.synthetic.per_class", "must be >= 1");
  require(cfg.synthetic_image_size >= 8, "dataset.synthetic.image_size", "must be >= 8");
  cfg.train_frac = get<double>(j, "dataset.train_frac");
  cfg.val_frac = get<double>(j, "dataset.val_frac");
  require(cfg.train_frac > 0.0 && cfg.train_frac < 1.0, "dataset.train_frac",
          "must be in (0,1)");
  require(cfg.val_frac >= 0.0 && cfg.train_frac + cfg.val_frac <= 1.0, "dataset.val_frac",
          "train_frac + val_frac must be <= 1");

  cfg.block_channels = get<std::vector<int>>(j, "classifier.block_channels");
  require(!cfg.block_channels.empty(), "classifier.block_channels", "must not be empty");
  for (int c : cfg.block_channels)
    require(c >= 1, "classifier.block_channels", "channel counts must be >= 1");
  cfg.head_width = get<int>(j, "classifier.head_width");
  cfg.input_size = get<int>(j, "classifier.input_size");
  cfg.classifier_epochs = get<int>(j, "classifier.epochs");
  cfg.classifier_lr = get<double>(j, "classifier.lr");
  cfg.classifier_batch = get<int>(j, "classifier.batch");
  cfg.classifier_checkpoint = get<std::string>(j, "classifier.checkpoint");
  require(cfg.head_width >= 1, "classifier.head_width", "must be >= 1");
  require(cfg.input_size % (1 << cfg.block_channels.size()) == 0, "classifier.input_size",
          "must be divisible by 2^len(block_channels)");
  require(cfg.classifier_epochs >= 1, "classifier.epochs", "must be >= 1");
  require(cfg.classifier_lr > 0.0, "classifier.lr", "must be positive");
  require(cfg.classifier_batch >= 1, "classifier.batch", "must be >= 1");

  cfg.ncc_corpus_pairs = get<int>(j, "ncc.corpus_pairs");
  cfg.ncc_epochs = get<int>(j, "ncc.epochs");
  cfg.ncc_batch_pairs = get<int>(j, "ncc.batch_pairs");
  cfg.ncc_lr = get<double>(j, "ncc.lr");
  cfg.ncc_dropout = get<double>(j, "ncc.dropout");
  cfg.ncc_hidden = get<int>(j, "ncc.hidden");
  cfg.ncc_checkpoint = get<std::string>(j, "ncc.checkpoint");
  cfg.ncc_corpus_path = get<std::string>(j, "ncc.corpus_path");
  cfg.tuebingen_dir = get<std::string>(j, "ncc.tuebingen_dir");
  require(cfg.ncc_corpus_pairs >= 2 && cfg.ncc_corpus_pairs % 2 == 0, "ncc.corpus_pairs",
          "must be even and >= 2");
  require(cfg.ncc_epochs >= 1, "ncc.epochs", "must be >= 1");
  require(cfg.ncc_batch_pairs >= 1, "ncc.batch_pairs", "must be >= 1");
  require(cfg.ncc_lr > 0.0, "ncc.lr", "must be positive");
  require(cfg.ncc_dropout >= 0.0 && cfg.ncc_dropout < 1.0, "ncc.dropout", "must be in [0,1)");
  require(cfg.ncc_hidden >= 1, "ncc.hidden", "must be >= 1");

  cfg.pair_cfg.n_samples = get_int_range(j, "ncc.synthetic.n_samples");
  cfg.pair_cfg.gaussian_components = get_int_range(j, "ncc.synthetic.gaussian_components");
  cfg.pair_cfg.mechanism_knots = get_int_range(j, "ncc.synthetic.mechanism_knots");
  cfg.pair_cfg.noise_scale = get_real_range(j, "ncc.synthetic.noise_scale");
  try {
    validate_config(cfg.pair_cfg);
  } catch (const Error& e) {
    throw ConfigInvalidError("ncc.synthetic", e.what());
  }

  cfg.retain_fraction = get<double>(j, "saliency.retain_fraction");
  require(cfg.retain_fraction > 0.0 && cfg.retain_fraction < 1.0, "saliency.retain_fraction",
          "must be in (0,1)");
  cfg.mask_source = get<std::string>(j, "saliency.mask_source");
  require(cfg.mask_source == "gradcam" || cfg.mask_source == "human" ||
              cfg.mask_source == "both",
          "saliency.mask_source", "must be 'gradcam', 'human' or 'both'");

  cfg.fraction = get<double>(j, "caes.fraction");
  require(cfg.fraction > 0.0 && cfg.fraction <= 1.0, "caes.fraction", "must be in (0,1]");
  cfg.effect_variable = get<std::string>(j, "caes.effect_variable");
  require(cfg.effect_variable == "prob" || cfg.effect_variable == "logit",
          "caes.effect_variable", "must be 'prob' or 'logit'");
  cfg.score_batch_images = get<int>(j, "caes.batch_images");
  require(cfg.score_batch_images >= 0, "caes.batch_images", "must be >= 0");

  cfg.output_dir = get<std::string>(j, "output_dir");
  require(!cfg.output_dir.empty(), "output_dir", "must not be empty");

  // Checkpoint paths default under output_dir unless set explicitly.
  auto given = [&input](const std::string& a, const std::string& b) {
    return input.contains(a) && input[a].is_object() && input[a].contains(b);
  };
  if (!given("classifier", "checkpoint")) {
    cfg.classifier_checkpoint = cfg.output_dir + "/classifier.ckpt";
    cfg.snapshot["classifier"]["checkpoint"] = cfg.classifier_checkpoint;
  }
  if (!given("ncc", "checkpoint")) {
    cfg.ncc_checkpoint = cfg.output_dir + "/ncc.ckpt";
    cfg.snapshot["ncc"]["checkpoint"] = cfg.ncc_checkpoint;
  }
  return cfg;
}

void apply_override(json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigInvalidError("--set", "expected key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare string
  }

  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigInvalidError("--set", "empty key segment in '" + path + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    if (!cur->is_object() && !cur->is_null())
      throw ConfigInvalidError(path, "cannot descend into non-object");
    start = dot + 1;
  }
}

}  // namespace caes
