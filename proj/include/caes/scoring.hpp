#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caes/classifier.hpp"
#include "caes/errors.hpp"
#include "caes/ncc.hpp"
#include "caes/saliency.hpp"

namespace caes {

// Which scalar stands in for the classifier output y_j fed to the NCC.
enum class EffectVariable { prob, logit };
std::string to_string(EffectVariable e);
EffectVariable effect_variable_from_string(const std::string& s);

// One image's pooled features for all three variants plus its effect value.
struct FeatureRow {
  std::string image_id;
  int class_index = 0;
  double effect = 0.0;
  std::vector<double> original, object_only, context_only;  // length L each
};

struct FeatureTable {
  int feature_count = 0;  // L
  std::vector<FeatureRow> rows;

  std::vector<const FeatureRow*> class_rows(int class_index) const;
};

FeatureTable build_feature_table(const ClassifierModel& m, const ImageDataset& ds,
                                 const std::map<std::string, BinaryMask>& masks,
                                 EffectVariable effect);

void save_feature_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable load_feature_table(const std::filesystem::path& path);

struct FeatureCausalScore {
  int feature_index = 0;
  int class_index = 0;
  double p_causal = 0.5;
  int n_batches_averaged = 1;
  bool degenerate = false;  // zero-variance feature, defaulted to 0.5
};

// Per-feature symmetric NCC score of (feature activations, effect values)
// over class-k images. batch_images = 0 scores each feature in one batch;
// otherwise scores are averaged over consecutive image chunks of that size.
std::vector<FeatureCausalScore> score_features_ncc(const NccModel& ncc,
                                                   const FeatureTable& table, int class_index,
                                                   int batch_images = 0);

enum class ScoreDirection { causal, anticausal };
std::string to_string(ScoreDirection d);

// Indices of the ceil(fraction*L) highest p_causal (causal) or 1 - p_causal
// (anticausal) features; ties broken by ascending feature index.
std::vector<int> select_top_fraction(const std::vector<FeatureCausalScore>& scores,
                                     double fraction, ScoreDirection direction);

enum class RatioKind { object, context };
std::string to_string(RatioKind r);

struct FeatureRatio {
  double value = 0.0;
  bool dead_feature = false;  // zero activation denominator
};

// Normalized activation change of feature l over class-k images when the
// complementary region is removed: the object ratio compares against the
// context-only variant and vice versa.
FeatureRatio feature_ratio(const FeatureTable& table, int class_index, int feature_index,
                           RatioKind which);

// 2 / (1 + exp(-s)) - 1 == tanh(s/2); maps [0, inf) onto [0, 1).
double bound_score(double s);

struct SelectedSetStats {
  std::vector<int> features;
  std::vector<double> object_sigma, context_sigma;  // bounded ratios per feature
  double object_mean = 0.0, object_std = 0.0;
  double context_mean = 0.0, context_std = 0.0;
  bool operator==(const SelectedSetStats&) const = default;
};

struct CaesClassReport {
  int class_index = 0;
  std::string class_name;
  std::string mask_source;
  int images_scored = 0;
  int excluded_image_count = 0;
  SelectedSetStats causal, anticausal;
  bool operator==(const CaesClassReport&) const = default;
};

struct CaesRunReport {
  int version = 1;
  std::string timestamp;  // excluded from determinism comparisons
  nlohmann::json config_snapshot;
  std::map<std::string, std::string> model_checksums;
  std::vector<CaesClassReport> classes;
  bool operator==(const CaesRunReport&) const = default;
};

CaesRunReport build_run_report(const FeatureTable& table,
                               const std::map<int, std::vector<FeatureCausalScore>>& scores,
                               const std::vector<std::string>& class_names, double fraction,
                               MaskSource source, const std::map<int, int>& excluded_by_class,
                               const nlohmann::json& config_snapshot,
                               const std::map<std::string, std::string>& model_checksums);

nlohmann::json report_to_json(const CaesRunReport& report);
CaesRunReport report_from_json(const nlohmann::json& j);

// Writes caes.json, caes.csv (class,set,ratio,mean,std,n) and one SVG bar
// chart with error bars per (set, ratio) combination.
void emit_report(const CaesRunReport& report, const std::filesystem::path& out_dir);

}  // namespace caes
