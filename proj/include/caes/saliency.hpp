#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "caes/classifier.hpp"
#include "caes/errors.hpp"
#include "caes/imaging.hpp"

namespace caes {

// Non-negative heatmap at input resolution.
struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // H*W
  std::string image_id;
  int target_class = 0;
};

enum class MaskSource { human, gradcam };
std::string to_string(MaskSource s);
MaskSource mask_source_from_string(const std::string& s);

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;  // H*W of {0,1}
  MaskSource source = MaskSource::human;
  double retain_fraction = 0.0;  // gradcam only
  bool tie_flagged = false;      // quantile ties inflated the foreground

  double foreground_fraction() const;
};

struct CutoutPair {
  LabeledImage object_only;
  LabeledImage context_only;
  BinaryMask mask;
  std::string image_id;
};

// GradCAM with element-wise squaring in place of the ReLU: the weighted
// feature-map sum S is squared so strongly negative evidence also survives,
// then bilinearly upsampled to input resolution.
SaliencyMap gradcam_squared(const ClassifierModel& m, const LabeledImage& img,
                            int target_class);

// Binarizes at the (1 - retain_fraction) linear-interpolation quantile,
// keeping values >= q. Throws DegenerateHeatmap for constant heatmaps.
BinaryMask threshold_mask(const SaliencyMap& s, double retain_fraction);

// object_only = img (*) mask, context_only = img - object_only; the two sum
// back to the original image exactly.
CutoutPair make_cutouts(const LabeledImage& img, const BinaryMask& mask);

struct MaskSetResult {
  std::map<std::string, BinaryMask> masks;  // image_id -> mask
  std::vector<std::string> degenerate_excluded;
};

// source = human: pass-through of the dataset masks (MissingHumanMask lists
// offending ids). source = gradcam: squared GradCAM for each image's
// predicted class; degenerate heatmaps are excluded and listed.
MaskSetResult masks_for_dataset(const ClassifierModel& m, const ImageDataset& ds,
                                MaskSource source, double retain_fraction);

// Persists each mask as an 8-bit PNG (0/255) plus a masks-report.json with
// per-image foreground fraction, source and the degenerate exclusions.
void save_mask_set(const MaskSetResult& result, const std::filesystem::path& out_dir);

}  // namespace caes
