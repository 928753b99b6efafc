#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "caes/errors.hpp"

namespace caes {

enum class View { surface, section };

// Class-labeled image with an optional human binary mask. Pixels are stored
// planar C*H*W in [0,1], RGB order.
struct LabeledImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;                       // 3*H*W
  int label = 0;                                    // class index
  std::optional<std::vector<std::uint8_t>> human_mask;  // H*W of {0,1}
  std::string id;
  std::optional<View> view;

  double& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

enum class Split { train, val, test, all };

struct ImageDataset {
  std::vector<LabeledImage> images;
  std::vector<std::string> class_names;
  Split split = Split::all;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

void validate_dataset(const ImageDataset& ds);

// Loads `root/images/<class>/<id>.png` (and optional
// `root/masks/<class>/<id>.png`, 8-bit grayscale thresholded at 128).
// Images are bilinearly resized to size x size and scaled to [0,1]; masks are
// resized nearest-neighbor. Class indices follow sorted class-name order.
ImageDataset load_image_dataset(const std::filesystem::path& root, int size);

// Desk-scale synthetic dataset: one class-distinctive textured ellipse per
// image (per-class hue and texture frequency) on a dark-noise background,
// with the exact ellipse footprint as the human mask.
ImageDataset generate_blob_dataset(int num_classes, int per_class, int size,
                                   std::uint64_t rng_seed);

// Writes the dataset in the load_image_dataset layout: 8-bit PNGs under
// root/images/<class>/ plus root/masks/<class>/ for images carrying masks.
void save_dataset_png(const ImageDataset& ds, const std::filesystem::path& root);

struct DatasetSplits {
  ImageDataset train, val, test;
};

// Stratified per-class split with seeded shuffling.
DatasetSplits split_dataset(const ImageDataset& ds, double train_frac, double val_frac,
                            std::uint64_t rng_seed);

}  // namespace caes
