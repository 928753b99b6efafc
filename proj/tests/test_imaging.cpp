#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "caes/imaging.hpp"

using namespace caes;
namespace fs = std::filesystem;

TEST_CASE("blob dataset has the requested shape and valid masks") {
  const ImageDataset ds = generate_blob_dataset(4, 50, 32, 1);
  validate_dataset(ds);
  REQUIRE(ds.images.size() == 200);
  CHECK(ds.num_classes() == 4);
  for (const auto& img : ds.images) {
    REQUIRE(img.human_mask.has_value());
    double fg = 0;
    for (auto v : *img.human_mask) {
      CHECK((v == 0 || v == 1));
      fg += v;
    }
    fg /= static_cast<double>(img.human_mask->size());
    CHECK(fg >= 0.05);
    CHECK(fg <= 0.5);
    for (double p : img.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("blob dataset is deterministic given the seed") {
  const ImageDataset a = generate_blob_dataset(3, 4, 24, 9);
  const ImageDataset b = generate_blob_dataset(3, 4, 24, 9);
  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i].pixels == b.images[i].pixels);
    CHECK(a.images[i].human_mask == b.images[i].human_mask);
  }
}

TEST_CASE("blob classes have distinct mean foreground hues") {
  const ImageDataset ds = generate_blob_dataset(4, 10, 32, 2);
  // Use mean foreground RGB as a hue proxy; classes must separate clearly.
  std::vector<std::array<double, 3>> mean_rgb(4, {0, 0, 0});
  std::vector<double> counts(4, 0);
  for (const auto& img : ds.images) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        if ((*img.human_mask)[static_cast<std::size_t>(y) * img.width + x]) {
          for (int c = 0; c < 3; ++c) mean_rgb[img.label][c] += img.at(c, y, x);
          counts[img.label] += 1;
        }
  }
  for (int k = 0; k < 4; ++k)
    for (int c = 0; c < 3; ++c) mean_rgb[k][c] /= counts[k];
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      double d = 0;
      for (int c = 0; c < 3; ++c) d += std::abs(mean_rgb[a][c] - mean_rgb[b][c]);
      CHECK(d > 0.15);
    }
}

TEST_CASE("png round-trip through the directory loader") {
  const ImageDataset ds = generate_blob_dataset(2, 3, 24, 4);
  const fs::path root = fs::temp_directory_path() / "caes_test_imaging_roundtrip";
  fs::remove_all(root);
  save_dataset_png(ds, root);

  const ImageDataset loaded = load_image_dataset(root, 24);
  validate_dataset(loaded);
  REQUIRE(loaded.images.size() == ds.images.size());
  CHECK(loaded.num_classes() == 2);
  // Same-size reload: pixels match to 8-bit quantization, masks exactly.
  std::map<std::string, const LabeledImage*> by_id;
  for (const auto& img : loaded.images) by_id[img.id] = &img;
  for (const auto& orig : ds.images) {
    auto it = by_id.find(orig.id);
    REQUIRE(it != by_id.end());
    const LabeledImage& got = *it->second;
    CHECK(got.label == orig.label);
    REQUIRE(got.human_mask.has_value());
    CHECK(*got.human_mask == *orig.human_mask);
    double max_err = 0;
    for (std::size_t i = 0; i < orig.pixels.size(); ++i)
      max_err = std::max(max_err, std::abs(orig.pixels[i] - got.pixels[i]));
    CHECK(max_err <= 0.5 / 255.0 + 1e-9);
  }
  fs::remove_all(root);
}

TEST_CASE("loader resizes and keeps pixels in range") {
  const ImageDataset ds = generate_blob_dataset(2, 2, 32, 5);
  const fs::path root = fs::temp_directory_path() / "caes_test_imaging_resize";
  fs::remove_all(root);
  save_dataset_png(ds, root);
  const ImageDataset small = load_image_dataset(root, 16);
  for (const auto& img : small.images) {
    CHECK(img.height == 16);
    CHECK(img.width == 16);
    CHECK(img.pixels.size() == std::size_t{3} * 16 * 16);
    for (double p : img.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    REQUIRE(img.human_mask.has_value());
    for (auto v : *img.human_mask) CHECK((v == 0 || v == 1));
  }
  fs::remove_all(root);
}

TEST_CASE("loader rejects empty class folders") {
  const fs::path root = fs::temp_directory_path() / "caes_test_imaging_empty";
  fs::remove_all(root);
  fs::create_directories(root / "images" / "classA");
  CHECK_THROWS_AS(load_image_dataset(root, 16), EmptyClassError);
  fs::remove_all(root);
}

TEST_CASE("class index follows sorted class-name order") {
  const ImageDataset ds = generate_blob_dataset(2, 2, 24, 6);
  const fs::path root = fs::temp_directory_path() / "caes_test_imaging_order";
  fs::remove_all(root);
  save_dataset_png(ds, root);
  const ImageDataset loaded = load_image_dataset(root, 24);
  auto sorted = loaded.class_names;
  std::sort(sorted.begin(), sorted.end());
  CHECK(loaded.class_names == sorted);
  fs::remove_all(root);
}

TEST_CASE("split_dataset is stratified and seeded") {
  const ImageDataset ds = generate_blob_dataset(4, 20, 16, 7);
  const DatasetSplits s = split_dataset(ds, 0.8, 0.1, 3);
  CHECK(s.train.images.size() == 64);
  CHECK(s.val.images.size() == 8);
  CHECK(s.test.images.size() == 8);

  auto count_class = [](const ImageDataset& d, int k) {
    return std::count_if(d.images.begin(), d.images.end(),
                         [k](const LabeledImage& im) { return im.label == k; });
  };
  for (int k = 0; k < 4; ++k) {
    CHECK(count_class(s.train, k) == 16);
    CHECK(count_class(s.val, k) == 2);
    CHECK(count_class(s.test, k) == 2);
  }

  // All ids accounted for, no duplicates across splits.
  std::set<std::string> ids;
  for (const auto* d : {&s.train, &s.val, &s.test})
    for (const auto& im : d->images) CHECK(ids.insert(im.id).second);
  CHECK(ids.size() == ds.images.size());

  const DatasetSplits again = split_dataset(ds, 0.8, 0.1, 3);
  for (std::size_t i = 0; i < s.train.images.size(); ++i)
    CHECK(again.train.images[i].id == s.train.images[i].id);
}

TEST_CASE("validate_dataset catches duplicate ids and bad labels") {
  ImageDataset ds = generate_blob_dataset(2, 2, 8, 8);
  ds.images[1].id = ds.images[0].id;
  CHECK_THROWS_AS(validate_dataset(ds), Error);

  ImageDataset ds2 = generate_blob_dataset(2, 2, 8, 8);
  ds2.images[0].label = 5;
  CHECK_THROWS_AS(validate_dataset(ds2), Error);
}
