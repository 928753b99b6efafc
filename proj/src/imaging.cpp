#include "caes/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace caes {

namespace fs = std::filesystem;

void validate_dataset(const ImageDataset& ds) {
  std::set<std::string> ids;
  const int k = ds.num_classes();
  for (const auto& img : ds.images) {
    if (img.label < 0 || img.label >= k)
      throw Error("image " + img.id + ": label out of range");
    if (!ids.insert(img.id).second) throw Error("duplicate image id " + img.id);
    if (img.pixels.size() != static_cast<std::size_t>(3) * img.height * img.width)
      throw Error("image " + img.id + ": pixel buffer size mismatch");
    if (img.human_mask &&
        img.human_mask->size() != static_cast<std::size_t>(img.height) * img.width)
      throw MaskShapeMismatchError("image " + img.id + ": mask size mismatch");
  }
}

namespace {

LabeledImage from_mat(const cv::Mat& bgr, const std::string& id, int label) {
  LabeledImage img;
  img.height = bgr.rows;
  img.width = bgr.cols;
  img.id = id;
  img.label = label;
  img.pixels.resize(static_cast<std::size_t>(3) * bgr.rows * bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b& px = bgr.at<cv::Vec3b>(y, x);
      img.at(0, y, x) = px[2] / 255.0;  // R
      img.at(1, y, x) = px[1] / 255.0;  // G
      img.at(2, y, x) = px[0] / 255.0;  // B
    }
  }
  return img;
}

std::optional<View> view_from_name(const std::string& stem) {
  if (stem.rfind("surface", 0) == 0) return View::surface;
  if (stem.rfind("section", 0) == 0) return View::section;
  return std::nullopt;
}

}  // namespace

ImageDataset load_image_dataset(const fs::path& root, int size) {
  const fs::path images_dir = root / "images";
  if (!fs::is_directory(images_dir))
    throw IoError("no images/ directory under " + root.string());

  ImageDataset ds;
  for (const auto& entry : fs::directory_iterator(images_dir))
    if (entry.is_directory()) ds.class_names.push_back(entry.path().filename().string());
  std::sort(ds.class_names.begin(), ds.class_names.end());
  if (ds.class_names.empty()) throw EmptyClassError("no class folders in " + images_dir.string());

  for (int label = 0; label < ds.num_classes(); ++label) {
    const std::string& cls = ds.class_names[static_cast<std::size_t>(label)];
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(images_dir / cls))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyClassError("class folder '" + cls + "' has no images");

    for (const auto& file : files) {
      cv::Mat raw = cv::imread(file.string(), cv::IMREAD_COLOR);
      if (raw.empty()) throw UnreadableImageError("cannot decode " + file.string());
      cv::Mat resized;
      cv::resize(raw, resized, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);

      const std::string stem = file.stem().string();
      LabeledImage img = from_mat(resized, cls + "/" + stem, label);
      img.view = view_from_name(stem);

      const fs::path mask_path = root / "masks" / cls / file.filename();
      if (fs::exists(mask_path)) {
        cv::Mat mask_raw = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
        if (mask_raw.empty()) throw UnreadableImageError("cannot decode " + mask_path.string());
        if (mask_raw.rows != raw.rows || mask_raw.cols != raw.cols)
          throw MaskShapeMismatchError("mask for " + img.id + " does not match image shape");
        cv::Mat mask_resized;
        cv::resize(mask_raw, mask_resized, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size);
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            mask[static_cast<std::size_t>(y) * size + x] =
                mask_resized.at<std::uint8_t>(y, x) >= 128 ? 1 : 0;
        img.human_mask = std::move(mask);
      }
      ds.images.push_back(std::move(img));
    }
  }
  validate_dataset(ds);
  return ds;
}

namespace {

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace

ImageDataset generate_blob_dataset(int num_classes, int per_class, int size,
                                   std::uint64_t rng_seed) {
  if (num_classes < 1 || per_class < 1 || size < 8)
    throw Error("generate_blob_dataset: invalid arguments");

  ImageDataset ds;
  for (int k = 0; k < num_classes; ++k) ds.class_names.push_back("blob" + std::to_string(k));

  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (int k = 0; k < num_classes; ++k) {
    const double hue = 360.0 * k / num_classes;
    const double tex_freq = 3.0 + 2.0 * k;
    for (int i = 0; i < per_class; ++i) {
      // Geometry bounded so the ellipse never clips the border and the
      // foreground fraction stays within [0.05, 0.5].
      const double cx = (0.38 + 0.24 * u01(rng)) * size;
      const double cy = (0.38 + 0.24 * u01(rng)) * size;
      const double a = (0.15 + 0.18 * u01(rng)) * size;
      const double b = (0.15 + 0.18 * u01(rng)) * size;
      const double theta = 3.14159265358979323846 * u01(rng);
      const double ct = std::cos(theta), st = std::sin(theta);

      LabeledImage img;
      img.height = size;
      img.width = size;
      img.label = k;
      img.id = ds.class_names[static_cast<std::size_t>(k)] + "/img" + std::to_string(i);
      img.pixels.resize(static_cast<std::size_t>(3) * size * size);
      std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);

      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double ex = (dx * ct + dy * st) / a;
          const double ey = (-dx * st + dy * ct) / b;
          double r, g, bl;
          if (ex * ex + ey * ey <= 1.0) {
            mask[static_cast<std::size_t>(y) * size + x] = 1;
            const double u = static_cast<double>(x) / size;
            const double v = static_cast<double>(y) / size;
            const double tex = std::sin(2.0 * 3.14159265358979323846 * tex_freq * u) *
                               std::sin(2.0 * 3.14159265358979323846 * tex_freq * v);
            const double value =
                std::clamp(0.6 + 0.25 * tex + 0.05 * (u01(rng) - 0.5), 0.0, 1.0);
            hsv_to_rgb(hue, 0.75, value, r, g, bl);
          } else {
            const double shade = 0.08 + 0.06 * u01(rng);
            r = g = bl = shade;
          }
          img.at(0, y, x) = r;
          img.at(1, y, x) = g;
          img.at(2, y, x) = bl;
        }
      }
      img.human_mask = std::move(mask);
      ds.images.push_back(std::move(img));
    }
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset_png(const ImageDataset& ds, const fs::path& root) {
  for (const auto& img : ds.images) {
    const std::string& cls = ds.class_names[static_cast<std::size_t>(img.label)];
    std::string stem = img.id;
    const std::size_t slash = stem.rfind('/');
    if (slash != std::string::npos) stem = stem.substr(slash + 1);

    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        auto to8 = [](double v) {
          return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        };
        bgr.at<cv::Vec3b>(y, x) =
            cv::Vec3b(to8(img.at(2, y, x)), to8(img.at(1, y, x)), to8(img.at(0, y, x)));
      }
    }
    const fs::path img_dir = root / "images" / cls;
    fs::create_directories(img_dir);
    if (!cv::imwrite((img_dir / (stem + ".png")).string(), bgr))
      throw IoError("cannot write " + (img_dir / (stem + ".png")).string());

    if (img.human_mask) {
      cv::Mat mask(img.height, img.width, CV_8U);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          mask.at<std::uint8_t>(y, x) =
              (*img.human_mask)[static_cast<std::size_t>(y) * img.width + x] ? 255 : 0;
      const fs::path mask_dir = root / "masks" / cls;
      fs::create_directories(mask_dir);
      if (!cv::imwrite((mask_dir / (stem + ".png")).string(), mask))
        throw IoError("cannot write mask for " + img.id);
    }
  }
}

DatasetSplits split_dataset(const ImageDataset& ds, double train_frac, double val_frac,
                            std::uint64_t rng_seed) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
    throw Error("split_dataset: invalid fractions");

  DatasetSplits out;
  for (auto* part : {&out.train, &out.val, &out.test}) part->class_names = ds.class_names;
  out.train.split = Split::train;
  out.val.split = Split::val;
  out.test.split = Split::test;

  std::mt19937_64 rng(rng_seed);
  for (int k = 0; k < ds.num_classes(); ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.images.size(); ++i)
      if (ds.images[i].label == k) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_train = static_cast<std::size_t>(std::round(train_frac * idx.size()));
    const std::size_t n_val = static_cast<std::size_t>(std::round(val_frac * idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const LabeledImage& img = ds.images[idx[j]];
      if (j < n_train)
        out.train.images.push_back(img);
      else if (j < n_train + n_val)
        out.val.images.push_back(img);
      else
        out.test.images.push_back(img);
    }
  }
  return out;
}

}  // namespace caes
