#include "caes/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace caes {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(MaskSource s) {
  return s == MaskSource::human ? "human" : "gradcam";
}

MaskSource mask_source_from_string(const std::string& s) {
  if (s == "human") return MaskSource::human;
  if (s == "gradcam") return MaskSource::gradcam;
  throw Error("unknown mask source: " + s);
}

double BinaryMask::foreground_fraction() const {
  if (values.empty()) return 0.0;
  std::size_t fg = 0;
  for (std::uint8_t v : values) fg += v;
  return static_cast<double>(fg) / static_cast<double>(values.size());
}

SaliencyMap gradcam_squared(const ClassifierModel& m, const LabeledImage& img,
                            int target_class) {
  if (target_class < 0 || target_class >= m.num_classes)
    throw GradientUnavailableError("gradcam: class index out of range");

  const Activation maps = forward_feature_maps(m, img);  // L x Hf*Wf
  const Eigen::VectorXd pooled = maps.rowwise().sum() / static_cast<double>(maps.cols());

  // d(logit_k)/d(A_l at any position) = head gradient / (Hf*Wf); its spatial
  // mean, the GradCAM weight, is the same value.
  const Eigen::VectorXd alpha =
      head_pooled_gradient(m, pooled, target_class) / static_cast<double>(maps.cols());

  const Eigen::RowVectorXd s = alpha.transpose() * maps;  // 1 x Hf*Wf
  const int side = m.feature_size();

  cv::Mat coarse(side, side, CV_64F);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double v = s(static_cast<Eigen::Index>(y) * side + x);
      coarse.at<double>(y, x) = v * v;  // squaring subsumes the ReLU
    }

  cv::Mat fine;
  cv::resize(coarse, fine, cv::Size(img.width, img.height), 0, 0, cv::INTER_LINEAR);

  SaliencyMap out;
  out.height = img.height;
  out.width = img.width;
  out.image_id = img.id;
  out.target_class = target_class;
  out.values.resize(static_cast<std::size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.values[static_cast<std::size_t>(y) * img.width + x] =
          std::max(0.0, fine.at<double>(y, x));
  return out;
}

BinaryMask threshold_mask(const SaliencyMap& s, double retain_fraction) {
  if (!(retain_fraction > 0.0 && retain_fraction < 1.0))
    throw Error("threshold_mask: retain_fraction must be in (0,1)");
  if (s.values.empty()) throw Error("threshold_mask: empty heatmap");

  std::vector<double> sorted = s.values;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    throw DegenerateHeatmapError("constant heatmap for image " + s.image_id);

  // Linear-interpolation quantile at (1 - retain_fraction).
  const double pos = (1.0 - retain_fraction) * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  const double q = lo + 1 < sorted.size()
                       ? sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
                       : sorted[lo];

  BinaryMask mask;
  mask.height = s.height;
  mask.width = s.width;
  mask.source = MaskSource::gradcam;
  mask.retain_fraction = retain_fraction;
  mask.values.resize(s.values.size());
  for (std::size_t i = 0; i < s.values.size(); ++i)
    mask.values[i] = s.values[i] >= q ? 1 : 0;
  // Without ties the foreground lands within one pixel of the target; any
  // larger deviation means values tied at the threshold inflated the mask.
  const double fg = mask.foreground_fraction();
  mask.tie_flagged =
      std::abs(fg - retain_fraction) > 1.5 / static_cast<double>(s.values.size());
  return mask;
}

CutoutPair make_cutouts(const LabeledImage& img, const BinaryMask& mask) {
  if (mask.height != img.height || mask.width != img.width)
    throw ShapeMismatchError("mask/image shape mismatch for " + img.id);

  CutoutPair out;
  out.image_id = img.id;
  out.mask = mask;
  out.object_only = img;
  out.context_only = img;
  out.object_only.id = img.id + ":object";
  out.context_only.id = img.id + ":context";
  out.object_only.human_mask.reset();
  out.context_only.human_mask.reset();

  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double obj = img.pixels[c * plane + p] * static_cast<double>(mask.values[p]);
      out.object_only.pixels[c * plane + p] = obj;
      out.context_only.pixels[c * plane + p] = img.pixels[c * plane + p] - obj;
    }
  }
  return out;
}

MaskSetResult masks_for_dataset(const ClassifierModel& m, const ImageDataset& ds,
                                MaskSource source, double retain_fraction) {
  MaskSetResult result;
  if (source == MaskSource::human) {
    std::vector<std::string> missing;
    for (const auto& img : ds.images)
      if (!img.human_mask) missing.push_back(img.id);
    if (!missing.empty()) {
      std::string ids;
      for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
      throw MissingHumanMaskError("images without human masks: " + ids);
    }
    for (const auto& img : ds.images) {
      BinaryMask mask;
      mask.height = img.height;
      mask.width = img.width;
      mask.values = *img.human_mask;
      mask.source = MaskSource::human;
      result.masks.emplace(img.id, std::move(mask));
    }
    return result;
  }

  for (const auto& img : ds.images) {
    const int pred = predicted_class(m, img);
    const SaliencyMap heat = gradcam_squared(m, img, pred);
    try {
      result.masks.emplace(img.id, threshold_mask(heat, retain_fraction));
    } catch (const DegenerateHeatmapError&) {
      result.degenerate_excluded.push_back(img.id);
    }
  }
  return result;
}

void save_mask_set(const MaskSetResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  json report;
  report["excluded"] = result.degenerate_excluded;
  report["masks"] = json::array();
  for (const auto& [id, mask] : result.masks) {
    std::string file = id;
    std::replace(file.begin(), file.end(), '/', '_');
    file += ".png";

    cv::Mat png(mask.height, mask.width, CV_8U);
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x)
        png.at<std::uint8_t>(y, x) =
            mask.values[static_cast<std::size_t>(y) * mask.width + x] ? 255 : 0;
    if (!cv::imwrite((out_dir / file).string(), png))
      throw IoError("cannot write mask " + (out_dir / file).string());

    report["masks"].push_back({{"id", id},
                               {"file", file},
                               {"source", to_string(mask.source)},
                               {"foreground_fraction", mask.foreground_fraction()},
                               {"tie_flagged", mask.tie_flagged}});
  }
  std::ofstream out(out_dir / "masks-report.json");
  if (!out) throw IoError("cannot write masks-report.json");
  out << report.dump(2) << '\n';
}

}  // namespace caes
