#include "caes/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace caes {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(EffectVariable e) { return e == EffectVariable::prob ? "prob" : "logit"; }

EffectVariable effect_variable_from_string(const std::string& s) {
  if (s == "prob") return EffectVariable::prob;
  if (s == "logit") return EffectVariable::logit;
  throw Error("unknown effect variable: " + s);
}

std::string to_string(ScoreDirection d) {
  return d == ScoreDirection::causal ? "causal" : "anticausal";
}

std::string to_string(RatioKind r) { return r == RatioKind::object ? "object" : "context"; }

std::vector<const FeatureRow*> FeatureTable::class_rows(int class_index) const {
  std::vector<const FeatureRow*> out;
  for (const auto& row : rows)
    if (row.class_index == class_index) out.push_back(&row);
  return out;
}

FeatureTable build_feature_table(const ClassifierModel& m, const ImageDataset& ds,
                                 const std::map<std::string, BinaryMask>& masks,
                                 EffectVariable effect) {
  FeatureTable table;
  table.feature_count = m.feature_maps();

  for (const auto& img : ds.images) {
    const auto it = masks.find(img.id);
    if (it == masks.end()) continue;  // degenerate-excluded image
    const CutoutPair cut = make_cutouts(img, it->second);

    FeatureRow row;
    row.image_id = img.id;
    row.class_index = img.label;
    row.original = extract_features(m, img, Variant::original).values;
    row.object_only = extract_features(m, cut.object_only, Variant::object_only).values;
    row.context_only = extract_features(m, cut.context_only, Variant::context_only).values;

    const Eigen::VectorXd logits =
        head_logits(m, Eigen::Map<const Eigen::VectorXd>(
                           row.original.data(), static_cast<Eigen::Index>(row.original.size())));
    if (effect == EffectVariable::logit) {
      row.effect = logits(img.label);
    } else {
      const double zmax = logits.maxCoeff();
      const Eigen::VectorXd e = (logits.array() - zmax).exp();
      row.effect = e(img.label) / e.sum();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void save_feature_table(const FeatureTable& table, const fs::path& path) {
  json j;
  j["feature_count"] = table.feature_count;
  j["rows"] = json::array();
  for (const auto& row : table.rows)
    j["rows"].push_back({{"image_id", row.image_id},
                         {"class_index", row.class_index},
                         {"effect", row.effect},
                         {"original", row.original},
                         {"object_only", row.object_only},
                         {"context_only", row.context_only}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

FeatureTable load_feature_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j = json::parse(in);
  FeatureTable table;
  table.feature_count = j.at("feature_count").get<int>();
  for (const auto& r : j.at("rows")) {
    FeatureRow row;
    row.image_id = r.at("image_id").get<std::string>();
    row.class_index = r.at("class_index").get<int>();
    row.effect = r.at("effect").get<double>();
    row.original = r.at("original").get<std::vector<double>>();
    row.object_only = r.at("object_only").get<std::vector<double>>();
    row.context_only = r.at("context_only").get<std::vector<double>>();
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<FeatureCausalScore> score_features_ncc(const NccModel& ncc,
                                                   const FeatureTable& table, int class_index,
                                                   int batch_images) {
  const auto rows = table.class_rows(class_index);
  if (rows.size() < 8)
    throw TooFewSamplesError("class " + std::to_string(class_index) + " has " +
                             std::to_string(rows.size()) + " images; needs >= 8");

  // Consecutive chunks; a trailing chunk of one image folds into its
  // predecessor so every chunk is standardizable.
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  if (batch_images <= 0 || static_cast<std::size_t>(batch_images) >= rows.size()) {
    chunks.emplace_back(0, rows.size());
  } else {
    for (std::size_t start = 0; start < rows.size();
         start += static_cast<std::size_t>(batch_images))
      chunks.emplace_back(start,
                          std::min(rows.size(), start + static_cast<std::size_t>(batch_images)));
    if (chunks.size() > 1 && chunks.back().second - chunks.back().first < 2) {
      chunks[chunks.size() - 2].second = chunks.back().second;
      chunks.pop_back();
    }
  }

  std::vector<FeatureCausalScore> out;
  out.reserve(static_cast<std::size_t>(table.feature_count));
  for (int l = 0; l < table.feature_count; ++l) {
    FeatureCausalScore score;
    score.feature_index = l;
    score.class_index = class_index;

    double sum = 0.0;
    int n_ok = 0;
    for (const auto& [lo, hi] : chunks) {
      SamplePairSet p;
      p.id = "class" + std::to_string(class_index) + "-f" + std::to_string(l);
      for (std::size_t i = lo; i < hi; ++i) {
        p.xs.push_back((*rows[i]).original[static_cast<std::size_t>(l)]);
        p.ys.push_back((*rows[i]).effect);
      }
      try {
        sum += ncc_score_symmetric(ncc, standardize_pair(p)).p_xy;
        ++n_ok;
      } catch (const ZeroVarianceError&) {
      }
    }
    if (n_ok == 0) {
      score.p_causal = 0.5;
      score.degenerate = true;
      score.n_batches_averaged = 0;
    } else {
      score.p_causal = sum / n_ok;
      score.n_batches_averaged = n_ok;
    }
    out.push_back(score);
  }
  return out;
}

std::vector<int> select_top_fraction(const std::vector<FeatureCausalScore>& scores,
                                     double fraction, ScoreDirection direction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error("select_top_fraction: fraction must be in (0,1]");
  const std::size_t k_sel = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(scores.size())));

  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) order[i] = static_cast<int>(i);
  auto key = [&](int i) {
    const double p = scores[static_cast<std::size_t>(i)].p_causal;
    return direction == ScoreDirection::causal ? p : 1.0 - p;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (key(a) != key(b)) return key(a) > key(b);
    return scores[static_cast<std::size_t>(a)].feature_index <
           scores[static_cast<std::size_t>(b)].feature_index;
  });
  order.resize(std::min(k_sel, order.size()));
  std::vector<int> out;
  out.reserve(order.size());
  for (int i : order) out.push_back(scores[static_cast<std::size_t>(i)].feature_index);
  return out;
}

FeatureRatio feature_ratio(const FeatureTable& table, int class_index, int feature_index,
                           RatioKind which) {
  if (feature_index < 0 || feature_index >= table.feature_count)
    throw Error("feature_ratio: feature index out of range");
  const auto rows = table.class_rows(class_index);
  if (rows.empty()) throw Error("feature_ratio: empty class " + std::to_string(class_index));

  const std::size_t l = static_cast<std::size_t>(feature_index);
  double num = 0.0, den = 0.0;
  for (const FeatureRow* row : rows) {
    const double f = row->original[l];
    const double variant =
        which == RatioKind::object ? row->context_only[l] : row->object_only[l];
    num += std::abs(variant - f);
    den += std::abs(f);
  }
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}

double bound_score(double s) {
  if (s < 0.0) throw NegativeInputError("bound_score: negative ratio " + std::to_string(s));
  if (!std::isfinite(s)) throw NegativeInputError("bound_score: non-finite ratio");
  const double v = 2.0 / (1.0 + std::exp(-s)) - 1.0;
  // The function is < 1 for every finite s; keep that true past the point
  // where the double rounds to 1.
  return v < 1.0 ? v : std::nextafter(1.0, 0.0);
}

namespace {

void fill_stats(SelectedSetStats& stats, const FeatureTable& table, int class_index) {
  for (int l : stats.features) {
    stats.object_sigma.push_back(
        bound_score(feature_ratio(table, class_index, l, RatioKind::object).value));
    stats.context_sigma.push_back(
        bound_score(feature_ratio(table, class_index, l, RatioKind::context).value));
  }
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = std::sqrt(var / static_cast<double>(v.size()));  // population std
  };
  mean_std(stats.object_sigma, stats.object_mean, stats.object_std);
  mean_std(stats.context_sigma, stats.context_mean, stats.context_std);
}

}  // namespace

CaesRunReport build_run_report(const FeatureTable& table,
                               const std::map<int, std::vector<FeatureCausalScore>>& scores,
                               const std::vector<std::string>& class_names, double fraction,
                               MaskSource source, const std::map<int, int>& excluded_by_class,
                               const json& config_snapshot,
                               const std::map<std::string, std::string>& model_checksums) {
  std::set<int> table_classes;
  for (const auto& row : table.rows) table_classes.insert(row.class_index);
  for (int k : table_classes)
    if (!scores.count(k))
      throw IncompleteScoringError("no NCC scores for class " + std::to_string(k));

  CaesRunReport report;
  report.config_snapshot = config_snapshot;
  report.model_checksums = model_checksums;

  for (int k : table_classes) {
    CaesClassReport cls;
    cls.class_index = k;
    cls.class_name = k < static_cast<int>(class_names.size())
                         ? class_names[static_cast<std::size_t>(k)]
                         : std::to_string(k);
    cls.mask_source = to_string(source);
    cls.images_scored = static_cast<int>(table.class_rows(k).size());
    const auto excluded_it = excluded_by_class.find(k);
    cls.excluded_image_count = excluded_it == excluded_by_class.end() ? 0 : excluded_it->second;

    const auto& cls_scores = scores.at(k);
    cls.causal.features = select_top_fraction(cls_scores, fraction, ScoreDirection::causal);
    cls.anticausal.features =
        select_top_fraction(cls_scores, fraction, ScoreDirection::anticausal);
    fill_stats(cls.causal, table, k);
    fill_stats(cls.anticausal, table, k);
    report.classes.push_back(std::move(cls));
  }
  return report;
}

namespace {

json stats_to_json(const SelectedSetStats& s) {
  return {{"features", s.features},
          {"object_sigma", s.object_sigma},
          {"context_sigma", s.context_sigma},
          {"object_mean", s.object_mean},
          {"object_std", s.object_std},
          {"context_mean", s.context_mean},
          {"context_std", s.context_std}};
}

SelectedSetStats stats_from_json(const json& j) {
  SelectedSetStats s;
  s.features = j.at("features").get<std::vector<int>>();
  s.object_sigma = j.at("object_sigma").get<std::vector<double>>();
  s.context_sigma = j.at("context_sigma").get<std::vector<double>>();
  s.object_mean = j.at("object_mean").get<double>();
  s.object_std = j.at("object_std").get<double>();
  s.context_mean = j.at("context_mean").get<double>();
  s.context_std = j.at("context_std").get<double>();
  return s;
}

}  // namespace

json report_to_json(const CaesRunReport& report) {
  json j;
  j["version"] = report.version;
  j["timestamp"] = report.timestamp;
  j["config_snapshot"] = report.config_snapshot;
  j["model_checksums"] = report.model_checksums;
  j["classes"] = json::array();
  for (const auto& cls : report.classes)
    j["classes"].push_back({{"class_index", cls.class_index},
                            {"class_name", cls.class_name},
                            {"mask_source", cls.mask_source},
                            {"images_scored", cls.images_scored},
                            {"excluded_image_count", cls.excluded_image_count},
                            {"causal", stats_to_json(cls.causal)},
                            {"anticausal", stats_to_json(cls.anticausal)}});
  return j;
}

CaesRunReport report_from_json(const json& j) {
  CaesRunReport report;
  report.version = j.at("version").get<int>();
  report.timestamp = j.at("timestamp").get<std::string>();
  report.config_snapshot = j.at("config_snapshot");
  report.model_checksums = j.at("model_checksums").get<std::map<std::string, std::string>>();
  for (const auto& c : j.at("classes")) {
    CaesClassReport cls;
    cls.class_index = c.at("class_index").get<int>();
    cls.class_name = c.at("class_name").get<std::string>();
    cls.mask_source = c.at("mask_source").get<std::string>();
    cls.images_scored = c.at("images_scored").get<int>();
    cls.excluded_image_count = c.at("excluded_image_count").get<int>();
    cls.causal = stats_from_json(c.at("causal"));
    cls.anticausal = stats_from_json(c.at("anticausal"));
    report.classes.push_back(std::move(cls));
  }
  return report;
}

namespace {

// Minimal grouped bar chart with error bars, one bar per class.
void write_bar_chart_svg(const fs::path& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& means, const std::vector<double>& stds) {
  const int width = 120 + static_cast<int>(labels.size()) * 90;
  const int height = 360;
  const double plot_left = 70, plot_bottom = 300, plot_top = 50;
  const double y_scale = plot_bottom - plot_top;  // data range is [0,1]

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  out << "<text x=\"" << width / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  out << "<line x1=\"" << plot_left << "\" y1=\"" << plot_top << "\" x2=\"" << plot_left
      << "\" y2=\"" << plot_bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << plot_left << "\" y1=\"" << plot_bottom << "\" x2=\"" << width - 30
      << "\" y2=\"" << plot_bottom << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const double y = plot_bottom - v * y_scale;
    out << "<line x1=\"" << plot_left - 4 << "\" y1=\"" << y << "\" x2=\"" << plot_left
        << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << plot_left - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << v << "</text>\n";
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = plot_left + 20 + static_cast<double>(i) * 90;
    const double bar_h = means[i] * y_scale;
    out << "<rect x=\"" << x << "\" y=\"" << plot_bottom - bar_h
        << "\" width=\"50\" height=\"" << bar_h << "\" fill=\"#4878a8\"/>\n";
    const double cx = x + 25;
    const double y_lo = plot_bottom - std::max(0.0, means[i] - stds[i]) * y_scale;
    const double y_hi = plot_bottom - std::min(1.0, means[i] + stds[i]) * y_scale;
    out << "<line x1=\"" << cx << "\" y1=\"" << y_lo << "\" x2=\"" << cx << "\" y2=\"" << y_hi
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << cx - 6 << "\" y1=\"" << y_lo << "\" x2=\"" << cx + 6 << "\" y2=\""
        << y_lo << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << cx - 6 << "\" y1=\"" << y_hi << "\" x2=\"" << cx + 6 << "\" y2=\""
        << y_hi << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << cx << "\" y=\"" << plot_bottom + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << labels[i] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void emit_report(const CaesRunReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);

  {
    std::ofstream out(out_dir / "caes.json");
    if (!out) throw IoError("cannot write caes.json");
    out << report_to_json(report).dump(2) << '\n';
  }

  {
    std::ofstream out(out_dir / "caes.csv");
    if (!out) throw IoError("cannot write caes.csv");
    out << "class,set,ratio,mean,std,n\n";
    out.precision(17);
    for (const auto& cls : report.classes) {
      for (const auto& [set_name, stats] :
           {std::pair<const char*, const SelectedSetStats*>{"causal", &cls.causal},
            {"anticausal", &cls.anticausal}}) {
        out << cls.class_name << ',' << set_name << ",object," << stats->object_mean << ','
            << stats->object_std << ',' << stats->features.size() << '\n';
        out << cls.class_name << ',' << set_name << ",context," << stats->context_mean << ','
            << stats->context_std << ',' << stats->features.size() << '\n';
      }
    }
  }

  std::vector<std::string> labels;
  for (const auto& cls : report.classes) labels.push_back(cls.class_name);
  for (const char* set_name : {"causal", "anticausal"}) {
    for (const char* ratio : {"object", "context"}) {
      std::vector<double> means, stds;
      for (const auto& cls : report.classes) {
        const SelectedSetStats& s =
            std::string(set_name) == "causal" ? cls.causal : cls.anticausal;
        const bool object = std::string(ratio) == "object";
        means.push_back(object ? s.object_mean : s.context_mean);
        stds.push_back(object ? s.object_std : s.context_std);
      }
      const std::string title = std::string("CaES ") + set_name + " set, " + ratio + " ratio";
      write_bar_chart_svg(out_dir / ("caes_" + std::string(set_name) + "_" + ratio + ".svg"),
                          title, labels, means, stds);
    }
  }
}

}  // namespace caes
