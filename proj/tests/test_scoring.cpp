#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "caes/scoring.hpp"

using namespace caes;
namespace fs = std::filesystem;

namespace {

// Hand-built table: 2 classes, L=3 features, deterministic values.
FeatureTable tiny_table() {
  FeatureTable t;
  t.feature_count = 3;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 10; ++j) {
      FeatureRow r;
      r.image_id = "c" + std::to_string(k) + "i" + std::to_string(j);
      r.class_index = k;
      r.effect = 0.5 + 0.04 * j + 0.01 * norm(rng);
      for (int l = 0; l < 3; ++l) {
        const double f = std::abs(norm(rng)) + 0.1;
        r.original.push_back(f);
        r.object_only.push_back(f * 0.9);
        r.context_only.push_back(f * 0.2);
      }
      t.rows.push_back(std::move(r));
    }
  }
  return t;
}

std::vector<FeatureCausalScore> make_scores(const std::vector<double>& ps) {
  std::vector<FeatureCausalScore> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    FeatureCausalScore s;
    s.feature_index = static_cast<int>(i);
    s.p_causal = ps[i];
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("bound_score matches Eq. 2 reference values") {
  CHECK(bound_score(0.0) == 0.0);
  CHECK(bound_score(1.0) == doctest::Approx(0.4621172).epsilon(1e-6));
  CHECK(bound_score(2.0) == doctest::Approx(0.7615942).epsilon(1e-6));
  CHECK(bound_score(2.0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-14));
}

TEST_CASE("bound_score equals tanh(s/2), increases, stays below one") {
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double s = 0.1 * i;
    const double v = bound_score(s);
    CHECK(std::abs(v - std::tanh(s / 2.0)) < 1e-12);
    CHECK(v > prev);
    CHECK(v < 1.0);
    prev = v;
  }
  CHECK(bound_score(1e6) < 1.0);
  CHECK_THROWS_AS(bound_score(-0.1), NegativeInputError);
  CHECK_THROWS_AS(bound_score(std::numeric_limits<double>::quiet_NaN()), NegativeInputError);
}

TEST_CASE("feature_ratio matches hand evaluation") {
  // m=1, f=2.0, f^c=3.0 -> object ratio 0.5.
  FeatureTable t;
  t.feature_count = 1;
  FeatureRow r;
  r.image_id = "x";
  r.class_index = 0;
  r.original = {2.0};
  r.context_only = {3.0};
  r.object_only = {2.0};
  t.rows.push_back(r);
  CHECK(feature_ratio(t, 0, 0, RatioKind::object).value == 0.5);
  // f^o == f -> context ratio 0.
  CHECK(feature_ratio(t, 0, 0, RatioKind::context).value == 0.0);
}

TEST_CASE("feature_ratio dead feature returns zero with flag") {
  FeatureTable t;
  t.feature_count = 1;
  for (int j = 0; j < 3; ++j) {
    FeatureRow r;
    r.image_id = "d" + std::to_string(j);
    r.class_index = 0;
    r.original = {0.0};
    r.context_only = {0.0};
    r.object_only = {0.0};
    t.rows.push_back(r);
  }
  const FeatureRatio fr = feature_ratio(t, 0, 0, RatioKind::object);
  CHECK(fr.value == 0.0);
  CHECK(fr.dead_feature);
}

TEST_CASE("feature_ratio equals an independent brute-force recomputation") {
  const FeatureTable t = tiny_table();
  for (int k = 0; k < 2; ++k) {
    for (int l = 0; l < t.feature_count; ++l) {
      for (const RatioKind which : {RatioKind::object, RatioKind::context}) {
        double num = 0.0, den = 0.0;
        for (const FeatureRow& r : t.rows) {
          if (r.class_index != k) continue;
          const double alt =
              which == RatioKind::object ? r.context_only[l] : r.object_only[l];
          num += std::abs(alt - r.original[l]);
          den += std::abs(r.original[l]);
        }
        const double expected = den == 0.0 ? 0.0 : num / den;
        CHECK(feature_ratio(t, k, l, which).value == expected);
      }
    }
  }
}

TEST_CASE("select_top_fraction sizes and ordering") {
  const auto scores = make_scores({0.9, 0.1, 0.7, 0.7, 0.3});
  // ceil(0.01 * 5) = 1
  CHECK(select_top_fraction(scores, 0.01, ScoreDirection::causal) == std::vector<int>{0});
  CHECK(select_top_fraction(scores, 0.01, ScoreDirection::anticausal) == std::vector<int>{1});
  // Ties broken by ascending index: 0.7 at indices 2 and 3.
  CHECK(select_top_fraction(scores, 0.6, ScoreDirection::causal) ==
        std::vector<int>{0, 2, 3});
  // fraction = 1.0 -> all indices in score order.
  CHECK(select_top_fraction(scores, 1.0, ScoreDirection::causal) ==
        std::vector<int>{0, 2, 3, 4, 1});
  CHECK(select_top_fraction(scores, 1.0, ScoreDirection::anticausal) ==
        std::vector<int>{1, 4, 2, 3, 0});
}

TEST_CASE("select_top_fraction ceil sizing at paper and desk scales") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> ps512(512), ps64(64);
  for (double& p : ps512) p = uni(rng);
  for (double& p : ps64) p = uni(rng);
  CHECK(select_top_fraction(make_scores(ps512), 0.01, ScoreDirection::causal).size() == 6);
  CHECK(select_top_fraction(make_scores(ps64), 0.01, ScoreDirection::causal).size() == 1);
}

TEST_CASE("causal and anticausal selections are disjoint without 0.5 ties") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ps(40);
    for (double& p : ps) p = uni(rng);
    const auto scores = make_scores(ps);
    const auto c = select_top_fraction(scores, 0.1, ScoreDirection::causal);
    const auto a = select_top_fraction(scores, 0.1, ScoreDirection::anticausal);
    CHECK(c.size() + a.size() <= 2 * 4);
    for (int ci : c) CHECK(std::find(a.begin(), a.end(), ci) == a.end());
  }
}

TEST_CASE("score_features_ncc produces one bounded score per feature") {
  const NccModel ncc = init_ncc(16, 77);
  const FeatureTable t = tiny_table();
  const auto scores = score_features_ncc(ncc, t, 0);
  REQUIRE(scores.size() == 3);
  for (const auto& s : scores) {
    CHECK(s.class_index == 0);
    CHECK(s.p_causal >= 0.0);
    CHECK(s.p_causal <= 1.0);
    CHECK(s.n_batches_averaged == 1);
  }
}

TEST_CASE("score_features_ncc flags constant features and enforces m >= 8") {
  const NccModel ncc = init_ncc(16, 78);
  FeatureTable t = tiny_table();
  for (auto& r : t.rows) r.original[1] = 2.5;  // dead feature 1
  const auto scores = score_features_ncc(ncc, t, 0);
  CHECK(scores[1].degenerate);
  CHECK(scores[1].p_causal == 0.5);
  CHECK_FALSE(scores[0].degenerate);

  FeatureTable small = tiny_table();
  small.rows.resize(5);  // class 0 down to 5 rows
  CHECK_THROWS_AS(score_features_ncc(ncc, small, 0), TooFewSamplesError);
}

TEST_CASE("minibatched scoring averages over recorded chunk count") {
  const NccModel ncc = init_ncc(16, 79);
  const FeatureTable t = tiny_table();  // 10 rows per class
  const auto scores = score_features_ncc(ncc, t, 0, 4);
  // chunks of 4 over 10 rows: [0..3], [4..7], [8..9] -> 3 batches.
  for (const auto& s : scores) CHECK(s.n_batches_averaged == 3);
}

TEST_CASE("report builds, serializes, and re-emits deterministically") {
  const FeatureTable t = tiny_table();
  const NccModel ncc = init_ncc(16, 80);
  std::map<int, std::vector<FeatureCausalScore>> scores;
  scores[0] = score_features_ncc(ncc, t, 0);
  scores[1] = score_features_ncc(ncc, t, 1);

  const nlohmann::json snap = {{"note", "tiny"}};
  const std::map<std::string, std::string> sums = {{"ncc", "abc"}, {"classifier", "def"}};
  const std::map<int, int> excluded = {{0, 0}, {1, 2}};
  CaesRunReport report = build_run_report(t, scores, {"alpha", "beta"}, 0.5,
                                          MaskSource::human, excluded, snap, sums);
  REQUIRE(report.classes.size() == 2);
  CHECK(report.classes[0].class_name == "alpha");
  CHECK(report.classes[1].excluded_image_count == 2);
  for (const auto& cls : report.classes) {
    CHECK(cls.causal.features.size() == 2);  // ceil(0.5*3)
    for (const auto* set : {&cls.causal, &cls.anticausal}) {
      for (double v : set->object_sigma) {
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
      }
      CHECK(set->object_mean >= 0.0);
      CHECK(set->object_mean < 1.0);
      CHECK(set->context_mean >= 0.0);
      CHECK(set->context_mean < 1.0);
    }
  }

  // Single-feature selection has zero std.
  CaesRunReport single = build_run_report(t, scores, {"alpha", "beta"}, 0.01,
                                          MaskSource::human, excluded, snap, sums);
  CHECK(single.classes[0].causal.features.size() == 1);
  CHECK(single.classes[0].causal.object_std == 0.0);

  // JSON round-trip.
  report.timestamp = "2000-01-01T00:00:00Z";
  CHECK(report_from_json(report_to_json(report)) == report);

  // Missing class scores -> IncompleteScoring.
  scores.erase(1);
  CHECK_THROWS_AS(build_run_report(t, scores, {"alpha", "beta"}, 0.5, MaskSource::human,
                                   excluded, snap, sums),
                  IncompleteScoringError);
}

TEST_CASE("emit_report writes json, csv and four charts") {
  const FeatureTable t = tiny_table();
  const NccModel ncc = init_ncc(16, 81);
  std::map<int, std::vector<FeatureCausalScore>> scores;
  scores[0] = score_features_ncc(ncc, t, 0);
  scores[1] = score_features_ncc(ncc, t, 1);
  const CaesRunReport report =
      build_run_report(t, scores, {"a", "b"}, 0.5, MaskSource::gradcam, {}, {}, {});

  const fs::path dir = fs::temp_directory_path() / "caes_test_report";
  fs::remove_all(dir);
  emit_report(report, dir);
  CHECK(fs::exists(dir / "caes.json"));
  REQUIRE(fs::exists(dir / "caes.csv"));

  std::ifstream csv(dir / "caes.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "class,set,ratio,mean,std,n");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2 * 2 * 2);  // K * set * ratio

  for (const char* name : {"caes_causal_object.svg", "caes_causal_context.svg",
                           "caes_anticausal_object.svg", "caes_anticausal_context.svg"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(dir / name));
    CHECK(fs::file_size(dir / name) > 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("feature table persists and reloads exactly") {
  const FeatureTable t = tiny_table();
  const fs::path path = fs::temp_directory_path() / "caes_test_table.json";
  save_feature_table(t, path);
  const FeatureTable loaded = load_feature_table(path);
  REQUIRE(loaded.rows.size() == t.rows.size());
  CHECK(loaded.feature_count == t.feature_count);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CHECK(loaded.rows[i].image_id == t.rows[i].image_id);
    CHECK(loaded.rows[i].effect == t.rows[i].effect);
    CHECK(loaded.rows[i].original == t.rows[i].original);
    CHECK(loaded.rows[i].object_only == t.rows[i].object_only);
    CHECK(loaded.rows[i].context_only == t.rows[i].context_only);
  }
  fs::remove(path);
}

TEST_CASE("build_feature_table covers variants and skips maskless images") {
  const ImageDataset ds = generate_blob_dataset(2, 5, 16, 90);
  ClassifierConfig cfg;
  cfg.input_size = 16;
  cfg.block_channels = {4, 8};
  cfg.head_width = 8;
  cfg.num_classes = 2;
  cfg.rng_seed = 91;
  const ClassifierModel m = init_classifier(cfg);

  std::map<std::string, BinaryMask> masks;
  for (const auto& img : ds.images) {
    if (img.id == ds.images[0].id) continue;  // drop one image's mask
    BinaryMask bm;
    bm.height = bm.width = 16;
    bm.values = *img.human_mask;
    masks[img.id] = bm;
  }
  const FeatureTable t = build_feature_table(m, ds, masks, EffectVariable::prob);
  CHECK(t.rows.size() == ds.images.size() - 1);
  CHECK(t.feature_count == 8);
  for (const auto& r : t.rows) {
    CHECK(r.original.size() == 8);
    CHECK(r.object_only.size() == 8);
    CHECK(r.context_only.size() == 8);
    CHECK(r.effect >= 0.0);
    CHECK(r.effect <= 1.0);
  }

  // All-ones mask makes object features identical to the original.
  std::map<std::string, BinaryMask> ones_masks;
  BinaryMask ones;
  ones.height = ones.width = 16;
  ones.values.assign(256, 1);
  ones_masks[ds.images[0].id] = ones;
  ImageDataset one_img;
  one_img.class_names = ds.class_names;
  one_img.images = {ds.images[0]};
  const FeatureTable t1 = build_feature_table(m, one_img, ones_masks, EffectVariable::prob);
  REQUIRE(t1.rows.size() == 1);
  CHECK(t1.rows[0].object_only == t1.rows[0].original);
}
