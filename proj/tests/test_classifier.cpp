#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "caes/classifier.hpp"

using namespace caes;
namespace fs = std::filesystem;

namespace {

ClassifierConfig desk_config() {
  ClassifierConfig cfg;
  cfg.input_size = 16;
  cfg.block_channels = {4, 8};
  cfg.head_width = 8;
  cfg.num_classes = 3;
  cfg.rng_seed = 1;
  return cfg;
}

LabeledImage random_image(int size, std::uint64_t seed, int label = 0) {
  LabeledImage img;
  img.height = img.width = size;
  img.label = label;
  img.id = "rand" + std::to_string(seed);
  img.pixels.resize(std::size_t{3} * size * size);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (double& p : img.pixels) p = uni(rng);
  return img;
}

}  // namespace

TEST_CASE("config defaults mirror the training recipe") {
  ClassifierConfig cfg;
  CHECK(cfg.epochs == 30);
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.block_channels.back() == 512);
  CHECK(cfg.head_width == 512);
  CHECK(cfg.num_classes == 6);
  CHECK(cfg.input_size == 224);
}

TEST_CASE("default-shaped model exposes 512 pooled features") {
  ClassifierConfig cfg;
  // Shrink spatial size only; channel plan stays the default 512-map stack.
  cfg.input_size = 32;
  cfg.block_channels = {8, 16, 512};
  const ClassifierModel m = init_classifier(cfg);
  CHECK(m.feature_maps() == 512);
  const FeatureVector f = extract_features(m, random_image(32, 3));
  CHECK(f.values.size() == 512);
}

TEST_CASE("zero-initialized head gives exactly uniform probabilities") {
  const ClassifierModel m = init_classifier(desk_config());
  const LabeledImage img = random_image(16, 5);
  const Eigen::VectorXd probs = class_probabilities(m, img);
  REQUIRE(probs.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(probs(k) == 1.0 / 3.0);
  ClassifierGradients g;
  CHECK(classifier_loss_and_gradient(m, img, g) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one and argmax matches predicted_class") {
  ClassifierModel m = init_classifier(desk_config());
  // Randomize the final layer so logits are non-trivial.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> norm(0.0, 0.3);
  for (int r = 0; r < m.fc3.weights.rows(); ++r)
    for (int c = 0; c < m.fc3.weights.cols(); ++c) m.fc3.weights(r, c) = norm(rng);
  quantize_to_f32(m);

  for (int i = 0; i < 5; ++i) {
    const LabeledImage img = random_image(16, static_cast<std::uint64_t>(20 + i));
    const Eigen::VectorXd probs = class_probabilities(m, img);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-6);
    int argmax = 0;
    probs.maxCoeff(&argmax);
    CHECK(predicted_class(m, img) == argmax);
    CHECK(class_probability(m, img, 1) == doctest::Approx(probs(1)).epsilon(1e-15));
  }
}

TEST_CASE("all-zero input through a bias-free extractor pools to zero") {
  ClassifierModel m = init_classifier(desk_config());
  for (auto& b : m.blocks) b.bias.setZero();
  LabeledImage img = random_image(16, 9);
  std::fill(img.pixels.begin(), img.pixels.end(), 0.0);
  const FeatureVector f = extract_features(m, img);
  for (double v : f.values) CHECK(v == 0.0);
}

TEST_CASE("extract_features is pure and rejects wrong input sizes") {
  const ClassifierModel m = init_classifier(desk_config());
  const LabeledImage img = random_image(16, 11);
  CHECK(extract_features(m, img).values == extract_features(m, img).values);
  CHECK_THROWS_AS(extract_features(m, random_image(24, 11)), SizeMismatchError);
}

TEST_CASE("feature map count and spatial size follow the block plan") {
  const ClassifierModel m = init_classifier(desk_config());
  CHECK(m.feature_maps() == 8);
  CHECK(m.feature_size() == 4);  // 16 / 2^2
  const Activation maps = forward_feature_maps(m, random_image(16, 13));
  CHECK(maps.rows() == 8);
  CHECK(maps.cols() == 16);
}

TEST_CASE("head gradient w.r.t. pooled features matches finite differences") {
  ClassifierConfig cfg = desk_config();
  cfg.rng_seed = 21;
  ClassifierModel m = init_classifier(cfg);
  std::mt19937_64 rng(23);
  std::normal_distribution<double> norm(0.0, 0.3);
  for (int r = 0; r < m.fc3.weights.rows(); ++r)
    for (int c = 0; c < m.fc3.weights.cols(); ++c) m.fc3.weights(r, c) = norm(rng);

  Eigen::VectorXd pooled(m.feature_maps());
  for (int i = 0; i < pooled.size(); ++i) pooled(i) = norm(rng) + 0.5;

  const int k = 2;
  const Eigen::VectorXd analytic = head_pooled_gradient(m, pooled, k);
  const double h = 1e-6;
  for (int i = 0; i < pooled.size(); ++i) {
    Eigen::VectorXd up = pooled, down = pooled;
    up(i) += h;
    down(i) -= h;
    const double fd = (head_logits(m, up)(k) - head_logits(m, down)(k)) / (2 * h);
    const double denom = std::max({std::abs(analytic(i)), std::abs(fd), 1e-8});
    CHECK(std::abs(analytic(i) - fd) / denom < 1e-3);
  }
}

TEST_CASE("full-network gradients match central finite differences") {
  // Width-8 desk model, 1e-3 relative tolerance, spot-checked entries.
  ClassifierConfig cfg;
  cfg.input_size = 8;
  cfg.block_channels = {4, 8};
  cfg.head_width = 8;
  cfg.num_classes = 3;
  cfg.rng_seed = 31;
  ClassifierModel m = init_classifier(cfg);
  std::mt19937_64 rng(33);
  std::normal_distribution<double> norm(0.0, 0.2);
  for (int r = 0; r < m.fc3.weights.rows(); ++r)
    for (int c = 0; c < m.fc3.weights.cols(); ++c) m.fc3.weights(r, c) = norm(rng);
  quantize_to_f32(m);

  const LabeledImage img = random_image(8, 35, 1);
  ClassifierGradients g;
  classifier_loss_and_gradient(m, img, g);

  auto loss_at = [&]() {
    ClassifierGradients scratch;
    return classifier_loss_and_gradient(m, img, scratch);
  };
  const double h = 1e-5;
  auto check_entry = [&](double* param, double analytic) {
    const double saved = *param;
    *param = saved + h;
    const double up = loss_at();
    *param = saved - h;
    const double down = loss_at();
    *param = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
    CHECK(std::abs(analytic - fd) / denom < 1e-3);
  };

  std::uniform_int_distribution<int> pick_row, pick_col;
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    auto& W = m.blocks[b].weights;
    for (int t = 0; t < 20; ++t) {
      const int r = std::uniform_int_distribution<int>(0, static_cast<int>(W.rows()) - 1)(rng);
      const int c = std::uniform_int_distribution<int>(0, static_cast<int>(W.cols()) - 1)(rng);
      check_entry(&W(r, c), g.blocks[b].weights(r, c));
    }
    for (int r = 0; r < m.blocks[b].bias.size(); ++r)
      check_entry(&m.blocks[b].bias(r), g.blocks[b].bias(r));
  }
  for (auto [layer, grad] : {std::pair{&m.fc1, &g.fc1}, {&m.fc2, &g.fc2}, {&m.fc3, &g.fc3}}) {
    auto& W = layer->weights;
    for (int t = 0; t < 15; ++t) {
      const int r = std::uniform_int_distribution<int>(0, static_cast<int>(W.rows()) - 1)(rng);
      const int c = std::uniform_int_distribution<int>(0, static_cast<int>(W.cols()) - 1)(rng);
      check_entry(&W(r, c), grad->weights(r, c));
    }
    check_entry(&layer->bias(0), grad->bias(0));
  }
}

TEST_CASE("training is deterministic and rejects class mismatches") {
  const ImageDataset ds = generate_blob_dataset(2, 8, 16, 41);
  const DatasetSplits s = split_dataset(ds, 0.75, 0.25, 41);
  ClassifierConfig cfg = desk_config();
  cfg.num_classes = 2;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  const ClassifierModel a = train_classifier(s.train, s.val, cfg);
  const ClassifierModel b = train_classifier(s.train, s.val, cfg);
  CHECK(a.blocks[0].weights == b.blocks[0].weights);
  CHECK(a.fc3.weights == b.fc3.weights);

  ClassifierConfig bad = cfg;
  bad.num_classes = 5;
  CHECK_THROWS_AS(train_classifier(s.train, s.val, bad), ClassMismatchError);
}

TEST_CASE("checkpoint round-trip is bit-identical") {
  const ClassifierModel m = init_classifier(desk_config());
  const fs::path path = fs::temp_directory_path() / "caes_test_classifier.ckpt";
  save_classifier(m, path);
  const ClassifierModel loaded = load_classifier(path);
  CHECK(loaded.input_size == m.input_size);
  CHECK(loaded.num_classes == m.num_classes);
  REQUIRE(loaded.blocks.size() == m.blocks.size());
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    CHECK(loaded.blocks[b].weights == m.blocks[b].weights);
    CHECK(loaded.blocks[b].bias == m.blocks[b].bias);
  }
  CHECK(loaded.fc1.weights == m.fc1.weights);
  CHECK(loaded.fc2.weights == m.fc2.weights);
  CHECK(loaded.fc3.weights == m.fc3.weights);

  // A flipped payload byte must be detected.
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  std::string line;
  std::getline(f, line);
  const auto pos = static_cast<std::streamoff>(line.size()) + 1 + 4;
  f.seekg(pos);
  char byte;
  f.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0x55);
  f.seekp(pos);
  f.write(&byte, 1);
  f.close();
  CHECK_THROWS_AS(load_classifier(path), ChecksumMismatchError);
  fs::remove(path);
}
