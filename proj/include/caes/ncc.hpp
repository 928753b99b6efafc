#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "caes/errors.hpp"
#include "caes/pairs.hpp"

namespace caes {

// Neural Causation Coefficient: a permutation-invariant set classifier.
// Each (x_i, y_i) sample is embedded by a 2 -> h -> h MLP, the embeddings are
// mean-pooled, and an h -> h -> 1 head maps the pooled vector to the
// probability that X causes Y.
struct NccModel {
  int hidden = 100;
  int version = 1;

  Eigen::MatrixXd embed_w1, embed_w2;  // h x 2, h x h
  Eigen::VectorXd embed_b1, embed_b2;
  Eigen::MatrixXd head_w1;             // h x h
  Eigen::VectorXd head_b1;
  Eigen::RowVectorXd head_w2;          // 1 x h
  double head_b2 = 0.0;

  std::size_t parameter_count() const;
};

// He-initialized hidden layers; the final layer starts at zero so an
// untrained model outputs exactly 0.5.
NccModel init_ncc(int hidden, std::uint64_t seed);

// Rounds every parameter to its nearest float32 value, making checkpoint
// round-trips bit-exact.
void quantize_to_f32(NccModel& m);

struct NccTrainConfig {
  int epochs = 16;
  int batch_pairs = 32;
  double learning_rate = 2e-3;
  std::uint64_t rng_seed = 0;
  double dropout_rate = 0.1;
  int hidden = 100;
};

struct NccScore {
  double p_xy = 0.5;  // probability X -> Y, in [0,1]
  std::string pair_id;
};

// sigmoid(head(mean_i embed(x_i, y_i))). The pair must be standardized.
double ncc_forward(const NccModel& m, const SamplePairSet& p);

// Antisymmetrized score: 0.5 * (f(X,Y) + 1 - f(Y,X)), so that
// p(X,Y) + p(Y,X) == 1 exactly.
NccScore ncc_score_symmetric(const NccModel& m, const SamplePairSet& p);

struct NccGradients {
  Eigen::MatrixXd embed_w1, embed_w2, head_w1;
  Eigen::VectorXd embed_b1, embed_b2, head_b1;
  Eigen::RowVectorXd head_w2;
  double head_b2 = 0.0;
};

// Binary cross-entropy loss of one pair against label (XtoY=1, YtoX=0) and
// its analytic parameter gradients. dropout_rate > 0 applies inverted
// dropout to the hidden activations using rng; pass 0 for evaluation-mode
// gradients (the path checked against finite differences).
double ncc_loss_and_gradient(const NccModel& m, const SamplePairSet& p, double label,
                             NccGradients& grads, double dropout_rate = 0.0,
                             std::mt19937_64* rng = nullptr);

struct NccTrainHistory {
  std::vector<double> heldout_loss;      // index 0 = before any update
  std::vector<double> heldout_accuracy;  // per epoch, after updates
  int best_epoch = 0;                    // 1-based; 0 means no epoch improved
  double best_accuracy = 0.0;
  double best_loss = 0.0;
};

// Adam-trained NCC on a labeled, direction-balanced corpus of standardized
// pairs. 10% of the corpus (seeded split) is held out; the returned model is
// the best-held-out-accuracy checkpoint, quantized to float32.
NccModel train_ncc(const std::vector<SamplePairSet>& corpus, const NccTrainConfig& cfg,
                   NccTrainHistory* history = nullptr);

// Weight-normalized benchmark accuracy: a pair counts as correct when the
// symmetric score lands on the labeled side of 0.5; ties count as incorrect.
// Pairs are standardized internally; a constant marginal counts as incorrect.
double evaluate_weighted_accuracy(const NccModel& m, const std::vector<SamplePairSet>& pairs);

void save_ncc(const NccModel& m, const std::filesystem::path& path);
NccModel load_ncc(const std::filesystem::path& path);

}  // namespace caes
