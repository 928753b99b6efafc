#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "caes/errors.hpp"
#include "caes/imaging.hpp"

namespace caes {

// Activation tensors are stored channels-as-rows: (channels) x (H*W).
using Activation = Eigen::MatrixXd;

struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  Eigen::MatrixXd weights;  // out_channels x in_channels*9 (3x3 kernels)
  Eigen::VectorXd bias;
};

struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

// Convolutional classifier: a stack of (conv3x3 pad1 -> ReLU -> maxpool2)
// blocks, global average pooling over the last block's L feature maps, and a
// two-layer fully connected head to K logits.
struct ClassifierModel {
  int input_size = 224;
  int num_classes = 0;
  int head_width = 512;
  int version = 1;
  std::vector<ConvLayer> blocks;
  DenseLayer fc1, fc2, fc3;  // L->W, W->W, W->K

  int feature_maps() const { return blocks.back().out_channels; }
  int feature_size() const { return input_size >> blocks.size(); }
  std::size_t parameter_count() const;
};

struct ClassifierConfig {
  int input_size = 224;
  std::vector<int> block_channels = {64, 128, 256, 512};
  int head_width = 512;
  int num_classes = 6;
  int epochs = 30;
  double learning_rate = 1e-4;
  int batch_size = 16;
  std::uint64_t rng_seed = 0;
};

ClassifierModel init_classifier(const ClassifierConfig& cfg);
void quantize_to_f32(ClassifierModel& m);

enum class Variant { original, object_only, context_only };
std::string to_string(Variant v);

struct FeatureVector {
  std::vector<double> values;  // length L, pooled last-block activations
  std::string image_id;
  Variant variant = Variant::original;
};

// Last-block feature maps (L x Hf*Wf) for one image.
Activation forward_feature_maps(const ClassifierModel& m, const LabeledImage& img);

// Logits from pooled features, and the gradient of one logit w.r.t. the
// pooled feature vector (the piece GradCAM needs).
Eigen::VectorXd head_logits(const ClassifierModel& m, const Eigen::VectorXd& pooled);
Eigen::VectorXd head_pooled_gradient(const ClassifierModel& m, const Eigen::VectorXd& pooled,
                                     int target_class);

FeatureVector extract_features(const ClassifierModel& m, const LabeledImage& img,
                               Variant variant = Variant::original);

double class_probability(const ClassifierModel& m, const LabeledImage& img, int target_class);
Eigen::VectorXd class_probabilities(const ClassifierModel& m, const LabeledImage& img);
int predicted_class(const ClassifierModel& m, const LabeledImage& img);

// Cross-entropy loss plus analytic gradients for one image; exposed for the
// finite-difference checks.
struct ClassifierGradients {
  std::vector<ConvLayer> blocks;
  DenseLayer fc1, fc2, fc3;
};
double classifier_loss_and_gradient(const ClassifierModel& m, const LabeledImage& img,
                                    ClassifierGradients& grads);

struct ClassifierTrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

// Adam training (paper recipe defaults: 30 epochs, lr 1e-4); returns the
// best-validation-accuracy checkpoint, quantized to float32.
ClassifierModel train_classifier(const ImageDataset& train, const ImageDataset& val,
                                 const ClassifierConfig& cfg,
                                 ClassifierTrainHistory* history = nullptr);

void save_classifier(const ClassifierModel& m, const std::filesystem::path& path);
ClassifierModel load_classifier(const std::filesystem::path& path);

}  // namespace caes
