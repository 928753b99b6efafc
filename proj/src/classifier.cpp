#include "caes/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "caes/adam.hpp"
#include "caes/checkpoint.hpp"

namespace caes {

namespace {

constexpr int kClassifierVersion = 1;

// Unfolds a (C) x (H*W) activation into the (C*9) x (H*W) matrix of 3x3
// neighborhoods (zero padding), so convolution becomes one GEMM.
Activation im2col(const Activation& in, int height, int width) {
  const int channels = static_cast<int>(in.rows());
  Activation col = Activation::Zero(static_cast<Eigen::Index>(channels) * 9,
                                    static_cast<Eigen::Index>(height) * width);
  for (int c = 0; c < channels; ++c) {
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        const Eigen::Index row = static_cast<Eigen::Index>(c) * 9 + (ky + 1) * 3 + (kx + 1);
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky;
          if (sy < 0 || sy >= height) continue;
          const int x_lo = std::max(0, -kx);
          const int x_hi = std::min(width, width - kx);
          for (int x = x_lo; x < x_hi; ++x)
            col(row, static_cast<Eigen::Index>(y) * width + x) =
                in(c, static_cast<Eigen::Index>(sy) * width + x + kx);
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: folds a (C*9) x (H*W) gradient back onto the input.
Activation col2im(const Activation& dcol, int channels, int height, int width) {
  Activation din = Activation::Zero(channels, static_cast<Eigen::Index>(height) * width);
  for (int c = 0; c < channels; ++c) {
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        const Eigen::Index row = static_cast<Eigen::Index>(c) * 9 + (ky + 1) * 3 + (kx + 1);
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky;
          if (sy < 0 || sy >= height) continue;
          const int x_lo = std::max(0, -kx);
          const int x_hi = std::min(width, width - kx);
          for (int x = x_lo; x < x_hi; ++x)
            din(c, static_cast<Eigen::Index>(sy) * width + x + kx) +=
                dcol(row, static_cast<Eigen::Index>(y) * width + x);
        }
      }
    }
  }
  return din;
}

struct BlockCache {
  Activation col;           // im2col of the block input (training only)
  Activation pre;           // conv output before ReLU, C_out x (H*W)
  Activation out;           // after ReLU + 2x2 maxpool, C_out x (H/2*W/2)
  std::vector<Eigen::Index> argmax;  // source column in `pre` per pooled cell
  int in_height = 0, in_width = 0;
};

void run_block(const ConvLayer& layer, const Activation& input, int height, int width,
               BlockCache& cache, bool keep_col) {
  Activation col = im2col(input, height, width);
  cache.pre = layer.weights * col;
  cache.pre.colwise() += layer.bias;
  cache.in_height = height;
  cache.in_width = width;
  if (keep_col) cache.col = std::move(col);

  const int oh = height / 2, ow = width / 2;
  const int out_ch = layer.out_channels;
  cache.out.resize(out_ch, static_cast<Eigen::Index>(oh) * ow);
  cache.argmax.assign(static_cast<std::size_t>(out_ch) * oh * ow, 0);
  for (int c = 0; c < out_ch; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        Eigen::Index best_idx = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const Eigen::Index idx =
                static_cast<Eigen::Index>(2 * y + dy) * width + (2 * x + dx);
            const double v = std::max(0.0, cache.pre(c, idx));
            if (v > best) {
              best = v;
              best_idx = idx;
            }
          }
        }
        cache.out(c, static_cast<Eigen::Index>(y) * ow + x) = best;
        cache.argmax[(static_cast<std::size_t>(c) * oh + y) * ow + x] = best_idx;
      }
    }
  }
}

Activation image_to_activation(const ClassifierModel& m, const LabeledImage& img) {
  if (img.height != m.input_size || img.width != m.input_size)
    throw SizeMismatchError("image " + img.id + ": expected " +
                            std::to_string(m.input_size) + "x" + std::to_string(m.input_size));
  Activation in(3, static_cast<Eigen::Index>(img.height) * img.width);
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < plane; ++p)
      in(c, static_cast<Eigen::Index>(p)) = img.pixels[c * plane + p];
  return in;
}

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Eigen::VectorXd gap;
  Eigen::VectorXd z1, a1, z2, a2, logits;
};

void forward_full(const ClassifierModel& m, const LabeledImage& img, ForwardCache& cache,
                  bool keep_cols) {
  Activation cur = image_to_activation(m, img);
  int side = m.input_size;
  cache.blocks.resize(m.blocks.size());
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    run_block(m.blocks[b], cur, side, side, cache.blocks[b], keep_cols);
    cur = cache.blocks[b].out;
    side /= 2;
  }
  const Activation& last = cache.blocks.back().out;
  cache.gap = last.rowwise().sum() / static_cast<double>(last.cols());

  cache.z1 = m.fc1.weights * cache.gap + m.fc1.bias;
  cache.a1 = cache.z1.cwiseMax(0.0);
  cache.z2 = m.fc2.weights * cache.a1 + m.fc2.bias;
  cache.a2 = cache.z2.cwiseMax(0.0);
  cache.logits = m.fc3.weights * cache.a2 + m.fc3.bias;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double zmax = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - zmax).exp();
  return e / e.sum();
}

}  // namespace

std::size_t ClassifierModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks)
    n += static_cast<std::size_t>(b.weights.size()) + static_cast<std::size_t>(b.bias.size());
  for (const auto* fc : {&fc1, &fc2, &fc3})
    n += static_cast<std::size_t>(fc->weights.size()) +
         static_cast<std::size_t>(fc->bias.size());
  return n;
}

ClassifierModel init_classifier(const ClassifierConfig& cfg) {
  if (cfg.block_channels.empty() || cfg.num_classes < 2 || cfg.head_width < 1)
    throw Error("init_classifier: invalid config");
  if (cfg.input_size % (1 << cfg.block_channels.size()) != 0)
    throw Error("init_classifier: input_size must be divisible by 2^blocks");

  ClassifierModel m;
  m.input_size = cfg.input_size;
  m.num_classes = cfg.num_classes;
  m.head_width = cfg.head_width;
  m.version = kClassifierVersion;

  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  auto he = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd w(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(cols));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = scale * norm(rng);
    return w;
  };

  int in_ch = 3;
  for (int out_ch : cfg.block_channels) {
    ConvLayer layer;
    layer.in_channels = in_ch;
    layer.out_channels = out_ch;
    layer.weights = he(out_ch, static_cast<Eigen::Index>(in_ch) * 9);
    layer.bias = Eigen::VectorXd::Zero(out_ch);
    m.blocks.push_back(std::move(layer));
    in_ch = out_ch;
  }

  const int L = m.feature_maps();
  m.fc1 = {he(cfg.head_width, L), Eigen::VectorXd::Zero(cfg.head_width)};
  m.fc2 = {he(cfg.head_width, cfg.head_width), Eigen::VectorXd::Zero(cfg.head_width)};
  // Zero final layer: an untrained model outputs the uniform distribution.
  m.fc3 = {Eigen::MatrixXd::Zero(cfg.num_classes, cfg.head_width),
           Eigen::VectorXd::Zero(cfg.num_classes)};
  quantize_to_f32(m);
  return m;
}

void quantize_to_f32(ClassifierModel& m) {
  auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto& b : m.blocks) {
    b.weights = b.weights.unaryExpr(q);
    b.bias = b.bias.unaryExpr(q);
  }
  for (auto* fc : {&m.fc1, &m.fc2, &m.fc3}) {
    fc->weights = fc->weights.unaryExpr(q);
    fc->bias = fc->bias.unaryExpr(q);
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::original: return "original";
    case Variant::object_only: return "object_only";
    default: return "context_only";
  }
}

Activation forward_feature_maps(const ClassifierModel& m, const LabeledImage& img) {
  ForwardCache cache;
  forward_full(m, img, cache, false);
  return cache.blocks.back().out;
}

Eigen::VectorXd head_logits(const ClassifierModel& m, const Eigen::VectorXd& pooled) {
  if (pooled.size() != m.feature_maps())
    throw SizeMismatchError("head_logits: pooled vector length mismatch");
  const Eigen::VectorXd a1 = (m.fc1.weights * pooled + m.fc1.bias).cwiseMax(0.0);
  const Eigen::VectorXd a2 = (m.fc2.weights * a1 + m.fc2.bias).cwiseMax(0.0);
  return m.fc3.weights * a2 + m.fc3.bias;
}

Eigen::VectorXd head_pooled_gradient(const ClassifierModel& m, const Eigen::VectorXd& pooled,
                                     int target_class) {
  if (target_class < 0 || target_class >= m.num_classes)
    throw SizeMismatchError("head_pooled_gradient: class index out of range");
  const Eigen::VectorXd z1 = m.fc1.weights * pooled + m.fc1.bias;
  const Eigen::VectorXd a1 = z1.cwiseMax(0.0);
  const Eigen::VectorXd z2 = m.fc2.weights * a1 + m.fc2.bias;

  auto relu_step = [](double v) { return v > 0.0 ? 1.0 : 0.0; };
  const Eigen::VectorXd da2 = m.fc3.weights.row(target_class).transpose();
  const Eigen::VectorXd dz2 = da2.cwiseProduct(z2.unaryExpr(relu_step));
  const Eigen::VectorXd da1 = m.fc2.weights.transpose() * dz2;
  const Eigen::VectorXd dz1 = da1.cwiseProduct(z1.unaryExpr(relu_step));
  return m.fc1.weights.transpose() * dz1;
}

FeatureVector extract_features(const ClassifierModel& m, const LabeledImage& img,
                               Variant variant) {
  const Activation maps = forward_feature_maps(m, img);
  const Eigen::VectorXd gap = maps.rowwise().sum() / static_cast<double>(maps.cols());
  FeatureVector fv;
  fv.values.assign(gap.data(), gap.data() + gap.size());
  fv.image_id = img.id;
  fv.variant = variant;
  return fv;
}

Eigen::VectorXd class_probabilities(const ClassifierModel& m, const LabeledImage& img) {
  ForwardCache cache;
  forward_full(m, img, cache, false);
  return softmax(cache.logits);
}

double class_probability(const ClassifierModel& m, const LabeledImage& img, int target_class) {
  if (target_class < 0 || target_class >= m.num_classes)
    throw SizeMismatchError("class_probability: class index out of range");
  return class_probabilities(m, img)(target_class);
}

int predicted_class(const ClassifierModel& m, const LabeledImage& img) {
  ForwardCache cache;
  forward_full(m, img, cache, false);
  Eigen::Index best;
  cache.logits.maxCoeff(&best);
  return static_cast<int>(best);
}

double classifier_loss_and_gradient(const ClassifierModel& m, const LabeledImage& img,
                                    ClassifierGradients& g) {
  ForwardCache cache;
  forward_full(m, img, cache, true);
  const Eigen::VectorXd probs = softmax(cache.logits);
  const double loss = -std::log(std::max(probs(img.label), 1e-12));

  auto relu_step = [](double v) { return v > 0.0 ? 1.0 : 0.0; };

  Eigen::VectorXd dlogits = probs;
  dlogits(img.label) -= 1.0;

  g.fc3.weights = dlogits * cache.a2.transpose();
  g.fc3.bias = dlogits;
  const Eigen::VectorXd dz2 =
      (m.fc3.weights.transpose() * dlogits).cwiseProduct(cache.z2.unaryExpr(relu_step));
  g.fc2.weights = dz2 * cache.a1.transpose();
  g.fc2.bias = dz2;
  const Eigen::VectorXd dz1 =
      (m.fc2.weights.transpose() * dz2).cwiseProduct(cache.z1.unaryExpr(relu_step));
  g.fc1.weights = dz1 * cache.gap.transpose();
  g.fc1.bias = dz1;
  const Eigen::VectorXd dgap = m.fc1.weights.transpose() * dz1;

  // Backward through GAP onto the last block's pooled output.
  const Activation& last = cache.blocks.back().out;
  Activation dout = (dgap / static_cast<double>(last.cols())) *
                    Eigen::RowVectorXd::Ones(last.cols());

  g.blocks.resize(m.blocks.size());
  for (int b = static_cast<int>(m.blocks.size()) - 1; b >= 0; --b) {
    const BlockCache& bc = cache.blocks[static_cast<std::size_t>(b)];
    const ConvLayer& layer = m.blocks[static_cast<std::size_t>(b)];
    const int oh = bc.in_height / 2, ow = bc.in_width / 2;

    // Unpool: route gradients to the argmax cell, gated by the ReLU.
    Activation dpre = Activation::Zero(layer.out_channels, bc.pre.cols());
    for (int c = 0; c < layer.out_channels; ++c) {
      for (int p = 0; p < oh * ow; ++p) {
        const Eigen::Index src = bc.argmax[(static_cast<std::size_t>(c) * oh * ow) + p];
        if (bc.pre(c, src) > 0.0) dpre(c, src) += dout(c, p);
      }
    }

    ConvLayer& gb = g.blocks[static_cast<std::size_t>(b)];
    gb.in_channels = layer.in_channels;
    gb.out_channels = layer.out_channels;
    gb.weights = dpre * bc.col.transpose();
    gb.bias = dpre.rowwise().sum();

    if (b > 0) {
      const Activation dcol = layer.weights.transpose() * dpre;
      dout = col2im(dcol, layer.in_channels, bc.in_height, bc.in_width);
    }
  }
  return loss;
}

namespace {

double dataset_accuracy(const ClassifierModel& m, const ImageDataset& ds) {
  if (ds.images.empty()) return 0.0;
  int correct = 0;
  for (const auto& img : ds.images)
    if (predicted_class(m, img) == img.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.images.size());
}

}  // namespace

ClassifierModel train_classifier(const ImageDataset& train, const ImageDataset& val,
                                 const ClassifierConfig& cfg,
                                 ClassifierTrainHistory* history) {
  if (train.class_names != val.class_names)
    throw ClassMismatchError("train/val class names differ");
  if (train.num_classes() != cfg.num_classes)
    throw ClassMismatchError("dataset classes != config num_classes");
  if (train.images.empty()) throw EmptyClassError("train_classifier: empty training set");

  std::mt19937_64 rng(cfg.rng_seed);
  ClassifierModel model = init_classifier(cfg);

  std::vector<AdamState> conv_w, conv_b;
  for (const auto& b : model.blocks) {
    conv_w.emplace_back(b.weights.rows(), b.weights.cols());
    conv_b.emplace_back(b.bias.size(), 1);
  }
  AdamState fc1_w(model.fc1.weights.rows(), model.fc1.weights.cols()),
      fc1_b(model.fc1.bias.size(), 1);
  AdamState fc2_w(model.fc2.weights.rows(), model.fc2.weights.cols()),
      fc2_b(model.fc2.bias.size(), 1);
  AdamState fc3_w(model.fc3.weights.rows(), model.fc3.weights.cols()),
      fc3_b(model.fc3.bias.size(), 1);

  std::vector<std::size_t> order(train.images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  ClassifierTrainHistory hist;
  hist.best_val_accuracy = -1.0;
  ClassifierModel best = model;
  int step = 0;

  ClassifierGradients g;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);

      std::vector<Eigen::MatrixXd> sum_cw;
      std::vector<Eigen::VectorXd> sum_cb;
      for (const auto& b : model.blocks) {
        sum_cw.push_back(Eigen::MatrixXd::Zero(b.weights.rows(), b.weights.cols()));
        sum_cb.push_back(Eigen::VectorXd::Zero(b.bias.size()));
      }
      Eigen::MatrixXd s1w = Eigen::MatrixXd::Zero(model.fc1.weights.rows(), model.fc1.weights.cols());
      Eigen::MatrixXd s2w = Eigen::MatrixXd::Zero(model.fc2.weights.rows(), model.fc2.weights.cols());
      Eigen::MatrixXd s3w = Eigen::MatrixXd::Zero(model.fc3.weights.rows(), model.fc3.weights.cols());
      Eigen::VectorXd s1b = Eigen::VectorXd::Zero(model.fc1.bias.size());
      Eigen::VectorXd s2b = Eigen::VectorXd::Zero(model.fc2.bias.size());
      Eigen::VectorXd s3b = Eigen::VectorXd::Zero(model.fc3.bias.size());

      for (std::size_t i = start; i < end; ++i) {
        epoch_loss += classifier_loss_and_gradient(model, train.images[order[i]], g);
        for (std::size_t b = 0; b < model.blocks.size(); ++b) {
          sum_cw[b] += g.blocks[b].weights;
          sum_cb[b] += g.blocks[b].bias;
        }
        s1w += g.fc1.weights; s1b += g.fc1.bias;
        s2w += g.fc2.weights; s2b += g.fc2.bias;
        s3w += g.fc3.weights; s3b += g.fc3.bias;
      }

      ++step;
      for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        adam_update(model.blocks[b].weights, sum_cw[b] * scale, conv_w[b], step,
                    cfg.learning_rate);
        adam_update(model.blocks[b].bias, sum_cb[b] * scale, conv_b[b], step,
                    cfg.learning_rate);
      }
      adam_update(model.fc1.weights, s1w * scale, fc1_w, step, cfg.learning_rate);
      adam_update(model.fc1.bias, s1b * scale, fc1_b, step, cfg.learning_rate);
      adam_update(model.fc2.weights, s2w * scale, fc2_w, step, cfg.learning_rate);
      adam_update(model.fc2.bias, s2b * scale, fc2_b, step, cfg.learning_rate);
      adam_update(model.fc3.weights, s3w * scale, fc3_w, step, cfg.learning_rate);
      adam_update(model.fc3.bias, s3b * scale, fc3_b, step, cfg.learning_rate);
    }

    hist.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double val_acc = dataset_accuracy(model, val);
    hist.val_accuracy.push_back(val_acc);
    if (val_acc > hist.best_val_accuracy) {
      hist.best_val_accuracy = val_acc;
      hist.best_epoch = epoch;
      best = model;
    }
  }

  quantize_to_f32(best);
  if (history) *history = hist;
  return best;
}

void save_classifier(const ClassifierModel& m, const std::filesystem::path& path) {
  std::vector<float> payload;
  payload.reserve(m.parameter_count());
  auto push_mat = [&payload](const Eigen::MatrixXd& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c)
        payload.push_back(static_cast<float>(mat(r, c)));
  };
  std::vector<int> channels;
  for (const auto& b : m.blocks) {
    channels.push_back(b.out_channels);
    push_mat(b.weights);
    push_mat(b.bias);
  }
  for (const auto* fc : {&m.fc1, &m.fc2, &m.fc3}) {
    push_mat(fc->weights);
    push_mat(fc->bias);
  }

  save_checkpoint(path, "classifier", m.version,
                  {{"input_size", m.input_size},
                   {"block_channels", channels},
                   {"head_width", m.head_width},
                   {"num_classes", m.num_classes}},
                  payload);
}

ClassifierModel load_classifier(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path, "classifier", kClassifierVersion);
  ClassifierModel m;
  m.input_size = ckpt.manifest.at("input_size").get<int>();
  m.head_width = ckpt.manifest.at("head_width").get<int>();
  m.num_classes = ckpt.manifest.at("num_classes").get<int>();
  m.version = kClassifierVersion;
  const auto channels = ckpt.manifest.at("block_channels").get<std::vector<int>>();

  std::size_t pos = 0;
  auto read_mat = [&](Eigen::Index rows, Eigen::Index cols) {
    if (pos + static_cast<std::size_t>(rows * cols) > ckpt.payload.size())
      throw ChecksumMismatchError(path.string() + ": payload shorter than dims imply");
    Eigen::MatrixXd mat(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        mat(r, c) = static_cast<double>(ckpt.payload[pos++]);
    return mat;
  };

  int in_ch = 3;
  for (int out_ch : channels) {
    ConvLayer layer;
    layer.in_channels = in_ch;
    layer.out_channels = out_ch;
    layer.weights = read_mat(out_ch, static_cast<Eigen::Index>(in_ch) * 9);
    layer.bias = read_mat(out_ch, 1);
    m.blocks.push_back(std::move(layer));
    in_ch = out_ch;
  }
  const int L = m.feature_maps();
  m.fc1.weights = read_mat(m.head_width, L);
  m.fc1.bias = read_mat(m.head_width, 1);
  m.fc2.weights = read_mat(m.head_width, m.head_width);
  m.fc2.bias = read_mat(m.head_width, 1);
  m.fc3.weights = read_mat(m.num_classes, m.head_width);
  m.fc3.bias = read_mat(m.num_classes, 1);
  if (pos != ckpt.payload.size())
    throw ChecksumMismatchError(path.string() + ": payload size does not match dims");
  return m;
}

}  // namespace caes
