#include "caes/ncc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caes/adam.hpp"
#include "caes/checkpoint.hpp"

namespace caes {

namespace {

constexpr int kNccVersion = 1;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_dims(const NccModel& m) {
  const int h = m.hidden;
  if (m.embed_w1.rows() != h || m.embed_w1.cols() != 2 || m.embed_b1.size() != h ||
      m.embed_w2.rows() != h || m.embed_w2.cols() != h || m.embed_b2.size() != h ||
      m.head_w1.rows() != h || m.head_w1.cols() != h || m.head_b1.size() != h ||
      m.head_w2.size() != h)
    throw DimensionMismatchError("NccModel: layer dimensions do not chain 2->h->h->h->1");
}

Eigen::MatrixXd pair_matrix(const SamplePairSet& p) {
  if (p.xs.size() != p.ys.size() || p.xs.size() < 2)
    throw DimensionMismatchError("pair " + p.id + ": needs matched xs/ys with n >= 2");
  Eigen::MatrixXd X(p.xs.size(), 2);
  for (std::size_t i = 0; i < p.xs.size(); ++i) {
    X(static_cast<Eigen::Index>(i), 0) = p.xs[i];
    X(static_cast<Eigen::Index>(i), 1) = p.ys[i];
  }
  return X;
}

}  // namespace

std::size_t NccModel::parameter_count() const {
  const std::size_t h = static_cast<std::size_t>(hidden);
  return h * 2 + h + h * h + h + h * h + h + h + 1;
}

NccModel init_ncc(int hidden, std::uint64_t seed) {
  NccModel m;
  m.hidden = hidden;
  m.version = kNccVersion;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  auto he = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd w(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(cols));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = scale * norm(rng);
    return w;
  };
  m.embed_w1 = he(hidden, 2);
  m.embed_b1 = Eigen::VectorXd::Zero(hidden);
  m.embed_w2 = he(hidden, hidden);
  m.embed_b2 = Eigen::VectorXd::Zero(hidden);
  m.head_w1 = he(hidden, hidden);
  m.head_b1 = Eigen::VectorXd::Zero(hidden);
  m.head_w2 = Eigen::RowVectorXd::Zero(hidden);
  m.head_b2 = 0.0;
  quantize_to_f32(m);
  return m;
}

void quantize_to_f32(NccModel& m) {
  auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto* mat : {&m.embed_w1, &m.embed_w2, &m.head_w1})
    *mat = mat->unaryExpr(q);
  for (auto* vec : {&m.embed_b1, &m.embed_b2, &m.head_b1})
    *vec = vec->unaryExpr(q);
  m.head_w2 = m.head_w2.unaryExpr(q);
  m.head_b2 = q(m.head_b2);
}

double ncc_forward(const NccModel& m, const SamplePairSet& p) {
  check_dims(m);
  const Eigen::MatrixXd X = pair_matrix(p);
  const Eigen::Index n = X.rows();

  Eigen::MatrixXd h1 = (X * m.embed_w1.transpose()).rowwise() + m.embed_b1.transpose();
  h1 = h1.cwiseMax(0.0);
  Eigen::MatrixXd h2 = (h1 * m.embed_w2.transpose()).rowwise() + m.embed_b2.transpose();
  h2 = h2.cwiseMax(0.0);
  const Eigen::VectorXd pooled = h2.colwise().sum().transpose() / static_cast<double>(n);

  Eigen::VectorXd h3 = (m.head_w1 * pooled + m.head_b1).cwiseMax(0.0);
  const double z = m.head_w2.dot(h3) + m.head_b2;
  return sigmoid(z);
}

NccScore ncc_score_symmetric(const NccModel& m, const SamplePairSet& p) {
  const double fwd = ncc_forward(m, p);
  const double rev = ncc_forward(m, p.swapped());
  return NccScore{0.5 * (fwd + 1.0 - rev), p.id};
}

double ncc_loss_and_gradient(const NccModel& m, const SamplePairSet& p, double label,
                             NccGradients& g, double dropout_rate, std::mt19937_64* rng) {
  check_dims(m);
  const Eigen::MatrixXd X = pair_matrix(p);
  const Eigen::Index n = X.rows();
  const int h = m.hidden;

  const bool drop = dropout_rate > 0.0 && rng != nullptr;
  const double keep = 1.0 - dropout_rate;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto mask_mat = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd d(rows, cols);
    if (!drop) {
      d.setOnes();
      return d;
    }
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        d(r, c) = (u01(*rng) < keep) ? 1.0 / keep : 0.0;
    return d;
  };
  auto relu_step = [](double v) { return v > 0.0 ? 1.0 : 0.0; };

  // Forward, keeping pre-activations and dropout masks for the backward pass.
  const Eigen::MatrixXd z1 =
      (X * m.embed_w1.transpose()).rowwise() + m.embed_b1.transpose();
  const Eigen::MatrixXd d1 = mask_mat(n, h);
  const Eigen::MatrixXd a1 = z1.cwiseMax(0.0).cwiseProduct(d1);

  const Eigen::MatrixXd z2 =
      (a1 * m.embed_w2.transpose()).rowwise() + m.embed_b2.transpose();
  const Eigen::MatrixXd d2 = mask_mat(n, h);
  const Eigen::MatrixXd a2 = z2.cwiseMax(0.0).cwiseProduct(d2);

  const Eigen::VectorXd pooled = a2.colwise().sum().transpose() / static_cast<double>(n);

  const Eigen::VectorXd z3 = m.head_w1 * pooled + m.head_b1;
  const Eigen::VectorXd d3 = mask_mat(h, 1);
  const Eigen::VectorXd a3 = z3.cwiseMax(0.0).cwiseProduct(d3);

  const double z4 = m.head_w2.dot(a3) + m.head_b2;
  const double prob = sigmoid(z4);

  const double eps = 1e-12;
  const double loss = -(label * std::log(std::max(prob, eps)) +
                        (1.0 - label) * std::log(std::max(1.0 - prob, eps)));

  // Backward.
  const double dz4 = prob - label;
  g.head_w2 = dz4 * a3.transpose();
  g.head_b2 = dz4;

  const Eigen::VectorXd da3 = dz4 * m.head_w2.transpose();
  const Eigen::VectorXd dz3 =
      da3.cwiseProduct(d3).cwiseProduct(z3.unaryExpr(relu_step));
  g.head_w1 = dz3 * pooled.transpose();
  g.head_b1 = dz3;

  const Eigen::VectorXd dpooled = m.head_w1.transpose() * dz3;
  const Eigen::MatrixXd da2 =
      Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)) * dpooled.transpose();
  const Eigen::MatrixXd dz2 =
      da2.cwiseProduct(d2).cwiseProduct(z2.unaryExpr(relu_step));
  g.embed_w2 = dz2.transpose() * a1;
  g.embed_b2 = dz2.colwise().sum().transpose();

  const Eigen::MatrixXd da1 = dz2 * m.embed_w2;
  const Eigen::MatrixXd dz1 =
      da1.cwiseProduct(d1).cwiseProduct(z1.unaryExpr(relu_step));
  g.embed_w1 = dz1.transpose() * X;
  g.embed_b1 = dz1.colwise().sum().transpose();

  return loss;
}

namespace {

double label_of(const SamplePairSet& p) {
  switch (p.direction) {
    case Direction::XtoY: return 1.0;
    case Direction::YtoX: return 0.0;
    default: throw UnlabeledPairError("pair " + p.id + " has no direction label");
  }
}

struct HeldoutStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

HeldoutStats heldout_stats(const NccModel& m, const std::vector<SamplePairSet>& corpus,
                           const std::vector<std::size_t>& idx) {
  HeldoutStats s;
  const double eps = 1e-12;
  for (std::size_t i : idx) {
    const double label = label_of(corpus[i]);
    const double p = ncc_forward(m, corpus[i]);
    s.loss += -(label * std::log(std::max(p, eps)) +
                (1.0 - label) * std::log(std::max(1.0 - p, eps)));
    // Accuracy uses the symmetric score, matching the benchmark metric.
    const double ps = ncc_score_symmetric(m, corpus[i]).p_xy;
    if ((ps > 0.5) == (label > 0.5) && ps != 0.5) s.accuracy += 1.0;
  }
  const double n = static_cast<double>(idx.size());
  s.loss /= n;
  s.accuracy /= n;
  return s;
}

}  // namespace

NccModel train_ncc(const std::vector<SamplePairSet>& corpus, const NccTrainConfig& cfg,
                   NccTrainHistory* history) {
  if (corpus.empty()) throw EmptyCorpusError("train_ncc: empty corpus");
  if (cfg.epochs < 1 || cfg.batch_pairs < 1 || cfg.learning_rate <= 0.0)
    throw Error("train_ncc: invalid training config");
  for (const auto& p : corpus) label_of(p);  // rejects unlabeled pairs up front

  std::mt19937_64 rng(cfg.rng_seed);
  NccModel model = init_ncc(cfg.hidden, rng());

  // Seeded split: 10% held out (at least one pair).
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_held = std::max<std::size_t>(1, corpus.size() / 10);
  std::vector<std::size_t> held(order.begin(), order.begin() + n_held);
  std::vector<std::size_t> train(order.begin() + n_held, order.end());
  if (train.empty()) throw EmptyCorpusError("train_ncc: corpus too small to split");

  const int h = model.hidden;
  AdamState st_ew1(h, 2), st_eb1(h, 1), st_ew2(h, h), st_eb2(h, 1);
  AdamState st_hw1(h, h), st_hb1(h, 1), st_hw2(1, h), st_hb2(1, 1);
  int step = 0;

  NccTrainHistory hist;
  {
    const HeldoutStats s0 = heldout_stats(model, corpus, held);
    hist.heldout_loss.push_back(s0.loss);
    hist.best_accuracy = -1.0;
  }
  NccModel best = model;

  NccGradients g;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_pairs) {
      const std::size_t end = std::min(train.size(), start + cfg.batch_pairs);
      const double scale = 1.0 / static_cast<double>(end - start);

      Eigen::MatrixXd gw1 = Eigen::MatrixXd::Zero(h, 2), gw2 = Eigen::MatrixXd::Zero(h, h);
      Eigen::MatrixXd gw3 = Eigen::MatrixXd::Zero(h, h);
      Eigen::VectorXd gb1 = Eigen::VectorXd::Zero(h), gb2 = Eigen::VectorXd::Zero(h);
      Eigen::VectorXd gb3 = Eigen::VectorXd::Zero(h);
      Eigen::RowVectorXd gw4 = Eigen::RowVectorXd::Zero(h);
      double gb4 = 0.0;

      for (std::size_t bi = start; bi < end; ++bi) {
        const SamplePairSet& p = corpus[train[bi]];
        ncc_loss_and_gradient(model, p, label_of(p), g, cfg.dropout_rate, &rng);
        gw1 += g.embed_w1; gb1 += g.embed_b1;
        gw2 += g.embed_w2; gb2 += g.embed_b2;
        gw3 += g.head_w1;  gb3 += g.head_b1;
        gw4 += g.head_w2;  gb4 += g.head_b2;
      }

      ++step;
      adam_update(model.embed_w1, gw1 * scale, st_ew1, step, cfg.learning_rate);
      adam_update(model.embed_b1, gb1 * scale, st_eb1, step, cfg.learning_rate);
      adam_update(model.embed_w2, gw2 * scale, st_ew2, step, cfg.learning_rate);
      adam_update(model.embed_b2, gb2 * scale, st_eb2, step, cfg.learning_rate);
      adam_update(model.head_w1, gw3 * scale, st_hw1, step, cfg.learning_rate);
      adam_update(model.head_b1, gb3 * scale, st_hb1, step, cfg.learning_rate);
      Eigen::MatrixXd w4 = model.head_w2, gw4m = gw4 * scale;
      adam_update(w4, gw4m, st_hw2, step, cfg.learning_rate);
      model.head_w2 = w4;
      Eigen::MatrixXd b4(1, 1), gb4m(1, 1);
      b4(0, 0) = model.head_b2;
      gb4m(0, 0) = gb4 * scale;
      adam_update(b4, gb4m, st_hb2, step, cfg.learning_rate);
      model.head_b2 = b4(0, 0);
    }

    const HeldoutStats s = heldout_stats(model, corpus, held);
    hist.heldout_loss.push_back(s.loss);
    hist.heldout_accuracy.push_back(s.accuracy);
    if (s.accuracy > hist.best_accuracy) {
      hist.best_accuracy = s.accuracy;
      hist.best_loss = s.loss;
      hist.best_epoch = epoch;
      best = model;
    }
  }

  quantize_to_f32(best);
  if (history) *history = hist;
  return best;
}

double evaluate_weighted_accuracy(const NccModel& m, const std::vector<SamplePairSet>& pairs) {
  if (pairs.empty()) throw EmptyInputError("evaluate_weighted_accuracy: no pairs");
  double num = 0.0, den = 0.0;
  for (const auto& p : pairs) {
    const double label = label_of(p);
    den += p.weight;
    double score;
    try {
      score = ncc_score_symmetric(m, standardize_pair(p)).p_xy;
    } catch (const ZeroVarianceError&) {
      continue;  // undecidable pair counts as incorrect
    }
    if (score == 0.5) continue;  // tie counts as incorrect
    if ((score > 0.5) == (label > 0.5)) num += p.weight;
  }
  if (den == 0.0) throw EmptyInputError("evaluate_weighted_accuracy: zero total weight");
  return num / den;
}

void save_ncc(const NccModel& m, const std::filesystem::path& path) {
  std::vector<float> payload;
  payload.reserve(m.parameter_count());
  auto push_mat = [&payload](const Eigen::MatrixXd& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c)
        payload.push_back(static_cast<float>(mat(r, c)));
  };
  push_mat(m.embed_w1);
  push_mat(m.embed_b1);
  push_mat(m.embed_w2);
  push_mat(m.embed_b2);
  push_mat(m.head_w1);
  push_mat(m.head_b1);
  push_mat(m.head_w2);
  payload.push_back(static_cast<float>(m.head_b2));

  save_checkpoint(path, "ncc", m.version, {{"hidden", m.hidden}}, payload);
}

NccModel load_ncc(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path, "ncc", kNccVersion);
  NccModel m;
  m.hidden = ckpt.manifest.at("hidden").get<int>();
  m.version = kNccVersion;
  if (ckpt.payload.size() != m.parameter_count())
    throw ChecksumMismatchError(path.string() + ": payload size does not match dims");

  std::size_t pos = 0;
  auto read_mat = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd mat(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        mat(r, c) = static_cast<double>(ckpt.payload[pos++]);
    return mat;
  };
  const int h = m.hidden;
  m.embed_w1 = read_mat(h, 2);
  m.embed_b1 = read_mat(h, 1);
  m.embed_w2 = read_mat(h, h);
  m.embed_b2 = read_mat(h, 1);
  m.head_w1 = read_mat(h, h);
  m.head_b1 = read_mat(h, 1);
  m.head_w2 = read_mat(1, h);
  m.head_b2 = static_cast<double>(ckpt.payload[pos++]);
  return m;
}

}  // namespace caes
