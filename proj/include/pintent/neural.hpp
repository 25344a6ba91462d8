#pragma once

// Tied-weight (denoising) autoencoders, greedy stacking, and a feed-forward
// network with a two-class softmax head trained by backpropagation.
//
// Shapes: an autoencoder over m visible and n hidden units stores W as n x m.
//   encode  y = s(W x + b)
//   decode  z = sigmoid(W^T y + b')
// Batches are row-major: each row of a matrix is one example.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/dataset.hpp"
#include "pintent/error.hpp"
#include "pintent/hyperparams.hpp"
#include "pintent/linalg.hpp"
#include "pintent/random.hpp"
#include "pintent/scaler.hpp"

namespace pintent {

inline double activate(Activation kind, double x) { return kind == Activation::sigmoid ? sigmoid(x) : std::max(0.0, x); }

template <typename Derived>
typename Derived::PlainObject activate(Activation kind, const Eigen::MatrixBase<Derived>& x) {
  typename Derived::PlainObject out = x;
  if (kind == Activation::sigmoid)
    out = out.unaryExpr([](double v) { return sigmoid(v); });
  else
    out = out.cwiseMax(0.0);
  return out;
}

/// Derivative expressed through the activation output y.
template <typename Derived>
typename Derived::PlainObject activation_slope(Activation kind, const Eigen::MatrixBase<Derived>& y) {
  if (kind == Activation::sigmoid) return (y.array() * (1.0 - y.array())).matrix();
  return (y.array() > 0.0).template cast<double>().matrix();
}

inline Matrix uniform_weights(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = cols > 0 ? 1.0 / std::sqrt(static_cast<double>(cols)) : 0.0;
  Matrix W(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) W(r, c) = rng.uniform(-bound, bound);
  return W;
}

namespace detail {

template <typename P>
void momentum_step(P& param, P& velocity, const P& grad, double rate, double momentum, double l2) {
  if (l2 != 0.0)
    velocity = momentum * velocity - rate * (grad + l2 * param);
  else
    velocity = momentum * velocity - rate * grad;
  param += velocity;
}

inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch, Rng& rng) {
  const auto order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch)));
  return out;
}

inline std::size_t iterations(std::size_t n, std::size_t batch, std::size_t epochs) {
  return epochs * ((n + batch - 1) / batch);
}

}  // namespace detail

struct TrainLog {
  std::vector<double> epoch_loss;  // mean training loss of each epoch
};

// ---------------------------------------------------------------------------
// Autoencoder layer

struct AutoencoderLayer {
  Matrix W;        // hidden x visible; the decoder uses W^T
  Vector b;        // hidden bias
  Vector b_prime;  // reconstruction bias
  Activation activation = Activation::sigmoid;

  std::size_t visible() const { return static_cast<std::size_t>(W.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(W.rows()); }
};

inline Vector encode(const AutoencoderLayer& layer, const Vector& x) {
  require_dims(x.size() == layer.W.cols(), "encode expects " + std::to_string(layer.W.cols()) + " inputs");
  return activate(layer.activation, Vector(layer.W * x + layer.b));
}

inline Vector decode(const AutoencoderLayer& layer, const Vector& y) {
  require_dims(y.size() == layer.W.rows(), "decode expects " + std::to_string(layer.W.rows()) + " hidden values");
  return activate(Activation::sigmoid, Vector(layer.W.transpose() * y + layer.b_prime));
}

inline Matrix encode_rows(const AutoencoderLayer& layer, const Matrix& X) {
  require_dims(X.cols() == layer.W.cols(), "encode expects " + std::to_string(layer.W.cols()) + " inputs");
  return activate(layer.activation, Matrix((X * layer.W.transpose()).rowwise() + layer.b.transpose()));
}

inline Matrix decode_rows(const AutoencoderLayer& layer, const Matrix& Y) {
  require_dims(Y.cols() == layer.W.rows(), "decode expects " + std::to_string(layer.W.rows()) + " hidden values");
  return activate(Activation::sigmoid, Matrix((Y * layer.W).rowwise() + layer.b_prime.transpose()));
}

/// Masking noise: each coordinate is zeroed independently with probability `level`.
inline Matrix corrupt(const Matrix& X, double level, Rng& rng) {
  require(level >= 0.0 && level <= 0.2, "noise level must be in [0, 0.2]");
  if (level == 0.0) return X;
  Matrix out = X;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      if (rng.bernoulli(level)) out(r, c) = 0.0;
  return out;
}

inline Vector corrupt(const Vector& x, double level, std::uint64_t seed) {
  Rng rng(seed);
  return corrupt(Matrix(x), level, rng).col(0);
}

/// E = 1/2 sum (t - z)^2
inline double reconstruction_loss(const Vector& t, const Vector& z) {
  require_dims(t.size() == z.size(), "reconstruction loss needs equal lengths");
  return 0.5 * (t - z).squaredNorm();
}

struct AeGradients {
  Matrix dW;
  Vector db;
  Vector db_prime;
  double loss = 0.0;  // mean reconstruction loss over the batch
};

/// Batch-averaged gradient of 1/2||x_orig - z||^2 where z reconstructs x_corr.
/// W collects both its encoder term (delta_H x^T) and its transposed decoder
/// term (y delta_O^T).
inline AeGradients ae_layer_gradients(const AutoencoderLayer& layer, const Matrix& X_orig, const Matrix& X_corr) {
  require_dims(X_orig.rows() == X_corr.rows() && X_orig.cols() == X_corr.cols(), "clean and corrupted batches differ in shape");
  require_dims(X_orig.cols() == layer.W.cols(), "batch width does not match the layer's visible units");
  AeGradients g;
  const auto B = X_orig.rows();
  g.dW = Matrix::Zero(layer.W.rows(), layer.W.cols());
  g.db = Vector::Zero(layer.b.size());
  g.db_prime = Vector::Zero(layer.b_prime.size());
  if (B == 0) return g;
  const Matrix Y = encode_rows(layer, X_corr);
  const Matrix Z = decode_rows(layer, Y);
  const Matrix diff = Z - X_orig;
  const Matrix dO = (diff.array() * Z.array() * (1.0 - Z.array())).matrix();                    // B x m
  const Matrix dH = ((dO * layer.W.transpose()).array() * activation_slope(layer.activation, Y).array()).matrix();  // B x n
  const double inv = 1.0 / static_cast<double>(B);
  g.dW = (dH.transpose() * X_corr + Y.transpose() * dO) * inv;
  g.db = dH.colwise().sum().transpose() * inv;
  g.db_prime = dO.colwise().sum().transpose() * inv;
  g.loss = 0.5 * diff.squaredNorm() * inv;
  return g;
}

inline AutoencoderLayer init_autoencoder(std::size_t visible, std::size_t hidden, Activation act, Rng& rng) {
  AutoencoderLayer layer;
  layer.W = uniform_weights(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(visible), rng);
  layer.b = Vector::Zero(static_cast<Eigen::Index>(hidden));
  layer.b_prime = Vector::Zero(static_cast<Eigen::Index>(visible));
  layer.activation = act;
  return layer;
}

/// Continues training `layer` in place with mini-batch SGD (momentum, L2 on W,
/// annealed rate); corruption is resampled for every presentation.
inline void train_ae_layer_inplace(AutoencoderLayer& layer, const Matrix& data, const Hyperparams& hp, Rng& rng,
                                   TrainLog* log = nullptr) {
  validate_training(hp);
  const auto n = static_cast<std::size_t>(data.rows());
  const std::size_t total = detail::iterations(n, hp.batch_size, hp.pretrain_epochs);
  Matrix vW = Matrix::Zero(layer.W.rows(), layer.W.cols());
  Vector vb = Vector::Zero(layer.b.size()), vbp = Vector::Zero(layer.b_prime.size());
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < hp.pretrain_epochs && n > 0; ++epoch) {
    double loss_sum = 0.0;
    for (const auto& idx : detail::minibatches(n, hp.batch_size, rng)) {
      const Matrix Xo = select_rows(data, idx);
      const Matrix Xc = corrupt(Xo, hp.noise, rng);
      const auto g = ae_layer_gradients(layer, Xo, Xc);
      const double rate = annealed_rate(hp.learning_rate, hp.annealing_delay, t++, total);
      detail::momentum_step(layer.W, vW, g.dW, rate, hp.momentum, hp.l2);
      detail::momentum_step(layer.b, vb, g.db, rate, hp.momentum, 0.0);
      detail::momentum_step(layer.b_prime, vbp, g.db_prime, rate, hp.momentum, 0.0);
      loss_sum += g.loss * static_cast<double>(idx.size());
    }
    const double loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(loss) || !layer.W.allFinite())
      throw DivergenceError("autoencoder training diverged at epoch " + std::to_string(epoch + 1));
    if (log) log->epoch_loss.push_back(loss);
  }
}

inline AutoencoderLayer train_ae_layer(const Matrix& data, std::size_t hidden, const Hyperparams& hp, std::uint64_t seed,
                                       TrainLog* log = nullptr) {
  Rng rng(seed);
  auto layer = init_autoencoder(static_cast<std::size_t>(data.cols()), hidden, hp.activation, rng);
  train_ae_layer_inplace(layer, data, hp, rng, log);
  return layer;
}

/// Greedy layer-wise pretraining: layer k learns to denoise the clean
/// encodings produced by layers 1..k-1.
inline std::vector<AutoencoderLayer> stack_pretrain(const Matrix& data, const std::vector<std::size_t>& sizes,
                                                    const Hyperparams& hp, std::uint64_t seed,
                                                    std::vector<TrainLog>* logs = nullptr) {
  require(!sizes.empty(), "need at least one layer size");
  std::vector<AutoencoderLayer> stack;
  Matrix input = data;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    TrainLog log;
    stack.push_back(train_ae_layer(input, sizes[k], hp, substream(seed, k), &log));
    if (logs) logs->push_back(std::move(log));
    if (k + 1 < sizes.size()) input = encode_rows(stack.back(), input);
  }
  return stack;
}

// ---------------------------------------------------------------------------
// Network with softmax head

inline Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out.row(i) = softmax(logits.row(i).transpose()).transpose();
  return out;
}

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;
  Activation activation = Activation::sigmoid;
};

struct Network {
  std::vector<DenseLayer> layers;
  Matrix out_W;  // 2 x last hidden; row 1 scores the buy class
  Vector out_b;
  std::vector<double> dropout;  // per hidden layer
  Scaler scaler;

  std::size_t input_dim() const {
    return static_cast<std::size_t>(layers.empty() ? out_W.cols() : layers.front().W.cols());
  }
};

inline DenseLayer to_dense(const AutoencoderLayer& ae) { return {ae.W, ae.b, ae.activation}; }

inline void attach_softmax_head(Network& net, Rng& rng) {
  const auto last = net.layers.empty() ? 0 : net.layers.back().W.rows();
  net.out_W = uniform_weights(2, last, rng);
  net.out_b = Vector::Zero(2);
  net.dropout.assign(net.layers.size(), 0.0);
}

inline Network network_from_stack(const std::vector<AutoencoderLayer>& stack, Rng& rng) {
  Network net;
  for (const auto& ae : stack) net.layers.push_back(to_dense(ae));
  attach_softmax_head(net, rng);
  return net;
}

/// Same architecture with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
inline Network random_network(std::size_t input_dim, const std::vector<std::size_t>& sizes, Activation act, Rng& rng) {
  Network net;
  std::size_t in = input_dim;
  for (auto h : sizes) {
    net.layers.push_back({uniform_weights(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(in), rng),
                          Vector::Zero(static_cast<Eigen::Index>(h)), act});
    in = h;
  }
  attach_softmax_head(net, rng);
  return net;
}

struct ForwardPass {
  std::vector<Matrix> activations;  // [0] = input, then each hidden layer after dropout
  std::vector<Matrix> masks;        // scaled keep masks, empty when dropout is off
  Matrix probabilities;             // B x 2
};

/// Forward pass on already-scaled rows. With `rng`, inverted dropout is applied
/// to every hidden layer whose rate is positive.
inline ForwardPass forward(const Network& net, const Matrix& X, Rng* rng = nullptr) {
  require_dims(static_cast<std::size_t>(X.cols()) == net.input_dim(),
               "network expects " + std::to_string(net.input_dim()) + " inputs, got " + std::to_string(X.cols()));
  ForwardPass fp;
  fp.activations.push_back(X);
  fp.masks.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Matrix H = activate(layer.activation, Matrix((fp.activations.back() * layer.W.transpose()).rowwise() + layer.b.transpose()));
    const double p = l < net.dropout.size() ? net.dropout[l] : 0.0;
    if (rng && p > 0.0) {
      Matrix mask(H.rows(), H.cols());
      const double keep_scale = 1.0 / (1.0 - p);
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = rng->bernoulli(p) ? 0.0 : keep_scale;
      H.array() *= mask.array();
      fp.masks[l] = std::move(mask);
    }
    fp.activations.push_back(std::move(H));
  }
  fp.probabilities = softmax_rows((fp.activations.back() * net.out_W.transpose()).rowwise() + net.out_b.transpose());
  return fp;
}

struct NetworkGradients {
  std::vector<Matrix> dW;
  std::vector<Vector> db;
  Matrix dOutW;
  Vector dOutB;
  Matrix output_delta;  // B x 2, (z - t) per example
  double loss = 0.0;    // mean cross-entropy -sum_i t_i ln z_i
};

inline Matrix one_hot(const std::vector<int>& labels) {
  Matrix T = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) T(static_cast<Eigen::Index>(i), labels[i] == 1 ? 1 : 0) = 1.0;
  return T;
}

/// Backpropagation of the mean cross-entropy through the softmax head and
/// every hidden layer, given a completed forward pass.
inline NetworkGradients backprop(const Network& net, const ForwardPass& fp, const Matrix& T) {
  const auto B = T.rows();
  NetworkGradients g;
  const Matrix& P = fp.probabilities;
  g.loss = 0.0;
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index k = 0; k < 2; ++k)
      if (T(i, k) > 0.0) g.loss -= T(i, k) * std::log(std::max(P(i, k), 1e-300));
  const double inv = B > 0 ? 1.0 / static_cast<double>(B) : 0.0;
  g.loss *= inv;
  g.output_delta = P - T;
  const Matrix delta_out = g.output_delta * inv;
  g.dOutW = delta_out.transpose() * fp.activations.back();
  g.dOutB = delta_out.colwise().sum().transpose();

  const std::size_t L = net.layers.size();
  g.dW.resize(L);
  g.db.resize(L);
  Matrix upstream = delta_out * net.out_W;  // dE/d(output of last hidden layer)
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = net.layers[l];
    const Matrix& A = fp.activations[l + 1];
    Matrix delta;
    if (fp.masks[l].size()) {
      // A = H .* mask, so the slope must come from H = A / mask where kept.
      const Matrix H = (fp.masks[l].array() > 0.0).select(A.array() / fp.masks[l].array(), 0.0);
      delta = (upstream.array() * fp.masks[l].array() * activation_slope(layer.activation, H).array()).matrix();
    } else {
      delta = (upstream.array() * activation_slope(layer.activation, A).array()).matrix();
    }
    g.dW[l] = delta.transpose() * fp.activations[l];
    g.db[l] = delta.colwise().sum().transpose();
    if (l > 0) upstream = delta * layer.W;
  }
  return g;
}

inline NetworkGradients network_gradients(const Network& net, const Matrix& X, const std::vector<int>& labels) {
  require_dims(static_cast<std::size_t>(X.rows()) == labels.size(), "label count does not match rows");
  return backprop(net, forward(net, X), one_hot(labels));
}

/// Supervised training of every layer on cross-entropy with dropout,
/// momentum, L2 on weights and the annealed learning rate. Rows of `train`
/// are passed through `net.scaler` first.
inline Network finetune(Network net, const Dataset& train, const Hyperparams& hp, std::uint64_t seed,
                        TrainLog* log = nullptr) {
  validate_training(hp);
  net.dropout.assign(net.layers.size(), hp.dropout);
  const Matrix X = net.scaler.apply(train.rows);
  const Matrix T = one_hot(train.labels);
  const auto n = static_cast<std::size_t>(X.rows());
  const std::size_t total = detail::iterations(n, hp.batch_size, hp.epochs);

  std::vector<Matrix> vW;
  std::vector<Vector> vb;
  for (const auto& l : net.layers) {
    vW.push_back(Matrix::Zero(l.W.rows(), l.W.cols()));
    vb.push_back(Vector::Zero(l.b.size()));
  }
  Matrix vOutW = Matrix::Zero(net.out_W.rows(), net.out_W.cols());
  Vector vOutB = Vector::Zero(net.out_b.size());

  Rng rng(seed);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < hp.epochs && n > 0; ++epoch) {
    double loss_sum = 0.0;
    for (const auto& idx : detail::minibatches(n, hp.batch_size, rng)) {
      const Matrix Xb = select_rows(X, idx);
      const Matrix Tb = select_rows(T, idx);
      const auto fp = forward(net, Xb, &rng);
      const auto g = backprop(net, fp, Tb);
      const double rate = annealed_rate(hp.learning_rate, hp.annealing_delay, t++, total);
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        detail::momentum_step(net.layers[l].W, vW[l], g.dW[l], rate, hp.momentum, hp.l2);
        detail::momentum_step(net.layers[l].b, vb[l], g.db[l], rate, hp.momentum, 0.0);
      }
      detail::momentum_step(net.out_W, vOutW, g.dOutW, rate, hp.momentum, hp.l2);
      detail::momentum_step(net.out_b, vOutB, g.dOutB, rate, hp.momentum, 0.0);
      loss_sum += g.loss * static_cast<double>(idx.size());
    }
    const double loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(loss) || !net.out_W.allFinite())
      throw DivergenceError("network fine-tuning diverged at epoch " + std::to_string(epoch + 1));
    if (log) log->epoch_loss.push_back(loss);
  }
  return net;
}

/// Buy-class probability for raw rows (scaled internally, no dropout).
inline Vector network_predict(const Network& net, const Matrix& X) {
  require_dims(static_cast<std::size_t>(X.cols()) == net.input_dim(),
               "network expects " + std::to_string(net.input_dim()) + " inputs, got " + std::to_string(X.cols()));
  return forward(net, net.scaler.apply(X)).probabilities.col(1);
}

inline double network_predict(const Network& net, const Vector& x) {
  return network_predict(net, Matrix(x.transpose()))(0);
}

/// Stacked denoising autoencoder classifier: min-max scaling fitted on `train`,
/// greedy pretraining of hp.hidden_units, softmax head, supervised fine-tuning.
inline Network train_sda(const Dataset& train, const Hyperparams& hp, std::uint64_t seed,
                         std::vector<TrainLog>* pretrain_logs = nullptr, TrainLog* finetune_log = nullptr) {
  validate_training(hp);
  const Scaler scaler = Scaler::fit(train.rows, Scaler::Kind::minmax);
  const auto stack = stack_pretrain(scaler.apply(train.rows), hp.hidden_units, hp, substream(seed, 1), pretrain_logs);
  Rng head_rng(substream(seed, 2));
  Network net = network_from_stack(stack, head_rng);
  net.scaler = scaler;
  return finetune(std::move(net), train, hp, substream(seed, 3), finetune_log);
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers)
    layers.push_back({{"W", matrix_to_json(l.W)}, {"b", vector_to_json(l.b)}, {"activation", to_string(l.activation)}});
  return {{"layers", layers},
          {"out_W", matrix_to_json(net.out_W)},
          {"out_b", vector_to_json(net.out_b)},
          {"dropout", net.dropout},
          {"scaler", net.scaler.to_json()}};
}

inline Network network_from_json(const nlohmann::json& j) {
  Network net;
  for (const auto& jl : j.at("layers"))
    net.layers.push_back({matrix_from_json(jl.at("W")), vector_from_json(jl.at("b")),
                          parse_activation(jl.at("activation").get<std::string>())});
  net.out_W = matrix_from_json(j.at("out_W"));
  net.out_b = vector_from_json(j.at("out_b"));
  net.dropout = j.at("dropout").get<std::vector<double>>();
  net.scaler = Scaler::from_json(j.at("scaler"));
  for (std::size_t l = 1; l < net.layers.size(); ++l)
    require_dims(net.layers[l].W.cols() == net.layers[l - 1].W.rows(), "network layers do not chain");
  return net;
}

}  // namespace pintent
