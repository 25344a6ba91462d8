#pragma once

// Binary restricted Boltzmann machines, exact enumeration for small models,
// CD-1 training and greedy deep belief network stacking.
//
//   Energy(v, h) = -b'h - c'v - h'Wv      W: n_h x n_v, b hidden, c visible
//   F(v)         = -c'v - sum_i softplus(b_i + W_i v)

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/dataset.hpp"
#include "pintent/error.hpp"
#include "pintent/hyperparams.hpp"
#include "pintent/linalg.hpp"
#include "pintent/neural.hpp"
#include "pintent/random.hpp"
#include "pintent/scaler.hpp"

namespace pintent {

struct Rbm {
  Matrix W;  // n_h x n_v
  Vector b;  // hidden offsets
  Vector c;  // visible offsets

  std::size_t n_visible() const { return static_cast<std::size_t>(W.cols()); }
  std::size_t n_hidden() const { return static_cast<std::size_t>(W.rows()); }

  static Rbm zeros(std::size_t n_v, std::size_t n_h) {
    const auto v = static_cast<Eigen::Index>(n_v), h = static_cast<Eigen::Index>(n_h);
    return {Matrix::Zero(h, v), Vector::Zero(h), Vector::Zero(v)};
  }
};

inline Rbm init_rbm(std::size_t n_v, std::size_t n_h, Rng& rng) {
  Rbm r = Rbm::zeros(n_v, n_h);
  r.W = uniform_weights(static_cast<Eigen::Index>(n_h), static_cast<Eigen::Index>(n_v), rng);
  return r;
}

namespace detail {

inline void check_rbm_dims(const Rbm& r, const Vector* v, const Vector* h) {
  if (v) require_dims(v->size() == r.W.cols(), "visible vector has " + std::to_string(v->size()) + " entries, RBM has " +
                                                   std::to_string(r.W.cols()));
  if (h) require_dims(h->size() == r.W.rows(), "hidden vector has " + std::to_string(h->size()) + " entries, RBM has " +
                                                   std::to_string(r.W.rows()));
}

// Bit pattern of `code` over n units, lowest bit first.
inline Vector bits(std::uint64_t code, std::size_t n) {
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = static_cast<double>((code >> i) & 1u);
  return out;
}

inline double log_sum_exp(const std::vector<double>& xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline constexpr std::size_t kMaxEnumeratedUnits = 20;

}  // namespace detail

inline double energy(const Rbm& r, const Vector& v, const Vector& h) {
  detail::check_rbm_dims(r, &v, &h);
  return -r.b.dot(h) - r.c.dot(v) - h.dot(r.W * v);
}

inline double free_energy(const Rbm& r, const Vector& v) {
  detail::check_rbm_dims(r, &v, nullptr);
  const Vector pre = r.W * v + r.b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < pre.size(); ++i) s += softplus(pre(i));
  return -r.c.dot(v) - s;
}

/// log Z by enumerating every joint state (n_v + n_h <= 20).
inline double log_partition(const Rbm& r) {
  const std::size_t nv = r.n_visible(), nh = r.n_hidden();
  if (nv + nh > detail::kMaxEnumeratedUnits)
    fail(ErrorKind::invalid_argument, "exact partition needs n_v + n_h <= 20, got " + std::to_string(nv + nh));
  std::vector<double> terms;
  terms.reserve(std::size_t{1} << (nv + nh));
  for (std::uint64_t vc = 0; vc < (std::uint64_t{1} << nv); ++vc) {
    const Vector v = detail::bits(vc, nv);
    for (std::uint64_t hc = 0; hc < (std::uint64_t{1} << nh); ++hc) terms.push_back(-energy(r, v, detail::bits(hc, nh)));
  }
  return detail::log_sum_exp(terms);
}

inline double exact_partition(const Rbm& r) { return std::exp(log_partition(r)); }

/// Mean exact log-likelihood of binary rows under the model.
inline double log_likelihood(const Rbm& r, const Matrix& V) {
  require(V.rows() > 0, "log-likelihood needs at least one row");
  const double logZ = log_partition(r);
  double s = 0.0;
  for (Eigen::Index i = 0; i < V.rows(); ++i) s += -free_energy(r, V.row(i).transpose()) - logZ;
  return s / static_cast<double>(V.rows());
}

inline Matrix hidden_probabilities(const Rbm& r, const Matrix& V) {
  require_dims(V.cols() == r.W.cols(), "visible batch width does not match the RBM");
  return activate(Activation::sigmoid, Matrix((V * r.W.transpose()).rowwise() + r.b.transpose()));
}

inline Matrix visible_probabilities(const Rbm& r, const Matrix& H) {
  require_dims(H.cols() == r.W.rows(), "hidden batch width does not match the RBM");
  return activate(Activation::sigmoid, Matrix((H * r.W).rowwise() + r.c.transpose()));
}

inline Matrix sample_bernoulli(const Matrix& P, Rng& rng) {
  Matrix S(P.rows(), P.cols());
  for (Eigen::Index c = 0; c < P.cols(); ++c)
    for (Eigen::Index r = 0; r < P.rows(); ++r) S(r, c) = rng.uniform() < P(r, c) ? 1.0 : 0.0;
  return S;
}

inline Vector sample_h_given_v(const Rbm& r, const Vector& v, Rng& rng) {
  detail::check_rbm_dims(r, &v, nullptr);
  return sample_bernoulli(hidden_probabilities(r, Matrix(v.transpose())), rng).row(0).transpose();
}

inline Vector sample_v_given_h(const Rbm& r, const Vector& h, Rng& rng) {
  detail::check_rbm_dims(r, nullptr, &h);
  return sample_bernoulli(visible_probabilities(r, Matrix(h.transpose())), rng).row(0).transpose();
}

inline Vector sample_h_given_v(const Rbm& r, const Vector& v, std::uint64_t seed) {
  Rng rng(seed);
  return sample_h_given_v(r, v, rng);
}

inline Vector sample_v_given_h(const Rbm& r, const Vector& h, std::uint64_t seed) {
  Rng rng(seed);
  return sample_v_given_h(r, h, rng);
}

struct RbmGradient {
  Matrix dW;
  Vector db;
  Vector dc;
};

/// CD-1 estimate of the log-likelihood gradient (ascent direction):
/// v -> h ~ P(h|v) -> v' ~ P(v|h) -> P(h|v'), statistics averaged over the batch.
inline RbmGradient cd1_gradient(const Rbm& r, const Matrix& V, Rng& rng) {
  require(V.rows() > 0, "CD-1 needs a non-empty batch");
  require_dims(V.cols() == r.W.cols(), "visible batch width does not match the RBM");
  const Matrix h0 = hidden_probabilities(r, V);
  const Matrix h0s = sample_bernoulli(h0, rng);
  const Matrix v1 = sample_bernoulli(visible_probabilities(r, h0s), rng);
  const Matrix h1 = hidden_probabilities(r, v1);
  const double inv = 1.0 / static_cast<double>(V.rows());
  return {(h0.transpose() * V - h1.transpose() * v1) * inv, (h0 - h1).colwise().sum().transpose() * inv,
          (V - v1).colwise().sum().transpose() * inv};
}

inline Rbm cd1_update(Rbm r, const Matrix& V, double learning_rate, Rng& rng) {
  const auto g = cd1_gradient(r, V, rng);
  r.W += learning_rate * g.dW;
  r.b += learning_rate * g.db;
  r.c += learning_rate * g.dc;
  return r;
}

inline Rbm cd1_update(const Rbm& r, const Matrix& V, double learning_rate, std::uint64_t seed) {
  Rng rng(seed);
  return cd1_update(r, V, learning_rate, rng);
}

/// Mean over rows of the cross-entropy between v and its mean-field
/// reconstruction P(v | P(h|v)).
inline double reconstruction_cross_entropy(const Rbm& r, const Matrix& V) {
  require(V.rows() > 0, "reconstruction error needs at least one row");
  const Matrix P = visible_probabilities(r, hidden_probabilities(r, V));
  double s = 0.0;
  for (Eigen::Index j = 0; j < V.cols(); ++j)
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      const double p = std::clamp(P(i, j), 1e-12, 1.0 - 1e-12);
      s -= V(i, j) * std::log(p) + (1.0 - V(i, j)) * std::log(1.0 - p);
    }
  return s / static_cast<double>(V.rows());
}

/// Mini-batch CD-1 on [0, 1] rows with momentum, L2 on W and the annealed rate.
inline void train_rbm_inplace(Rbm& r, const Matrix& data, const Hyperparams& hp, Rng& rng, TrainLog* log = nullptr) {
  validate_training(hp);
  const auto n = static_cast<std::size_t>(data.rows());
  const std::size_t total = detail::iterations(n, hp.batch_size, hp.pretrain_epochs);
  Matrix vW = Matrix::Zero(r.W.rows(), r.W.cols());
  Vector vb = Vector::Zero(r.b.size()), vc = Vector::Zero(r.c.size());
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < hp.pretrain_epochs && n > 0; ++epoch) {
    for (const auto& idx : detail::minibatches(n, hp.batch_size, rng)) {
      const auto g = cd1_gradient(r, select_rows(data, idx), rng);
      const double rate = annealed_rate(hp.learning_rate, hp.annealing_delay, t++, total);
      // momentum_step descends, so hand it the negated ascent direction
      detail::momentum_step(r.W, vW, Matrix(-g.dW), rate, hp.momentum, hp.l2);
      detail::momentum_step(r.b, vb, Vector(-g.db), rate, hp.momentum, 0.0);
      detail::momentum_step(r.c, vc, Vector(-g.dc), rate, hp.momentum, 0.0);
    }
    if (!r.W.allFinite()) throw DivergenceError("RBM training diverged at epoch " + std::to_string(epoch + 1));
    if (log) log->epoch_loss.push_back(reconstruction_cross_entropy(r, data));
  }
}

struct Dbn {
  std::vector<Rbm> layers;
};

/// Greedy stacking: RBM k is trained on the hidden probabilities of RBM k-1.
inline Dbn dbn_pretrain(const Matrix& data, const std::vector<std::size_t>& sizes, const Hyperparams& hp,
                        std::uint64_t seed, std::vector<TrainLog>* logs = nullptr) {
  require(!sizes.empty(), "need at least one layer size");
  require(data.size() == 0 || (data.minCoeff() >= 0.0 && data.maxCoeff() <= 1.0), "DBN inputs must lie in [0, 1]");
  Dbn dbn;
  Matrix input = data;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    Rng rng(substream(seed, k));
    Rbm r = init_rbm(static_cast<std::size_t>(input.cols()), sizes[k], rng);
    TrainLog log;
    train_rbm_inplace(r, input, hp, rng, &log);
    if (logs) logs->push_back(std::move(log));
    if (k + 1 < sizes.size()) input = hidden_probabilities(r, input);
    dbn.layers.push_back(std::move(r));
  }
  return dbn;
}

/// Sigmoid feed-forward network whose hidden layers are the DBN's (W, b),
/// with a fresh softmax head. No training happens here.
inline Network dbn_network(const Dbn& dbn, Rng& head_rng) {
  Network net;
  for (const auto& r : dbn.layers) net.layers.push_back({r.W, r.b, Activation::sigmoid});
  attach_softmax_head(net, head_rng);
  return net;
}

/// Copies the DBN into a network and fine-tunes it on `train`; `scaler` must be
/// the one the DBN's inputs were produced with.
inline Network dbn_to_network(const Dbn& dbn, const Dataset& train, const Hyperparams& hp, std::uint64_t seed,
                              const Scaler& scaler, TrainLog* log = nullptr) {
  Rng head_rng(substream(seed, 0));
  Network net = dbn_network(dbn, head_rng);
  net.scaler = scaler;
  return finetune(std::move(net), train, hp, substream(seed, 1), log);
}

/// Min-max scaling, greedy RBM pretraining of hp.hidden_units, then fine-tuning.
/// Hidden units are always sigmoid, since they stand for Bernoulli units.
inline Network train_dbn(const Dataset& train, Hyperparams hp, std::uint64_t seed, Dbn* pretrained = nullptr,
                         std::vector<TrainLog>* pretrain_logs = nullptr, TrainLog* finetune_log = nullptr) {
  validate_training(hp);
  hp.activation = Activation::sigmoid;
  const Scaler scaler = Scaler::fit(train.rows, Scaler::Kind::minmax);
  const Dbn dbn = dbn_pretrain(scaler.apply(train.rows), hp.hidden_units, hp, substream(seed, 1), pretrain_logs);
  if (pretrained) *pretrained = dbn;
  return dbn_to_network(dbn, train, hp, substream(seed, 2), scaler, finetune_log);
}

/// Same architecture and fine-tuning as train_dbn, starting from random weights.
inline Network train_random_network(const Dataset& train, Hyperparams hp, std::uint64_t seed,
                                    TrainLog* finetune_log = nullptr) {
  validate_training(hp);
  const Scaler scaler = Scaler::fit(train.rows, Scaler::Kind::minmax);
  Rng rng(substream(seed, 2));
  Network net = random_network(train.dim(), hp.hidden_units, hp.activation, rng);
  net.scaler = scaler;
  return finetune(std::move(net), train, hp, substream(seed, 3), finetune_log);
}

inline nlohmann::json rbm_to_json(const Rbm& r) {
  return {{"W", matrix_to_json(r.W)}, {"b", vector_to_json(r.b)}, {"c", vector_to_json(r.c)}};
}

inline Rbm rbm_from_json(const nlohmann::json& j) {
  Rbm r{matrix_from_json(j.at("W")), vector_from_json(j.at("b")), vector_from_json(j.at("c"))};
  require_dims(r.b.size() == r.W.rows() && r.c.size() == r.W.cols(), "RBM offsets do not match W");
  return r;
}

}  // namespace pintent
