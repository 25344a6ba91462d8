#pragma once

// Logistic regression baseline trained by seeded mini-batch gradient descent
// on the L2-regularized mean cross-entropy.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/dataset.hpp"
#include "pintent/error.hpp"
#include "pintent/linalg.hpp"
#include "pintent/random.hpp"
#include "pintent/scaler.hpp"

namespace pintent {

struct LogisticConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 50;
  double l2 = 1e-4;
  std::size_t batch_size = 128;
};

struct LogisticModel {
  Vector weights;
  double bias = 0.0;
  Scaler scaler;  // applied to raw rows before the linear score
  LogisticConfig config;
};

struct LossGradient {
  double loss = 0.0;
  Vector grad_w;
  double grad_b = 0.0;
};

/// Mean cross-entropy of sigmoid(Xw + b) plus (l2/2)||w||^2, with its gradient.
inline LossGradient logistic_loss_gradient(const Vector& w, double b, const Matrix& X, const std::vector<int>& y,
                                           double l2) {
  require_dims(X.cols() == w.size(), "feature count does not match weights");
  require_dims(static_cast<std::size_t>(X.rows()) == y.size(), "label count does not match rows");
  const auto n = X.rows();
  LossGradient out;
  out.grad_w = l2 * w;
  out.loss = 0.5 * l2 * w.squaredNorm();
  if (n == 0) return out;
  const Vector margin = (X * w).array() + b;
  Vector residual(n);
  double ce = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = margin(i);
    const double t = y[static_cast<std::size_t>(i)];
    // -[t ln s(m) + (1-t) ln(1 - s(m))] = softplus(m) - t m
    ce += softplus(m) - t * m;
    residual(i) = sigmoid(m) - t;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss += ce * inv_n;
  out.grad_w += X.transpose() * residual * inv_n;
  out.grad_b = residual.sum() * inv_n;
  return out;
}

/// Probability of the buy class for one raw (unscaled) row.
inline double predict_logistic(const LogisticModel& model, const Vector& x) {
  require_dims(x.size() == model.weights.size(), "expected " + std::to_string(model.weights.size()) +
                                                     " features, got " + std::to_string(x.size()));
  require(x.allFinite(), "input row must be finite");
  const Vector z = model.scaler.apply(x.transpose()).transpose();
  return sigmoid(model.weights.dot(z) + model.bias);
}

inline Vector predict_logistic(const LogisticModel& model, const Matrix& X) {
  require_dims(X.cols() == model.weights.size(), "expected " + std::to_string(model.weights.size()) + " features");
  const Matrix Z = model.scaler.apply(X);
  Vector p = (Z * model.weights).array() + model.bias;
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = sigmoid(p(i));
  return p;
}

/// Zero-initialized weights; rows are z-scored with statistics from `train`.
/// `loss_trace`, when given, receives the full-data objective after each epoch.
inline LogisticModel train_logistic(const Dataset& train, const LogisticConfig& cfg, std::uint64_t seed,
                                    std::vector<double>* loss_trace = nullptr) {
  require(cfg.batch_size >= 1, "batch size must be positive");
  LogisticModel model;
  model.config = cfg;
  model.scaler = Scaler::fit(train.rows, Scaler::Kind::zscore);
  const Matrix X = model.scaler.apply(train.rows);
  model.weights = Vector::Zero(X.cols());
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(X.rows());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> yb;
      for (auto i : idx) yb.push_back(train.labels[i]);
      const auto g = logistic_loss_gradient(model.weights, model.bias, select_rows(X, idx), yb, cfg.l2);
      model.weights -= cfg.learning_rate * g.grad_w;
      model.bias -= cfg.learning_rate * g.grad_b;
    }
    const double loss = logistic_loss_gradient(model.weights, model.bias, X, train.labels, cfg.l2).loss;
    if (!std::isfinite(loss) || !model.weights.allFinite())
      throw DivergenceError("logistic regression diverged at epoch " + std::to_string(epoch + 1));
    if (loss_trace) loss_trace->push_back(loss);
  }
  return model;
}

inline nlohmann::json logistic_to_json(const LogisticModel& m) {
  return {{"weights", vector_to_json(m.weights)},
          {"bias", m.bias},
          {"scaler", m.scaler.to_json()},
          {"config",
           {{"learning_rate", m.config.learning_rate},
            {"epochs", m.config.epochs},
            {"l2", m.config.l2},
            {"batch_size", m.config.batch_size}}}};
}

inline LogisticModel logistic_from_json(const nlohmann::json& j) {
  LogisticModel m;
  m.weights = vector_from_json(j.at("weights"));
  m.bias = j.at("bias").get<double>();
  m.scaler = Scaler::from_json(j.at("scaler"));
  const auto& c = j.at("config");
  m.config.learning_rate = c.at("learning_rate").get<double>();
  m.config.epochs = c.at("epochs").get<std::size_t>();
  m.config.l2 = c.at("l2").get<double>();
  m.config.batch_size = c.at("batch_size").get<std::size_t>();
  return m;
}

}  // namespace pintent
