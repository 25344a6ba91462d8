#pragma once

#include <string>

#include <json.hpp>

#include "pintent/error.hpp"
#include "pintent/linalg.hpp"

namespace pintent {

/// Per-column affine scaling fitted on training rows only.
///   zscore: (x - mean) / std, for logistic regression.
///   minmax: (x - min) / (max - min) clamped to [0, 1], for sigmoid/Bernoulli
///           networks whose reconstruction targets must lie in [0, 1].
/// Constant columns get a unit scale.
struct Scaler {
  enum class Kind { identity, zscore, minmax };

  Kind kind = Kind::identity;
  Vector offset;
  Vector scale;

  static Scaler fit(const Matrix& X, Kind kind) {
    Scaler s;
    s.kind = kind;
    const auto d = X.cols();
    s.offset = Vector::Zero(d);
    s.scale = Vector::Ones(d);
    if (X.rows() == 0 || kind == Kind::identity) return s;
    for (Eigen::Index c = 0; c < d; ++c) {
      if (kind == Kind::zscore) {
        const double mean = X.col(c).mean();
        const double var = (X.col(c).array() - mean).square().mean();
        s.offset(c) = mean;
        s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
      } else {
        const double lo = X.col(c).minCoeff(), hi = X.col(c).maxCoeff();
        s.offset(c) = lo;
        s.scale(c) = hi > lo ? hi - lo : 1.0;
      }
    }
    return s;
  }

  std::size_t dim() const { return static_cast<std::size_t>(offset.size()); }

  Matrix apply(const Matrix& X) const {
    if (kind == Kind::identity && offset.size() == 0) return X;
    require_dims(X.cols() == offset.size(), "scaler expects " + std::to_string(offset.size()) + " columns, got " +
                                                std::to_string(X.cols()));
    Matrix out = (X.rowwise() - offset.transpose()).array().rowwise() / scale.transpose().array();
    if (kind == Kind::minmax) out = out.cwiseMax(0.0).cwiseMin(1.0);
    return out;
  }

  nlohmann::json to_json() const {
    const char* name = kind == Kind::zscore ? "zscore" : kind == Kind::minmax ? "minmax" : "identity";
    return {{"kind", name}, {"offset", vector_to_json(offset)}, {"scale", vector_to_json(scale)}};
  }

  static Scaler from_json(const nlohmann::json& j) {
    Scaler s;
    const auto name = j.at("kind").get<std::string>();
    if (name == "zscore")
      s.kind = Kind::zscore;
    else if (name == "minmax")
      s.kind = Kind::minmax;
    else
      s.kind = Kind::identity;
    s.offset = vector_from_json(j.at("offset"));
    s.scale = vector_from_json(j.at("scale"));
    return s;
  }
};

}  // namespace pintent
