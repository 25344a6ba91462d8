#pragma once

// Non-negative matrix factorization V ~= W H with Lee-Seung multiplicative
// updates under the Frobenius loss.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include <json.hpp>

#include "pintent/error.hpp"
#include "pintent/linalg.hpp"
#include "pintent/random.hpp"

namespace pintent {

inline constexpr double kNmfEpsilon = 1e-12;

struct NmfFactors {
  Matrix W;  // n x r, per-sample weights
  Matrix H;  // r x d, patterns
  std::size_t rank = 0;
  double final_error = 0.0;           // ||V - WH||_F
  std::vector<double> error_trace;    // initial error, then one entry per iteration
};

struct NmfOptions {
  std::size_t max_iters = 500;
  double tol = 1e-5;  // stop when relative error improvement falls below this
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_nonnegative(const Matrix& V) {
  require(V.allFinite(), "NMF input must be finite");
  require((V.array() >= 0.0).all(), "NMF input must be non-negative");
}

inline Matrix nmf_random_init(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform() * scale;
  return m;
}

inline bool converged(double prev, double cur, double tol) {
  if (cur == 0.0) return true;
  return (prev - cur) / prev < tol;
}

}  // namespace detail

inline NmfFactors nmf_factorize(const Matrix& V, std::size_t rank, const NmfOptions& opts = {}) {
  detail::check_nonnegative(V);
  const auto n = V.rows(), d = V.cols();
  require(rank >= 1 && static_cast<Eigen::Index>(rank) <= std::min(n, d),
          "NMF rank must be in [1, min(rows, cols)]");

  const auto r = static_cast<Eigen::Index>(rank);
  const double scale = V.mean() / static_cast<double>(rank);
  Rng rng(opts.seed);
  NmfFactors f;
  f.rank = rank;
  f.W = detail::nmf_random_init(n, r, scale, rng);
  f.H = detail::nmf_random_init(r, d, scale, rng);

  double err = (V - f.W * f.H).norm();
  f.error_trace.push_back(err);
  // below this the error is rounding noise and the trace stops being monotone
  const double exact = kNmfEpsilon * V.norm();
  for (std::size_t it = 0; it < opts.max_iters && err > exact; ++it) {
    const Matrix W_prev = f.W, H_prev = f.H;
    const Matrix WtV = f.W.transpose() * V;
    const Matrix WtWH = (f.W.transpose() * f.W) * f.H;
    f.H.array() *= WtV.array() / (WtWH.array() + kNmfEpsilon);

    const Matrix VHt = V * f.H.transpose();
    const Matrix WHHt = f.W * (f.H * f.H.transpose());
    f.W.array() *= VHt.array() / (WHHt.array() + kNmfEpsilon);

    const double next = (V - f.W * f.H).norm();
    // At a fixed point the recomputed error can rise by a few ulps; that is
    // convergence, not a step worth keeping.
    if (next > err && next - err <= 64.0 * std::numeric_limits<double>::epsilon() * err) {
      f.W = W_prev;
      f.H = H_prev;
      break;
    }
    const double prev = err;
    err = next;
    f.error_trace.push_back(err);
    if (detail::converged(prev, err, opts.tol)) break;
  }
  f.final_error = err;
  return f;
}

/// Non-negative weights for new rows against fixed patterns H (updates W only).
inline Matrix nmf_transform(const Matrix& V_new, const Matrix& H, const NmfOptions& opts = {1000, 1e-10, 0}) {
  detail::check_nonnegative(V_new);
  require_dims(V_new.cols() == H.cols(), "NMF transform input has " + std::to_string(V_new.cols()) +
                                             " columns, patterns have " + std::to_string(H.cols()));
  const auto r = H.rows();
  const double scale = V_new.size() ? V_new.mean() / static_cast<double>(r) : 0.0;
  const Matrix HHt = H * H.transpose();
  const Matrix VHt = V_new * H.transpose();
  // Start from the unconstrained least-squares weights with negatives lifted to a
  // small positive value; updates on W alone crawl when the rows of H are close
  // to collinear.
  Matrix W = HHt.completeOrthogonalDecomposition().solve(VHt.transpose()).transpose();
  W = W.unaryExpr([floor = 1e-3 * scale](double x) { return x > 0.0 ? x : floor; });
  double err = (V_new - W * H).norm();
  for (std::size_t it = 0; it < opts.max_iters && err > 0.0; ++it) {
    W.array() *= VHt.array() / ((W * HHt).array() + kNmfEpsilon);
    const double prev = err;
    err = (V_new - W * H).norm();
    if (detail::converged(prev, err, opts.tol)) break;
  }
  return W;
}

inline nlohmann::json nmf_to_json(const NmfFactors& f) {
  return {{"format", "pintent-nmf"},       {"version", 1},          {"rank", f.rank},
          {"final_error", f.final_error},  {"error_trace", f.error_trace},
          {"H", matrix_to_json(f.H)}};
}

}  // namespace pintent
