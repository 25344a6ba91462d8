#pragma once

// AUC, fold construction, the k-fold and 25%/4-fold evaluation protocols, and
// seeded random search over network metaparameters.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/dataset.hpp"
#include "pintent/error.hpp"
#include "pintent/hyperparams.hpp"
#include "pintent/linalg.hpp"
#include "pintent/random.hpp"

namespace pintent {

/// Mann-Whitney AUC from mid-ranks: P(score+ > score-) + 1/2 P(tie).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require_dims(scores.size() == labels.size(), "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Ranks doubled so mid-ranks stay integral: 2*rank = first + last over a tie run (1-based).
  double pos = 0.0, rank2_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double r2 = static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) {
        pos += 1.0;
        rank2_pos += r2;
      }
    i = j + 1;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) fail(ErrorKind::invalid_argument, "AUC needs at least one positive and one negative label");
  for (double s : scores) require(!std::isnan(s), "AUC scores must not be NaN");
  const double u2 = rank2_pos - pos * (pos + 1.0);  // 2U
  return u2 / (2.0 * pos * neg);
}

inline double auc(const Vector& scores, const std::vector<int>& labels) {
  return auc(std::vector<double>(scores.data(), scores.data() + scores.size()), labels);
}

inline double mean(const std::vector<double>& xs) {
  require(!xs.empty(), "mean of an empty sequence");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

namespace detail {

// Splits `items` into k consecutive chunks whose sizes differ by at most one
// (the first n % k chunks are one longer).
inline std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& items, std::size_t k) {
  std::vector<std::vector<std::size_t>> out(k);
  const std::size_t base = items.size() / k, extra = items.size() % k;
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    out[f].assign(items.begin() + static_cast<std::ptrdiff_t>(at), items.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
  }
  return out;
}

}  // namespace detail

inline std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  require(k >= 2, "k-fold needs k >= 2");
  require(n >= k, "cannot split " + std::to_string(n) + " rows into " + std::to_string(k) + " folds");
  Rng rng(seed);
  return detail::chunk(rng.permutation(n), k);
}

struct SplitPlan {
  std::vector<std::size_t> test;                // floor(n / 4) rows
  std::vector<std::vector<std::size_t>> folds;  // remaining rows in four folds
  std::uint64_t seed = 0;

  std::vector<std::size_t> training_rows(std::size_t held_out) const {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
      if (f != held_out) out.insert(out.end(), folds[f].begin(), folds[f].end());
    return out;
  }
};

inline constexpr std::size_t kHoldoutFolds = 4;

inline SplitPlan holdout_protocol(std::size_t n, std::uint64_t seed) {
  require(n >= 8, "the holdout protocol needs at least 8 rows, got " + std::to_string(n));
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  SplitPlan plan;
  plan.seed = seed;
  const std::size_t n_test = n / 4;
  plan.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  plan.folds = detail::chunk(std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end()),
                             kHoldoutFolds);
  return plan;
}

inline SplitPlan holdout_protocol(const Dataset& ds, std::uint64_t seed) { return holdout_protocol(ds.size(), seed); }

/// A fitted model seen as a scoring function over raw rows.
using Scorer = std::function<Vector(const Matrix&)>;
/// Trains on a dataset with a seed; must be deterministic in both.
using Trainer = std::function<Scorer(const Dataset&, std::uint64_t)>;

struct EvalReport {
  std::string protocol;  // "cv" or "holdout"
  double auc = 0.0;      // mean of fold_aucs
  std::vector<double> fold_aucs;        // cv: held-out fold AUCs; holdout: test AUC of each of the four models
  std::vector<double> validation_aucs;  // holdout only
  double validation_auc = 0.0;          // holdout only: mean of validation_aucs
  std::string model;
  std::string dataset;
  std::uint64_t seed = 0;
  double seconds = 0.0;  // wall clock; kept out of to_json so reports stay reproducible

  nlohmann::json to_json() const {
    nlohmann::json j = {{"protocol", protocol}, {"auc", auc},   {"fold_aucs", fold_aucs},
                        {"model", model},       {"dataset", dataset}, {"seed", seed}};
    if (protocol == "holdout") {
      j["validation_aucs"] = validation_aucs;
      j["validation_auc"] = validation_auc;
    }
    return j;
  }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Trains on k-1 folds and scores the held-out fold, k times.
inline EvalReport cross_validate(const Trainer& trainer, const Dataset& ds, std::size_t k, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto folds = kfold_split(ds.size(), k, substream(seed, 0));
  EvalReport report;
  report.protocol = "cv";
  report.seed = seed;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    const Dataset held = ds.subset(folds[f]);
    const Scorer score = trainer(ds.subset(train_idx), substream(seed, f + 1));
    report.fold_aucs.push_back(auc(score(held.rows), held.labels));
  }
  report.auc = mean(report.fold_aucs);
  report.seconds = detail::seconds_since(t0);
  return report;
}

/// Four models, each trained on three folds and validated on the fourth; the
/// reported AUC is the mean test AUC of the four.
inline EvalReport holdout_evaluate(const Trainer& trainer, const Dataset& ds, const SplitPlan& plan,
                                   std::uint64_t train_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.protocol = "holdout";
  report.seed = train_seed;
  const Dataset test = ds.subset(plan.test);
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const Dataset val = ds.subset(plan.folds[f]);
    const Scorer score = trainer(ds.subset(plan.training_rows(f)), substream(train_seed, f));
    report.validation_aucs.push_back(auc(score(val.rows), val.labels));
    report.fold_aucs.push_back(auc(score(test.rows), test.labels));
  }
  report.auc = mean(report.fold_aucs);
  report.validation_auc = mean(report.validation_aucs);
  report.seconds = detail::seconds_since(t0);
  return report;
}

inline EvalReport holdout_evaluate(const Trainer& trainer, const Dataset& ds, std::uint64_t seed) {
  return holdout_evaluate(trainer, ds, holdout_protocol(ds, substream(seed, 0)), substream(seed, 1));
}

// ---------------------------------------------------------------------------
// Random search

/// Sampling box for network metaparameters. The defaults are the full ranges;
/// any sub-box is accepted. Learning rate is drawn log-uniformly, everything
/// else uniformly.
struct SearchSpace {
  double dropout_max = 0.3;
  std::size_t max_layers = 3;
  std::size_t epochs_min = 10;
  std::size_t epochs_max_single = 100;
  std::size_t epochs_max_deep = 150;
  std::size_t units_min_single = 16;
  std::size_t units_min = 64;
  std::size_t units_max = 500;
  double lr_min = 0.001;
  double lr_max = 0.25;
  double momentum_max = 0.95;
  double l2_max = 0.01;
  bool allow_relu = true;
  double noise_max = 0.2;  // 0 for models without input corruption
  Hyperparams base;        // supplies pretrain_epochs and batch_size

  void validate() const {
    require(dropout_max >= 0.0 && dropout_max <= 0.3, "search dropout bound must be in [0, 0.3]");
    require(max_layers >= 1, "search needs at least one layer");
    require(epochs_min >= 10 && epochs_min <= epochs_max_single && epochs_max_single <= 100 &&
                epochs_min <= epochs_max_deep && epochs_max_deep <= 150,
            "search epoch bounds must lie in [10, 100] (one layer) and [10, 150] (deeper)");
    require(units_min_single >= 16 && units_min >= 64 && units_max <= 500 && units_min_single <= units_max &&
                (max_layers == 1 || units_min <= units_max),
            "search unit bounds must lie in [16 or 64, 500]");
    require(lr_min >= 0.001 && lr_max <= 0.25 && lr_min <= lr_max, "search learning-rate bounds must lie in [0.001, 0.25]");
    require(momentum_max >= 0.0 && momentum_max <= 0.95, "search momentum bound must be in [0, 0.95]");
    require(l2_max >= 0.0 && l2_max <= 0.01, "search L2 bound must be in [0, 0.01]");
    require(noise_max >= 0.0 && noise_max <= 0.2, "search noise bound must be in [0, 0.2]");
  }
};

inline Hyperparams sample_hyperparams(const SearchSpace& space, Rng& rng) {
  Hyperparams hp = space.base;
  const std::size_t layers = 1 + rng.below(space.max_layers);
  const bool single = layers == 1;
  hp.hidden_units.clear();
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t lo = (single && i == 0) ? space.units_min_single : space.units_min;
    hp.hidden_units.push_back(lo + rng.below(space.units_max - lo + 1));
  }
  const std::size_t emax = single ? space.epochs_max_single : space.epochs_max_deep;
  hp.epochs = space.epochs_min + rng.below(emax - space.epochs_min + 1);
  hp.dropout = rng.uniform(0.0, space.dropout_max);
  hp.annealing_delay = rng.uniform();
  hp.learning_rate = std::exp(rng.uniform(std::log(space.lr_min), std::log(space.lr_max)));
  hp.learning_rate = std::clamp(hp.learning_rate, space.lr_min, space.lr_max);
  hp.momentum = rng.uniform(0.0, space.momentum_max);
  hp.l2 = rng.uniform(0.0, space.l2_max);
  hp.activation = (space.allow_relu && rng.bernoulli(0.5)) ? Activation::relu : Activation::sigmoid;
  hp.noise = rng.uniform(0.0, space.noise_max);
  return hp;
}

struct Trial {
  std::size_t index = 0;
  Hyperparams hp;
  std::string status;  // "ok" or "diverged"
  std::string message;
  double validation_auc = 0.0;
  double test_auc = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"index", index}, {"hyperparams", hyperparams_to_json(hp)}, {"status", status}};
    if (status == "ok") {
      j["validation_auc"] = validation_auc;
      j["test_auc"] = test_auc;
    } else {
      j["message"] = message;
    }
    return j;
  }
};

struct SearchResult {
  Hyperparams best;
  std::size_t best_index = 0;
  EvalReport report;  // holdout evaluation of the winning trial
  std::vector<Trial> trials;

  nlohmann::json to_json() const {
    nlohmann::json trial_log = nlohmann::json::array();
    for (const auto& t : trials) trial_log.push_back(t.to_json());
    return {{"best", hyperparams_to_json(best)}, {"best_index", best_index}, {"report", report.to_json()},
            {"trials", trial_log}};
  }
};

/// Every trial is scored on the same split by mean validation AUC. Trial t
/// draws its metaparameters and training seed from its own substreams, so the
/// sequence does not depend on evaluation order. Diverged trials are recorded
/// and skipped.
inline SearchResult random_search(const SearchSpace& space, std::size_t budget, const Dataset& ds, std::uint64_t seed,
                                  const std::function<Trainer(const Hyperparams&)>& make_trainer) {
  require(budget >= 1, "search budget must be at least 1");
  space.validate();
  const SplitPlan plan = holdout_protocol(ds, substream(seed, 0));
  SearchResult result;
  bool have_best = false;
  for (std::size_t t = 0; t < budget; ++t) {
    Rng sampler(substream(seed, 2 * t + 1));
    Trial trial;
    trial.index = t;
    trial.hp = sample_hyperparams(space, sampler);
    try {
      const EvalReport rep = holdout_evaluate(make_trainer(trial.hp), ds, plan, substream(seed, 2 * t + 2));
      trial.status = "ok";
      trial.validation_auc = rep.validation_auc;
      trial.test_auc = rep.auc;
      if (!have_best || rep.validation_auc > result.report.validation_auc) {
        have_best = true;
        result.best = trial.hp;
        result.best_index = t;
        result.report = rep;
      }
    } catch (const DivergenceError& e) {
      trial.status = "diverged";
      trial.message = e.what();
    }
    result.trials.push_back(std::move(trial));
  }
  if (!have_best) throw DivergenceError("all " + std::to_string(budget) + " search trials diverged");
  result.report.seed = seed;
  return result;
}

}  // namespace pintent
