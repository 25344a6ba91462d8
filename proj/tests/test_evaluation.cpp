#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "pintent/evaluation.hpp"

using namespace pintent;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

// Labels from a coin, first feature = label + noise.
Dataset noisy_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.rows.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 2 ? 1 : 0;
    ds.labels.push_back(y);
    ds.rows(static_cast<Eigen::Index>(i), 0) = y + rng.normal();
    ds.rows(static_cast<Eigen::Index>(i), 1) = y;
    ds.row_ids.push_back(std::to_string(i));
  }
  ds.feature_names = {"noisy", "label"};
  return ds;
}

Scorer column_scorer(Eigen::Index c) {
  return [c](const Matrix& X) -> Vector { return X.col(c); };
}

void expect_partition(const std::vector<std::vector<std::size_t>>& parts, std::size_t n) {
  std::vector<int> seen(n, 0);
  std::size_t lo = n, hi = 0;
  for (const auto& p : parts) {
    lo = std::min(lo, p.size());
    hi = std::max(hi, p.size());
    for (auto i : p) {
      ASSERT_LT(i, n);
      ++seen[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << "index " << i;
  EXPECT_LE(hi - lo, 1u);
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.9}, {1, 0}), 0.0);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, {1, 1}), Error);
  EXPECT_THROW(auc(std::vector<double>{0.1}, {1, 0}), Error);
}

TEST(Auc, EqualsPairwiseOracleWithTies) {
  Rng rng(1);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 2 + rng.below(120);
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(rng.below(10)) / 4.0);
      y.push_back(static_cast<int>(rng.below(2)));
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(auc(s, y), pairwise_auc(s, y));
  }
}

TEST(Auc, MonotoneTransformInvariance) {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> s, a, b;
    std::vector<int> y;
    for (int i = 0; i < 50; ++i) {
      s.push_back(rng.normal());
      a.push_back(2.0 * s.back() + 1.0);
      b.push_back(s.back() * s.back() * s.back());
      y.push_back(i % 3 == 0);
    }
    const double base = auc(s, y);
    EXPECT_EQ(auc(a, y), base);
    EXPECT_EQ(auc(b, y), base);
    std::vector<int> flipped;
    for (int v : y) flipped.push_back(1 - v);
    EXPECT_NEAR(base + auc(s, flipped), 1.0, 1e-15);
  }
}

TEST(KFold, ExactPartitions) {
  const auto five = kfold_split(10, 5, 3);
  ASSERT_EQ(five.size(), 5u);
  for (const auto& f : five) EXPECT_EQ(f.size(), 2u);
  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 10 + rng.below(500);
    const auto seed = rng();
    const auto folds = kfold_split(n, 10, seed);
    ASSERT_EQ(folds.size(), 10u);
    expect_partition(folds, n);
    EXPECT_EQ(kfold_split(n, 10, seed), folds);
  }
  EXPECT_THROW(kfold_split(9, 10, 1), Error);
}

TEST(Holdout, QuarterTestAndFourFolds) {
  const auto plan = holdout_protocol(100, 7);
  EXPECT_EQ(plan.test.size(), 25u);
  ASSERT_EQ(plan.folds.size(), 4u);
  for (const auto& f : plan.folds) EXPECT_TRUE(f.size() == 18u || f.size() == 19u);
  EXPECT_EQ(holdout_protocol(100, 7).test, plan.test);
}

TEST(Holdout, PlanCoversEveryRowOnce) {
  Rng rng(6);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 8 + rng.below(1000);
    const auto p = holdout_protocol(n, rng());
    std::vector<int> seen(n, 0);
    for (auto i : p.test) ++seen[i];
    std::size_t lo = n, hi = 0;
    for (const auto& f : p.folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      for (auto i : f) ++seen[i];
    }
    for (auto s : seen) EXPECT_EQ(s, 1);
    EXPECT_LE(hi - lo, 1u);
  }
  EXPECT_THROW(holdout_protocol(7, 1), Error);
}

TEST(CrossValidate, ConstantAndOracleTrainers) {
  const auto ds = noisy_dataset(100, 1);
  Trainer constant = [](const Dataset&, std::uint64_t) -> Scorer {
    return [](const Matrix& X) -> Vector { return Vector::Constant(X.rows(), 0.3); };
  };
  Trainer oracle = [](const Dataset&, std::uint64_t) { return column_scorer(1); };
  const auto c = cross_validate(constant, ds, 10, 3);
  ASSERT_EQ(c.fold_aucs.size(), 10u);
  for (double a : c.fold_aucs) EXPECT_EQ(a, 0.5);
  const auto o = cross_validate(oracle, ds, 10, 3);
  for (double a : o.fold_aucs) EXPECT_EQ(a, 1.0);
  const auto n = cross_validate([](const Dataset&, std::uint64_t) { return column_scorer(0); }, ds, 10, 3);
  EXPECT_NEAR(n.auc, mean(n.fold_aucs), 1e-15);
  EXPECT_EQ(n.protocol, "cv");
}

TEST(CrossValidate, TrainerNeverSeesHeldOutRows) {
  const auto ds = noisy_dataset(60, 2);
  std::size_t calls = 0;
  Trainer spy = [&](const Dataset& train, std::uint64_t) {
    ++calls;
    EXPECT_EQ(train.size(), 54u);
    return column_scorer(0);
  };
  cross_validate(spy, ds, 10, 1);
  EXPECT_EQ(calls, 10u);
}

TEST(Holdout, ReportsMeanOfFourTestAucs) {
  const auto ds = noisy_dataset(200, 3);
  std::size_t calls = 0;
  Trainer t = [&](const Dataset& train, std::uint64_t) {
    ++calls;
    EXPECT_TRUE(train.size() == 112u || train.size() == 113u);
    return column_scorer(0);
  };
  const auto rep = holdout_evaluate(t, ds, 9);
  EXPECT_EQ(calls, 4u);
  ASSERT_EQ(rep.fold_aucs.size(), 4u);
  ASSERT_EQ(rep.validation_aucs.size(), 4u);
  EXPECT_NEAR(rep.auc, mean(rep.fold_aucs), 1e-15);
  EXPECT_NEAR(rep.validation_auc, mean(rep.validation_aucs), 1e-15);
  // a fixed scorer gives the same test AUC for all four models
  for (double a : rep.fold_aucs) EXPECT_EQ(a, rep.fold_aucs[0]);
  EXPECT_NEAR(mean({0.8, 0.82, 0.78, 0.8}), 0.8, 1e-15);
}

TEST(Search, SamplesStayInRange) {
  SearchSpace space;
  Rng rng(7);
  for (int k = 0; k < 2000; ++k) {
    const auto hp = sample_hyperparams(space, rng);
    ASSERT_GE(hp.hidden_units.size(), 1u);
    ASSERT_LE(hp.hidden_units.size(), 3u);
    const bool single = hp.hidden_units.size() == 1;
    for (std::size_t i = 0; i < hp.hidden_units.size(); ++i) {
      EXPECT_GE(hp.hidden_units[i], single ? 16u : 64u);
      EXPECT_LE(hp.hidden_units[i], 500u);
    }
    EXPECT_GE(hp.epochs, 10u);
    EXPECT_LE(hp.epochs, single ? 100u : 150u);
    EXPECT_GE(hp.dropout, 0.0);
    EXPECT_LE(hp.dropout, 0.3);
    EXPECT_GE(hp.annealing_delay, 0.0);
    EXPECT_LE(hp.annealing_delay, 1.0);
    EXPECT_GE(hp.learning_rate, 0.001);
    EXPECT_LE(hp.learning_rate, 0.25);
    EXPECT_LE(hp.momentum, 0.95);
    EXPECT_LE(hp.l2, 0.01);
    EXPECT_LE(hp.noise, 0.2);
  }
}

TEST(Search, LearningRateIsLogUniform) {
  SearchSpace space;
  Rng rng(8);
  int below_geo_mid = 0;
  const double mid = std::sqrt(0.001 * 0.25);
  const int n = 20000;
  for (int k = 0; k < n; ++k) below_geo_mid += sample_hyperparams(space, rng).learning_rate < mid;
  EXPECT_NEAR(static_cast<double>(below_geo_mid) / n, 0.5, 0.015);
}

TEST(Search, PicksBestValidationAndSkipsDiverged) {
  const auto ds = noisy_dataset(120, 4);
  // score quality grows with momentum; high learning rates "diverge"
  auto make = [](const Hyperparams& hp) -> Trainer {
    return [hp](const Dataset&, std::uint64_t seed) -> Scorer {
      if (hp.learning_rate > 0.1) throw DivergenceError("too fast");
      return [hp, seed](const Matrix& X) -> Vector {
        Rng rng(seed);
        Vector s(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) s(i) = hp.momentum * X(i, 1) + rng.normal();
        return s;
      };
    };
  };
  SearchSpace space;
  const auto res = random_search(space, 12, ds, 5, make);
  ASSERT_EQ(res.trials.size(), 12u);
  double best = -1.0;
  std::size_t diverged = 0;
  for (const auto& t : res.trials) {
    if (t.status == "diverged") {
      ++diverged;
      EXPECT_GT(t.hp.learning_rate, 0.1);
      continue;
    }
    best = std::max(best, t.validation_auc);
  }
  EXPECT_GT(diverged, 0u);
  EXPECT_EQ(res.report.validation_auc, best);
  EXPECT_EQ(res.trials[res.best_index].validation_auc, best);
  const auto again = random_search(space, 12, ds, 5, make);
  EXPECT_EQ(again.to_json(), res.to_json());
  const auto one = random_search(space, 1, ds, 6, [](const Hyperparams&) -> Trainer {
    return [](const Dataset&, std::uint64_t) { return column_scorer(0); };
  });
  EXPECT_EQ(one.trials.size(), 1u);
  EXPECT_EQ(one.best_index, 0u);
}

TEST(Search, AllDivergedIsAnError) {
  const auto ds = noisy_dataset(40, 5);
  auto boom = [](const Hyperparams&) -> Trainer {
    return [](const Dataset&, std::uint64_t) -> Scorer { throw DivergenceError("nan"); };
  };
  EXPECT_THROW(random_search(SearchSpace{}, 3, ds, 1, boom), DivergenceError);
}
