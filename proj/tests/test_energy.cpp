#include <gtest/gtest.h>

#include <cmath>

#include "pintent/energy.hpp"

using namespace pintent;

namespace {

Rbm random_rbm(std::size_t n_v, std::size_t n_h, Rng& rng, double scale = 1.0) {
  Rbm r = Rbm::zeros(n_v, n_h);
  for (Eigen::Index i = 0; i < r.W.size(); ++i) r.W.data()[i] = scale * rng.normal();
  for (Eigen::Index i = 0; i < r.b.size(); ++i) r.b(i) = scale * rng.normal();
  for (Eigen::Index i = 0; i < r.c.size(); ++i) r.c(i) = scale * rng.normal();
  return r;
}

Vector bits_of(std::uint64_t code, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = static_cast<double>((code >> i) & 1u);
  return v;
}

double loop_energy(const Rbm& r, const Vector& v, const Vector& h) {
  double e = 0.0;
  for (Eigen::Index j = 0; j < h.size(); ++j) e -= r.b(j) * h(j);
  for (Eigen::Index i = 0; i < v.size(); ++i) e -= r.c(i) * v(i);
  for (Eigen::Index j = 0; j < h.size(); ++j)
    for (Eigen::Index i = 0; i < v.size(); ++i) e -= h(j) * r.W(j, i) * v(i);
  return e;
}

// Z summed directly over every joint state.
double brute_partition(const Rbm& r) {
  const auto nv = static_cast<std::size_t>(r.n_visible()), nh = static_cast<std::size_t>(r.n_hidden());
  double z = 0.0;
  for (std::uint64_t a = 0; a < (1u << nv); ++a)
    for (std::uint64_t b = 0; b < (1u << nh); ++b) z += std::exp(-loop_energy(r, bits_of(a, nv), bits_of(b, nh)));
  return z;
}

double brute_marginal(const Rbm& r, const Vector& v) {
  const auto nh = static_cast<std::size_t>(r.n_hidden());
  double s = 0.0;
  for (std::uint64_t b = 0; b < (1u << nh); ++b) s += std::exp(-loop_energy(r, v, bits_of(b, nh)));
  return s;
}

Matrix four_patterns() {
  Matrix V(4, 3);
  V << 1, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1;
  return V;
}

}  // namespace

TEST(Energy, HandExample) {
  Rbm r = Rbm::zeros(1, 1);
  r.W(0, 0) = 2.0;
  r.b(0) = 1.0;
  r.c(0) = -1.0;
  EXPECT_EQ(energy(r, Vector::Ones(1), Vector::Ones(1)), -2.0);
  EXPECT_EQ(energy(Rbm::zeros(3, 2), Vector::Ones(3), Vector::Ones(2)), 0.0);
}

TEST(Energy, MatchesLoopOracle) {
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto r = random_rbm(5, 4, rng);
    const Vector v = bits_of(rng.below(32), 5), h = bits_of(rng.below(16), 4);
    EXPECT_NEAR(energy(r, v, h), loop_energy(r, v, h), 1e-12);
  }
  EXPECT_THROW(energy(random_rbm(5, 4, rng), Vector::Ones(4), Vector::Ones(4)), Error);
}

TEST(FreeEnergy, ZeroParameters) {
  EXPECT_NEAR(free_energy(Rbm::zeros(3, 5), Vector::Ones(3)), -5.0 * std::log(2.0), 1e-14);
}

TEST(FreeEnergy, StableForLargeInputs) {
  Rbm r = Rbm::zeros(1, 1);
  r.b(0) = 700.0;
  const double f = free_energy(r, Vector::Zero(1));
  EXPECT_TRUE(std::isfinite(f));
  EXPECT_NEAR(f, -700.0, 1e-9);
}

TEST(FreeEnergy, MarginalMatchesEnumeration) {
  Rng rng(2);
  const auto r = random_rbm(4, 3, rng);
  const double z = brute_partition(r);
  double total = 0.0;
  for (std::uint64_t a = 0; a < 16; ++a) {
    const Vector v = bits_of(a, 4);
    const double p_free = std::exp(-free_energy(r, v) - log_partition(r));
    const double p_brute = brute_marginal(r, v) / z;
    EXPECT_NEAR(p_free, p_brute, 1e-10);
    total += p_free;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Partition, ZeroParametersGiveSixteen) { EXPECT_NEAR(exact_partition(Rbm::zeros(2, 2)), 16.0, 1e-12); }

TEST(Partition, AgreesWithJointEnumeration) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto nv = 1 + rng.below(6), nh = 1 + rng.below(5);
    const auto r = random_rbm(nv, nh, rng, 0.5);
    const double z = brute_partition(r);
    EXPECT_LT(std::abs(exact_partition(r) - z) / z, 1e-10);
  }
}

TEST(Partition, GuardRejectsLargeModels) { EXPECT_THROW(log_partition(Rbm::zeros(12, 9)), Error); }

TEST(Partition, JointProbabilitiesSumToOne) {
  Rng rng(4);
  const auto r = random_rbm(3, 3, rng);
  const double z = exact_partition(r);
  double total = 0.0;
  for (std::uint64_t a = 0; a < 8; ++a)
    for (std::uint64_t b = 0; b < 8; ++b) {
      const double p = std::exp(-energy(r, bits_of(a, 3), bits_of(b, 3))) / z;
      EXPECT_GE(p, 0.0);
      total += p;
    }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Sampling, ZeroParametersAreFairCoins) {
  const Rbm r = Rbm::zeros(4, 3);
  Rng rng(5);
  Vector hsum = Vector::Zero(3), vsum = Vector::Zero(4);
  for (int k = 0; k < 10000; ++k) {
    hsum += sample_h_given_v(r, Vector::Ones(4), rng);
    vsum += sample_v_given_h(r, Vector::Ones(3), rng);
  }
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(hsum(i) / 1e4, 0.5, 0.02);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(vsum(i) / 1e4, 0.5, 0.02);
}

TEST(Sampling, SaturationAndSeeds) {
  Rbm r = Rbm::zeros(2, 2);
  r.b(0) = 1000.0;
  r.b(1) = -1000.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vector h = sample_h_given_v(r, Vector::Zero(2), s);
    EXPECT_EQ(h(0), 1.0);
    EXPECT_EQ(h(1), 0.0);
  }
  Rng rng(6);
  const auto q = random_rbm(6, 5, rng);
  const Vector v = bits_of(45, 6);
  EXPECT_EQ(sample_h_given_v(q, v, 9), sample_h_given_v(q, v, 9));
}

TEST(Cd1, ZeroRateAndShapes) {
  Rng rng(7);
  for (int k = 0; k < 10; ++k) {
    const auto nv = 1 + rng.below(6), nh = 1 + rng.below(6);
    const auto r = random_rbm(nv, nh, rng);
    Matrix V(5, static_cast<Eigen::Index>(nv));
    for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = static_cast<double>(rng.below(2));
    const auto same = cd1_update(r, V, 0.0, 3);
    EXPECT_EQ(same.W, r.W);
    EXPECT_EQ(same.b, r.b);
    EXPECT_EQ(same.c, r.c);
    Rng g_rng(1);
    const auto g = cd1_gradient(r, V, g_rng);
    EXPECT_EQ(g.dW.rows(), r.W.rows());
    EXPECT_EQ(g.dW.cols(), r.W.cols());
    EXPECT_EQ(g.db.size(), r.b.size());
    EXPECT_EQ(g.dc.size(), r.c.size());
  }
}

TEST(Cd1, IncreasesExactLikelihood) {
  const Matrix V = four_patterns();
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Rbm r = init_rbm(3, 2, rng);
    const double before = log_likelihood(r, V);
    for (int epoch = 0; epoch < 500; ++epoch) r = cd1_update(r, V, 0.1, rng);
    improved += log_likelihood(r, V) > before;
  }
  EXPECT_GE(improved, 18);
}

TEST(Cd1, SymmetricDataKeepsSymmetricWeights) {
  // two identical visible columns and identical initial columns of W
  Matrix V(4, 2);
  V << 1, 1, 0, 0, 1, 1, 1, 1;
  Rbm r = Rbm::zeros(2, 3);
  r.W.col(0) << 0.1, -0.2, 0.3;
  r.W.col(1) = r.W.col(0);
  Rng rng(8);
  // expected-value update: the visible sampling noise differs per column, so compare the data term only
  const Matrix h0 = hidden_probabilities(r, V);
  const Matrix pos = h0.transpose() * V;
  EXPECT_EQ(pos.col(0), pos.col(1));
  const auto after = cd1_update(r, V, 0.0, rng);
  EXPECT_EQ(after.W.col(0), after.W.col(1));
}

TEST(Dbn, ChainsAndIsDeterministic) {
  Rng rng(9);
  Matrix X(40, 20);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform();
  Hyperparams hp;
  hp.pretrain_epochs = 3;
  std::vector<TrainLog> logs;
  const auto dbn = dbn_pretrain(X, {8, 4}, hp, 5, &logs);
  ASSERT_EQ(dbn.layers.size(), 2u);
  EXPECT_EQ(dbn.layers[1].n_visible(), 8);
  EXPECT_EQ(dbn.layers[1].n_hidden(), 4);
  EXPECT_EQ(logs.size(), 2u);
  const auto again = dbn_pretrain(X, {8, 4}, hp, 5);
  EXPECT_EQ(again.layers[1].W, dbn.layers[1].W);
  Matrix bad = X;
  bad(0, 0) = 1.5;
  EXPECT_THROW(dbn_pretrain(bad, {4}, hp, 1), Error);
}

TEST(Dbn, SingleLayerIsStandaloneTraining) {
  Rng rng(10);
  Matrix X(30, 6);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform();
  Hyperparams hp;
  hp.pretrain_epochs = 4;
  const auto dbn = dbn_pretrain(X, {3}, hp, 7);
  Rng layer_rng(substream(7, 0));
  Rbm r = init_rbm(6, 3, layer_rng);
  train_rbm_inplace(r, X, hp, layer_rng);
  EXPECT_EQ(dbn.layers[0].W, r.W);
}

TEST(Dbn, ReconstructionErrorFallsOnStructuredData) {
  // binary rows drawn from two prototypes with 5% flips
  Rng rng(11);
  Matrix X(200, 12);
  for (Eigen::Index i = 0; i < 200; ++i)
    for (Eigen::Index j = 0; j < 12; ++j) {
      const bool proto = (i % 2 == 0) ? (j < 6) : (j >= 6);
      X(i, j) = (proto != rng.bernoulli(0.05)) ? 1.0 : 0.0;
    }
  Hyperparams hp;
  hp.pretrain_epochs = 30;
  hp.learning_rate = 0.1;
  hp.batch_size = 20;
  std::vector<TrainLog> logs;
  dbn_pretrain(X, {4, 2}, hp, 3, &logs);
  for (const auto& log : logs) EXPECT_LT(log.epoch_loss.back(), log.epoch_loss.front());
}

TEST(DbnNetwork, ShapesAndZeroEpochFinetune) {
  Rng rng(12);
  Matrix X(30, 6);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform();
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) y.push_back(i % 2);
  Dataset ds;
  ds.rows = X;
  ds.labels = y;
  for (int c = 0; c < 6; ++c) ds.feature_names.push_back("f" + std::to_string(c));
  for (int i = 0; i < 30; ++i) ds.row_ids.push_back(std::to_string(i));
  Hyperparams hp;
  hp.pretrain_epochs = 2;
  hp.epochs = 0;
  const auto dbn = dbn_pretrain(X, {5, 3}, hp, 1);
  const auto net = dbn_to_network(dbn, ds, hp, 2, Scaler{});
  ASSERT_EQ(net.layers.size(), 2u);
  EXPECT_EQ(net.out_W.rows(), 2);
  EXPECT_EQ(net.out_W.cols(), 3);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(net.layers[l].W, dbn.layers[l].W);
    EXPECT_EQ(net.layers[l].b, dbn.layers[l].b);
  }
}

TEST(RbmIo, JsonRoundTrip) {
  Rng rng(13);
  const auto r = random_rbm(4, 3, rng);
  const auto back = rbm_from_json(rbm_to_json(r));
  EXPECT_EQ(back.W, r.W);
  EXPECT_EQ(back.b, r.b);
  EXPECT_EQ(back.c, r.c);
}
