#pragma once

// Unpruned Gini decision trees and the bootstrap random forest built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/dataset.hpp"
#include "pintent/error.hpp"
#include "pintent/linalg.hpp"
#include "pintent/random.hpp"

namespace pintent {

/// Split nodes send x[feature] <= threshold left. Leaves have feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double positives = 0.0;
  double total = 0.0;
  double probability = 0.0;  // positives / total at this node

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t dim = 0;

  const TreeNode& leaf_for(const double* x) const {
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf())
      node = &nodes[static_cast<std::size_t>(x[node->feature] <= node->threshold ? node->left : node->right)];
    return *node;
  }

  std::size_t depth() const {
    std::vector<std::pair<int, std::size_t>> stack{{0, 1}};
    std::size_t best = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      const auto& n = nodes[static_cast<std::size_t>(i)];
      if (!n.is_leaf()) {
        stack.push_back({n.left, d + 1});
        stack.push_back({n.right, d + 1});
      }
    }
    return best;
  }
};

struct TreeConfig {
  std::size_t mtry = 0;      // 0 -> ceil(sqrt(d))
  std::size_t min_leaf = 1;  // minimum samples in each child of a split
};

inline std::size_t default_mtry(std::size_t d) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)))));
}

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;  // n_left * gini_left + n_right * gini_right
};

// n * gini for a node with `pos` positives among `n`.
inline double weighted_gini(double pos, double n) { return n > 0 ? 2.0 * pos * (n - pos) / n : 0.0; }

inline void best_split_on(const Matrix& X, const std::vector<int>& y, const std::vector<std::size_t>& idx, int feature,
                          std::size_t min_leaf, SplitChoice& best, std::vector<std::pair<double, int>>& scratch) {
  scratch.clear();
  for (auto i : idx) scratch.emplace_back(X(static_cast<Eigen::Index>(i), feature), y[i]);
  std::sort(scratch.begin(), scratch.end(), [](auto& a, auto& b) { return a.first < b.first; });
  const double n = static_cast<double>(scratch.size());
  double total_pos = 0.0;
  for (auto& [v, t] : scratch) total_pos += t;
  double left_pos = 0.0;
  for (std::size_t k = 0; k + 1 < scratch.size(); ++k) {
    left_pos += scratch[k].second;
    const double lo = scratch[k].first, hi = scratch[k + 1].first;
    if (!(lo < hi)) continue;
    const double nl = static_cast<double>(k + 1);
    if (k + 1 < min_leaf || scratch.size() - (k + 1) < min_leaf) continue;
    const double imp = weighted_gini(left_pos, nl) + weighted_gini(total_pos - left_pos, n - nl);
    // equal impurity goes to the lower feature index, so the visiting order does not matter
    if (best.feature < 0 || imp < best.impurity || (imp == best.impurity && feature < best.feature)) {
      double mid = lo + (hi - lo) / 2.0;
      if (!(mid < hi)) mid = lo;
      best = {feature, mid, imp};
    }
  }
}

}  // namespace detail

/// Grows one tree on the given row indices (repeats allowed, as in a bootstrap).
/// At every node `mtry` features are drawn without replacement; if none of them
/// separates the node, the remaining features are tried in the same random order.
inline Tree grow_tree(const Matrix& X, const std::vector<int>& y, std::vector<std::size_t> rows, const TreeConfig& cfg,
                      Rng& rng) {
  require(!rows.empty(), "cannot grow a tree on an empty sample");
  const auto d = static_cast<std::size_t>(X.cols());
  const std::size_t mtry = cfg.mtry ? cfg.mtry : default_mtry(d);
  require(mtry <= d, "mtry must not exceed the feature count");
  require(cfg.min_leaf >= 1, "min_leaf must be at least 1");

  Tree tree;
  tree.dim = d;
  struct Pending {
    std::size_t node;
    std::vector<std::size_t> rows;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::move(rows)});
  std::vector<std::pair<double, int>> scratch;
  std::vector<int> features(d);
  std::iota(features.begin(), features.end(), 0);

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    double pos = 0.0;
    for (auto i : cur.rows) pos += y[i];
    const double total = static_cast<double>(cur.rows.size());
    {
      auto& node = tree.nodes[cur.node];
      node.positives = pos;
      node.total = total;
      node.probability = pos / total;
    }
    if (pos == 0.0 || pos == total || cur.rows.size() < 2 * cfg.min_leaf) continue;

    detail::SplitChoice best;
    rng.shuffle(features);
    for (std::size_t k = 0; k < d; ++k) {
      if (k >= mtry && best.feature >= 0) break;
      detail::best_split_on(X, y, cur.rows, features[k], cfg.min_leaf, best, scratch);
    }
    if (best.feature < 0) continue;

    std::vector<std::size_t> left, right;
    for (auto i : cur.rows) (X(static_cast<Eigen::Index>(i), best.feature) <= best.threshold ? left : right).push_back(i);
    const auto li = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[cur.node];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = static_cast<int>(li);
    node.right = static_cast<int>(li + 1);
    stack.push_back({li + 1, std::move(right)});
    stack.push_back({li, std::move(left)});
  }
  return tree;
}

inline Tree train_tree(const Dataset& sample, const TreeConfig& cfg, std::uint64_t seed) {
  require(sample.size() > 0, "cannot train a tree on an empty sample");
  std::vector<std::size_t> rows(sample.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  return grow_tree(sample.rows, sample.labels, std::move(rows), cfg, rng);
}

inline double predict_tree(const Tree& tree, const Vector& x) {
  require_dims(static_cast<std::size_t>(x.size()) == tree.dim, "tree expects " + std::to_string(tree.dim) + " features");
  return tree.leaf_for(x.data()).probability;
}

// ---------------------------------------------------------------------------

struct ForestConfig {
  std::size_t n_trees = 100;
  TreeConfig tree;
  bool bootstrap = true;
};

struct Forest {
  std::vector<Tree> trees;
  ForestConfig config;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
};

/// Tree t uses its own substream of `seed`, so the forest does not depend on
/// the order in which trees are built.
inline Forest train_forest(const Dataset& train, const ForestConfig& cfg, std::uint64_t seed) {
  require(cfg.n_trees >= 1, "a forest needs at least one tree");
  require(train.size() > 0, "cannot train a forest on an empty dataset");
  Forest forest;
  forest.config = cfg;
  forest.seed = seed;
  forest.dim = train.dim();
  const std::size_t n = train.size();
  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    Rng rng(substream(seed, t));
    std::vector<std::size_t> rows(n);
    if (cfg.bootstrap) {
      for (auto& r : rows) r = rng.below(n);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    forest.trees.push_back(grow_tree(train.rows, train.labels, std::move(rows), cfg.tree, rng));
  }
  return forest;
}

struct ForestPrediction {
  double probability = 0.0;  // mean leaf probability
  int label = 0;             // majority vote, ties -> non-buy
};

inline ForestPrediction predict_forest(const Forest& forest, const Vector& x) {
  require_dims(static_cast<std::size_t>(x.size()) == forest.dim,
               "forest expects " + std::to_string(forest.dim) + " features, got " + std::to_string(x.size()));
  double sum = 0.0;
  std::size_t votes = 0;
  for (const auto& tree : forest.trees) {
    const double p = tree.leaf_for(x.data()).probability;
    sum += p;
    votes += p >= 0.5;
  }
  const std::size_t n = forest.trees.size();
  return {sum / static_cast<double>(n), 2 * votes > n ? 1 : 0};
}

inline Vector predict_forest(const Forest& forest, const Matrix& X) {
  require_dims(static_cast<std::size_t>(X.cols()) == forest.dim, "forest expects " + std::to_string(forest.dim) + " features");
  Vector out(X.rows());
  Vector row(X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    row = X.row(i).transpose();
    out(i) = predict_forest(forest, row).probability;
  }
  return out;
}

// Trees serialize as arrays of [feature, threshold, left, right, positives, total].
inline nlohmann::json forest_to_json(const Forest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.positives, n.total});
    trees.push_back(nodes);
  }
  return {{"dim", f.dim},
          {"seed", f.seed},
          {"config",
           {{"n_trees", f.config.n_trees},
            {"mtry", f.config.tree.mtry},
            {"min_leaf", f.config.tree.min_leaf},
            {"bootstrap", f.config.bootstrap}}},
          {"trees", trees}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
  Forest f;
  f.dim = j.at("dim").get<std::size_t>();
  f.seed = j.at("seed").get<std::uint64_t>();
  const auto& c = j.at("config");
  f.config.n_trees = c.at("n_trees").get<std::size_t>();
  f.config.tree.mtry = c.at("mtry").get<std::size_t>();
  f.config.tree.min_leaf = c.at("min_leaf").get<std::size_t>();
  f.config.bootstrap = c.at("bootstrap").get<bool>();
  for (const auto& jt : j.at("trees")) {
    Tree t;
    t.dim = f.dim;
    for (const auto& jn : jt) {
      TreeNode n;
      n.feature = jn.at(0).get<int>();
      n.threshold = jn.at(1).get<double>();
      n.left = jn.at(2).get<int>();
      n.right = jn.at(3).get<int>();
      n.positives = jn.at(4).get<double>();
      n.total = jn.at(5).get<double>();
      n.probability = n.total > 0 ? n.positives / n.total : 0.0;
      t.nodes.push_back(n);
    }
    require(!t.nodes.empty(), "forest file contains an empty tree");
    f.trees.push_back(std::move(t));
  }
  require(!f.trees.empty(), "forest file contains no trees");
  return f;
}

}  // namespace pintent
