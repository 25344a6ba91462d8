#pragma once

// One handle over the four classifier families so the CLI and the evaluation
// harness can train, score and persist them uniformly.

#include <cstdint>
#include <memory>
#include <string>

#include <json.hpp>

#include "pintent/dataset.hpp"
#include "pintent/energy.hpp"
#include "pintent/error.hpp"
#include "pintent/evaluation.hpp"
#include "pintent/forest.hpp"
#include "pintent/hyperparams.hpp"
#include "pintent/io.hpp"
#include "pintent/logistic.hpp"
#include "pintent/neural.hpp"

namespace pintent {

enum class ModelKind { lr, rf, sda, dbn };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::lr: return "lr";
    case ModelKind::rf: return "rf";
    case ModelKind::sda: return "sda";
    case ModelKind::dbn: return "dbn";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "lr") return ModelKind::lr;
  if (s == "rf") return ModelKind::rf;
  if (s == "sda") return ModelKind::sda;
  if (s == "dbn") return ModelKind::dbn;
  fail(ErrorKind::invalid_argument, "unknown model '" + s + "' (expected lr, rf, sda or dbn)");
}

/// Everything needed to retrain a model from scratch.
struct ModelSpec {
  ModelKind kind = ModelKind::lr;
  LogisticConfig logistic;
  ForestConfig forest;
  Hyperparams hp;  // sda and dbn
};

struct TrainedModel {
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  LogisticModel logistic;
  Forest forest;
  Network network;
};

inline TrainedModel train_model(const ModelSpec& spec, const Dataset& train, std::uint64_t seed) {
  require(train.size() > 0, "cannot train on an empty dataset");
  TrainedModel m;
  m.spec = spec;
  m.seed = seed;
  m.dim = train.dim();
  switch (spec.kind) {
    case ModelKind::lr: m.logistic = train_logistic(train, spec.logistic, seed); break;
    case ModelKind::rf: m.forest = train_forest(train, spec.forest, seed); break;
    case ModelKind::sda: m.network = train_sda(train, spec.hp, seed); break;
    case ModelKind::dbn: m.network = train_dbn(train, spec.hp, seed); break;
  }
  return m;
}

/// Buy-class scores for raw rows.
inline Vector predict_model(const TrainedModel& m, const Matrix& X) {
  require_dims(static_cast<std::size_t>(X.cols()) == m.dim,
               "model expects " + std::to_string(m.dim) + " features, got " + std::to_string(X.cols()));
  switch (m.spec.kind) {
    case ModelKind::lr: return predict_logistic(m.logistic, X);
    case ModelKind::rf: return predict_forest(m.forest, X);
    default: return network_predict(m.network, X);
  }
}

inline Trainer make_trainer(const ModelSpec& spec) {
  return [spec](const Dataset& train, std::uint64_t seed) -> Scorer {
    auto model = std::make_shared<TrainedModel>(train_model(spec, train, seed));
    return [model](const Matrix& X) { return predict_model(*model, X); };
  };
}

inline constexpr int kModelVersion = 1;

inline nlohmann::json model_spec_to_json(const ModelSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case ModelKind::lr:
      j["config"] = {{"learning_rate", s.logistic.learning_rate},
                     {"epochs", s.logistic.epochs},
                     {"l2", s.logistic.l2},
                     {"batch_size", s.logistic.batch_size}};
      break;
    case ModelKind::rf:
      j["config"] = {{"n_trees", s.forest.n_trees},
                     {"mtry", s.forest.tree.mtry},
                     {"min_leaf", s.forest.tree.min_leaf},
                     {"bootstrap", s.forest.bootstrap}};
      break;
    default: j["config"] = hyperparams_to_json(s.hp);
  }
  return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = parse_model_kind(j.at("kind").get<std::string>());
  const auto& c = j.at("config");
  switch (s.kind) {
    case ModelKind::lr:
      s.logistic.learning_rate = c.at("learning_rate").get<double>();
      s.logistic.epochs = c.at("epochs").get<std::size_t>();
      s.logistic.l2 = c.at("l2").get<double>();
      s.logistic.batch_size = c.at("batch_size").get<std::size_t>();
      break;
    case ModelKind::rf:
      s.forest.n_trees = c.at("n_trees").get<std::size_t>();
      s.forest.tree.mtry = c.at("mtry").get<std::size_t>();
      s.forest.tree.min_leaf = c.at("min_leaf").get<std::size_t>();
      s.forest.bootstrap = c.at("bootstrap").get<bool>();
      break;
    default: s.hp = hyperparams_from_json(c);
  }
  return s;
}

inline nlohmann::json model_to_json(const TrainedModel& m) {
  nlohmann::json params;
  switch (m.spec.kind) {
    case ModelKind::lr: params = logistic_to_json(m.logistic); break;
    case ModelKind::rf: params = forest_to_json(m.forest); break;
    default: params = network_to_json(m.network);
  }
  return {{"format", "pintent-model"}, {"version", kModelVersion}, {"spec", model_spec_to_json(m.spec)},
          {"seed", m.seed},            {"dim", m.dim},              {"params", params}};
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  check_schema(j, "pintent-model", kModelVersion);
  TrainedModel m;
  m.spec = model_spec_from_json(j.at("spec"));
  m.seed = j.at("seed").get<std::uint64_t>();
  m.dim = j.at("dim").get<std::size_t>();
  const auto& p = j.at("params");
  switch (m.spec.kind) {
    case ModelKind::lr:
      m.logistic = logistic_from_json(p);
      require_dims(static_cast<std::size_t>(m.logistic.weights.size()) == m.dim, "model weights do not match its dim");
      break;
    case ModelKind::rf:
      m.forest = forest_from_json(p);
      require_dims(m.forest.dim == m.dim, "forest dim does not match the model dim");
      break;
    default:
      m.network = network_from_json(p);
      require_dims(m.network.input_dim() == m.dim, "network input width does not match the model dim");
  }
  return m;
}

inline void save_model(const TrainedModel& m, const std::string& path) { write_file(path, render_json(model_to_json(m))); }

inline TrainedModel load_model(const std::string& path) { return model_from_json(parse_json_file(path)); }

}  // namespace pintent
