#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/error.hpp"
#include "pintent/io.hpp"

namespace pintent {

enum class Activation { sigmoid, relu };

inline std::string to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "relu"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  fail(ErrorKind::invalid_argument, "unknown activation '" + s + "'");
}

/// Training metaparameters shared by autoencoder, RBM and network training.
struct Hyperparams {
  double dropout = 0.0;                         // [0, 0.3], hidden layers, fine-tuning only
  std::size_t epochs = 30;                      // supervised fine-tuning epochs
  std::size_t pretrain_epochs = 10;             // per unsupervised layer
  std::vector<std::size_t> hidden_units{64};    // one entry per hidden layer
  double annealing_delay = 1.0;                 // fraction of iterations before linear decay starts
  double learning_rate = 0.05;                  // [0.001, 0.25]
  double momentum = 0.5;                        // [0, 0.95]
  double l2 = 0.0;                              // [0, 0.01], weights only
  Activation activation = Activation::sigmoid;  // all hidden units
  double noise = 0.0;                           // masking noise for denoising autoencoders, [0, 0.2]
  std::size_t batch_size = 128;

  bool operator==(const Hyperparams&) const = default;
};

/// Bounds every training routine relies on.
inline void validate_training(const Hyperparams& hp) {
  require(hp.dropout >= 0.0 && hp.dropout <= 0.3, "dropout must be in [0, 0.3]");
  require(hp.noise >= 0.0 && hp.noise <= 0.2, "noise level must be in [0, 0.2]");
  require(hp.learning_rate >= 0.0 && std::isfinite(hp.learning_rate), "learning rate must be finite and >= 0");
  require(hp.momentum >= 0.0 && hp.momentum < 1.0, "momentum must be in [0, 1)");
  require(hp.l2 >= 0.0, "L2 weight cost must be >= 0");
  require(hp.annealing_delay >= 0.0 && hp.annealing_delay <= 1.0, "annealing delay must be in [0, 1]");
  require(hp.batch_size >= 1, "batch size must be positive");
  for (auto h : hp.hidden_units) require(h >= 1, "hidden layers need at least one unit");
}

/// The full metaparameter search box, including epoch and layer-size limits.
inline void validate_search_ranges(const Hyperparams& hp) {
  validate_training(hp);
  require(!hp.hidden_units.empty(), "at least one hidden layer is required");
  const bool single = hp.hidden_units.size() == 1;
  require(hp.epochs >= 10 && hp.epochs <= (single ? 100u : 150u),
          single ? "epochs must be in [10, 100] for one hidden layer" : "epochs must be in [10, 150] for deeper nets");
  for (std::size_t i = 0; i < hp.hidden_units.size(); ++i) {
    const std::size_t lo = (single && i == 0) ? 16 : 64;
    require(hp.hidden_units[i] >= lo && hp.hidden_units[i] <= 500,
            "hidden layer " + std::to_string(i + 1) + " must have between " + std::to_string(lo) + " and 500 units");
  }
  require(hp.learning_rate >= 0.001 && hp.learning_rate <= 0.25, "learning rate must be in [0.001, 0.25]");
  require(hp.momentum <= 0.95, "momentum must be in [0, 0.95]");
  require(hp.l2 <= 0.01, "L2 weight cost must be in [0, 0.01]");
}

inline nlohmann::json hyperparams_to_json(const Hyperparams& hp) {
  return {{"dropout", hp.dropout},
          {"epochs", hp.epochs},
          {"pretrain_epochs", hp.pretrain_epochs},
          {"hidden_units", hp.hidden_units},
          {"annealing_delay", hp.annealing_delay},
          {"learning_rate", hp.learning_rate},
          {"momentum", hp.momentum},
          {"l2", hp.l2},
          {"activation", to_string(hp.activation)},
          {"noise", hp.noise},
          {"batch_size", hp.batch_size}};
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.dropout = j.at("dropout").get<double>();
  hp.epochs = j.at("epochs").get<std::size_t>();
  hp.pretrain_epochs = j.at("pretrain_epochs").get<std::size_t>();
  hp.hidden_units = j.at("hidden_units").get<std::vector<std::size_t>>();
  hp.annealing_delay = j.at("annealing_delay").get<double>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.momentum = j.at("momentum").get<double>();
  hp.l2 = j.at("l2").get<double>();
  hp.activation = parse_activation(j.at("activation").get<std::string>());
  hp.noise = j.at("noise").get<double>();
  hp.batch_size = j.at("batch_size").get<std::size_t>();
  return hp;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::parse, "hyperparameter '" + key + "': '" + v + "' is not a number");
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    fail(ErrorKind::parse, "hyperparameter '" + key + "': '" + v + "' is not a non-negative integer");
  return static_cast<std::size_t>(std::stoull(v));
}

}  // namespace detail

/// Flat `key = value` file; `#` starts a comment. Unset keys keep `base` values.
/// hidden_units takes a comma-separated list, e.g. `hidden_units = 300,150`.
inline Hyperparams parse_hyperparams(std::istream& in, Hyperparams base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::parse, "hyperparameter file line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key == "dropout") base.dropout = detail::to_double(key, value);
    else if (key == "epochs") base.epochs = detail::to_count(key, value);
    else if (key == "pretrain_epochs") base.pretrain_epochs = detail::to_count(key, value);
    else if (key == "annealing_delay") base.annealing_delay = detail::to_double(key, value);
    else if (key == "learning_rate") base.learning_rate = detail::to_double(key, value);
    else if (key == "momentum") base.momentum = detail::to_double(key, value);
    else if (key == "l2") base.l2 = detail::to_double(key, value);
    else if (key == "noise") base.noise = detail::to_double(key, value);
    else if (key == "batch_size") base.batch_size = detail::to_count(key, value);
    else if (key == "activation") base.activation = parse_activation(value);
    else if (key == "hidden_units") {
      base.hidden_units.clear();
      std::stringstream ss(value);
      std::string part;
      while (std::getline(ss, part, ',')) base.hidden_units.push_back(detail::to_count(key, detail::trim(part)));
    } else {
      fail(ErrorKind::parse, "unknown hyperparameter '" + key + "' on line " + std::to_string(line_no));
    }
  }
  validate_training(base);
  return base;
}

inline Hyperparams load_hyperparams(const std::string& path, Hyperparams base = {}) {
  std::istringstream in(read_file(path));
  return parse_hyperparams(in, std::move(base));
}

/// Learning rate at iteration t of `total`: constant for the first
/// `delay` fraction of iterations, then linear decay to zero.
inline double annealed_rate(double initial, double delay, std::size_t t, std::size_t total) {
  if (total == 0) return initial;
  const double start = delay * static_cast<double>(total);
  const double tt = static_cast<double>(t);
  if (tt < start) return initial;
  const double span = static_cast<double>(total) - start;
  if (span <= 0.0) return initial;
  return initial * std::max(0.0, 1.0 - (tt - start) / span);
}

}  // namespace pintent
