#pragma once

// Seeded clickstream generator with a planted buy-intent signal.
//
// Every session draws an engagement level e ~ U(0, 1) and two coins u1, u2.
// e sets the click count and dwell times, and the session gets
// n ~ Poisson(3e) views in a few "linear" categories. Its buy probability is
//     sigmoid(bias + s * (A * (min(n, 8) - 1.5) / 1.5 + B * x))
// where x = +1 if u1 != u2 else -1 when the interaction is enabled (x = 0
// otherwise), and the bias is solved so the mean probability equals buy_rate.
// u1 and u2 each add two views of a rare category, so x is only visible
// through the pair of counts. Background views never land in these planted
// categories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/embedding.hpp"
#include "pintent/error.hpp"
#include "pintent/evaluation.hpp"
#include "pintent/ingest.hpp"
#include "pintent/io.hpp"
#include "pintent/linalg.hpp"
#include "pintent/random.hpp"

namespace pintent {

struct SynthConfig {
  std::size_t n_users = 5000;
  std::size_t n_categories = 257;
  double buy_rate = 0.03;
  double signal = 0.8;  // signal_strength in [0, 1]
  bool nonlinear = false;
  std::size_t weeks = 26;
  double sessions_per_user = 8.0;  // mean
  std::uint64_t seed = 0;

  void validate() const {
    require(n_users >= 1, "synth needs at least one user");
    require(n_categories >= 13, "synth needs at least 13 categories");
    require(buy_rate > 0.0 && buy_rate < 1.0, "buy rate must be in (0, 1)");
    require(signal >= 0.0 && signal <= 1.0, "signal strength must be in [0, 1]");
    require(weeks >= 1, "synth needs at least one week");
    require(sessions_per_user >= 1.0, "mean sessions per user must be at least 1");
  }

  nlohmann::json to_json() const {
    return {{"n_users", n_users},     {"n_categories", n_categories},
            {"buy_rate", buy_rate},   {"signal", signal},
            {"nonlinear", nonlinear}, {"weeks", weeks},
            {"sessions_per_user", sessions_per_user}, {"seed", seed}};
  }
};

namespace synth_detail {

inline constexpr double kLinearWeight = 1.4;        // A
inline constexpr double kInteractionWeight = 3.0;  // B
inline constexpr double kLinearRate = 3.0;         // linear-category views ~ Poisson(kLinearRate * e)
inline constexpr std::size_t kLinearCap = 8;
inline constexpr Millis kEpoch = 1420416000000;    // Monday 2015-01-05 00:00 UTC
inline constexpr std::size_t kItemsPerCategory = 30;
inline constexpr double kUnusableShare = 0.05;  // buy sessions whose buy lands inside the exclusion window
inline constexpr std::size_t kGrid = 4000;

inline std::vector<std::size_t> linear_categories() { return {2, 4, 6, 8, 10}; }
inline std::size_t pair_category(std::size_t k, int which) { return std::min<std::size_t>(40 + which, k - 2 + which); }

// Standardized linear-category view count: Poisson(3e) with e ~ U(0,1) has mean 1.5 and sd 1.5.
inline double linear_score(std::size_t views) {
  return (static_cast<double>(std::min(views, kLinearCap)) - 1.5) / 1.5;
}

inline double signal_part(double s, bool nonlinear, std::size_t views, int x) {
  return s * (kLinearWeight * linear_score(views) + (nonlinear ? kInteractionWeight * x : 0.0));
}

// P(views = k) for k < kLinearCap, the capped tail folded into the last entry.
inline std::vector<double> linear_count_pmf() {
  std::vector<double> pmf(kLinearCap + 1, 0.0);
  for (std::size_t i = 0; i < kGrid; ++i) {
    const double lambda = kLinearRate * (static_cast<double>(i) + 0.5) / static_cast<double>(kGrid);
    double p = std::exp(-lambda), used = 0.0;
    for (std::size_t k = 0; k < kLinearCap; ++k) {
      pmf[k] += p;
      used += p;
      p *= lambda / static_cast<double>(k + 1);
    }
    pmf[kLinearCap] += 1.0 - used;
  }
  for (auto& v : pmf) v /= static_cast<double>(kGrid);
  return pmf;
}

// Mean buy probability for a given bias.
inline double mean_intent(double bias, double s, bool nonlinear) {
  static const std::vector<double> pmf = linear_count_pmf();
  double total = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k)
    total += pmf[k] * (0.5 * sigmoid(bias + signal_part(s, nonlinear, k, 1)) +
                       0.5 * sigmoid(bias + signal_part(s, nonlinear, k, -1)));
  return total;
}

inline double solve_bias(double rate, double s, bool nonlinear) {
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_intent(mid, s, nonlinear) < rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline std::string pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

inline std::string category_name(std::size_t c) { return "cat" + std::to_string(c); }
inline std::string item_name(std::size_t c, std::size_t k) { return "c" + std::to_string(c) + "_i" + std::to_string(k); }
inline double item_price(std::size_t c, std::size_t k) {
  return 5.0 + static_cast<double>((c * 31 + k * 17) % 190) + 0.99;
}

}  // namespace synth_detail

struct SynthStats {
  std::size_t sessions = 0;
  std::size_t buy_sessions = 0;
  std::size_t events = 0;
  double bias = 0.0;
};

struct SynthOutput {
  std::string events;      // JSON Lines
  std::string truth;       // JSON Lines: session_id, user_id, intent, label
  std::string embeddings;  // TSV token table for item descriptions
  nlohmann::json config;
  SynthStats stats;
};

inline SynthOutput generate(const SynthConfig& cfg) {
  using namespace synth_detail;
  cfg.validate();
  SynthOutput out;
  const double bias = solve_bias(cfg.buy_rate, cfg.signal, cfg.nonlinear);
  out.stats.bias = bias;

  const std::size_t K = cfg.n_categories;
  std::vector<double> zipf_cdf(K);
  double acc = 0.0;
  for (std::size_t c = 0; c < K; ++c) zipf_cdf[c] = acc += 1.0 / static_cast<double>(c + 1);
  for (auto& v : zipf_cdf) v /= acc;
  const auto lin = linear_categories();
  const std::size_t p1 = pair_category(K, 0), p2 = pair_category(K, 1);
  std::vector<bool> planted(K, false);
  for (auto c : lin) planted[c] = true;
  planted[p1] = planted[p2] = true;
  const Millis span = static_cast<Millis>(cfg.weeks) * 7 * kMillisPerDay - 4 * kMillisPerDay;

  std::ostringstream events, truth;
  auto emit = [&](nlohmann::json j) {
    events << j.dump() << '\n';
    ++out.stats.events;
  };

  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    Rng rng(substream(cfg.seed, u));
    const std::string user = "u" + pad(u, 6);
    const std::size_t n_sessions = 1 + static_cast<std::size_t>(rng.poisson(cfg.sessions_per_user - 1.0));
    std::vector<Millis> starts(n_sessions);
    for (auto& s : starts) s = kEpoch + static_cast<Millis>(rng.uniform() * static_cast<double>(std::max<Millis>(span, 1)));
    std::sort(starts.begin(), starts.end());

    for (std::size_t j = 0; j < n_sessions; ++j) {
      const std::string sid = "s" + pad(u, 6) + "_" + pad(j, 3);
      const double e = rng.uniform();
      const bool u1 = rng.bernoulli(0.5), u2 = rng.bernoulli(0.5);
      const int x = u1 != u2 ? 1 : -1;

      std::vector<std::size_t> cats;
      const std::size_t n_background = 3 + static_cast<std::size_t>(rng.poisson(4.0 + 4.0 * e));
      for (std::size_t v = 0; v < n_background; ++v) {
        std::size_t c;
        do {
          c = static_cast<std::size_t>(std::lower_bound(zipf_cdf.begin(), zipf_cdf.end(), rng.uniform()) -
                                       zipf_cdf.begin());
        } while (planted[c]);
        cats.push_back(c);
      }
      const std::size_t n_linear = static_cast<std::size_t>(rng.poisson(kLinearRate * e));
      for (std::size_t v = 0; v < n_linear; ++v) cats.push_back(lin[rng.below(lin.size())]);
      if (u1) cats.insert(cats.end(), {p1, p1});
      if (u2) cats.insert(cats.end(), {p2, p2});
      rng.shuffle(cats);
      const double intent = sigmoid(bias + signal_part(cfg.signal, cfg.nonlinear, n_linear, x));
      const bool buy = rng.bernoulli(intent);

      Millis t = starts[j];
      if (rng.bernoulli(0.1))
        emit({{"user_id", user}, {"session_id", sid}, {"timestamp", t}, {"event_type", "adview"}, {"item_id", "ad0"}});
      std::vector<std::pair<std::size_t, std::size_t>> viewed;
      for (auto c : cats) {
        const std::size_t k = rng.below(kItemsPerCategory);
        viewed.emplace_back(c, k);
        emit({{"user_id", user},
              {"session_id", sid},
              {"timestamp", t},
              {"event_type", "pageview"},
              {"item_id", item_name(c, k)},
              {"category_id", category_name(c)},
              {"description", category_name(c) + " item" + std::to_string(k % 10)}});
        t += std::max<Millis>(1000, static_cast<Millis>(rng.exponential(1000.0 * (20.0 + 80.0 * e))));
      }
      const Millis last_view = t;
      if (rng.bernoulli(0.3)) {
        const auto [c, k] = viewed[rng.below(viewed.size())];
        emit({{"user_id", user},
              {"session_id", sid},
              {"timestamp", last_view + 500},
              {"event_type", "basketview"},
              {"item_id", item_name(c, k)},
              {"category_id", category_name(c)},
              {"price", item_price(c, k)}});
      }
      if (buy) {
        const Millis gap = rng.bernoulli(kUnusableShare)
                               ? static_cast<Millis>(rng.uniform(10.0 * 60e3, 2.0 * 3600e3))
                               : kMillisPerDay + static_cast<Millis>(rng.uniform(3600e3, 72.0 * 3600e3));
        const auto [c, k] = viewed[rng.below(viewed.size())];
        emit({{"user_id", user},
              {"session_id", sid},
              {"timestamp", last_view + gap},
              {"event_type", "buy"},
              {"item_id", item_name(c, k)},
              {"category_id", category_name(c)},
              {"price", item_price(c, k)}});
        ++out.stats.buy_sessions;
      }
      ++out.stats.sessions;
      truth << nlohmann::json{{"session_id", sid}, {"user_id", user}, {"intent", intent}, {"label", buy ? 1 : 0}}.dump()
            << '\n';
    }
  }

  std::ostringstream emb;
  Rng erng(substream(cfg.seed, ~std::uint64_t{0}));
  auto row = [&](const std::string& token) {
    emb << token;
    char buf[32];
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
      std::snprintf(buf, sizeof buf, "\t%.6f", 0.5 * erng.normal());
      emb << buf;
    }
    emb << '\n';
  };
  for (std::size_t c = 0; c < K; ++c) row(category_name(c));
  for (std::size_t k = 0; k < 10; ++k) row("item" + std::to_string(k));

  out.events = events.str();
  out.truth = truth.str();
  out.embeddings = emb.str();
  out.config = cfg.to_json();
  out.config["intent_bias"] = bias;
  return out;
}

/// Writes events.jsonl, truth.jsonl, embeddings.tsv and config.json into `dir`.
inline void write_synth(const SynthOutput& out, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + dir + ": " + ec.message());
  const std::filesystem::path d(dir);
  write_file((d / "events.jsonl").string(), out.events);
  write_file((d / "truth.jsonl").string(), out.truth);
  write_file((d / "embeddings.tsv").string(), out.embeddings);
  write_file((d / "config.json").string(), render_json(out.config));
}

struct GroundTruth {
  std::vector<std::string> session_ids;
  std::vector<double> intent;
  std::vector<int> labels;
};

inline GroundTruth parse_truth(const std::string& text) {
  GroundTruth gt;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      gt.session_ids.push_back(j.at("session_id").get<std::string>());
      gt.intent.push_back(j.at("intent").get<double>());
      gt.labels.push_back(j.at("label").get<int>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, "ground truth line " + std::to_string(n) + ": " + e.what());
    }
  }
  return gt;
}

/// AUC of the true intent probabilities against the realized labels.
inline double bayes_optimal_auc(const GroundTruth& gt) { return auc(gt.intent, gt.labels); }

inline double bayes_optimal_auc(const std::string& truth_path) { return bayes_optimal_auc(parse_truth(read_file(truth_path))); }

}  // namespace pintent
