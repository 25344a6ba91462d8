#pragma once

// Command-line front end. Every command writes its artifacts plus a
// `<artifact>.manifest.json` recording flags, input/output digests and timing.
//
// Exit codes:
//   0 success            3 missing file / I/O      5 invalid data or arguments
//   1 unexpected error   4 schema-version mismatch 6 training diverged
//   2 usage error

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pintent/dataset.hpp"
#include "pintent/embedding.hpp"
#include "pintent/error.hpp"
#include "pintent/evaluation.hpp"
#include "pintent/features.hpp"
#include "pintent/hyperparams.hpp"
#include "pintent/ingest.hpp"
#include "pintent/io.hpp"
#include "pintent/models.hpp"
#include "pintent/nmf.hpp"
#include "pintent/synth.hpp"

namespace pintent {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_usage = 2,
  exit_io = 3,
  exit_schema = 4,
  exit_invalid = 5,
  exit_diverged = 6,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return exit_io;
    case ErrorKind::schema_version: return exit_schema;
    case ErrorKind::divergence: return exit_diverged;
    case ErrorKind::invalid_argument:
    case ErrorKind::dimension_mismatch:
    case ErrorKind::parse: return exit_invalid;
  }
  return exit_failure;
}

namespace cli_detail {

struct Manifest {
  std::string command;
  nlohmann::json flags = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;

  static nlohmann::json digests(const std::vector<std::string>& paths) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : paths) out.push_back({{"path", p}, {"digest", fingerprint(read_file(p))}});
    return out;
  }

  void write(const std::string& path, double seconds) const {
    nlohmann::json j = {{"format", "pintent-manifest"},
                        {"version", 1},
                        {"command", command},
                        {"flags", flags},
                        {"inputs", digests(inputs)},
                        {"outputs", digests(outputs)},
                        {"tool_version", kToolVersion},
                        {"wall_clock_seconds", seconds}};
    if (seed) j["seed"] = *seed;
    write_file(path, render_json(j));
  }
};

inline std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      fail(ErrorKind::invalid_argument, "layer sizes must be a comma-separated list of positive integers");
    out.push_back(static_cast<std::size_t>(std::stoull(part)));
    if (out.back() == 0) fail(ErrorKind::invalid_argument, "layer sizes must be positive");
  }
  if (out.empty()) fail(ErrorKind::invalid_argument, "at least one layer size is required");
  return out;
}

inline std::string dataset_id(const std::string& path) { return fingerprint(read_file(path + ".bin")); }

/// Replaces the category-aggregation block with its NMF encoding.
struct Reduced {
  Dataset ds;
  NmfFactors factors;
  std::vector<std::string> replaced;
};

inline Reduced reduce_dataset(const Dataset& ds, std::size_t rank, const NmfOptions& opts) {
  std::vector<Eigen::Index> agg, keep;
  for (std::size_t c = 0; c < ds.feature_names.size(); ++c)
    (ds.feature_names[c].rfind("agg:", 0) == 0 ? agg : keep).push_back(static_cast<Eigen::Index>(c));
  require(!agg.empty(), "dataset has no aggregation columns to reduce");
  Matrix V(ds.rows.rows(), static_cast<Eigen::Index>(agg.size()));
  for (std::size_t j = 0; j < agg.size(); ++j) V.col(static_cast<Eigen::Index>(j)) = ds.rows.col(agg[j]);
  Reduced r;
  r.factors = nmf_factorize(V, rank, opts);
  r.ds = ds;
  r.ds.rows.resize(ds.rows.rows(), static_cast<Eigen::Index>(keep.size() + rank));
  r.ds.feature_names.clear();
  for (std::size_t j = 0; j < keep.size(); ++j) {
    r.ds.rows.col(static_cast<Eigen::Index>(j)) = ds.rows.col(keep[j]);
    r.ds.feature_names.push_back(ds.feature_names[static_cast<std::size_t>(keep[j])]);
  }
  for (std::size_t j = 0; j < rank; ++j) {
    r.ds.rows.col(static_cast<Eigen::Index>(keep.size() + j)) = r.factors.W.col(static_cast<Eigen::Index>(j));
    r.ds.feature_names.push_back("nmf_" + std::to_string(j));
  }
  for (auto c : agg) r.replaced.push_back(ds.feature_names[static_cast<std::size_t>(c)]);
  r.ds.validate();
  return r;
}

}  // namespace cli_detail

/// Runs one command. `args` excludes the program name.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using cli_detail::Manifest;
  CLI::App app{"Purchase-intent prediction toolkit", "pintent"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Manifest m;
  std::string manifest_path;  // defaults to <first output>.manifest.json
  std::function<void()> action;

  std::string in_path, out_path, report_path, store_path, emb_path, model_path, hp_path, layers, aggregation = "weekly";
  std::size_t min_clicks = 10, categories = 257, rank = 0, nmf_iters = 500, cv = 0, budget = 20;
  double horizon_hours = 24.0, nmf_tol = 1e-5;
  std::uint64_t seed = 0;
  int utc_offset = 0;
  bool no_balance = false, holdout = false;
  std::string model_kind;
  ModelSpec spec;
  SearchSpace space;
  SynthConfig synth;

  auto* ingest_cmd = app.add_subcommand("ingest", "parse JSON Lines events into a filtered session store");
  ingest_cmd->add_option("--input", in_path, "event log (JSON Lines)")->required();
  ingest_cmd->add_option("--min-clicks", min_clicks, "drop users with fewer clicks")->capture_default_str();
  ingest_cmd->add_option("--horizon-hours", horizon_hours, "exclusion window before a purchase")->capture_default_str();
  ingest_cmd->add_option("--out", out_path, "session store (JSON)")->required();
  ingest_cmd->add_option("--report", report_path, "ingest report (JSON); default <out>.report.json");
  ingest_cmd->callback([&] {
    action = [&] {
      require(min_clicks >= 1, "--min-clicks must be at least 1");
      require(horizon_hours > 0.0, "--horizon-hours must be positive");
      std::ifstream in(in_path, std::ios::binary);
      if (!in) fail(ErrorKind::io, "cannot open " + in_path);
      const auto result = ingest(in, {min_clicks, static_cast<Millis>(std::llround(horizon_hours * kMillisPerHour))});
      if (report_path.empty()) report_path = out_path + ".report.json";
      save_store(result.store, out_path);
      write_file(report_path, render_json(result.report.to_json()));
      m.inputs = {in_path};
      m.outputs = {out_path, report_path};
      m.flags = {{"input", in_path}, {"min_clicks", min_clicks}, {"horizon_hours", horizon_hours}, {"out", out_path},
                 {"report", report_path}};
    };
  });

  auto* feat_cmd = app.add_subcommand("featurize", "build a feature dataset from a session store");
  feat_cmd->add_option("--store", store_path, "session store from ingest")->required();
  feat_cmd->add_option("--embeddings", emb_path, "word-vector table (TSV, 50 dimensions)");
  feat_cmd->add_option("--scheme", aggregation, "weekly or semiweekly")->capture_default_str();
  feat_cmd->add_option("--categories", categories, "number of top categories aggregated")->capture_default_str();
  feat_cmd->add_option("--utc-offset", utc_offset, "hours added to UTC for calendar features")->capture_default_str();
  feat_cmd->add_option("--balance-seed", seed, "seed for subsampling non-buy sessions")->required();
  feat_cmd->add_flag("--no-balance", no_balance, "keep every non-buy session");
  feat_cmd->add_option("--out", out_path, "dataset path (sidecar JSON; payload at <out>.bin)")->required();
  feat_cmd->callback([&] {
    action = [&] {
      const SessionStore store = load_store(store_path);
      const EmbeddingTable table = emb_path.empty() ? EmbeddingTable{} : load_embeddings(emb_path);
      FeaturizeOptions opts;
      opts.scheme = parse_aggregation(aggregation);
      opts.category_count = categories;
      opts.features.utc_offset_hours = utc_offset;
      if (!no_balance) opts.balance_seed = seed;
      const Dataset ds = featurize(store, table, opts);
      save_dataset(ds, out_path);
      m.inputs = {store_path};
      if (!emb_path.empty()) m.inputs.push_back(emb_path);
      m.outputs = {out_path, out_path + ".bin"};
      m.seed = seed;
      m.flags = {{"store", store_path}, {"embeddings", emb_path},  {"scheme", aggregation},
                 {"categories", categories}, {"utc_offset", utc_offset}, {"balance", !no_balance},
                 {"out", out_path}};
      const auto constant = ds.constant_columns();
      out << render_json({{"rows", ds.size()}, {"positives", ds.positives()}, {"columns", ds.dim()},
                          {"constant_columns", constant.size()}});
    };
  });

  std::string factors_path;
  auto* reduce_cmd = app.add_subcommand("reduce", "compress the category-aggregation block with NMF");
  reduce_cmd->add_option("--in", in_path, "input dataset")->required();
  reduce_cmd->add_option("--rank", rank, "number of NMF components")->required();
  reduce_cmd->add_option("--max-iters", nmf_iters, "maximum multiplicative-update iterations")->capture_default_str();
  reduce_cmd->add_option("--tol", nmf_tol, "relative error-decrease stopping threshold")->capture_default_str();
  reduce_cmd->add_option("--seed", seed, "initialization seed")->required();
  reduce_cmd->add_option("--out", out_path, "output dataset")->required();
  reduce_cmd->add_option("--factors", factors_path, "factor file (JSON); default <out>.nmf.json");
  reduce_cmd->callback([&] {
    action = [&] {
      const Dataset ds = load_dataset(in_path);
      const auto r = cli_detail::reduce_dataset(ds, rank, {nmf_iters, nmf_tol, seed});
      if (factors_path.empty()) factors_path = out_path + ".nmf.json";
      save_dataset(r.ds, out_path);
      auto fj = nmf_to_json(r.factors);
      fj["replaced_columns"] = r.replaced;
      write_file(factors_path, render_json(fj));
      m.inputs = {in_path, in_path + ".bin"};
      m.outputs = {out_path, out_path + ".bin", factors_path};
      m.seed = seed;
      m.flags = {{"in", in_path}, {"rank", rank}, {"iters", nmf_iters}, {"tol", nmf_tol}, {"out", out_path},
                 {"factors", factors_path}};
    };
  });

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--layers", layers, "hidden layer sizes, e.g. 300,150 (sda, dbn)");
    cmd->add_option("--hp", hp_path, "hyperparameter file, one `key = value` per line (sda, dbn)");
    cmd->add_option("--trees", spec.forest.n_trees, "number of trees (rf)")->capture_default_str();
    cmd->add_option("--mtry", spec.forest.tree.mtry, "features tried per split, 0 = ceil(sqrt(d)) (rf)")
        ->capture_default_str();
    cmd->add_option("--min-leaf", spec.forest.tree.min_leaf, "minimum rows per leaf (rf)")->capture_default_str();
    cmd->add_option("--lr", spec.logistic.learning_rate, "step size (lr)")->capture_default_str();
    cmd->add_option("--epochs", spec.logistic.epochs, "passes over the data (lr)")->capture_default_str();
    cmd->add_option("--l2", spec.logistic.l2, "L2 penalty (lr)")->capture_default_str();
  };
  auto build_spec = [&] {
    spec.kind = parse_model_kind(model_kind);
    if (!hp_path.empty()) spec.hp = load_hyperparams(hp_path);
    if (!layers.empty()) spec.hp.hidden_units = cli_detail::parse_sizes(layers);
    validate_training(spec.hp);
  };
  auto spec_flags = [&] {
    nlohmann::json f = model_spec_to_json(spec);
    f["hp_file"] = hp_path;
    return f;
  };

  auto* train_cmd = app.add_subcommand("train", "train a classifier on a dataset");
  train_cmd->add_option("--model", model_kind, "lr, rf, sda or dbn")->required();
  train_cmd->add_option("--in", in_path, "training dataset")->required();
  train_cmd->add_option("--seed", seed, "training seed")->required();
  train_cmd->add_option("--out", out_path, "model file (JSON)")->required();
  add_model_flags(train_cmd);
  train_cmd->callback([&] {
    action = [&] {
      build_spec();
      const Dataset ds = load_dataset(in_path);
      const TrainedModel model = train_model(spec, ds, seed);
      save_model(model, out_path);
      m.inputs = {in_path, in_path + ".bin"};
      if (!hp_path.empty()) m.inputs.push_back(hp_path);
      m.outputs = {out_path};
      m.seed = seed;
      m.flags = {{"model", model_kind}, {"in", in_path}, {"out", out_path}, {"spec", spec_flags()}};
    };
  });

  auto* eval_cmd = app.add_subcommand("evaluate", "estimate test AUC by retraining a model's configuration");
  eval_cmd->add_option("--model", model_path, "model file whose configuration is evaluated")->required();
  eval_cmd->add_option("--in", in_path, "dataset")->required();
  auto* cv_opt = eval_cmd->add_option("--cv", cv, "k-fold cross-validation");
  auto* holdout_opt = eval_cmd->add_flag("--holdout", holdout, "25% test set with four validation folds");
  cv_opt->excludes(holdout_opt);
  eval_cmd->add_option("--seed", seed, "split and training seed")->required();
  eval_cmd->add_option("--report", report_path, "evaluation report (JSON)")->required();
  eval_cmd->callback([&] {
    action = [&] {
      require(cv > 0 || holdout, "choose --cv <k> or --holdout");
      const TrainedModel model = load_model(model_path);
      const Dataset ds = load_dataset(in_path);
      require_dims(ds.dim() == model.dim, "model expects " + std::to_string(model.dim) + " features, dataset has " +
                                              std::to_string(ds.dim()));
      const Trainer trainer = make_trainer(model.spec);
      EvalReport rep = holdout ? holdout_evaluate(trainer, ds, seed) : cross_validate(trainer, ds, cv, seed);
      rep.model = to_string(model.spec.kind);
      rep.dataset = cli_detail::dataset_id(in_path);
      auto j = rep.to_json();
      j["spec"] = model_spec_to_json(model.spec);
      write_file(report_path, render_json(j));
      out << render_json({{"auc", rep.auc}, {"protocol", rep.protocol}});
      m.inputs = {model_path, in_path, in_path + ".bin"};
      m.outputs = {report_path};
      m.seed = seed;
      m.flags = {{"model", model_path}, {"in", in_path}, {"cv", cv}, {"holdout", holdout}, {"report", report_path},
                 {"eval_seconds", rep.seconds}};
    };
  });

  auto* search_cmd = app.add_subcommand("search", "random search over network metaparameters");
  search_cmd->add_option("--model", model_kind, "sda or dbn")->required();
  search_cmd->add_option("--in", in_path, "dataset")->required();
  search_cmd->add_option("--budget", budget, "number of trials")->capture_default_str();
  search_cmd->add_option("--seed", seed, "search seed")->required();
  search_cmd->add_option("--report", report_path, "search report with trial log (JSON)")->required();
  search_cmd->add_option("--hp", hp_path, "base hyperparameters (pretrain_epochs, batch_size)");
  search_cmd->add_option("--max-layers", space.max_layers, "deepest network sampled")->capture_default_str();
  search_cmd->add_option("--max-units", space.units_max, "largest layer sampled")->capture_default_str();
  search_cmd->add_option("--max-epochs", space.epochs_max_deep, "upper epoch bound for deeper networks")
      ->capture_default_str();
  search_cmd->add_option("--max-epochs-single", space.epochs_max_single, "upper epoch bound for one hidden layer")
      ->capture_default_str();
  search_cmd->callback([&] {
    action = [&] {
      const ModelKind kind = parse_model_kind(model_kind);
      require(kind == ModelKind::sda || kind == ModelKind::dbn, "search supports sda and dbn");
      if (!hp_path.empty()) space.base = load_hyperparams(hp_path);
      if (kind == ModelKind::dbn) {
        space.allow_relu = false;
        space.noise_max = 0.0;
      }
      const Dataset ds = load_dataset(in_path);
      const auto result = random_search(space, budget, ds, seed, [kind](const Hyperparams& hp) {
        ModelSpec s;
        s.kind = kind;
        s.hp = hp;
        return make_trainer(s);
      });
      auto j = result.to_json();
      j["report"]["model"] = to_string(kind);
      j["report"]["dataset"] = cli_detail::dataset_id(in_path);
      j["budget"] = budget;
      write_file(report_path, render_json(j));
      out << render_json({{"best_index", result.best_index},
                          {"validation_auc", result.report.validation_auc},
                          {"test_auc", result.report.auc}});
      m.inputs = {in_path, in_path + ".bin"};
      if (!hp_path.empty()) m.inputs.push_back(hp_path);
      m.outputs = {report_path};
      m.seed = seed;
      m.flags = {{"model", model_kind},
                 {"in", in_path},
                 {"budget", budget},
                 {"report", report_path},
                 {"max_layers", space.max_layers},
                 {"max_units", space.units_max},
                 {"max_epochs", space.epochs_max_deep},
                 {"max_epochs_single", space.epochs_max_single}};
    };
  });

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic clickstream with a planted signal");
  synth_cmd->add_option("--users", synth.n_users, "number of users")->capture_default_str();
  synth_cmd->add_option("--categories", synth.n_categories, "number of item categories")->capture_default_str();
  synth_cmd->add_option("--buy-rate", synth.buy_rate, "mean buy probability per session")->capture_default_str();
  synth_cmd->add_option("--signal", synth.signal, "signal strength in [0, 1]")->capture_default_str();
  synth_cmd->add_flag("--nonlinear", synth.nonlinear, "add the category-pair interaction");
  synth_cmd->add_option("--weeks", synth.weeks, "weeks of activity")->capture_default_str();
  synth_cmd->add_option("--sessions-per-user", synth.sessions_per_user, "mean sessions per user")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "generator seed")->required();
  synth_cmd->add_option("--out", out_path, "output directory")->required();
  synth_cmd->callback([&] {
    action = [&] {
      const auto gen = generate(synth);
      write_synth(gen, out_path);
      const std::filesystem::path d(out_path);
      m.outputs = {(d / "events.jsonl").string(), (d / "truth.jsonl").string(), (d / "embeddings.tsv").string(),
                   (d / "config.json").string()};
      manifest_path = (d / "manifest.json").string();
      m.seed = synth.seed;
      m.flags = synth.to_json();
      m.flags["out"] = out_path;
      out << render_json({{"sessions", gen.stats.sessions},
                          {"buy_sessions", gen.stats.buy_sessions},
                          {"events", gen.stats.events},
                          {"bayes_optimal_auc", bayes_optimal_auc(parse_truth(gen.truth))}});
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << render_json({{"error", "usage"}, {"message", e.what()}, {"exit_code", static_cast<int>(exit_usage)}});
    err << app.help();
    return exit_usage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto report_error = [&](const std::string& kind, const std::string& msg, int code) {
    err << render_json({{"error", kind}, {"message", msg}, {"exit_code", code}});
    return code;
  };
  try {
    for (auto* sub : app.get_subcommands()) m.command = sub->get_name();
    action();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.write(manifest_path.empty() ? m.outputs.front() + ".manifest.json" : manifest_path, secs);
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what(), exit_code_for(e.kind()));
  } catch (const nlohmann::json::exception& e) {
    return report_error("parse", e.what(), exit_invalid);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), exit_failure);
  }
  return exit_ok;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args);
}

}  // namespace pintent
