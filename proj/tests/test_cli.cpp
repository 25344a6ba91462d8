#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "pintent/cli.hpp"
#include "support.hpp"

using namespace pintent;
using testing_support::TempDir;

namespace {

std::string cli_path() {
  const char* p = std::getenv("PINTENT_CLI");
  return p ? p : "pintent";
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the installed binary through the shell, capturing both streams.
Run run(const std::string& args, const TempDir& dir) {
  const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = "'" + cli_path() + "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

Run call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// synth -> ingest -> featurize -> train rf -> evaluate, all inside `dir`.
void golden_pipeline(const TempDir& dir, const std::string& tag) {
  const auto p = [&](const std::string& name) { return "'" + dir.file(tag + name) + "'"; };
  ASSERT_EQ(run("synth --users 400 --nonlinear --seed 7 --out " + p("synth"), dir).code, 0);
  ASSERT_EQ(run("ingest --input " + p("synth/events.jsonl") + " --out " + p("store.json"), dir).code, 0);
  ASSERT_EQ(run("featurize --store " + p("store.json") + " --embeddings " + p("synth/embeddings.tsv") +
                    " --balance-seed 3 --out " + p("data.json"),
                dir)
                .code,
            0);
  ASSERT_EQ(run("train --model rf --trees 20 --in " + p("data.json") + " --seed 5 --out " + p("model.json"), dir).code, 0);
  ASSERT_EQ(run("evaluate --model " + p("model.json") + " --in " + p("data.json") + " --cv 5 --seed 2 --report " +
                    p("report.json"),
                dir)
                .code,
            0);
}

}  // namespace

TEST(Cli, GoldenPipelineProducesReport) {
  TempDir dir("cli_golden");
  golden_pipeline(dir, "a_");
  const auto report = nlohmann::json::parse(read_file(dir.file("a_report.json")));
  EXPECT_EQ(report.at("protocol"), "cv");
  EXPECT_EQ(report.at("fold_aucs").size(), 5u);
  EXPECT_GT(report.at("auc").get<double>(), 0.5);
  for (auto name : {"a_store.json", "a_data.json", "a_model.json", "a_report.json"}) {
    const auto m = nlohmann::json::parse(read_file(dir.file(std::string(name) + ".manifest.json")));
    EXPECT_EQ(m.at("format"), "pintent-manifest");
    EXPECT_FALSE(m.at("outputs").empty());
  }
  EXPECT_TRUE(std::filesystem::exists(dir.file("a_synth/manifest.json")));
}

TEST(Cli, RerunIsByteIdentical) {
  TempDir dir("cli_rerun");
  golden_pipeline(dir, "a_");
  golden_pipeline(dir, "b_");
  for (auto name : {"synth/events.jsonl", "store.json", "data.json", "data.json.bin", "model.json", "report.json"})
    EXPECT_EQ(read_file(dir.file(std::string("a_") + name)), read_file(dir.file(std::string("b_") + name))) << name;
}

TEST(Cli, InputsAreNotModified) {
  TempDir dir("cli_inputs");
  golden_pipeline(dir, "a_");
  const auto before = read_file(dir.file("a_data.json.bin"));
  ASSERT_EQ(run("train --model lr --in '" + dir.file("a_data.json") + "' --seed 1 --out '" + dir.file("lr.json") + "'", dir).code, 0);
  EXPECT_EQ(read_file(dir.file("a_data.json.bin")), before);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  TempDir dir("cli_usage");
  const auto r = run("frobnicate", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(call({"train", "--model", "lr", "--bogus"}).code, 2);
  EXPECT_EQ(call({}).code, 2);
}

TEST(Cli, HelpAndVersionSucceed) {
  EXPECT_EQ(call({"--help"}).code, 0);
  const auto v = call({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(kToolVersion), std::string::npos);
}

TEST(Cli, MissingFileIsIoError) {
  TempDir dir("cli_missing");
  const auto r = call({"ingest", "--input", dir.file("nope.jsonl"), "--out", dir.file("s.json")});
  EXPECT_EQ(r.code, 3);
  const auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err.at("exit_code"), 3);
  EXPECT_EQ(err.at("error"), "io");
}

TEST(Cli, SchemaMismatchIsSchemaError) {
  TempDir dir("cli_schema");
  write_file(dir.file("model.json"), R"({"format": "pintent-model", "version": 99})");
  write_file(dir.file("d.json"), "{}");
  const auto r = call({"evaluate", "--model", dir.file("model.json"), "--in", dir.file("d.json"), "--cv", "5", "--seed",
                       "1", "--report", dir.file("r.json")});
  EXPECT_EQ(r.code, 4);
}

TEST(Cli, InvalidArgumentsAreReported) {
  TempDir dir("cli_invalid");
  const auto r = call({"synth", "--users", "10", "--signal", "2", "--seed", "1", "--out", dir.file("s")});
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(call({"train", "--model", "svm", "--in", dir.file("x"), "--seed", "1", "--out", dir.file("m")}).code, 5);
}

TEST(Cli, ReduceReplacesAggregationColumns) {
  TempDir dir("cli_reduce");
  golden_pipeline(dir, "a_");
  const auto r = call({"reduce", "--in", dir.file("a_data.json"), "--rank", "10", "--seed", "1", "--out", dir.file("r.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ds = load_dataset(dir.file("r.json"));
  EXPECT_EQ(ds.dim(), 11u + 50u + 10u);
  EXPECT_EQ(ds.feature_names.back(), "nmf_9");
  EXPECT_GE(ds.rows.rightCols(10).minCoeff(), 0.0);
  const auto factors = nlohmann::json::parse(read_file(dir.file("r.json.nmf.json")));
  const auto trace = factors.at("error_trace").get<std::vector<double>>();
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(Cli, SearchWritesTrialLog) {
  TempDir dir("cli_search");
  golden_pipeline(dir, "a_");
  write_file(dir.file("hp.txt"), "pretrain_epochs = 1\nbatch_size = 64\n");
  const auto r = call({"search", "--model", "sda", "--in", dir.file("a_data.json"), "--budget", "2", "--seed", "3",
                       "--hp", dir.file("hp.txt"), "--max-units", "32", "--max-layers", "1", "--max-epochs-single", "10",
                       "--report", dir.file("search.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = nlohmann::json::parse(read_file(dir.file("search.json")));
  EXPECT_EQ(rep.at("trials").size(), 2u);
}
