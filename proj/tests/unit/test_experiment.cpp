#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pbl/experiment.hpp"
#include "pbl/templates.hpp"
#include "test_support.hpp"

namespace pbl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::read_file;
using testing::TempDir;
using testing::write_file;

json tiny_config() {
  const fs::path packs = testing::source_dir() / "data" / "templates";
  return {
      {"name", "tiny"},
      {"seed", 3},
      {"threads", 1},
      {"model",
       {{"embed_dim", 16},
        {"num_layers", 1},
        {"num_heads", 2},
        {"max_seq_len", 32},
        {"ff_multiplier", 2},
        {"pretrain", {{"synthetic_sentences", 200}, {"steps", 20}, {"batch_size", 4}, {"learning_rate", 0.003}}}}},
      {"task_dataset", {{"format", "semeval"}, {"synthetic", {{"train", 60}, {"validation", 15}, {"test", 12}}}}},
      {"template_packs", {(packs / "age.json").string(), (packs / "sexuality.json").string()}},
      {"tuning",
       {{"learning_rates", {0.01}},
        {"prompt_lengths", {2}},
        {"batch_size", 4},
        {"eval_interval", 5},
        {"warmup_steps", 10},
        {"stopping_window", 2},
        {"max_steps", 15}}},
      {"n_seeds", 6},
      {"top_k", 5}};
}

fs::path write_config(const TempDir& dir, const json& j, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  write_file(p, j.dump(2));
  return p;
}

ErrorKind load_error(const TempDir& dir, const json& j) {
  try {
    load_experiment_config(write_config(dir, j), dir / "out");
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "config accepted";
  return ErrorKind::format;
}

int cli(const std::string& command, const fs::path& config, const fs::path& out, const fs::path& log) {
  const std::string cmd = std::string(PBL_CLI_PATH) + " " + command + " --config \"" + config.string() +
                          "\" --output-dir \"" + out.string() + "\" >> \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(ExperimentConfig, TinyConfigParses) {
  TempDir dir;
  const auto c = load_experiment_config(write_config(dir, tiny_config()), dir / "out");
  EXPECT_EQ(c.name, "tiny");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.grid().size(), 1u);
  EXPECT_EQ(c.template_packs.size(), 2u);
  EXPECT_EQ(c.output_dir, dir / "out");
}

TEST(ExperimentConfig, SeedOverrideChangesHash) {
  TempDir dir;
  const auto path = write_config(dir, tiny_config());
  const auto a = load_experiment_config(path, dir / "out");
  const auto b = load_experiment_config(path, dir / "elsewhere");
  const auto c = load_experiment_config(path, dir / "out", std::uint64_t{4});
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(c.seed, 4u);
}

TEST(ExperimentConfig, UnknownKeyIsConfigError) {
  TempDir dir;
  auto j = tiny_config();
  j["tuning"]["learning_rte"] = 0.1;
  EXPECT_EQ(load_error(dir, j), ErrorKind::config);
  j = tiny_config();
  j["extra"] = 1;
  EXPECT_EQ(load_error(dir, j), ErrorKind::config);
}

TEST(ExperimentConfig, MissingPathIsConfigError) {
  TempDir dir;
  auto j = tiny_config();
  j["template_packs"] = {"no/such/pack.json"};
  EXPECT_EQ(load_error(dir, j), ErrorKind::config);
  j = tiny_config();
  j["task_dataset"]["path"] = "missing.tsv";
  EXPECT_EQ(load_error(dir, j), ErrorKind::config);
}

TEST(ExperimentConfig, InvalidValuesAreConfigErrors) {
  TempDir dir;
  for (const auto& [pointer, value] : std::vector<std::pair<std::string, json>>{
           {"/top_k", 7},
           {"/top_k", 0},
           {"/n_seeds", 0},
           {"/model/num_heads", 3},
           {"/tuning/learning_rates", json::array()},
           {"/tuning/prompt_lengths", {0}},
           {"/task_dataset/format", "imdb"},
           {"/report", {{"center", "mode"}}},
           {"/report", {{"confidence", 1.5}}},
           {"/seed", "seven"}}) {
    auto j = tiny_config();
    j[json::json_pointer(pointer)] = value;
    EXPECT_EQ(load_error(dir, j), ErrorKind::config) << pointer;
  }
}

TEST(ExperimentConfig, MalformedJsonIsConfigError) {
  TempDir dir;
  write_file(dir / "bad.json", "{\"seed\": ");
  try {
    load_experiment_config(dir / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(exit_code_for(ErrorKind::config), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::capacity), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::numerical), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::sweep), 3);
  for (ErrorKind k : {ErrorKind::format, ErrorKind::integrity, ErrorKind::data, ErrorKind::label,
                      ErrorKind::template_error, ErrorKind::compatibility}) {
    EXPECT_EQ(exit_code_for(k), 4) << to_string(k);
  }
}

TEST(RunCommand, TopKAboveSeedsFailsBeforeTraining) {
  TempDir dir;
  auto j = tiny_config();
  j["top_k"] = 9;
  std::ostringstream out, log;
  EXPECT_EQ(run_command("tune", write_config(dir, j), dir / "out", std::nullopt, out, log), 2);
  EXPECT_FALSE(fs::exists(dir / "out" / kManifestName));
  EXPECT_NE(log.str().find("top_k"), std::string::npos);
}

TEST(RunCommand, EvaluateBeforeTuneIsDataError) {
  TempDir dir;
  std::ostringstream out, log;
  EXPECT_EQ(run_command("evaluate", write_config(dir, tiny_config()), dir / "out", std::nullopt, out, log), 4);
}

TEST(RunCommand, UnknownCommandIsConfigError) {
  TempDir dir;
  std::ostringstream out, log;
  EXPECT_EQ(run_command("train", write_config(dir, tiny_config()), dir / "out", std::nullopt, out, log), 2);
}

TEST(RunCommand, MalformedTaskFileIsDataError) {
  TempDir dir;
  write_file(dir / "task.tsv", "text\traw_label\tsplit\ngood movie\t3\ttrain\nbroken row without tabs\n");
  auto j = tiny_config();
  j["task_dataset"] = {{"format", "semeval"}, {"path", (dir / "task.tsv").string()}};
  std::ostringstream out, log;
  const auto config = write_config(dir, j);
  ASSERT_EQ(run_command("pretrain", config, dir / "out", std::nullopt, out, log), 0) << log.str();
  EXPECT_EQ(run_command("tune", config, dir / "out", std::nullopt, out, log), 4) << log.str();
  EXPECT_NE(log.str().find("task.tsv:3"), std::string::npos) << log.str();
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Runs all four stages twice in separate directories and checks the
// artifacts line up byte for byte.
class EndToEnd : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pbl-e2e");
    config_ = write_config(*dir_, tiny_config());
    for (const char* run : {"a", "b"}) {
      for (const char* stage : {"pretrain", "tune", "evaluate", "report"}) {
        codes_.push_back(cli(stage, config_, *dir_ / run, *dir_ / (std::string(run) + ".log")));
      }
    }
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static fs::path run(const char* name) { return *dir_ / name; }
  static std::string log(const char* name) { return read_file(*dir_ / (std::string(name) + ".log")); }

  static TempDir* dir_;
  static fs::path config_;
  static std::vector<int> codes_;
};

TempDir* EndToEnd::dir_ = nullptr;
fs::path EndToEnd::config_;
std::vector<int> EndToEnd::codes_;

TEST_F(EndToEnd, AllStagesSucceed) {
  EXPECT_EQ(codes_, std::vector<int>(8, 0)) << log("a");
}

TEST_F(EndToEnd, ReportsAreByteIdentical) {
  std::vector<fs::path> files{"report/gaps.json", "report/net_counts.csv", "tune/ranking.csv", "model/model.ckpt"};
  for (const auto& e : fs::directory_iterator(run("a") / "report")) {
    if (e.path().extension() == ".svg") files.push_back(fs::path("report") / e.path().filename());
  }
  ASSERT_GT(files.size(), 4u);
  for (const auto& f : files) {
    ASSERT_TRUE(fs::exists(run("b") / f)) << f;
    EXPECT_EQ(read_file(run("a") / f), read_file(run("b") / f)) << f;
  }
}

TEST_F(EndToEnd, FiveSnapshotsAndOneCheckpoint) {
  const auto manifest = RunManifest::load(run("a") / kManifestName);
  EXPECT_EQ(manifest.artifacts("tune", "prompt_snapshot").size(), 5u);
  EXPECT_EQ(manifest.artifacts("pretrain", "checkpoint").size(), 1u);
  std::size_t snaps = 0;
  for (const auto& e : fs::directory_iterator(run("a") / "tune" / "selected")) snaps += e.path().extension() == ".snap";
  EXPECT_EQ(snaps, 5u);
  EXPECT_EQ(count_lines(read_file(run("a") / "tune" / "runs.csv")), 7u);
  for (const char* stage : {"pretrain", "tune", "evaluate", "report"}) {
    EXPECT_NO_THROW(manifest.verify(run("a"), stage)) << stage;
  }
}

TEST_F(EndToEnd, ConfigCopiedVerbatim) {
  EXPECT_EQ(read_file(run("a") / "config.json"), read_file(config_));
}

TEST_F(EndToEnd, PredictionRowsCoverTestAndTemplates) {
  std::size_t templated = 0;
  for (const char* pack : {"age.json", "sexuality.json"}) {
    templated += expand_pack(load_template_pack(testing::source_dir() / "data" / "templates" / pack)).size();
  }
  int files = 0;
  for (const auto& e : fs::directory_iterator(run("a") / "predictions")) {
    ++files;
    std::istringstream in(read_file(e.path()));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "example_id,source,attribute,group,gold,pred");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      const char pred = line.back();
      EXPECT_TRUE(pred == '0' || pred == '1' || pred == '2') << line;
    }
    EXPECT_EQ(rows, 12u + templated) << e.path();
  }
  EXPECT_EQ(files, 5);
}

TEST_F(EndToEnd, PretrainIsIdempotent) {
  const auto before = read_file(run("a") / "model" / "model.ckpt");
  const fs::path log_path = *dir_ / "again.log";
  EXPECT_EQ(cli("pretrain", config_, run("a"), log_path), 0);
  EXPECT_NE(read_file(log_path).find("up to date"), std::string::npos) << read_file(log_path);
  EXPECT_EQ(read_file(run("a") / "model" / "model.ckpt"), before);
  // Later stages stay valid after the skipped pretrain.
  EXPECT_NO_THROW(RunManifest::load(run("a") / kManifestName).verify(run("a"), "tune"));
}

TEST_F(EndToEnd, CliConfigErrorExitsTwo) {
  auto j = tiny_config();
  j["n_seeds"] = -1;
  const auto bad = write_config(*dir_, j, "bad.json");
  EXPECT_EQ(cli("tune", bad, *dir_ / "bad", *dir_ / "bad.log"), 2);
  EXPECT_EQ(cli("tune", *dir_ / "absent.json", *dir_ / "bad", *dir_ / "bad.log"), 2);
}

}  // namespace
}  // namespace pbl
