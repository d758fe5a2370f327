// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "weightforge/error.hpp"
#include "weightforge/runner.hpp"

namespace fs = std::filesystem;
using namespace wforge;
using namespace wforge::runner;
using nlohmann::json;

namespace {

class RunnerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wforge_runner_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  json base() const {
    return json::parse(R"({
      "seed": 5,
      "dataset": {"kind": "synth", "classes": 4, "train_size": 600, "test_size": 200},
      "architecture": {"kind": "fc", "hidden": 16},
      "train": {"epochs": 2, "lr": 0.01},
      "trigger": {"kind": "checkerboard", "size": 5, "target": 0},
      "attack": {"mode": "handcraft", "neuron_fraction": 0.25, "min_sample_asr": 0.0}
    })");
  }

  std::string write(const json& j, const std::string& name = "config.json") {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  int go(const std::string& command, const std::string& config, const std::string& out,
         std::optional<std::string> model = std::nullopt, bool dry = false) {
    RunOptions o;
    o.command = command;
    if (!config.empty()) o.config_path = config;
    o.out_dir = out;
    o.model_path = std::move(model);
    o.dry_run = dry;
    out_.str("");
    err_.str("");
    return run(o, out_, err_);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(RunnerTest, HashIgnoresKeyOrder) {
  const json a = json::parse(R"({"b": 1, "a": {"y": [1, 2], "x": "s"}})");
  const json b = json::parse(R"({"a": {"x": "s", "y": [1, 2]}, "b": 1})");
  EXPECT_EQ(canonical_json(a), canonical_json(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
  EXPECT_NE(config_hash(a), config_hash(json::parse(R"({"b": 2, "a": {"x": "s", "y": [1, 2]}})")));
}

TEST_F(RunnerTest, ValidationRejectsBadConfigs) {
  auto rate0 = base();
  rate0["attack"] = {{"mode", "poison"}, {"rate", 0.0}};
  EXPECT_THROW(parse_config(rate0), ConfigError);
  auto unknown = base();
  unknown["attack"]["not_a_knob"] = 1;
  EXPECT_THROW(parse_config(unknown), ConfigError);
  auto mixed = base();
  mixed["attack"]["rate"] = 0.1;  // poison field under handcraft mode
  EXPECT_THROW(parse_config(mixed), ConfigError);
  auto mode = base();
  mode["attack"] = {{"mode", "both"}};
  EXPECT_THROW(parse_config(mode), ConfigError);
  auto defense = base();
  defense["defenses"] = {{{"name", "magic"}}};
  try {
    parse_config(defense);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "defenses[0].name");
  }
  auto empty = base();
  empty["defenses"] = json::array();
  EXPECT_THROW(validate_for(parse_config(empty), "defend"), ConfigError);
  EXPECT_THROW(validate_for(parse_config(base()), "poison"), ConfigError);
}

TEST_F(RunnerTest, MissingDatasetIsExitTwoWithoutOutputs) {
  auto c = base();
  c["dataset"] = {{"kind", "mnist"}, {"dir", (dir_ / "nowhere").string()}};
  const fs::path out = dir_ / "out";
  EXPECT_EQ(go("train", write(c), out.string()), kExitConfig);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(err_.str().find("dataset.train_images"), std::string::npos);
}

TEST_F(RunnerTest, DryRunWritesNothing) {
  const fs::path out = dir_ / "out";
  EXPECT_EQ(go("train", write(base()), out.string(), std::nullopt, true), kExitOk);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(out_.str().find("train fc"), std::string::npos);
}

TEST_F(RunnerTest, TrainIsByteReproducibleAndManifestComplete) {
  const auto cfg = write(base());
  ASSERT_EQ(go("train", cfg, (dir_ / "a").string()), kExitOk) << err_.str();
  ASSERT_EQ(go("train", cfg, (dir_ / "b").string()), kExitOk) << err_.str();
  EXPECT_EQ(slurp(dir_ / "a" / "model.wf"), slurp(dir_ / "b" / "model.wf"));
  EXPECT_EQ(slurp(dir_ / "a" / "train_report.json"), slurp(dir_ / "b" / "train_report.json"));

  const json m = json::parse(slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(m.at("schema_version"), kReportSchemaVersion);
  const json& runj = m.at("runs").at(0);
  EXPECT_EQ(runj.at("config_hash").get<std::string>().size(), 64u);
  EXPECT_EQ(runj.at("tool_version"), kToolVersion);
  std::set<std::string> listed{"manifest.json"};
  for (const json& a : runj.at("artifacts")) {
    listed.insert(a.at("path").get<std::string>());
    EXPECT_EQ(a.at("sha256"), sha256_file((dir_ / "a" / a.at("path").get<std::string>()).string()));
  }
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    EXPECT_TRUE(listed.count(e.path().filename().string())) << e.path();
  }
  EXPECT_FALSE(runj.at("stages").empty());
}

TEST_F(RunnerTest, InjectDefendReportPipeline) {
  const auto cfg = write(base());
  ASSERT_EQ(go("train", cfg, (dir_ / "t").string()), kExitOk) << err_.str();
  const std::string model = (dir_ / "t" / "model.wf").string();
  ASSERT_EQ(go("inject", cfg, (dir_ / "i").string(), model), kExitOk) << err_.str();
  const json inj = json::parse(slurp(dir_ / "i" / "injection_report.json"));
  EXPECT_EQ(inj.at("schema_version"), kReportSchemaVersion);
  EXPECT_TRUE(inj.at("injection").contains("asr_after"));

  auto d = base();
  d["defenses"] = json::parse(R"([{"name": "finetune", "epochs": 1},
                                   {"name": "noise", "runs": 1, "points": 4},
                                   {"name": "clip"}])");
  const fs::path out = dir_ / "d";
  ASSERT_EQ(go("defend", write(d, "defend.json"), out.string(), (dir_ / "i" / "model.wf").string()),
            kExitOk)
      << err_.str();
  const std::string summary = slurp(out / "defense_summary.md");
  std::size_t reports = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("defense_0", 0) != 0) continue;
    ++reports;
    const json r = json::parse(slurp(e.path()));
    EXPECT_EQ(r.at("status"), "ok");
    EXPECT_FALSE(r.contains("seconds"));
    const std::string row = "| " + r.at("index").dump() + " | " + r.at("defense").get<std::string>();
    const auto at = summary.find(row);
    ASSERT_NE(at, std::string::npos) << row;
    const std::string line = summary.substr(at, summary.find('\n', at) - at);
    EXPECT_NE(line.find("| " + r.at("asr_before").dump() + " | " + r.at("asr_after").dump() + " |"),
              std::string::npos)
        << line;
  }
  EXPECT_EQ(reports, 3u);

  EXPECT_EQ(go("report", "", out.string()), kExitOk) << err_.str();
  EXPECT_TRUE(fs::exists(out / "report.md"));
  const json m = json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m.at("runs").size(), 2u);
}

TEST_F(RunnerTest, FailedDefenseIsRecordedAndRunContinues) {
  const auto cfg = write(base());
  ASSERT_EQ(go("train", cfg, (dir_ / "t").string()), kExitOk) << err_.str();
  auto other = base();
  other["architecture"]["hidden"] = 8;
  ASSERT_EQ(go("train", write(other, "other.json"), (dir_ / "o").string()), kExitOk);
  auto d = base();
  d["defenses"] = {{{"name", "weight_stats"}, {"reference", (dir_ / "o" / "model.wf").string()}},
                   {{"name", "clip"}}};
  const fs::path out = dir_ / "d";
  EXPECT_EQ(go("defend", write(d, "d.json"), out.string(), (dir_ / "t" / "model.wf").string()),
            kExitDefense);
  EXPECT_EQ(json::parse(slurp(out / "defense_00_weight_stats.json")).at("status"), "failed");
  EXPECT_EQ(json::parse(slurp(out / "defense_01_clip.json")).at("status"), "ok");
  EXPECT_EQ(json::parse(slurp(out / "manifest.json"))["runs"][0]["exit_code"], kExitDefense);
}

TEST_F(RunnerTest, PoisonSweepAndModeChecks) {
  auto p = base();
  p["attack"] = {{"mode", "poison"}, {"rate", 0.1}, {"sweep", {5, 50}}};
  const fs::path out = dir_ / "p";
  ASSERT_EQ(go("poison", write(p), out.string()), kExitOk) << err_.str();
  const json sweep = json::parse(slurp(out / "poison_sweep.json"));
  ASSERT_EQ(sweep.at("points").size(), 2u);
  EXPECT_EQ(sweep["points"][1]["count"], 50);
  EXPECT_EQ(go("inject", write(p), (dir_ / "x").string(), (out / "model.wf").string()), kExitConfig);
}

TEST_F(RunnerTest, LockedOutputDirectoryIsRefused) {
  const fs::path out = dir_ / "locked";
  fs::create_directories(out);
  std::ofstream(out / ".weightforge.lock") << "";
  EXPECT_EQ(go("train", write(base()), out.string()), kExitConfig);
  EXPECT_NE(err_.str().find("locked"), std::string::npos);
}

TEST_F(RunnerTest, GatesSelfCheck) {
  EXPECT_EQ(go("gates", "", ""), kExitOk);
  EXPECT_NE(out_.str().find("all truth tables hold"), std::string::npos);
}

TEST(CliBinary, ExitCodes) {
  const auto code = [](const std::string& args) {
    const int s = std::system((std::string(WEIGHTFORGE_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(code("gates"), 0);
  EXPECT_EQ(code("train --out /tmp/wforge_cli_unused"), 2);
  EXPECT_EQ(code("train --config /nonexistent.json --out /tmp/wforge_cli_unused"), 2);
  EXPECT_EQ(code("bogus"), 2);
  EXPECT_FALSE(fs::exists("/tmp/wforge_cli_unused"));
}
