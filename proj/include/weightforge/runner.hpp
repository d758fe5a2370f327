// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration behind the command-line tool: JSON configs,
// subcommands, output directories and run manifests.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weightforge/data.hpp"
#include "weightforge/defense.hpp"
#include "weightforge/handcraft.hpp"
#include "weightforge/zoo.hpp"

namespace wforge::runner {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,  // config validation or file IO
  kExitAttack = 3,
  kExitDefense = 4,
  kExitInternal = 5,
};

enum class AttackMode { kNone, kHandcraft, kPoison };

struct DatasetSpec {
  std::string kind = "mnist";  // "mnist" or "synth"
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_limit = 0;  // first N samples only; 0 keeps all
  std::size_t test_limit = 0;
  // synth only
  std::size_t classes = 10;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  SynthOptions synth;
};

struct ArchitectureSpec {
  std::string kind = "fc";  // "fc" or "cnn"
  std::size_t hidden = 32;
};

struct TriggerConfig {
  TriggerKind kind = TriggerKind::kSquare;
  std::size_t size = 4;
  int target = 0;
  std::optional<std::size_t> row, col;  // lower-right corner when unset
};

struct PoisonSpec {
  double rate = 0.1;
  std::optional<std::size_t> count;
  std::vector<std::size_t> sweep;  // extra poison counts for a curve
};

struct HandcraftSpec {
  AttackConfig attack;
  std::size_t samples = 250;  // attacker's clean sample, drawn from train
};

struct Inputs {
  const Dataset& train;
  const Dataset& test;
  const TriggerSpec& trigger;
  std::uint64_t seed;
};

using DefenseFn = std::function<DefenseReport(Model&, const Inputs&)>;

struct DefenseSpec {
  std::string name;
  bool chain = false;  // start from the previous defense's model, not the input model
  nlohmann::json params = nlohmann::json::object();
  DefenseFn run;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  ArchitectureSpec architecture;
  TrainConfig train;
  TriggerConfig trigger;
  AttackMode mode = AttackMode::kNone;
  HandcraftSpec handcraft;
  PoisonSpec poison;
  std::vector<DefenseSpec> defenses;
  std::optional<std::string> model;  // input model for inject/defend/mitm
  std::optional<std::string> output_dir;
  nlohmann::json source = nlohmann::json::object();  // as parsed, seed applied
};

// Parses and type-checks a config. Relative paths resolve against `base_dir`.
// Unknown fields are rejected. Throws ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

// Command-specific checks, including that every referenced file exists.
void validate_for(const ExperimentConfig& cfg, const std::string& command);

// Keys sorted, no whitespace.
std::string canonical_json(const nlohmann::json& j);
// SHA-256 of canonical_json, hex encoded.
std::string config_hash(const nlohmann::json& j);
std::string sha256_file(const std::string& path);

struct RunOptions {
  std::string command;
  std::optional<std::string> config_path;
  std::optional<std::string> model_path;  // overrides config "model"
  std::optional<std::string> out_dir;     // overrides config "output_dir"
  std::optional<std::uint64_t> seed;      // overrides config "seed"
  bool dry_run = false;
};

// Runs one subcommand and returns its exit code. Diagnostics go to `err`,
// human-readable output to `out`.
int run(const RunOptions& opts, std::ostream& out, std::ostream& err);

nlohmann::json to_json(const InjectionReport& r);

// Markdown table over defense reports; ASR and accuracy cells print the
// exact JSON number text.
std::string defense_summary_markdown(const std::vector<nlohmann::json>& reports);

}  // namespace wforge::runner
