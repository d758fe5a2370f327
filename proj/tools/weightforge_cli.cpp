// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "weightforge/runner.hpp"

int main(int argc, char** argv) {
  using namespace wforge::runner;
  CLI::App app{"weightforge: handcrafted backdoor experiments"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  RunOptions opts;
  std::string config, model, out;
  std::uint64_t seed = 0;

  struct Spec {
    const char* name;
    const char* help;
  };
  const Spec specs[] = {
      {"train", "train a baseline model"},
      {"inject", "handcraft a backdoor into --model"},
      {"poison", "train on poisoned data (optionally a poison-count sweep)"},
      {"defend", "run the configured defense list against --model"},
      {"mitm", "optimize the trigger against --model"},
      {"gates", "print and check the logic-gate truth tables"},
      {"report", "render report.md from the manifest in --out"},
  };
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    if (std::string(s.name) == "gates") continue;
    sub->add_option("--config", config, "experiment config (JSON)");
    sub->add_option("--model", model, "input model file");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "override the config's root seed");
    sub->add_flag("--dry-run", opts.dry_run, "validate and print the plan without writing");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  opts.command = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();
  if (!config.empty()) opts.config_path = config;
  if (!model.empty()) opts.model_path = model;
  if (!out.empty()) opts.out_dir = out;
  if (opts.command != "gates" && sub->count("--seed") > 0) opts.seed = seed;
  return run(opts, std::cout, std::cerr);
}
