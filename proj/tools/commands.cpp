// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/parallel.hpp"
#include "weightforge/rng.hpp"
#include "weightforge/runner.hpp"

namespace wforge::runner {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

// Exclusive use of an output directory for one run; collects the manifest
// entries as files are written.
class Workspace {
 public:
  Workspace(fs::path dir, std::string command, std::string hash, std::uint64_t seed)
      : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    lock_ = dir_ / ".weightforge.lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (f == nullptr) throw IoError("output directory is locked by another run: " + lock_.string());
    std::fclose(f);
    run_ = {{"command", std::move(command)},
            {"config_hash", std::move(hash)},
            {"seed", seed},
            {"tool_version", kToolVersion},
            {"threads", worker_count()},
            {"stages", json::array()},
            {"artifacts", json::array()}};
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  fs::path path(const std::string& name) const { return dir_ / name; }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    const auto t0 = Clock::now();
    struct Record {
      json& stages;
      std::string name;
      Clock::time_point t0;
      ~Record() {
        stages.push_back({{"name", name},
                          {"seconds", std::chrono::duration<double>(Clock::now() - t0).count()}});
      }
    } rec{run_["stages"], name, t0};
    return f();
  }

  void write_json(const std::string& name, const std::string& kind, const json& j) {
    write_text(name, kind, j.dump(2) + "\n");
  }

  void write_text(const std::string& name, const std::string& kind, const std::string& text) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw IoError("cannot write " + path(name).string());
    out << text;
    out.close();
    record(name, kind);
  }

  void write_model(const std::string& name, const Model& m) {
    save_model(m, path(name).string());
    record(name, "model");
  }

  // Appends this run to manifest.json; earlier runs in the directory are kept.
  void finish(int exit_code) {
    run_["exit_code"] = exit_code;
    json manifest = {{"schema_version", kReportSchemaVersion}, {"runs", json::array()}};
    const fs::path p = path("manifest.json");
    if (fs::exists(p)) {
      std::ifstream in(p);
      try {
        manifest = json::parse(in);
      } catch (const json::exception&) {
        throw IoError("existing manifest is not valid JSON: " + p.string());
      }
    }
    manifest["tool_version"] = kToolVersion;
    manifest["runs"].push_back(run_);
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << manifest.dump(2) << "\n";
  }

 private:
  void record(const std::string& name, const std::string& kind) {
    run_["artifacts"].push_back(
        {{"path", name}, {"kind", kind}, {"sha256", sha256_file(path(name).string())}});
  }

  fs::path dir_;
  fs::path lock_;
  json run_;
};

struct Data {
  Dataset train, test;
};

Data load_data(const ExperimentConfig& c) {
  Data d;
  if (c.dataset.kind == "mnist") {
    d.train = load_mnist_idx(c.dataset.train_images, c.dataset.train_labels);
    d.test = load_mnist_idx(c.dataset.test_images, c.dataset.test_labels);
  } else {
    d.train = synth_dataset(c.dataset.classes, c.dataset.train_size, stream_seed(c.seed, "synth-train"),
                            c.dataset.synth);
    d.test = synth_dataset(c.dataset.classes, c.dataset.test_size, stream_seed(c.seed, "synth-test"),
                           c.dataset.synth);
  }
  if (c.dataset.train_limit > 0 && c.dataset.train_limit < d.train.size()) {
    d.train = d.train.slice(0, c.dataset.train_limit);
  }
  if (c.dataset.test_limit > 0 && c.dataset.test_limit < d.test.size()) {
    d.test = d.test.slice(0, c.dataset.test_limit);
  }
  return d;
}

TriggerSpec make_spec(const ExperimentConfig& c, const Dataset& d) {
  if (static_cast<std::size_t>(c.trigger.target) >= d.num_classes) {
    throw ConfigError("trigger.target", "outside the dataset's " + std::to_string(d.num_classes) + " classes");
  }
  const std::uint64_t seed = stream_seed(c.seed, "trigger");
  try {
    if (c.trigger.row) {
      return make_trigger(c.trigger.kind, c.trigger.size, *c.trigger.row, *c.trigger.col,
                          d.image_shape(), seed, c.trigger.target);
    }
    return make_corner_trigger(c.trigger.kind, c.trigger.size, d.image_shape(), seed, c.trigger.target);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("trigger", e.what());
  }
}

json trigger_json(const TriggerSpec& s) {
  return {{"kind", to_string(s.kind)}, {"size", s.size},     {"row", s.row},
          {"col", s.col},              {"target", s.target}, {"seed", s.seed}};
}

Model build_model(const ExperimentConfig& c, const Dataset& d) {
  const std::uint64_t seed = stream_seed(c.seed, "init");
  Model m = c.architecture.kind == "cnn" ? build_cnn(d.image_shape(), d.num_classes, seed)
                                         : build_fc(d.image_shape(), c.architecture.hidden, d.num_classes, seed);
  m.provenance.training_seed = c.seed;
  m.provenance.dataset_id = d.id;
  return m;
}

TrainConfig train_config(const ExperimentConfig& c) {
  TrainConfig t = c.train;
  t.seed = stream_seed(c.seed, "train");
  return t;
}

Model load_input_model(const ExperimentConfig& c, const Dataset& d) {
  Model m = load_model(*c.model);
  if (m.input_shape() != d.image_shape() || m.num_classes() != d.num_classes) {
    throw ConfigError("model", "model expects " + shape_string(m.input_shape()) + " with " +
                                   std::to_string(m.num_classes()) + " classes; dataset has " +
                                   shape_string(d.image_shape()) + " with " +
                                   std::to_string(d.num_classes) + " classes");
  }
  return m;
}

json header(const std::string& command, const std::string& hash) {
  return {{"schema_version", kReportSchemaVersion},
          {"tool_version", kToolVersion},
          {"command", command},
          {"config_hash", hash}};
}

json history_json(const TrainHistory& h) {
  return {{"accuracy", h.accuracy}, {"loss", h.loss}};
}

// ---- subcommands -----------------------------------------------------------

int cmd_train(const ExperimentConfig& c, Workspace& ws, const std::string& hash, std::ostream& out) {
  const Data d = ws.stage("load-data", [&] { return load_data(c); });
  Model m = build_model(c, d.train);
  m.provenance.attack_lineage.push_back("train:" + c.architecture.kind);
  const TrainHistory h = ws.stage("train", [&] { return train(m, d.train, train_config(c)); });
  const double acc = ws.stage("evaluate", [&] { return evaluate(m, d.test); });
  ws.write_model("model.wf", m);
  json r = header("train", hash);
  r["architecture"] = c.architecture.kind;
  r["test_accuracy"] = acc;
  r["history"] = history_json(h);
  ws.write_json("train_report.json", "report", r);
  out << "test accuracy " << acc << "\n";
  return kExitOk;
}

int cmd_inject(const ExperimentConfig& c, Workspace& ws, const std::string& hash, std::ostream& out) {
  const Data d = ws.stage("load-data", [&] { return load_data(c); });
  Model m = load_input_model(c, d.train);
  TriggerSpec spec = make_spec(c, d.train);
  AttackConfig cfg = c.handcraft.attack;
  cfg.seed = stream_seed(c.seed, "attack");
  const Dataset sample = d.train.sample(std::min(c.handcraft.samples, d.train.size()),
                                        stream_seed(c.seed, "attack-sample"));
  const InjectionReport rep =
      ws.stage("inject", [&] { return inject_backdoor(m, sample, spec, cfg, &d.test); });
  m.provenance.attack_lineage.push_back("handcraft:" + to_string(spec.kind) + ":" +
                                        std::to_string(spec.size) + "->" + std::to_string(spec.target));
  ws.write_model("model.wf", m);
  json r = header("inject", hash);
  r["trigger"] = trigger_json(spec);
  r["injection"] = to_json(rep);
  ws.write_json("injection_report.json", "report", r);
  out << "accuracy " << rep.accuracy_before << " -> " << rep.accuracy_after << ", ASR "
      << rep.asr_before << " -> " << rep.asr_after << "\n";
  return kExitOk;
}

int cmd_poison(const ExperimentConfig& c, Workspace& ws, const std::string& hash, std::ostream& out) {
  const Data d = ws.stage("load-data", [&] { return load_data(c); });
  const TriggerSpec spec = make_spec(c, d.train);
  const auto run_one = [&](const PoisonConfig& pc, Model& m) {
    const Dataset poisoned = poison_dataset(d.train, spec, pc);
    return train(m, poisoned, train_config(c));
  };
  const auto measure = [&](const Model& m) {
    return json{{"accuracy", evaluate(m, d.test)},
                {"asr", attack_success_rate(m, d.test, spec)},
                {"asr_excluding_target", attack_success_rate(m, d.test, spec, true)}};
  };
  PoisonConfig pc;
  pc.rate = c.poison.rate;
  pc.count = c.poison.count;
  pc.seed = stream_seed(c.seed, "poison");
  Model m = build_model(c, d.train);
  const TrainHistory h = ws.stage("train-poisoned", [&] { return run_one(pc, m); });
  const json metrics = ws.stage("evaluate", [&] { return measure(m); });
  m.provenance.attack_lineage.push_back("poison:" + to_string(spec.kind) + ":" +
                                        std::to_string(spec.size) + "->" + std::to_string(spec.target));
  ws.write_model("model.wf", m);
  json r = header("poison", hash);
  r["trigger"] = trigger_json(spec);
  r["poison"] = {{"rate", c.poison.rate},
                 {"count", c.poison.count ? json(*c.poison.count) : json(nullptr)},
                 {"poisoned_samples", poison_indices(d.train.size(), pc).size()}};
  r["metrics"] = metrics;
  r["history"] = history_json(h);
  ws.write_json("poison_report.json", "report", r);
  out << "poisoned model: accuracy " << metrics["accuracy"] << ", ASR " << metrics["asr"] << "\n";

  if (!c.poison.sweep.empty()) {
    json points = json::array();
    ws.stage("poison-sweep", [&] {
      for (std::size_t count : c.poison.sweep) {
        PoisonConfig sc = pc;
        sc.count = count;
        Model sm = build_model(c, d.train);
        run_one(sc, sm);
        json p = measure(sm);
        p["count"] = count;
        points.push_back(p);
        out << "  " << count << " poisons: ASR " << p["asr"] << "\n";
      }
      return 0;
    });
    json s = header("poison", hash);
    s["trigger"] = trigger_json(spec);
    s["points"] = points;
    ws.write_json("poison_sweep.json", "curve", s);
  }
  return kExitOk;
}

int cmd_defend(const ExperimentConfig& c, Workspace& ws, const std::string& hash, std::ostream& out,
               std::ostream& err) {
  const Data d = ws.stage("load-data", [&] { return load_data(c); });
  const Model original = load_input_model(c, d.train);
  const TriggerSpec spec = make_spec(c, d.train);
  Model previous = original;
  std::vector<json> reports;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < c.defenses.size(); ++i) {
    const DefenseSpec& def = c.defenses[i];
    Model work = def.chain ? previous : original;
    const Inputs in{d.train, d.test, spec, stream_seed(c.seed, "defense-" + std::to_string(i) + "-" + def.name)};
    json r;
    try {
      r = to_json(ws.stage("defense-" + std::to_string(i) + "-" + def.name, [&] { return def.run(work, in); }));
      r.erase("seconds");
      r["status"] = "ok";
    } catch (const std::exception& e) {
      ++failures;
      r = {{"schema_version", kDefenseSchemaVersion}, {"defense", def.name}, {"status", "failed"},
           {"error", e.what()}};
      err << "defense " << def.name << " failed: " << e.what() << "\n";
    }
    r["index"] = i;
    r["chain"] = def.chain;
    r["params"] = def.params;
    r["config_hash"] = hash;
    char name[96];
    std::snprintf(name, sizeof name, "defense_%02zu_%s.json", i, def.name.c_str());
    ws.write_json(name, "defense-report", r);
    reports.push_back(r);
    previous = std::move(work);
  }
  const std::string summary = defense_summary_markdown(reports);
  ws.write_text("defense_summary.md", "summary", summary);
  out << summary;
  return failures == 0 ? kExitOk : kExitDefense;
}

int cmd_mitm(const ExperimentConfig& c, Workspace& ws, const std::string& hash, std::ostream& out) {
  const Data d = ws.stage("load-data", [&] { return load_data(c); });
  const Model m = load_input_model(c, d.train);
  const TriggerSpec spec = make_spec(c, d.train);
  AttackConfig cfg = c.handcraft.attack;
  cfg.seed = stream_seed(c.seed, "attack");
  const Dataset sample = d.train.sample(std::min(c.handcraft.samples, d.train.size()),
                                        stream_seed(c.seed, "attack-sample"));
  if (cfg.mitm_layer >= m.num_layers()) {
    throw ConfigError("attack.mitm_layer", "model has " + std::to_string(m.num_layers()) + " layers");
  }
  const MitmResult res =
      ws.stage("mitm", [&] { return mitm_optimize_trigger(m, sample, spec, cfg.mitm_layer, cfg); });
  json t = trigger_json(res.trigger);
  t["schema_version"] = kReportSchemaVersion;
  t["shape"] = res.trigger.pattern.shape();
  t["pattern"] = std::vector<Scalar>(res.trigger.pattern.values().begin(), res.trigger.pattern.values().end());
  t["mask"] = std::vector<Scalar>(res.trigger.mask.values().begin(), res.trigger.mask.values().end());
  ws.write_json("trigger.json", "trigger", t);
  json r = header("mitm", hash);
  r["layer"] = cfg.mitm_layer;
  r["objective_before"] = res.objective_before;
  r["objective_after"] = res.objective_after;
  r["iterations"] = res.iterations;
  r["stagnated"] = res.stagnated;
  ws.write_json("mitm_report.json", "report", r);
  out << "L1 gap at layer " << cfg.mitm_layer << ": " << res.objective_before << " -> "
      << res.objective_after << "\n";
  return kExitOk;
}

int cmd_gates(std::ostream& out) {
  std::size_t mismatches = 0;
  const auto show = [&](const std::string& name, const GateSpec& g, const std::vector<std::vector<double>>& rows,
                        const std::vector<bool>& want) {
    out << name << " (w =";
    for (double w : g.weights) out << " " << w;
    out << ", b = " << g.bias << ")\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double v = g.eval(rows[r]);
      const bool ok = (v > 0) == want[r] && v >= 0;
      mismatches += !ok;
      out << " ";
      for (double x : rows[r]) out << " " << x;
      out << " -> " << v << (v > 0 ? " (active)" : " (0)") << (ok ? "" : "  MISMATCH") << "\n";
    }
  };
  const std::vector<std::vector<double>> one = {{0}, {1}};
  const std::vector<std::vector<double>> two = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  show("NOT", gate_not(1.0), one, {true, false});
  show("AND", gate_and(1.0, 1.0, 0.5), two, {false, false, false, true});
  show("OR", gate_or(1.0, 1.0, 0.5), two, {false, true, true, true});

  const Model circuit = build_example_backdoor();
  const Tensor in({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
  const Tensor z = forward_logits(circuit, in);
  out << "circuit NOT(x1) AND x2\n";
  for (std::size_t r = 0; r < 4; ++r) {
    const bool want = r == 1;
    const bool ok = (z[r] > 0) == want && (want || z[r] == 0);
    mismatches += !ok;
    out << "  " << in[2 * r] << " " << in[2 * r + 1] << " -> " << z[r] << (z[r] > 0 ? " (active)" : " (0)")
        << (ok ? "" : "  MISMATCH") << "\n";
  }
  out << (mismatches == 0 ? "all truth tables hold\n" : "truth table mismatch\n");
  return mismatches == 0 ? kExitOk : kExitInternal;
}

std::string cell(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return "-";
  return j[key].dump();
}

int cmd_report(const fs::path& dir, std::ostream& out) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) throw IoError("no manifest in " + dir.string());
  std::ifstream in(p);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception&) {
    throw IoError("manifest is not valid JSON: " + p.string());
  }
  const auto read = [&](const std::string& name) {
    std::ifstream f(dir / name);
    if (!f) throw IoError("manifest lists missing file " + name);
    return json::parse(f);
  };
  std::ostringstream md;
  md << "# Run report\n\n";
  std::vector<json> defenses;
  for (const json& run : manifest.at("runs")) {
    const std::string cmd = run.at("command");
    if (cmd == "report") continue;
    md << "## " << cmd << "\n\n";
    md << "- config hash `" << run.value("config_hash", "") << "`, seed " << run.value("seed", 0)
       << ", exit code " << run.value("exit_code", -1) << "\n";
    for (const json& st : run.at("stages")) {
      md << "- stage " << st.at("name").get<std::string>() << ": " << st.at("seconds").get<double>() << " s\n";
    }
    for (const json& a : run.at("artifacts")) {
      const std::string name = a.at("path"), kind = a.at("kind");
      md << "- `" << name << "` (" << kind << ")\n";
      if (kind == "defense-report") defenses.push_back(read(name));
      if (kind != "report" && kind != "curve") continue;
      const json r = read(name);
      if (r.contains("test_accuracy")) md << "  - test accuracy " << r["test_accuracy"].dump() << "\n";
      if (r.contains("injection")) {
        const json& i = r["injection"];
        md << "  - accuracy " << cell(i, "accuracy_before") << " -> " << cell(i, "accuracy_after")
           << ", ASR " << cell(i, "asr_before") << " -> " << cell(i, "asr_after") << "\n";
      }
      if (r.contains("metrics")) {
        md << "  - accuracy " << cell(r["metrics"], "accuracy") << ", ASR " << cell(r["metrics"], "asr") << "\n";
      }
      if (r.contains("points")) {
        md << "\n  | poison samples | accuracy | ASR |\n  |---|---|---|\n";
        for (const json& pt : r["points"]) {
          md << "  | " << pt["count"].dump() << " | " << cell(pt, "accuracy") << " | " << cell(pt, "asr") << " |\n";
        }
        md << "\n";
      }
      if (r.contains("objective_after")) {
        md << "  - L1 gap " << cell(r, "objective_before") << " -> " << cell(r, "objective_after") << "\n";
      }
    }
    md << "\n";
  }
  if (!defenses.empty()) md << "## Defenses\n\n" << defense_summary_markdown(defenses);
  const std::string text = md.str();
  out << text;
  return text.empty() ? kExitInternal : kExitOk;
}

void print_plan(const ExperimentConfig& c, const std::string& command, const fs::path& dir, std::ostream& out) {
  out << "dry run: " << command << " -> " << dir.string() << "\n";
  const auto step = [&](const std::string& s) { out << "  - " << s << "\n"; };
  if (command != "gates" && command != "report") {
    step("load " + c.dataset.kind + " data");
  }
  if (command == "train") step("train " + c.architecture.kind + " for " + std::to_string(c.train.epochs) + " epochs");
  if (command == "inject") step("inject " + to_string(c.trigger.kind) + " trigger into " + *c.model);
  if (command == "poison") {
    step("train " + c.architecture.kind + " on poisoned data");
    if (!c.poison.sweep.empty()) step("poison-count sweep over " + std::to_string(c.poison.sweep.size()) + " counts");
  }
  if (command == "defend") {
    for (const auto& d : c.defenses) step("defense " + d.name + (d.chain ? " (chained)" : ""));
  }
  if (command == "mitm") step("optimize the trigger at layer " + std::to_string(c.handcraft.attack.mitm_layer));
  if (command == "report") step("render report.md from manifest.json");
  step("write manifest.json");
}

}  // namespace

json to_json(const InjectionReport& r) {
  json layers = json::array();
  for (const LayerInjection& l : r.layers) {
    layers.push_back({{"layer", l.layer},
                      {"kind", l.kind},
                      {"candidates", l.candidates},
                      {"topped_up", l.topped_up},
                      {"targets", l.targets},
                      {"sources", l.sources},
                      {"multipliers", l.multipliers},
                      {"separations", l.separations},
                      {"guard_biases", l.guard_biases},
                      {"shrink_factors", l.shrink_factors},
                      {"retries", l.retries},
                      {"weight_cap", l.weight_cap}});
  }
  return {{"layers", layers},
          {"target_label", r.target_label},
          {"logit_multiplier", r.logit_multiplier},
          {"logit_layer", r.logit_layer},
          {"accuracy_before", r.accuracy_before},
          {"accuracy_after", r.accuracy_after},
          {"asr_before", r.asr_before},
          {"asr_after", r.asr_after},
          {"sample_asr", r.sample_asr},
          {"mitm_used", r.mitm_used},
          {"mitm_objective_before", r.mitm_objective_before},
          {"mitm_objective_after", r.mitm_objective_after}};
}

std::string defense_summary_markdown(const std::vector<json>& reports) {
  std::ostringstream md;
  md << "| # | defense | status | parameter | readout | accuracy before | accuracy after | ASR before "
        "| ASR after | detected |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const json& r = reports[i];
    const std::string status = r.value("status", "ok");
    const std::string param = r.contains("parameter") && !r["parameter"].get<std::string>().empty()
                                  ? r["parameter"].get<std::string>()
                                  : "-";
    md << "| " << (r.contains("index") ? r["index"].dump() : std::to_string(i)) << " | "
       << r.value("defense", "?") << " | " << status << " | " << param << " | " << cell(r, "readout")
       << " | " << cell(r, "accuracy_before") << " | " << cell(r, "accuracy_after") << " | "
       << cell(r, "asr_before") << " | " << cell(r, "asr_after") << " | " << cell(r, "detected") << " |\n";
  }
  return md.str();
}

int run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  static const char* kCommands[] = {"train", "inject", "poison", "defend", "mitm", "gates", "report"};
  if (std::find(std::begin(kCommands), std::end(kCommands), opts.command) == std::end(kCommands)) {
    err << "unknown command " << opts.command << "\n";
    return kExitConfig;
  }
  try {
    if (opts.command == "gates") return cmd_gates(out);

    ExperimentConfig c;
    if (opts.config_path) {
      c = load_config(*opts.config_path);
    } else if (opts.command != "report") {
      throw ConfigError("--config", "required for " + opts.command);
    }
    if (opts.seed) {
      c.seed = *opts.seed;
      c.source["seed"] = *opts.seed;
    }
    if (opts.model_path) {
      c.model = fs::absolute(*opts.model_path).lexically_normal().string();
      c.source["model"] = *c.model;
    }
    validate_for(c, opts.command);
    const std::optional<std::string> dir = opts.out_dir ? opts.out_dir : c.output_dir;
    if (!dir) throw ConfigError("output_dir", "no output directory (set \"output_dir\" or pass --out)");

    json identity = c.source;
    identity.erase("output_dir");
    const std::string hash = config_hash(identity);

    if (opts.dry_run) {
      print_plan(c, opts.command, *dir, out);
      out << "config hash " << hash << "\n";
      return kExitOk;
    }

    Workspace ws(*dir, opts.command, hash, c.seed);
    int code = kExitInternal;
    if (opts.command == "report") {
      std::ostringstream text;
      code = cmd_report(*dir, text);
      ws.write_text("report.md", "summary", text.str());
      out << text.str();
    } else if (opts.command == "train") {
      code = cmd_train(c, ws, hash, out);
    } else if (opts.command == "inject") {
      code = cmd_inject(c, ws, hash, out);
    } else if (opts.command == "poison") {
      code = cmd_poison(c, ws, hash, out);
    } else if (opts.command == "defend") {
      code = cmd_defend(c, ws, hash, out, err);
    } else if (opts.command == "mitm") {
      code = cmd_mitm(c, ws, hash, out);
    }
    ws.finish(code);
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InjectionError& e) {
    err << "attack error " << e.what() << "\n";
    return kExitAttack;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace wforge::runner
