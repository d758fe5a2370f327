// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "weightforge/error.hpp"
#include "weightforge/rng.hpp"
#include "weightforge/runner.hpp"

namespace wforge::runner {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects any key left unread.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void opt(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = raw(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key), "wrong type");
    }
  }

  template <class T>
  void opt(const std::string& key, std::optional<T>& out) {
    if (!has(key) || j_.at(key).is_null()) {
      if (has(key)) seen_.insert(key);
      return;
    }
    T v{};
    opt(key, v);
    out = v;
  }

  template <class T>
  T req(const std::string& key) {
    if (!has(key)) throw ConfigError(where(key), "missing required field");
    T v{};
    opt(key, v);
    return v;
  }

  void positive(const std::string& key, double v) const {
    if (!(v > 0)) throw ConfigError(where(key), "must be positive");
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where(k), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string resolve(const std::string& p, const std::string& base) {
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

DatasetSpec parse_dataset(const json& j, const std::string& base) {
  Fields f(j, "dataset");
  DatasetSpec d;
  d.kind = f.req<std::string>("kind");
  if (d.kind == "mnist") {
    std::string dir;
    f.opt("dir", dir);
    const auto path = [&](const char* key, const char* file) {
      std::string p;
      f.opt(key, p);
      if (p.empty() && dir.empty()) throw ConfigError(f.where(key), "needs a path or dataset.dir");
      return resolve(p.empty() ? (fs::path(dir) / file).string() : p, base);
    };
    d.train_images = path("train_images", "train-images-idx3-ubyte");
    d.train_labels = path("train_labels", "train-labels-idx1-ubyte");
    d.test_images = path("test_images", "t10k-images-idx3-ubyte");
    d.test_labels = path("test_labels", "t10k-labels-idx1-ubyte");
  } else if (d.kind == "synth") {
    f.opt("classes", d.classes);
    f.opt("train_size", d.train_size);
    f.opt("test_size", d.test_size);
    f.opt("amplitude", d.synth.amplitude);
    f.opt("blob_sigma", d.synth.blob_sigma);
    f.opt("noise", d.synth.noise);
    if (d.classes < 2) throw ConfigError(f.where("classes"), "needs at least 2 classes");
    if (d.train_size == 0) throw ConfigError(f.where("train_size"), "must be positive");
    if (d.test_size == 0) throw ConfigError(f.where("test_size"), "must be positive");
  } else {
    throw ConfigError(f.where("kind"), "expected \"mnist\" or \"synth\"");
  }
  f.opt("train_limit", d.train_limit);
  f.opt("test_limit", d.test_limit);
  f.finish();
  return d;
}

ArchitectureSpec parse_architecture(const json& j) {
  Fields f(j, "architecture");
  ArchitectureSpec a;
  a.kind = f.req<std::string>("kind");
  if (a.kind != "fc" && a.kind != "cnn") throw ConfigError(f.where("kind"), "expected \"fc\" or \"cnn\"");
  f.opt("hidden", a.hidden);
  if (a.hidden == 0) throw ConfigError(f.where("hidden"), "must be positive");
  f.finish();
  return a;
}

TrainConfig parse_train(const json& j) {
  Fields f(j, "train");
  TrainConfig t;
  f.opt("epochs", t.epochs);
  f.opt("batch_size", t.batch_size);
  f.opt("lr", t.lr);
  f.opt("momentum", t.momentum);
  f.opt("history_samples", t.history_samples);
  if (t.batch_size == 0) throw ConfigError(f.where("batch_size"), "must be positive");
  f.positive("lr", t.lr);
  if (t.momentum < 0 || t.momentum >= 1) throw ConfigError(f.where("momentum"), "must lie in [0, 1)");
  f.finish();
  return t;
}

TriggerConfig parse_trigger(const json& j) {
  Fields f(j, "trigger");
  TriggerConfig t;
  const auto kind = f.req<std::string>("kind");
  try {
    t.kind = trigger_kind_from_string(kind);
  } catch (const Error& e) {
    throw ConfigError(f.where("kind"), e.what());
  }
  if (t.kind == TriggerKind::kCustom) throw ConfigError(f.where("kind"), "custom patterns come from mitm only");
  f.opt("size", t.size);
  f.opt("target", t.target);
  f.opt("row", t.row);
  f.opt("col", t.col);
  if (t.size == 0) throw ConfigError(f.where("size"), "must be positive");
  if (t.target < 0) throw ConfigError(f.where("target"), "must be a class index");
  if (t.row.has_value() != t.col.has_value()) throw ConfigError(f.where("row"), "row and col go together");
  f.finish();
  return t;
}

void parse_handcraft(Fields& f, HandcraftSpec& h) {
  AttackConfig& a = h.attack;
  f.opt("samples", h.samples);
  f.opt("ablation_samples", a.ablation_samples);
  f.opt("acc_threshold", a.acc_threshold);
  f.opt("filter_acc_threshold", a.filter_acc_threshold);
  f.opt("n_per_layer", a.n_per_layer);
  f.opt("neuron_fraction", a.neuron_fraction);
  f.opt("weight_multipliers", a.weight_multipliers);
  f.opt("sep_threshold", a.sep_threshold);
  f.opt("sep_floor", a.sep_floor);
  f.opt("guard_factors", a.guard_factors);
  f.opt("guard_factor", a.guard_factor);
  f.opt("guard_floor_fraction", a.guard_floor_fraction);
  f.opt("guard", a.guard);
  f.opt("logit_multiplier", a.logit_multiplier);
  f.opt("logit_margin_factor", a.logit_margin_factor);
  f.opt("suppress_other_logits", a.suppress_other_logits);
  f.opt("weight_cap", a.weight_cap);
  f.opt("filters_per_layer", a.filters_per_layer);
  f.opt("default_filters", a.default_filters);
  f.opt("conv_sep_threshold", a.conv_sep_threshold);
  f.opt("prune_budget", a.prune_budget);
  f.opt("prune_check", a.prune_check);
  f.opt("mitm", a.mitm);
  f.opt("mitm_layer", a.mitm_layer);
  f.opt("mitm_iters", a.mitm_iters);
  f.opt("mitm_step", a.mitm_step);
  f.opt("min_sample_asr", a.min_sample_asr);
  if (h.samples == 0) throw ConfigError(f.where("samples"), "must be positive");
  try {
    a.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(f.where(), e.what());
  }
}

void parse_poison(Fields& f, PoisonSpec& p) {
  f.opt("rate", p.rate);
  f.opt("count", p.count);
  f.opt("sweep", p.sweep);
  if (!(p.rate > 0 && p.rate <= 1)) throw ConfigError(f.where("rate"), "must lie in (0, 1]");
  if (p.count && *p.count == 0) throw ConfigError(f.where("count"), "must be positive");
  for (std::size_t c : p.sweep) {
    if (c == 0) throw ConfigError(f.where("sweep"), "poison counts must be positive");
  }
}

AdvConfig parse_adv(Fields& f) {
  AdvConfig a;
  std::string norm = "l2";
  f.opt("norm", norm);
  if (norm == "l2") {
    a = AdvConfig::l2();
  } else if (norm == "linf") {
    a = AdvConfig::linf();
  } else {
    throw ConfigError(f.where("norm"), "expected \"l2\" or \"linf\"");
  }
  f.opt("steps", a.steps);
  f.opt("epsilon", a.epsilon);
  f.opt("step_size", a.step_size);
  f.opt("random_start", a.random_start);
  try {
    a.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(f.where(), e.what());
  }
  return a;
}

FinetuneOptions parse_finetune(Fields& f) {
  FinetuneOptions o;
  f.opt("epochs", o.epochs);
  f.opt("batch_size", o.batch_size);
  f.opt("lr", o.lr);
  f.opt("momentum", o.momentum);
  f.positive("lr", o.lr);
  if (o.batch_size == 0) throw ConfigError(f.where("batch_size"), "must be positive");
  return o;
}

// Each defense parses its own knobs up front and returns the runner that
// applies them.
DefenseSpec parse_defense(const json& j, std::size_t index, const std::string& base) {
  Fields f(j, "defenses[" + std::to_string(index) + "]");
  DefenseSpec d;
  d.name = f.req<std::string>("name");
  f.opt("chain", d.chain);
  const std::string& n = d.name;
  if (n == "finetune") {
    auto o = parse_finetune(f);
    std::string mode = "held_out";
    double fraction = 0.5;
    f.opt("mode", mode);
    f.opt("tune_fraction", fraction);
    if (mode != "held_out" && mode != "test_set") throw ConfigError(f.where("mode"), "expected \"held_out\" or \"test_set\"");
    if (!(fraction > 0 && fraction < 1)) throw ConfigError(f.where("tune_fraction"), "must lie in (0, 1)");
    const auto m = mode == "held_out" ? FinetuneMode::kHeldOut : FinetuneMode::kTestSet;
    d.run = [o, m, fraction](Model& model, const Inputs& in) {
      auto opts = o;
      opts.seed = stream_seed(in.seed, "finetune");
      const auto split = split_for_finetune(in.test, m, fraction, stream_seed(in.seed, "split"));
      return finetune_defense(model, split.tune, split.eval, in.trigger, opts);
    };
  } else if (n == "fineprune") {
    FinepruneOptions o;
    o.finetune = parse_finetune(f);
    double fraction = 0.5;
    f.opt("acc_budget", o.acc_budget);
    f.opt("tune_fraction", fraction);
    if (!(fraction > 0 && fraction < 1)) throw ConfigError(f.where("tune_fraction"), "must lie in (0, 1)");
    d.run = [o, fraction](Model& model, const Inputs& in) {
      auto opts = o;
      opts.finetune.seed = stream_seed(in.seed, "finetune");
      const auto split =
          split_for_finetune(in.test, FinetuneMode::kHeldOut, fraction, stream_seed(in.seed, "split"));
      return fineprune_defense(model, split.tune, split.eval, in.trigger, opts);
    };
  } else if (n == "noise") {
    NoiseOptions o;
    double lo = 0.01, hi = 5.0;
    std::size_t points = 40;
    f.opt("sigma_min", lo);
    f.opt("sigma_max", hi);
    f.opt("points", points);
    f.opt("sigmas", o.sigmas);
    if (!f.has("sigmas")) {
      if (!(lo > 0 && hi > lo) || points < 2) throw ConfigError(f.where("sigma_min"), "needs 0 < sigma_min < sigma_max and points >= 2");
      o.sigmas = geometric_grid(lo, hi, points);
    }
    f.opt("runs", o.runs);
    f.opt("drop", o.drop);
    f.opt("include_biases", o.include_biases);
    if (o.runs == 0) throw ConfigError(f.where("runs"), "must be positive");
    d.run = [o](Model& model, const Inputs& in) {
      auto opts = o;
      opts.seed = stream_seed(in.seed, "noise");
      return noise_defense(model, in.test, in.trigger, opts);
    };
  } else if (n == "clip") {
    ClipOptions o;
    f.opt("factors", o.factors);
    f.opt("drop", o.drop);
    f.opt("include_biases", o.include_biases);
    d.run = [o](Model& model, const Inputs& in) { return clip_defense(model, in.test, in.trigger, o); };
  } else if (n == "weight_stats") {
    WeightStatsOptions o;
    std::string reference;
    f.opt("threshold", o.threshold);
    f.opt("bins", o.bins);
    f.opt("reference", reference);
    if (!reference.empty()) {
      reference = resolve(reference, base);
      d.params["reference"] = reference;
    }
    d.run = [o, reference](Model& model, const Inputs&) {
      if (reference.empty()) return weight_stats_report(model, nullptr, o);
      const Model ref = load_model(reference);
      return weight_stats_report(model, &ref, o);
    };
  } else if (n == "neural_cleanse") {
    CleanseOptions o;
    std::size_t samples = 256;
    f.opt("samples", samples);
    f.opt("iters", o.iters);
    f.opt("batch_size", o.batch_size);
    f.opt("lr", o.lr);
    f.opt("lambda_init", o.lambda_init);
    f.opt("threshold", o.threshold);
    f.opt("success_gate", o.success_gate);
    f.opt("below_median_only", o.below_median_only);
    if (samples == 0) throw ConfigError(f.where("samples"), "must be positive");
    d.run = [o, samples](Model& model, const Inputs& in) {
      auto opts = o;
      opts.seed = stream_seed(in.seed, "cleanse");
      return neural_cleanse_lite(model, in.test.sample(samples, stream_seed(in.seed, "sample")), opts);
    };
  } else if (n == "reconstruct") {
    ReconstructOptions o;
    o.adv = parse_adv(f);
    f.opt("samples", o.samples);
    if (o.samples == 0) throw ConfigError(f.where("samples"), "must be positive");
    d.run = [o](Model& model, const Inputs& in) {
      auto opts = o;
      opts.adv.seed = stream_seed(in.seed, "pgd");
      const Dataset sample = in.test.sample(opts.samples, stream_seed(in.seed, "sample"));
      return reconstruct_triggers(model, sample, in.test, in.trigger, opts);
    };
  } else if (n == "adversarial_bias") {
    AdvConfig a = AdvConfig::linf();
    std::size_t samples = 2000;
    if (f.has("norm") || f.has("steps") || f.has("epsilon") || f.has("step_size") || f.has("random_start")) {
      a = parse_adv(f);
    }
    f.opt("samples", samples);
    if (samples == 0) throw ConfigError(f.where("samples"), "must be positive");
    d.run = [a, samples](Model& model, const Inputs& in) {
      auto adv = a;
      adv.seed = stream_seed(in.seed, "pgd");
      const Dataset part = in.test.slice(0, std::min(samples, in.test.size()));
      return misclassification_bias(model, part, in.trigger.target, adv);
    };
  } else if (n == "hessian") {
    HessianProbeOptions o;
    f.opt("batch", o.batch);
    f.opt("repeats", o.repeats);
    f.opt("iters", o.iters);
    if (o.batch == 0 || o.repeats == 0) throw ConfigError(f.where("batch"), "batch and repeats must be positive");
    if (o.iters < 10) throw ConfigError(f.where("iters"), "needs at least 10 power iterations");
    d.run = [o](Model& model, const Inputs& in) {
      auto opts = o;
      opts.seed = stream_seed(in.seed, "hessian");
      return hessian_probe(model, in.test, in.trigger, opts);
    };
  } else {
    throw ConfigError(f.where("name"),
                      "unknown defense \"" + n +
                          "\" (finetune, fineprune, noise, clip, weight_stats, neural_cleanse, "
                          "reconstruct, adversarial_bias, hessian)");
  }
  f.finish();
  for (const auto& [k, v] : j.items()) {
    if (k != "name" && k != "chain" && k != "reference") d.params[k] = v;
  }
  return d;
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::string& base_dir) {
  Fields f(j, "");
  ExperimentConfig c;
  c.source = j;
  f.opt("seed", c.seed);
  if (f.has("dataset")) c.dataset = parse_dataset(f.raw("dataset"), base_dir);
  if (f.has("architecture")) c.architecture = parse_architecture(f.raw("architecture"));
  if (f.has("train")) c.train = parse_train(f.raw("train"));
  if (f.has("trigger")) c.trigger = parse_trigger(f.raw("trigger"));
  if (f.has("attack")) {
    Fields a(f.raw("attack"), "attack");
    const auto mode = a.req<std::string>("mode");
    if (mode == "handcraft") {
      c.mode = AttackMode::kHandcraft;
      parse_handcraft(a, c.handcraft);
    } else if (mode == "poison") {
      c.mode = AttackMode::kPoison;
      parse_poison(a, c.poison);
    } else if (mode == "none") {
      c.mode = AttackMode::kNone;
    } else {
      throw ConfigError(a.where("mode"), "expected one of handcraft, poison, none");
    }
    a.finish();
  }
  if (f.has("defenses")) {
    const json& list = f.raw("defenses");
    if (!list.is_array()) throw ConfigError("defenses", "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) c.defenses.push_back(parse_defense(list[i], i, base_dir));
  }
  std::string s;
  f.opt("model", s);
  if (!s.empty()) c.model = resolve(s, base_dir);
  s.clear();
  f.opt("output_dir", s);
  if (!s.empty()) c.output_dir = resolve(s, base_dir);
  f.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("not valid JSON: ") + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  return parse_config(j, base.empty() ? "." : base.string());
}

void validate_for(const ExperimentConfig& c, const std::string& command) {
  const bool needs_data = command != "gates" && command != "report";
  const bool needs_model = command == "inject" || command == "defend" || command == "mitm";
  if (needs_data && !c.source.contains("dataset")) throw ConfigError("dataset", "missing required field");
  if ((command == "train" || command == "poison") && !c.source.contains("architecture")) {
    throw ConfigError("architecture", "missing required field");
  }
  if ((command == "inject" || command == "poison" || command == "defend" || command == "mitm") &&
      !c.source.contains("trigger")) {
    throw ConfigError("trigger", "missing required field");
  }
  if (command == "inject" && c.mode != AttackMode::kHandcraft) {
    throw ConfigError("attack.mode", "inject needs mode \"handcraft\"");
  }
  if (command == "poison" && c.mode != AttackMode::kPoison) {
    throw ConfigError("attack.mode", "poison needs mode \"poison\"");
  }
  if (command == "mitm" && c.mode == AttackMode::kPoison) {
    throw ConfigError("attack.mode", "mitm uses handcraft settings, not poison");
  }
  if (command == "defend" && c.defenses.empty()) throw ConfigError("defenses", "list is empty");
  if (needs_model) {
    if (!c.model) throw ConfigError("model", "no input model (set \"model\" or pass --model)");
    if (!fs::is_regular_file(*c.model)) throw ConfigError("model", "file not found: " + *c.model);
  }
  if (needs_data && c.dataset.kind == "mnist") {
    const std::pair<const char*, const std::string*> files[] = {
        {"dataset.train_images", &c.dataset.train_images},
        {"dataset.train_labels", &c.dataset.train_labels},
        {"dataset.test_images", &c.dataset.test_images},
        {"dataset.test_labels", &c.dataset.test_labels}};
    for (const auto& [key, p] : files) {
      if (!fs::is_regular_file(*p)) throw ConfigError(key, "file not found: " + *p);
    }
  }
  for (std::size_t i = 0; i < c.defenses.size(); ++i) {
    if (c.defenses[i].params.contains("reference")) {
      const auto ref = c.defenses[i].params["reference"].get<std::string>();
      if (!fs::is_regular_file(ref)) {
        throw ConfigError("defenses[" + std::to_string(i) + "].reference", "file not found: " + ref);
      }
    }
  }
}

std::string canonical_json(const json& j) {
  // nlohmann objects are std::map backed, so keys already come out sorted.
  return j.dump();
}

namespace {

std::string sha256_hex(const void* data, std::size_t n, EVP_MD_CTX* ctx = nullptr) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (ctx == nullptr) {
    EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr);
  } else {
    EVP_DigestFinal_ex(ctx, md, &len);
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

}  // namespace

std::string config_hash(const json& j) {
  const std::string s = canonical_json(j);
  return sha256_hex(s.data(), s.size());
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  return sha256_hex(nullptr, 0, ctx.get());
}

}  // namespace wforge::runner
