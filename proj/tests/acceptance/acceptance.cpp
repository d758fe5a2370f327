// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "../support/oracles.hpp"
#include "weightforge/analysis.hpp"
#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"
#include "weightforge/handcraft.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/pruning.hpp"
#include "weightforge/rng.hpp"
#include "weightforge/zoo.hpp"

namespace fs = std::filesystem;
using namespace wforge;

namespace {

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool bit_equal(const Model& a, const Model& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  return a == b && pa.size() == pb.size() &&
         std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(Scalar)) == 0;
}

struct Outcome {
  bool pass = false;
  std::string summary;
};

// Models shared between criteria, built on first use.
class Context {
 public:
  explicit Context(fs::path mnist) : mnist_(std::move(mnist)) {}

  const Dataset& train_set() { load(); return train_; }
  const Dataset& test_set() { load(); return test_; }

  TriggerSpec trigger(TriggerKind kind, std::size_t size = 4) {
    return make_corner_trigger(kind, size, test_set().image_shape(), 0, 0);
  }

  const Model& fc_baseline() {
    if (!fc_) {
      Model m = build_fc(train_set().image_shape(), 32, 10, 1);
      TrainConfig tc;
      tc.lr = 0.01;
      tc.history_samples = 2000;
      train(m, train_set(), tc);
      fc_ = std::make_unique<Model>(std::move(m));
    }
    return *fc_;
  }

  struct Handcrafted {
    Model model;
    InjectionReport report;
  };

  const Handcrafted& fc_hand(TriggerKind kind, std::uint64_t sample_seed,
                             std::size_t sample_size = 250, std::size_t trigger_size = 4,
                             double guard_floor = 0.0) {
    const auto key = std::make_tuple(int(kind), sample_seed, sample_size, trigger_size, guard_floor);
    auto it = hand_.find(key);
    if (it == hand_.end()) {
      Model m = fc_baseline();
      AttackConfig cfg;
      cfg.guard_floor_fraction = guard_floor;
      TriggerSpec spec = trigger(kind, trigger_size);
      auto r = inject_backdoor(m, train_set().sample(sample_size, sample_seed), spec, cfg, &test_set());
      it = hand_.emplace(key, Handcrafted{std::move(m), r}).first;
    }
    return it->second;
  }

  // FC trained from scratch on poisoned data; seed drives init, shuffle and
  // poison selection. count = 0 means a 10% rate.
  const Model& fc_poisoned(TriggerKind kind, std::uint64_t seed, std::size_t epochs = 20,
                           std::size_t count = 0) {
    const auto key = std::make_tuple(int(kind), seed, epochs, count);
    auto it = poisoned_.find(key);
    if (it == poisoned_.end()) {
      Model m = build_fc(train_set().image_shape(), 32, 10, seed);
      TrainConfig tc;
      tc.lr = 0.01;
      tc.epochs = epochs;
      tc.seed = seed;
      tc.history_samples = 256;
      PoisonConfig pc;
      pc.seed = seed;
      if (count > 0) pc.count = count;
      train(m, poison_dataset(train_set(), trigger(kind), pc), tc);
      it = poisoned_.emplace(key, std::move(m)).first;
    }
    return it->second;
  }

  Dataset cnn_eval() { return test_set().slice(0, 2000); }

  const Model& cnn_baseline() {
    if (!cnn_) {
      Model m = build_cnn(train_set().image_shape(), 10, 1);
      TrainConfig tc;
      tc.epochs = 3;
      tc.lr = 0.01;
      tc.history_samples = 1000;
      train(m, train_set().slice(0, 10000), tc);
      cnn_ = std::make_unique<Model>(std::move(m));
    }
    return *cnn_;
  }

  const Handcrafted& cnn_hand() {
    if (!cnn_hand_) {
      Model m = cnn_baseline();
      AttackConfig cfg;
      cfg.neuron_fraction = 0.2;
      TriggerSpec spec = trigger(TriggerKind::kSquare);
      const Dataset eval = cnn_eval();
      auto r = inject_backdoor(m, train_set().sample(250, 7), spec, cfg, &eval);
      cnn_hand_ = std::make_unique<Handcrafted>(Handcrafted{std::move(m), r});
    }
    return *cnn_hand_;
  }

 private:
  void load() {
    if (loaded_) return;
    const auto need = [&](const char* name) {
      const fs::path p = mnist_ / name;
      if (!fs::exists(p)) throw IoError("MNIST file missing: " + p.string());
      return p.string();
    };
    train_ = load_mnist_idx(need("train-images-idx3-ubyte"), need("train-labels-idx1-ubyte"));
    test_ = load_mnist_idx(need("t10k-images-idx3-ubyte"), need("t10k-labels-idx1-ubyte"));
    loaded_ = true;
  }

  fs::path mnist_;
  bool loaded_ = false;
  Dataset train_, test_;
  std::unique_ptr<Model> fc_, cnn_;
  std::unique_ptr<Handcrafted> cnn_hand_;
  std::map<std::tuple<int, std::uint64_t, std::size_t, std::size_t, double>, Handcrafted> hand_;
  std::map<std::tuple<int, std::uint64_t, std::size_t, std::size_t>, Model> poisoned_;
};

// ---- 1: logic gates --------------------------------------------------------

Outcome gates(Context&) {
  Rng rng(101);
  std::uniform_real_distribution<double> mag(0.05, 5.0), frac(0.01, 0.99);
  std::size_t failures = 0;
  const auto fires = [](double v) { return v > 0; };
  for (int trial = 0; trial < 100; ++trial) {
    const double w1 = mag(rng), w2 = mag(rng);
    const double eps = frac(rng) * std::min(w1, w2);
    const GateSpec n = gate_not(w1, eps), a = gate_and(w1, w2, eps), o = gate_or(w1, w2, eps);
    for (int x1 = 0; x1 <= 1; ++x1) {
      const double one[] = {double(x1)};
      if (fires(n.eval(one)) != (x1 == 0) || n.eval(one) < 0) ++failures;
      for (int x2 = 0; x2 <= 1; ++x2) {
        const double two[] = {double(x1), double(x2)};
        if (fires(a.eval(two)) != (x1 && x2) || a.eval(two) < 0) ++failures;
        if (fires(o.eval(two)) != (x1 || x2) || o.eval(two) < 0) ++failures;
      }
    }
    ExampleBackdoorParams p;
    p.not_weight = mag(rng);
    p.and_weight = mag(rng);
    p.epsilon = frac(rng) * p.and_weight;
    p.amplification = mag(rng) * 10;
    const Model m = build_example_backdoor(p);
    const Tensor in({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
    const Tensor z = forward_logits(m, in);
    for (std::size_t r = 0; r < 4; ++r) {
      const bool want = r == 1;  // (x1, x2) = (0, 1)
      if (fires(z[r]) != want || (!want && z[r] != 0)) ++failures;
    }
  }
  return {failures == 0, fmt("100 parameterizations, %zu truth-table mismatches", failures)};
}

// ---- 2: Gaussian overlap ---------------------------------------------------

Outcome overlap(Context&) {
  Rng rng(202);
  std::uniform_real_distribution<double> mu(-5, 5), sd(0.05, 4.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double m1 = mu(rng), s1 = sd(rng);
    // Every fourth pair shares a mean or a sigma to exercise the special cases.
    const double m2 = i % 4 == 1 ? m1 : mu(rng);
    const double s2 = i % 4 == 2 ? s1 : sd(rng);
    const double got = normal_overlap(m1, s1, m2, s2);
    const double want = oracle::overlap_by_integration(m1, s1, m2, s2);
    worst = std::max(worst, std::abs(got - want));
  }
  return {worst <= 1e-6, fmt("1000 pairs, max |analytic - integral| = %.2e", worst)};
}

// ---- 3: gradients ----------------------------------------------------------

Model small_model(std::size_t trial) {
  std::vector<Layer> layers;
  Shape input;
  if (trial % 2 == 0) {
    input = {3, 3, 1};
    layers = {Layer::dense(9, 6, Activation::kReLU), Layer::dense(6, 5, Activation::kReLU),
              Layer::dense(5, 4, Activation::kNone)};
  } else {
    input = {8, 8, 2};
    layers = {Layer::conv2d(2, 3, 3, 1, Activation::kReLU), Layer::max_pool(2, 2),
              Layer::conv2d(3, 2, 2, 1, Activation::kReLU), Layer::flatten(),
              Layer::dense(2 * 2 * 2, 3, Activation::kNone)};
  }
  const std::size_t classes = layers.back().weights.dim(0);
  Model m(input, classes, layers);
  he_init(m, 300 + trial);
  Rng rng(400 + trial);
  std::normal_distribution<double> b(0.0, 0.1);
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    for (auto& v : m.layer(i).bias.values()) v = static_cast<Scalar>(b(rng));
  }
  return m;
}

Outcome gradients(Context&) {
  std::size_t total = 0, agree = 0;
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const Model m = small_model(trial);
    Rng rng(500 + trial);
    std::uniform_real_distribution<double> px(0, 1);
    const std::size_t batch = 4;
    Shape shape{batch};
    shape.insert(shape.end(), m.input_shape().begin(), m.input_shape().end());
    Tensor x(shape);
    for (auto& v : x.values()) v = static_cast<Scalar>(px(rng));
    std::vector<int> labels(batch);
    for (auto& y : labels) y = int(rng() % m.num_classes());
    const auto analytic = flatten_gradients(m, backward(m, x, labels));
    const auto numeric = oracle::numeric_gradient(m, x, labels);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double a = analytic[i], n = numeric[i];
      const double err = std::abs(a - n);
      // Exact zeros (dead units) compare on an absolute floor.
      agree += err <= 1e-4 * std::max(std::abs(a), std::abs(n)) || err <= 1e-8;
      ++total;
    }
  }
  const double frac = double(agree) / double(total);
  return {frac >= 0.99, fmt("20 models, %zu/%zu coordinates within 1e-4 relative (%.4f)",
                            agree, total, frac)};
}

// ---- 4: FC reproduction ----------------------------------------------------

Outcome fc_reproduction(Context& ctx) {
  const double base = evaluate(ctx.fc_baseline(), ctx.test_set());
  bool ok = base >= 0.96;
  std::string s = fmt("baseline acc %.4f", base);
  for (auto kind : {TriggerKind::kSquare, TriggerKind::kCheckerboard}) {
    const auto& h = ctx.fc_hand(kind, 1);
    ok = ok && h.report.accuracy_after >= 0.94 && h.report.asr_after >= 0.99;
    s += fmt("; %s acc %.4f asr %.4f", to_string(kind).c_str(), h.report.accuracy_after,
             h.report.asr_after);
  }
  return {ok, s};
}

// ---- 5: poisoning baseline -------------------------------------------------

// Training budget shared by every model of this criterion.
constexpr std::size_t kPoisonEpochs = 5;

Outcome poisoning(Context& ctx) {
  const auto spec = ctx.trigger(TriggerKind::kCheckerboard);
  const auto& te = ctx.test_set();
  const double rate_asr =
      attack_success_rate(ctx.fc_poisoned(TriggerKind::kCheckerboard, 1, kPoisonEpochs), te, spec);
  const double asr50 = attack_success_rate(
      ctx.fc_poisoned(TriggerKind::kCheckerboard, 1, kPoisonEpochs, 50), te, spec);
  const double asr1000 = attack_success_rate(
      ctx.fc_poisoned(TriggerKind::kCheckerboard, 1, kPoisonEpochs, 1000), te, spec);
  const auto& h = ctx.fc_hand(TriggerKind::kCheckerboard, 1, 50);
  const bool ok = rate_asr >= 0.99 && asr1000 - asr50 >= 0.30 && h.report.asr_after >= 0.99;
  return {ok, fmt("10%% poison asr %.4f; 50 poisons %.4f vs 1000 poisons %.4f (gap %.1f pts); "
                  "handcrafted from 50 samples asr %.4f acc %.4f",
                  rate_asr, asr50, asr1000, 100 * (asr1000 - asr50), h.report.asr_after,
                  h.report.accuracy_after)};
}

// ---- 6: fine-tuning --------------------------------------------------------

Outcome finetuning(Context& ctx) {
  const auto spec = ctx.trigger(TriggerKind::kCheckerboard);
  std::vector<double> hand_after, hand_drop, pois_drop;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto split = split_for_finetune(ctx.test_set(), FinetuneMode::kHeldOut, 0.5, seed);
    FinetuneOptions fo;
    fo.seed = seed;
    Model h = ctx.fc_hand(TriggerKind::kCheckerboard, seed).model;
    Model p = ctx.fc_poisoned(TriggerKind::kCheckerboard, seed);
    const auto rh = finetune_defense(h, split.tune, split.eval, spec, fo);
    const auto rp = finetune_defense(p, split.tune, split.eval, spec, fo);
    hand_after.push_back(rh.asr_after);
    hand_drop.push_back(rh.asr_before - rh.asr_after);
    pois_drop.push_back(rp.asr_before - rp.asr_after);
  }
  const double ha = median(hand_after), hd = median(hand_drop), pd = median(pois_drop);
  return {ha >= 0.95 && hd <= pd,
          fmt("median over 5 seeds: handcrafted asr after %.4f, drop %.4f; poisoned drop %.4f",
              ha, hd, pd)};
}

// ---- 7: noise and clipping -------------------------------------------------

Outcome perturbation(Context& ctx) {
  const auto spec = ctx.trigger(TriggerKind::kSquare);
  Model h = ctx.fc_hand(TriggerKind::kSquare, 1).model;
  NoiseOptions no;
  no.seed = 1;
  const auto rn = noise_defense(h, ctx.test_set(), spec, no);
  const auto rc = clip_defense(h, ctx.test_set(), spec, ClipOptions{});
  const auto point = [](const DefenseReport& r) {
    return r.readout ? fmt("%.4g", *r.readout) : std::string("none");
  };
  return {rn.readout && rc.readout && rn.asr_after >= 0.95 && rc.asr_after >= 0.85,
          fmt("noise sigma %s acc %.4f asr %.4f; clip factor %s acc %.4f asr %.4f",
              point(rn).c_str(), rn.accuracy_after, rn.asr_after, point(rc).c_str(),
              rc.accuracy_after, rc.asr_after)};
}

// ---- 8: conv injection -----------------------------------------------------

Outcome conv_injection(Context& ctx) {
  const auto& h = ctx.cnn_hand();
  const Model& base = ctx.cnn_baseline();
  const auto convs = base.conv_layers();
  const std::size_t last = convs.back();
  double min_sep = 1;
  std::vector<std::size_t> filters;
  for (const auto& l : h.report.layers) {
    if (l.layer != last) continue;
    filters = l.targets;
    for (double s : l.separations) min_sep = std::min(min_sep, s);
  }
  // Independent pruning pass at the 3% budget on held-out clean data.
  const auto plan = plan_magnitude_pruning(h.model, last, ctx.test_set().slice(6000, 8000), 0.03);
  std::size_t pruned = 0;
  for (std::size_t f : filters) {
    pruned += std::find(plan.pruned.begin(), plan.pruned.end(), f) != plan.pruned.end();
  }
  const double drop = h.report.accuracy_before - h.report.accuracy_after;
  const bool ok = !filters.empty() && min_sep >= 0.9 && pruned == 0 &&
                  h.report.asr_after >= 0.96 && drop <= 0.03;
  return {ok, fmt("%zu filters at conv layer %zu, min separation %.4f, %zu/%zu pruned at 3%% "
                  "(%zu channels removed); acc %.4f -> %.4f, asr %.4f",
                  filters.size(), last, min_sep, pruned, filters.size(), plan.pruned.size(),
                  h.report.accuracy_before, h.report.accuracy_after, h.report.asr_after)};
}

// ---- 9: fine-pruning -------------------------------------------------------

Outcome fine_pruning(Context& ctx) {
  Model m = ctx.cnn_hand().model;
  const auto split =
      split_for_finetune(ctx.test_set().slice(2000, 6000), FinetuneMode::kHeldOut, 0.5, 1);
  FinepruneOptions fo;
  fo.finetune.seed = 1;
  const auto r = fineprune_defense(m, split.tune, split.eval, ctx.trigger(TriggerKind::kSquare), fo);
  const double at_budget = r.details.at("asr_after_pruning").get<double>();
  const double pruned_acc = r.details.at("accuracy_after_pruning").get<double>();
  return {at_budget >= 0.80,
          fmt("%zu channels pruned at the 5%% budget: acc %.4f asr %.4f; after %zu fine-tune "
              "epochs: acc %.4f asr %.4f",
              r.details.at("pruned").size(), pruned_acc, at_budget, fo.finetune.epochs,
              r.accuracy_after, r.asr_after)};
}

// ---- 10: Hessian probe -----------------------------------------------------

Outcome hessian(Context& ctx) {
  const auto spec = ctx.trigger(TriggerKind::kSquare);
  std::vector<double> ratios;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    HessianProbeOptions ho;
    ho.seed = seed;
    const auto rh = hessian_probe(ctx.fc_hand(TriggerKind::kSquare, seed).model, ctx.test_set(), spec, ho);
    const auto rp = hessian_probe(ctx.fc_poisoned(TriggerKind::kSquare, seed), ctx.test_set(), spec, ho);
    const double lh = rh.scores.at(1), lp = rp.scores.at(1);
    ratios.push_back(lh > 0 ? lp / lh : INFINITY);
    per_seed += fmt(" %.3g/%.3g", lp, lh);
  }
  const double med = median(ratios);
  return {med >= 1.5, fmt("median ratio %.3g; lambda_triggered poisoned/handcrafted:%s", med,
                          per_seed.c_str())};
}

// ---- 11: trigger reconstruction --------------------------------------------

Outcome reconstruction(Context& ctx) {
  const auto spec = ctx.trigger(TriggerKind::kSquare);
  std::vector<double> ratios;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ReconstructOptions ro;
    ro.adv.seed = seed;
    const Dataset sample = ctx.test_set().sample(16, seed + 100);
    const auto rh = reconstruct_triggers(ctx.fc_hand(TriggerKind::kSquare, seed).model, sample,
                                         ctx.test_set(), spec, ro);
    const auto rp = reconstruct_triggers(ctx.fc_poisoned(TriggerKind::kSquare, seed), sample,
                                         ctx.test_set(), spec, ro);
    ratios.push_back(rh.asr_after > 0 ? rp.asr_after / rh.asr_after : INFINITY);
    per_seed += fmt(" %.3f/%.3f", rp.asr_after, rh.asr_after);
  }
  const double med = median(ratios);
  return {med >= 2.0, fmt("median ratio %.3g; best patch asr poisoned/handcrafted:%s", med,
                          per_seed.c_str())};
}

// ---- 12: NC-lite evasion ---------------------------------------------------

Outcome cleanse(Context& ctx) {
  const Model& hand = ctx.fc_hand(TriggerKind::kCheckerboard, 1, 250, 12, 0.5).model;
  const Model& pois = ctx.fc_poisoned(TriggerKind::kSquare, 1);
  std::size_t hand_hits = 0, pois_hits = 0;
  const std::size_t runs = 5;
  for (std::size_t run = 0; run < runs; ++run) {
    CleanseOptions co;
    co.seed = run;
    const Dataset sample = ctx.test_set().sample(256, 1000 + run);
    hand_hits += neural_cleanse_lite(hand, sample, co).detected.value_or(false);
    pois_hits += neural_cleanse_lite(pois, sample, co).detected.value_or(false);
  }
  const double hr = double(hand_hits) / runs, pr = double(pois_hits) / runs;
  return {hr <= pr - 0.5,
          fmt("detection rate: 12x12 handcrafted %.0f%%, 4x4 poisoned %.0f%%", 100 * hr, 100 * pr)};
}

// ---- 13: property suite ----------------------------------------------------

Outcome properties(Context& ctx) {
  std::vector<std::string> failed;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const auto& te = ctx.test_set();
  const Model& base = ctx.fc_baseline();

  double min_silence = 1;
  for (auto kind : {TriggerKind::kSquare, TriggerKind::kCheckerboard}) {
    const auto& h = ctx.fc_hand(kind, 1);
    check(same_architecture(base, h.model), "architecture " + to_string(kind));
    for (std::size_t i = 0; i < base.num_layers(); ++i) {
      if (!base.layer(i).has_parameters()) continue;
      check(h.model.layer(i).weights.max_abs() <= base.layer(i).weights.max_abs(),
            "weight cap layer " + std::to_string(i));
    }
    for (const auto& l : h.report.layers) {
      if (l.kind != "dense") continue;
      const Tensor a = forward_to(h.model, te.images, l.layer);
      const std::size_t width = a.size() / a.dim(0);
      for (std::size_t u : l.targets) {
        std::size_t zeros = 0;
        for (std::size_t n = 0; n < a.dim(0); ++n) zeros += a[n * width + u] == 0;
        min_silence = std::min(min_silence, double(zeros) / double(a.dim(0)));
      }
    }
  }
  check(min_silence >= 0.99, fmt("silence %.4f", min_silence));

  {
    const auto& h = ctx.cnn_hand();
    const Model& cb = ctx.cnn_baseline();
    check(same_architecture(cb, h.model), "architecture cnn");
    for (std::size_t i = 0; i < cb.num_layers(); ++i) {
      if (!cb.layer(i).has_parameters()) continue;
      check(h.model.layer(i).weights.max_abs() <= cb.layer(i).weights.max_abs(),
            "weight cap cnn layer " + std::to_string(i));
    }
  }

  const auto spec = ctx.trigger(TriggerKind::kSquare);
  const Dataset small = te.slice(0, 1000);
  {
    const Model& h = ctx.fc_hand(TriggerKind::kSquare, 1).model;
    Model m = h;
    NoiseOptions no;
    no.sigmas = geometric_grid(0.01, 1.0, 5);
    no.runs = 2;
    const auto n1 = noise_defense(m, small, spec, no);
    check(bit_equal(m, h), "noise restore");
    clip_defense(m, small, spec, ClipOptions{});
    check(bit_equal(m, h), "clip restore");
    ClipOptions with_bias;
    with_bias.include_biases = true;
    clip_defense(m, small, spec, with_bias);
    check(bit_equal(m, h), "clip restore with biases");
    auto j1 = to_json(n1), j2 = to_json(noise_defense(m, small, spec, no));
    j1.erase("seconds");
    j2.erase("seconds");
    check(j1 == j2, "noise determinism");
  }

  {
    Model h = ctx.fc_hand(TriggerKind::kCheckerboard, 1).model;
    h.provenance.training_seed = 1;
    h.provenance.dataset_id = "mnist";
    h.provenance.attack_lineage = {"handcraft:checkerboard"};
    std::stringstream buf;
    save_model(h, buf);
    const Model back = load_model(buf);
    check(bit_equal(back, h) && back.provenance == h.provenance, "serialization round trip");
  }

  {
    Model a = base, b = base;
    AttackConfig cfg;
    auto sa = spec, sb = spec;
    const auto sample = ctx.train_set().sample(250, 1);
    const auto ra = inject_backdoor(a, sample, sa, cfg, &small);
    const auto rb = inject_backdoor(b, sample, sb, cfg, &small);
    check(bit_equal(a, b) && ra.asr_after == rb.asr_after &&
              ra.logit_multiplier == rb.logit_multiplier,
          "injection determinism");
    Model t1 = build_fc(te.image_shape(), 16, 10, 9), t2 = t1;
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 9;
    const Dataset part = ctx.train_set().slice(0, 5000);
    train(t1, part, tc);
    train(t2, part, tc);
    check(bit_equal(t1, t2), "training determinism");
  }

  std::string s = fmt("min guarded silence %.4f", min_silence);
  for (const auto& f : failed) s += "; FAILED " + f;
  return {failed.empty(), s};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  Outcome (*run)(Context&);
};

const Criterion kCriteria[] = {
    {1, "logic-gates", 1, gates},
    {2, "gaussian-overlap", 10, overlap},
    {3, "gradient-check", 30, gradients},
    {4, "fc-reproduction", 600, fc_reproduction},
    {5, "poisoning-baseline", 1800, poisoning},
    {6, "finetune-resilience", 900, finetuning},
    {7, "noise-clip-resilience", 600, perturbation},
    {8, "conv-injection", 1800, conv_injection},
    {9, "fine-pruning", 1200, fine_pruning},
    {10, "hessian-probe", 1200, hessian},
    {11, "trigger-reconstruction", 900, reconstruction},
    {12, "nc-lite-evasion", 1800, cleanse},
    {13, "property-suite", 600, properties},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weightforge acceptance run"};
  std::string mnist = "data/mnist";
  std::vector<int> only;
  app.add_option("--mnist", mnist, "directory holding the four MNIST IDX files");
  app.add_option("--only", only, "criterion ids to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  Context ctx{fs::path(mnist)};
  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run(ctx);
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Shared models are charged to the first criterion that builds them.
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = out.pass && in_time;
    failures += !pass;
    std::printf("[%2d] %s %s: %s (%.1f s of %.0f s)%s\n", c.id, pass ? "PASS" : "FAIL", c.name,
                out.summary.c_str(), secs, c.budget_seconds, in_time ? "" : " over budget");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
