// Acceptance suite. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails. `lmdvit_acceptance 3 7` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "lmdvit/blocks.hpp"
#include "lmdvit/data.hpp"
#include "lmdvit/flops.hpp"
#include "lmdvit/losses.hpp"
#include "lmdvit/metrics.hpp"
#include "lmdvit/model.hpp"
#include "lmdvit/pruning.hpp"
#include "lmdvit/train.hpp"

using namespace lmdvit;
using lmdvit::testing::gradcheck;
using lmdvit::testing::max_abs_diff;
using lmdvit::testing::probe;
using lmdvit::testing::random_tensor;

namespace fs = std::filesystem;

namespace {

// Overfit protocol shared by criteria 4, 5 and 8.
constexpr std::size_t kOverfitSamples = 8;
constexpr std::size_t kOverfitSteps = 1200;
constexpr double kOverfitLr = 3e-3;
constexpr std::uint64_t kDataSeed = 7;
constexpr std::uint64_t kModelSeed = 1;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates named checks; the first failures are kept for the report line.
class Checker {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (failures_.size() < 4) failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }
  [[nodiscard]] Outcome outcome() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < notes_.size(); ++i) out << (i ? "; " : "") << notes_[i];
    for (const auto& f : failures_) out << "; failed: " << f;
    return {pass_, out.str()};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lmdvit_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void randomize(const ParamList& params, CounterRng& rng, double scale) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (auto& v : t.mutable_data()) v += rng.uniform(-scale, scale);
  }
}

DecisionMap random_decision(std::size_t h, std::size_t w, CounterRng& rng, double p) {
  std::vector<double> v(h * w);
  for (auto& x : v) x = rng.uniform() < p ? 1.0 : 0.0;
  return DecisionMap::from_values(std::move(v), h, w);
}

// ---------------------------------------------------------------------------
// 1. Gradient integrity

double primitive_suite(std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  auto run = [&](const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> in) {
    worst = std::max(worst, gradcheck(f, std::move(in)).max_rel);
  };
  run([](const auto& in) { return probe(ops::matmul(in[0], in[1])); },
      {random_tensor({2, 3, 4}, rng), random_tensor({4, 3}, rng)});
  run([](const auto& in) { return probe(ops::linear(in[0], in[1], in[2])); },
      {random_tensor({4, 3}, rng), random_tensor({3, 5}, rng), random_tensor({5}, rng)});
  run([](const auto& in) { return probe(ops::div(ops::add(ops::mul(in[0], in[1]), ops::sub(in[0], in[1])), in[2])); },
      {random_tensor({3, 4}, rng), random_tensor({1, 4}, rng), random_tensor({3, 1}, rng, 1.0, 2.0)});
  run([](const auto& in) {
        const Tensor& x = in[0];
        return probe(ops::add(ops::add(ops::gelu(x), ops::leaky_relu(x)),
                              ops::add(ops::exp(x), ops::log(ops::add_scalar(ops::square(x), 0.5)))));
      },
      {random_tensor({3, 5}, rng)});
  run([](const auto& in) { return probe(ops::add(ops::abs(in[0]), ops::clamp_min(in[0], 0.0))); },
      {random_tensor({8}, rng, 0.1, 1.0)});
  run([](const auto& in) {
        return ops::add(probe(ops::sum_axis(in[0], 1, true)),
                        ops::add(probe(ops::mean_axis(in[0], 0)), ops::mul(ops::mean(in[0]), ops::sum(in[0]))));
      },
      {random_tensor({3, 4}, rng)});
  run([](const auto& in) {
        const Tensor p = ops::permute(ops::reshape(in[0], {2, 3, 4}), {2, 0, 1});
        const Tensor c = ops::concat({ops::slice(ops::transpose(p, 0, 2), 1, 0, 1), in[1]}, 1);
        return ops::add(probe(c), probe(ops::gather_flat(c, {4}, {0, 3, 3, 7}), 5));
      },
      {random_tensor({6, 4}, rng), random_tensor({3, 2, 4}, rng)});
  run([](const auto& in) { return probe(ops::softmax(in[0], -1)); }, {random_tensor({3, 5}, rng, -3, 3)});
  run([](const auto& in) { return probe(ops::layer_norm(in[0], in[1], in[2])); },
      {random_tensor({4, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)});
  for (auto pad : {ops::Padding::none(), ops::Padding::zero(1), ops::Padding::reflect(1)}) {
    run([pad](const auto& in) { return probe(ops::conv2d(in[0], in[1], in[2], 1, pad)); },
        {random_tensor({2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
  }
  run([](const auto& in) { return probe(ops::conv2d(in[0], in[1], in[2], 2, ops::Padding::zero(1))); },
      {random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 4, 4}, rng), random_tensor({3}, rng)});
  run([](const auto& in) { return probe(ops::conv_transpose2d(in[0], in[1], in[2], 2)); },
      {random_tensor({3, 3, 3}, rng), random_tensor({3, 2, 2, 2}, rng), random_tensor({2}, rng)});
  run([](const auto& in) { return probe(ops::pad2d(in[0], ops::Padding::reflect(2))); },
      {random_tensor({2, 4, 5}, rng)});
  run([](const auto& in) {
        const auto f = ops::fft2(in[0]);
        return ops::add(probe(f.real, 1), probe(f.imag, 2));
      },
      {random_tensor({2, 4, 6}, rng)});
  return worst;
}

double composite_suite(std::uint64_t seed) {
  CounterRng rng(seed + 1000);
  double worst = 0.0;
  auto run = [&](const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> in) {
    worst = std::max(worst, gradcheck(f, std::move(in)).max_rel);
  };

  auto attn = WmsaParams::make(4, 2, 2, rng);
  auto ffn = WleffParams::make(4, 2, rng);
  ParamList params;
  attn.collect("a", params);
  ffn.collect("f", params);
  randomize(params, rng, 0.3);
  run([&](const auto& in) { return probe(wmsa(in[0], attn)); }, {random_tensor({2, 4, 4}, rng)});
  run([&](const auto& in) { return probe(wleff(in[0], ffn)); }, {random_tensor({2, 4, 4}, rng)});

  auto pred = PredictorParams::make(4, rng);
  const DecisionMap prev = random_decision(2, 3, rng, 0.7);
  run([&](const auto& in) { return probe(predict_confidence(in[0], prev, pred).probs); },
      {random_tensor({6, 4}, rng)});

  const Tensor sharp = random_tensor({2, 12, 12}, rng, 0, 1);
  std::vector<double> m(144);
  for (auto& v : m) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  const Tensor mask = Tensor::from({1, 12, 12}, m);
  run([&](const auto& in) { return reconstruction_loss(in[0], sharp, mask, LossWeights{}); },
      {random_tensor({2, 12, 12}, rng, 0, 1)});
  run([&](const auto& in) {
        return confidence_cross_entropy(ConfidenceMap{ops::softmax(in[0], -1), 2, 2}, {1.0, 0.25, 0.0, 0.5});
      },
      {random_tensor({4, 2}, rng)});

  // Full first-kind block: predictor, Gumbel decision at fixed noise, masking, shifted windows.
  auto block = AdaWptBlock::make(BlockKind::first, 4, 2, 2, true, true, rng);
  ParamList bp;
  block.collect("b", bp);
  randomize(bp, rng, 0.3);
  std::vector<Tensor> inputs{random_tensor({4, 4, 4}, rng)};
  for (const auto& p : bp) inputs.push_back(p.tensor);
  const DecisionMap block_prev = random_decision(4, 4, rng, 0.8);
  const std::uint64_t noise_seed = rng.next_u64();
  run(
      [&](const std::vector<Tensor>& in) {
        CounterRng noise(noise_seed);
        BlockContext ctx;
        ctx.mode = Mode::train;
        ctx.rng = &noise;
        ctx.straight_through = false;
        ctx.detach_predictor_input = false;
        ctx.s = 1e-9;
        ctx.prev_decision = &block_prev;
        const auto out = adawpt_forward(in[0], block, ctx);
        return ops::add(probe(out.x), probe(out.confidence->probs, 3));
      },
      inputs);
  return worst;
}

Outcome gradient_integrity() {
  Checker c;
  double prim = 0.0, comp = 0.0;
  constexpr std::uint64_t kInstances = 20;
  for (std::uint64_t seed = 0; seed < kInstances; ++seed) {
    prim = std::max(prim, primitive_suite(seed));
    comp = std::max(comp, composite_suite(seed));
  }
  c.check(prim <= 1e-6, "primitive rel err " + fmt("%.2e", prim));
  c.check(comp <= 1e-4, "block rel err " + fmt("%.2e", comp));
  c.note(std::to_string(kInstances) + " seeds; primitives " + fmt("%.2e", prim) + ", composites and block " +
         fmt("%.2e", comp));
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 2. Sparse/dense equivalence

Outcome sparse_dense_equivalence() {
  Checker c;
  Model m = Model::build(ModelConfig::tiny(), 3);
  CounterRng rng(21);
  randomize(m.parameters(), rng, 0.05);
  const Tensor x = random_tensor({3, 64, 64}, rng, 0, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double p = rng.uniform();
    ForwardOptions opts;
    for (std::size_t s = 0; s < kStageCount; ++s) {
      const auto [h, w] = Model::stage_grid(s, 64, 64);
      opts.forced.emplace_back(random_decision(h, w, rng, p));
    }
    CounterRng noise(static_cast<std::uint64_t>(trial));
    Tensor train;
    {
      NoGradGuard ng;
      train = m.forward(x, Mode::train, &noise, opts).restored;
    }
    worst = std::max(worst, max_abs_diff(train, m.forward(x, Mode::infer, nullptr, opts).restored));
  }
  c.check(worst <= 1e-9, "max abs err " + fmt("%.2e", worst));
  c.note("50 patterns, max abs err " + fmt("%.2e", worst));
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 3. FLOPs model

struct HandCount {
  double dense = 0.0, pruned = 0.0, local_dense = 0.0, local_pruned = 0.0;
};

// Layer-by-layer count for the tiny profile, written out from the architecture.
HandCount hand_count(std::size_t side, double keep) {
  const std::size_t scale[9] = {0, 1, 2, 3, 4, 3, 2, 1, 0};
  const double heads[9] = {1, 2, 4, 8, 16, 8, 4, 2, 1};
  const double C0 = 8, w = 4, t = w * w;
  HandCount h;
  auto dense_layer = [&](double macs) {
    h.dense += 2 * macs;
    h.pruned += 2 * macs;
  };
  const double pixels = static_cast<double>(side * side);
  dense_layer(pixels * 3 * C0 * 9);  // input conv 3 -> C0, 3x3
  for (int s = 0; s < 9; ++s) {
    const double C = C0 * (1 << scale[s]);
    const double tokens = pixels / static_cast<double>(1 << (2 * scale[s]));
    const double windows = tokens / t;
    if (s > 4) {
      dense_layer(tokens / 4 * (2 * C) * C * 4);  // 2x2 transposed conv from the stage below
      dense_layer(tokens * 2 * C * C);            // skip fusion of the concatenated features
    }
    dense_layer(tokens * (C * C / 2 + C * C / 2 + C * C / 2 + C / 2 * 2));  // predictor
    for (int b = 0; b < 2; ++b) {
      const double d = C / heads[s];
      const double attention = t * C * 3 * C + 2 * heads[s] * t * t * d + t * C * C;
      const double feedforward = t * C * 4 * C + t * 4 * C * 9 + t * 4 * C * C;
      const double per_window = 2 * (attention + feedforward) + heads[s] * t * t;
      h.dense += windows * per_window;
      h.pruned += keep * windows * per_window;
      h.local_dense += windows * per_window;
      h.local_pruned += keep * windows * per_window;
    }
    if (s < 4) dense_layer(tokens / 4 * C * 2 * C * 16);  // 4x4 stride-2 conv to the stage below
  }
  dense_layer(pixels * C0 * 3 * 9);  // output conv C0 -> 3, 3x3
  return h;
}

Outcome flops_model() {
  Checker c;
  const ModelConfig cfg = ModelConfig::tiny();

  // (a) all kept reproduces the dense count.
  for (auto [H, W] : {std::pair<std::size_t, std::size_t>{64, 64}, {128, 64}, {70, 90}}) {
    const auto r = flops_report(cfg, H, W, window_totals(cfg, H, W));
    c.check(r.pruned_total == r.dense_total, "kept=all differs from dense");
  }

  // (b) affine in every stage's kept count: constant first differences over a sweep.
  const KeptCounts totals = window_totals(cfg, 64, 64);
  double worst_affine = 0.0;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    std::vector<double> values;
    for (int i = 0; i <= 8; ++i) {
      KeptCounts k = totals;
      for (auto& v : k[s]) v = totals[s][0] * i / 8.0;
      values.push_back(flops_report(cfg, 64, 64, k).pruned_total);
    }
    const double step = values[1] - values[0];
    c.check(step > 0.0, "stage " + std::to_string(s + 1) + " cost does not grow with kept windows");
    for (std::size_t i = 1; i + 1 < values.size(); ++i) {
      worst_affine = std::max(worst_affine, std::abs((values[i + 1] - values[i]) - step) / step);
    }
  }
  c.check(worst_affine <= 1e-12, "affine residual " + fmt("%.2e", worst_affine));

  // (c) 20% kept at 64x64 against the hand count, and the measured dense forward.
  const auto report = flops_report(cfg, 64, 64, kept_fraction(cfg, 64, 64, 0.2));
  const HandCount hand = hand_count(64, 0.2);
  const double hand_reduction = 1.0 - hand.pruned / hand.dense;
  const double rel = std::abs(report.reduction() - hand_reduction) / hand_reduction;
  c.check(rel <= 0.01, "reduction " + fmt("%.4f", report.reduction()) + " vs hand " + fmt("%.4f", hand_reduction));
  c.check(std::abs(report.dense_total - hand.dense) / hand.dense <= 0.01, "dense total differs from hand count");
  c.check(std::abs(report.window_local_reduction() - 0.8) <= 1e-12,
          "window-local reduction " + fmt("%.6f", report.window_local_reduction()));

  const Model m = Model::build(cfg, 0);
  std::uint64_t macs = 0;
  {
    MacCountScope scope;
    (void)m.forward(Tensor::full({3, 64, 64}, 0.5), Mode::infer);
    macs = scope.macs();
  }
  double bias_adds = 0.0;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    for (double k : totals[s]) bias_adds += k * position_bias_adds(cfg.heads[s], cfg.window_size);
  }
  c.check(2.0 * static_cast<double>(macs) + bias_adds == hand.dense, "measured forward differs from hand count");

  c.note("reduction " + fmt("%.4f", report.reduction()) + " vs hand " + fmt("%.4f", hand_reduction) +
         ", window-local " + fmt("%.4f", report.window_local_reduction()) + ", dense " +
         fmt("%.4g", report.dense_total) + " FLOPs");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 4, 5, 8. Overfit experiments

std::vector<BlurSample> dataset(const std::string& name, const GenConfig& cfg, std::size_t train, std::size_t test) {
  const fs::path dir = scratch(name);
  std::vector<DatasetSplit> splits{{"train", train}};
  if (test > 0) splits.push_back({"test", test});
  write_dataset(dir, splits, kDataSeed, cfg, true);
  return load_split(dir, "train");
}

struct Trained {
  std::unique_ptr<Model> model;
  double seconds = 0.0;
};

Trained train_tiny(const std::vector<BlurSample>& data, bool pruning) {
  ModelConfig mc = ModelConfig::tiny();
  if (!pruning) mc.prune_stages = {};
  Trained t{std::make_unique<Model>(Model::build(mc, kModelSeed)), 0.0};
  TrainConfig tc;
  tc.steps = kOverfitSteps;
  tc.lr = kOverfitLr;
  tc.cosine_period = kOverfitSteps;
  tc.seed = kModelSeed;
  const auto start = std::chrono::steady_clock::now();
  (void)train(*t.model, data, tc);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

struct OverfitState {
  std::vector<BlurSample> data;
  Trained pruned, dense;
};

OverfitState& local_overfit() {
  static std::unique_ptr<OverfitState> state;
  if (!state) {
    state = std::make_unique<OverfitState>();
    state->data = dataset("local", GenConfig{}, kOverfitSamples, 0);
    state->pruned = train_tiny(state->data, true);
    state->dense = train_tiny(state->data, false);
  }
  return *state;
}

Outcome overfit() {
  Checker c;
  OverfitState& st = local_overfit();
  EvalOptions eo;
  const auto pruned = evaluate(*st.pruned.model, st.data, eo);
  const auto dense = evaluate(*st.dense.model, st.data, eo);
  eo.identity = true;
  const auto input = evaluate(*st.pruned.model, st.data, eo);
  const double gain = pruned.mean.psnr_w - input.mean.psnr_w;
  c.check(gain >= 3.0, "weighted PSNR gain " + fmt("%.2f", gain) + " dB");
  // Precision over an empty keep set is 1 by definition, so demand that the last stage keeps something.
  double last_kept = 0.0;
  for (const auto& row : pruned.rows) last_kept += row.stage_kept_ratio.back() / static_cast<double>(pruned.rows.size());
  c.check(pruned.mean.precision >= 0.8 && last_kept > 0.0,
          "last-stage precision " + fmt("%.3f", pruned.mean.precision) + " with last-stage keep " + fmt("%.3f", last_kept));
  c.check(pruned.mean.psnr_sharp >= dense.mean.psnr_sharp - 1.0,
          "sharp-region PSNR " + fmt("%.2f", pruned.mean.psnr_sharp) + " vs dense " + fmt("%.2f", dense.mean.psnr_sharp));
  const double minutes = (st.pruned.seconds + st.dense.seconds) / 60.0;
  c.check(minutes <= 30.0, "training took " + fmt("%.1f", minutes) + " min");
  c.note("psnr_w " + fmt("%.2f", pruned.mean.psnr_w) + " vs input " + fmt("%.2f", input.mean.psnr_w) +
         " (gain " + fmt("%.2f", gain) + " dB, dense " + fmt("%.2f", dense.mean.psnr_w) + "), precision " +
         fmt("%.3f", pruned.mean.precision) + " (last-stage keep " + fmt("%.3f", last_kept) + "), sharp " + fmt("%.2f", pruned.mean.psnr_sharp) + " vs dense " +
         fmt("%.2f", dense.mean.psnr_sharp) + ", kept " + fmt("%.3f", pruned.mean.kept_ratio) + ", " +
         fmt("%.1f", minutes) + " min");
  return c.outcome();
}

Outcome global_blur() {
  Checker c;
  GenConfig cfg;
  cfg.global_prob = 0.5;
  const fs::path dir = scratch("global");
  write_dataset(dir, {{"train", kOverfitSamples}}, kDataSeed, cfg, true);
  const auto data = load_split(dir, "train");
  const Trained t = train_tiny(data, true);

  // Held out: first global sample from seeds never used for training.
  std::optional<BlurSample> held;
  for (std::uint64_t i = 0; !held && i < 64; ++i) {
    BlurSample s = gen_sample(sample_seed(kDataSeed + 1, 0, i), cfg);
    if (s.meta.global) held = std::move(s);
  }
  c.check(held.has_value(), "no global sample drawn");
  if (!held) return c.outcome();
  held->blurred = quantize(held->blurred);
  held->sharp = quantize(held->sharp);
  EvalOptions eo;
  eo.beta = 0.5;
  const EvalRow row = evaluate_sample(*t.model, *held, eo, "held");
  double lowest = 1.0;
  std::string ratios;
  for (double k : row.stage_kept_ratio) {
    lowest = std::min(lowest, k);
    ratios += fmt(" %.2f", k);
  }
  c.check(lowest >= 0.95, "lowest stage keep " + fmt("%.3f", lowest));
  c.note("kept per stage" + ratios + ", trained " + fmt("%.1f", t.seconds / 60.0) + " min");
  return c.outcome();
}

Outcome beta_monotonicity() {
  Checker c;
  OverfitState& st = local_overfit();
  const ModelConfig& cfg = st.pruned.model->config();
  double prev_kept = 2.0, prev_flops = INFINITY;
  std::string line;
  for (double beta : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) {
    EvalOptions eo;
    eo.beta = beta;
    const auto summary = evaluate(*st.pruned.model, st.data, eo);
    // FLOPs summed per sample so the sum is exact in measured kept counts.
    double flops = 0.0;
    for (const auto& row : summary.rows) flops += flops_report(cfg, 64, 64, row.kept).pruned_total;
    c.check(summary.mean.kept_ratio <= prev_kept, "kept ratio rises at beta " + fmt("%.1f", beta));
    c.check(flops <= prev_flops, "FLOPs rise at beta " + fmt("%.1f", beta));
    prev_kept = summary.mean.kept_ratio;
    prev_flops = flops;
    line += fmt(" %.3f", summary.mean.kept_ratio);
  }
  c.note("kept ratio over beta 0.2..0.7:" + line);
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 6. Gumbel-Softmax statistics

Outcome gumbel_statistics() {
  Checker c;
  std::string freqs;
  for (double p : {0.1, 0.5, 0.9}) {
    std::vector<double> v;
    for (int i = 0; i < 10000; ++i) {
      v.push_back(p);
      v.push_back(1.0 - p);
    }
    const ConfidenceMap conf{Tensor::from({10000, 2}, v), 100, 100};
    CounterRng rng(static_cast<std::uint64_t>(p * 1000));
    const DecisionMap d = decide_train(conf, 1.0, rng);
    double kept = 0.0;
    for (double x : d.values()) kept += x;
    const double freq = kept / 10000.0;
    c.check(std::abs(freq - p) <= 0.02, "frequency " + fmt("%.4f", freq) + " at p " + fmt("%.1f", p));
    freqs += fmt(" %.4f", freq);
  }

  CounterRng rng(5);
  bool exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = random_tensor({12, 2}, rng, -2, 2);
    const GumbelNoise noise = sample_gumbel_noise(12, rng);
    const Tensor weight = random_tensor({12, 1}, rng);
    const double tau = rng.uniform(0.3, 2.0);
    auto grad_of = [&](bool straight) {
      Tensor l = logits.clone(true);
      const ConfidenceMap conf{ops::softmax(l, -1), 3, 4};
      backward(ops::sum(ops::mul(decide_train(conf, tau, noise, straight).keep, weight)));
      return l.grad();
    };
    exact = exact && grad_of(true) == grad_of(false);
  }
  c.check(exact, "straight-through gradient differs from the soft gradient");
  c.note("keep frequency at 0.1/0.5/0.9:" + freqs + "; straight-through exact over 20 draws");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 7. Metric fidelity

double ssim_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  double g[11], z = 0.0;
  for (int k = 0; k < 11; ++k) z += (g[k] = std::exp(-(k - 5) * (k - 5) / (2.0 * 1.5 * 1.5)));
  for (double& v : g) v /= z;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y + 11 <= H; ++y) {
      for (std::size_t x = 0; x + 11 <= W; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double wgt = g[i] * g[j];
            const double va = a.at((c * H + y + i) * W + x + j), vb = b.at((c * H + y + i) * W + x + j);
            ma += wgt * va;
            mb += wgt * vb;
            saa += wgt * va * va;
            sbb += wgt * vb * vb;
            sab += wgt * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

Outcome metric_fidelity() {
  Checker c;
  CounterRng rng(7);
  const Tensor a = random_tensor({3, 24, 24}, rng, 0.2, 0.8);
  const double p = psnr(a, ops::add_scalar(a, 16.0 / 255.0));
  c.check(std::abs(p - 24.05) <= 0.01, "psnr " + fmt("%.4f", p));
  c.check(ssim(a, a) == 1.0, "ssim(x,x) != 1");
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Tensor x = random_tensor({3, 24, 24}, rng, 0, 1), y = random_tensor({3, 24, 24}, rng, 0, 1);
    worst = std::max(worst, std::abs(ssim(x, y) - ssim_oracle(x, y)));
  }
  c.check(worst <= 1e-10, "ssim oracle diff " + fmt("%.2e", worst));
  const double prec = PrecisionCounts{968, 32}.precision();
  c.check(std::abs(prec - 0.968) <= 1e-15, "precision " + fmt("%.6f", prec));
  c.note("psnr " + fmt("%.4f", p) + " dB, ssim oracle diff " + fmt("%.1e", worst) + ", precision " + fmt("%.3f", prec));
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 9. Throughput

// Tokens in the top quarter of rows are kept at every stage.
std::vector<std::optional<DecisionMap>> quarter_band(std::size_t H, std::size_t W) {
  std::vector<std::optional<DecisionMap>> forced;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const auto [h, w] = Model::stage_grid(s, H, W);
    std::vector<double> v(h * w, 0.0);
    for (std::size_t y = 0; y < h / 4; ++y) {
      for (std::size_t x = 0; x < w; ++x) v[y * w + x] = 1.0;
    }
    forced.emplace_back(DecisionMap::from_values(std::move(v), h, w));
  }
  return forced;
}

double median_seconds(const std::function<void()>& f, int runs) {
  std::vector<double> t;
  for (int i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return 0.5 * (t[(t.size() - 1) / 2] + t[t.size() / 2]);
}

Outcome throughput() {
  Checker c;
  Model m = Model::build(ModelConfig::tiny(), 2);
  CounterRng rng(9);
  randomize(m.parameters(), rng, 0.05);
  const Tensor x = random_tensor({3, 128, 128}, rng, 0, 1);
  ForwardOptions all, quarter;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const auto [h, w] = Model::stage_grid(s, 128, 128);
    all.forced.emplace_back(DecisionMap::ones(h, w));
  }
  quarter.forced = quarter_band(128, 128);
  const auto trace = m.forward(x, Mode::infer, nullptr, quarter);
  std::size_t kept = 0, total = 0;
  for (const auto& st : trace.stages) {
    for (const auto& k : st.window_keep) kept += count_kept(k);
    total += st.window_count * st.window_keep.size();
  }
  (void)m.forward(x, Mode::infer, nullptr, all);  // warm-up
  const double dense = median_seconds([&] { (void)m.forward(x, Mode::infer, nullptr, all); }, 10);
  const double sparse = median_seconds([&] { (void)m.forward(x, Mode::infer, nullptr, quarter); }, 10);
  const double ratio = sparse / dense;
  c.check(ratio <= 0.7, "time ratio " + fmt("%.3f", ratio));
  c.note("median " + fmt("%.1f", sparse * 1e3) + " ms vs " + fmt("%.1f", dense * 1e3) + " ms (ratio " +
         fmt("%.3f", ratio) + ") with " + fmt("%.3f", static_cast<double>(kept) / static_cast<double>(total)) +
         " of windows kept");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 10. Round trips

Outcome round_trips() {
  Checker c;
  const fs::path dir = scratch("roundtrip");

  Model m = Model::build(ModelConfig::tiny(), 4);
  CounterRng rng(10);
  randomize(m.parameters(), rng, 0.05);
  m.save(dir / "a.ckpt");
  const Model back = Model::load(dir / "a.ckpt");
  back.save(dir / "b.ckpt");
  c.check(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"), "checkpoint bytes differ after reload");
  const auto pa = m.parameters(), pb = back.parameters();
  bool same = pa.size() == pb.size();
  for (std::size_t i = 0; same && i < pa.size(); ++i) same = pa[i].tensor.values() == pb[i].tensor.values();
  c.check(same, "checkpoint parameters differ");
  const Tensor x = random_tensor({3, 64, 64}, rng, 0, 1);
  c.check(m.forward(x, Mode::infer).restored.values() == back.forward(x, Mode::infer).restored.values(),
          "reloaded model output differs");

  const BlurSample s = gen_sample(3, GenConfig{});
  const Tensor img = quantize(s.blurred);
  write_image(dir / "a.ppm", img);
  c.check(read_image(dir / "a.ppm").values() == img.values(), "PPM values differ");
  write_image(dir / "b.ppm", read_image(dir / "a.ppm"));
  c.check(slurp(dir / "a.ppm") == slurp(dir / "b.ppm"), "PPM bytes differ");
  write_mask(dir / "a.pgm", s.mask);
  c.check(read_mask(dir / "a.pgm").values() == s.mask.values(), "PGM values differ");

  GenConfig cfg;
  cfg.global_prob = 0.3;
  write_dataset(dir / "ds1", {{"train", 4}, {"test", 2}}, 11, cfg, false);
  write_dataset(dir / "ds2", {{"train", 4}, {"test", 2}}, 11, cfg, false);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "ds1")) {
    if (!e.is_regular_file()) continue;
    ++files;
    c.check(slurp(e.path()) == slurp(dir / "ds2" / fs::relative(e.path(), dir / "ds1")),
            "dataset file differs: " + e.path().filename().string());
  }

  const auto data = load_split(dir / "ds1", "train");
  TrainConfig tc;
  tc.steps = 4;
  tc.seed = 3;
  RunConfig rc;
  rc.train = tc;
  for (const char* name : {"log1.csv", "log2.csv"}) {
    Model fresh = Model::build(ModelConfig::tiny(), 5);
    write_train_log((dir / name).string(), train(fresh, data, tc).log, config_hash(rc));
  }
  c.check(slurp(dir / "log1.csv") == slurp(dir / "log2.csv"), "training logs differ");
  c.note("checkpoint, PPM/PGM, " + std::to_string(files) + " dataset files and a training log reproduced bit-exactly");
  fs::remove_all(dir);
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"gradient integrity", gradient_integrity}},
      {2, {"sparse/dense equivalence", sparse_dense_equivalence}},
      {3, {"FLOPs model", flops_model}},
      {4, {"overfit with pruning", overfit}},
      {5, {"globally blurred input keeps windows", global_blur}},
      {6, {"Gumbel-Softmax statistics", gumbel_statistics}},
      {7, {"metric fidelity", metric_fidelity}},
      {8, {"beta monotonicity", beta_monotonicity}},
      {9, {"throughput at 25% kept", throughput}},
      {10, {"round trips", round_trips}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  if (selected.empty()) {
    for (const auto& [id, _] : criteria) selected.push_back(id);
  }

  int failures = 0;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::printf("criterion %d: unknown\n", id);
      ++failures;
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %s: %s  [%.1f s] %s\n", id, o.pass ? "PASS" : "FAIL", it->second.first.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
