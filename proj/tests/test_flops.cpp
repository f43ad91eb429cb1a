#include <doctest.h>

#include "gradcheck.hpp"
#include "lmdvit/blocks.hpp"
#include "lmdvit/errors.hpp"
#include "lmdvit/flops.hpp"

using namespace lmdvit;
using lmdvit::testing::random_tensor;

namespace {

double stage_window_local(const FlopsReport& r, const std::string& stage, bool pruned) {
  double total = 0.0;
  for (const auto& l : r.layers) {
    if (l.window_local && l.name.rfind(stage + ".", 0) == 0) total += pruned ? l.pruned : l.dense;
  }
  return total;
}

double bias_adds(const ModelConfig& cfg, const KeptCounts& kept) {
  double adds = 0.0;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    for (double k : kept[s]) adds += k * position_bias_adds(cfg.heads[s], cfg.window_size);
  }
  return adds;
}

}  // namespace

TEST_CASE("single window costs match the closed forms and the MAC counter") {
  CounterRng rng(1);
  for (auto [c, h, w] : {std::tuple<std::size_t, std::size_t, std::size_t>{8, 1, 4}, {16, 2, 4}, {32, 4, 8}}) {
    const double t = static_cast<double>(w * w), cd = static_cast<double>(c);
    const double formula = t * cd * 3 * cd + static_cast<double>(h) * t * t * (cd / static_cast<double>(h)) * 2 + t * cd * cd;
    CHECK(wmsa_window_macs(c, w) == formula);
    const auto attn = WmsaParams::make(c, h, w, rng);
    const auto ffn = WleffParams::make(c, w, rng);
    const Tensor x = random_tensor({1, w * w, c}, rng);
    {
      MacCountScope scope;
      (void)wmsa(x, attn);
      CHECK(static_cast<double>(scope.macs()) == wmsa_window_macs(c, w));
    }
    {
      MacCountScope scope;
      (void)wleff(x, ffn);
      CHECK(static_cast<double>(scope.macs()) == wleff_window_macs(c, w));
    }
    CHECK(position_bias_adds(h, w) == static_cast<double>(h) * t * t);
  }
}

TEST_CASE("kept everywhere reproduces the dense count; kept nowhere leaves only dense layers") {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto all = flops_report(cfg, 64, 64, window_totals(cfg, 64, 64));
  CHECK(all.pruned_total == all.dense_total);
  CHECK(all.reduction() == 0.0);
  const auto none = flops_report(cfg, 64, 64, kept_fraction(cfg, 64, 64, 0.0));
  CHECK(none.window_local_pruned == 0.0);
  CHECK(none.pruned_total == doctest::Approx(none.dense_total - none.window_local_dense).epsilon(1e-15));
}

TEST_CASE("window-local cost is linear and the total affine in kept counts") {
  const ModelConfig cfg = ModelConfig::tiny();
  const KeptCounts totals = window_totals(cfg, 64, 128);
  for (std::size_t s = 0; s < kStageCount; ++s) {
    KeptCounts half = totals;
    for (auto& k : half[s]) k /= 2.0;
    const auto full = flops_report(cfg, 64, 128, totals), halved = flops_report(cfg, 64, 128, half);
    const std::string name = "stage" + std::to_string(s + 1);
    CHECK(stage_window_local(halved, name, true) == doctest::Approx(0.5 * stage_window_local(full, name, true)).epsilon(1e-15));

    // Sweep one block: equal steps in kept count give equal steps in the total.
    const double n = totals[s][1];
    std::vector<double> values;
    for (int i = 0; i <= 4; ++i) {
      KeptCounts k = totals;
      k[s][1] = n * i / 4.0;
      values.push_back(flops_report(cfg, 64, 128, k).pruned_total);
    }
    for (int i = 1; i < 4; ++i) {
      CHECK(values[i + 1] - values[i] == doctest::Approx(values[i] - values[i - 1]).epsilon(1e-12));
    }
  }
}

TEST_CASE("out-of-range kept counts are rejected") {
  const ModelConfig cfg = ModelConfig::tiny();
  KeptCounts k = window_totals(cfg, 64, 64);
  k[0][0] += 1.0;
  CHECK_THROWS_AS((void)flops_report(cfg, 64, 64, k), UsageError);
  k = window_totals(cfg, 64, 64);
  k[3][1] = -1.0;
  CHECK_THROWS_AS((void)flops_report(cfg, 64, 64, k), UsageError);
}

TEST_CASE("model forward MACs agree with the analytic report") {
  const ModelConfig cfg = ModelConfig::tiny();
  const Model m = Model::build(cfg, 3);
  CounterRng rng(4);
  const Tensor x = random_tensor({3, 64, 64}, rng, 0, 1);

  std::uint64_t dense_macs = 0;
  {
    MacCountScope scope;
    (void)m.forward(x, Mode::infer);
    dense_macs = scope.macs();
  }
  const KeptCounts totals = window_totals(cfg, 64, 64);
  const auto dense = flops_report(cfg, 64, 64, totals);
  CHECK(dense.dense_total == 2.0 * static_cast<double>(dense_macs) + bias_adds(cfg, totals));

  ForwardOptions opts;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const auto [h, w] = Model::stage_grid(s, 64, 64);
    std::vector<double> v(h * w);
    for (auto& d : v) d = rng.uniform() < 0.3 ? 1.0 : 0.0;
    opts.forced.emplace_back(DecisionMap::from_values(std::move(v), h, w));
  }
  std::uint64_t sparse_macs = 0;
  ModelOutput out;
  {
    MacCountScope scope;
    out = m.forward(x, Mode::infer, nullptr, opts);
    sparse_macs = scope.macs();
  }
  const KeptCounts kept = kept_counts(out);
  const auto sparse = flops_report(cfg, 64, 64, kept);
  CHECK(sparse.pruned_total == 2.0 * static_cast<double>(sparse_macs) + bias_adds(cfg, kept));
  CHECK(sparse.reduction() > 0.0);
}

TEST_CASE("report is padded and serializable") {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto a = flops_report(cfg, 70, 90, window_totals(cfg, 70, 90));
  const auto b = flops_report(cfg, 128, 128, window_totals(cfg, 128, 128));
  CHECK(a.dense_total == b.dense_total);
  const auto j = a.to_json();
  CHECK(j.at("reduction_ratio").get<double>() == 0.0);
  CHECK(j.at("layers").size() == a.layers.size());
  ModelConfig dense_cfg = cfg;
  dense_cfg.prune_stages = {};
  CHECK(flops_report(dense_cfg, 64, 64, kept_fraction(dense_cfg, 64, 64, 0.25)).reduction() == 0.0);
}
