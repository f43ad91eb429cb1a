#include "lmdvit/flops.hpp"

#include "lmdvit/errors.hpp"

namespace lmdvit {

double FlopsReport::reduction() const { return dense_total > 0.0 ? 1.0 - pruned_total / dense_total : 0.0; }

double FlopsReport::window_local_reduction() const {
  return window_local_dense > 0.0 ? 1.0 - window_local_pruned / window_local_dense : 0.0;
}

nlohmann::json FlopsReport::to_json() const {
  nlohmann::json layer_list = nlohmann::json::array();
  for (const auto& l : layers) {
    layer_list.push_back({{"name", l.name}, {"dense", l.dense}, {"pruned", l.pruned}, {"window_local", l.window_local}});
  }
  return {{"dense_total", dense_total},
          {"pruned_total", pruned_total},
          {"reduction_ratio", reduction()},
          {"window_local_dense", window_local_dense},
          {"window_local_pruned", window_local_pruned},
          {"window_local_reduction", window_local_reduction()},
          {"layers", layer_list}};
}

double wmsa_window_macs(std::size_t channels, std::size_t window) {
  const double c = static_cast<double>(channels), t = static_cast<double>(window * window);
  return t * c * 3.0 * c + 2.0 * t * t * c + t * c * c;
}

double wleff_window_macs(std::size_t channels, std::size_t window) {
  const double c = static_cast<double>(channels), t = static_cast<double>(window * window);
  return t * c * 4.0 * c + t * 4.0 * c * 9.0 + t * 4.0 * c * c;
}

double position_bias_adds(std::size_t heads, std::size_t window) {
  const double t = static_cast<double>(window * window);
  return static_cast<double>(heads) * t * t;
}

KeptCounts window_totals(const ModelConfig& config, std::size_t height, std::size_t width) {
  const std::size_t m = config.pad_multiple();
  const std::size_t hp = (height + m - 1) / m * m, wp = (width + m - 1) / m * m;
  KeptCounts out(kStageCount);
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const auto [h, w] = Model::stage_grid(s, hp, wp);
    const double n = static_cast<double>((h / config.window_size) * (w / config.window_size));
    out[s].assign(config.depths[s], n);
  }
  return out;
}

KeptCounts kept_fraction(const ModelConfig& config, std::size_t height, std::size_t width, double fraction) {
  KeptCounts k = window_totals(config, height, width);
  for (std::size_t s = 0; s < kStageCount; ++s) {
    if (!config.prunes(s)) continue;
    for (auto& v : k[s]) v *= fraction;
  }
  return k;
}

KeptCounts kept_counts(const ModelOutput& output) {
  KeptCounts k;
  for (const auto& st : output.stages) k.push_back(st.kept_per_block());
  return k;
}

FlopsReport flops_report(const ModelConfig& config, std::size_t height, std::size_t width, const KeptCounts& kept) {
  config.validate();
  const KeptCounts totals = window_totals(config, height, width);
  if (kept.size() != kStageCount) throw UsageError("kept counts need one entry per stage");
  const std::size_t m = config.pad_multiple();
  const double hp = static_cast<double>((height + m - 1) / m * m), wp = static_cast<double>((width + m - 1) / m * m);
  const std::size_t w = config.window_size;
  const double c0 = static_cast<double>(config.base_channels);

  FlopsReport r;
  auto dense = [&](std::string name, double macs) { r.layers.push_back({std::move(name), 2 * macs, 2 * macs, false}); };

  dense("in_proj", hp * wp * c0 * 27.0);
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::string sp = "stage" + std::to_string(s + 1);
    if (kept[s].size() != config.depths[s]) {
      throw UsageError(sp + ": kept counts need one entry per block (" + std::to_string(config.depths[s]) + ")");
    }
    const double f = static_cast<double>(std::size_t{1} << ModelConfig::stage_scale(s));
    const double tokens = (hp / f) * (wp / f);
    const std::size_t cs = config.stage_channels(s);
    const double c = static_cast<double>(cs);
    if (s > kStageCount / 2) {
      dense(sp + ".up", (tokens / 4.0) * (2.0 * c) * c * 4.0);
      dense(sp + ".skip", tokens * 2.0 * c * c);
    }
    if (config.prunes(s)) dense(sp + ".predictor", tokens * (3.0 * c * c / 2.0 + c));
    const double attn = 2 * wmsa_window_macs(cs, w) + position_bias_adds(config.heads[s], w);
    const double ffn = 2 * wleff_window_macs(cs, w);
    for (std::size_t b = 0; b < config.depths[s]; ++b) {
      const double k = kept[s][b], n = totals[s][b];
      if (k < 0.0 || k > n) {
        throw UsageError(sp + ".block" + std::to_string(b) + ": kept " + std::to_string(k) + " outside [0, " +
                         std::to_string(n) + "]");
      }
      const std::string bp = sp + ".block" + std::to_string(b);
      r.layers.push_back({bp + ".wmsa", attn * n, attn * k, true});
      r.layers.push_back({bp + ".wleff", ffn * n, ffn * k, true});
    }
    if (s < kStageCount / 2) dense(sp + ".down", (tokens / 4.0) * (2.0 * c) * c * 16.0);
  }
  dense("out_proj", hp * wp * 3.0 * c0 * 9.0);

  for (const auto& l : r.layers) {
    r.dense_total += l.dense;
    r.pruned_total += l.pruned;
    if (l.window_local) {
      r.window_local_dense += l.dense;
      r.window_local_pruned += l.pruned;
    }
  }
  return r;
}

}  // namespace lmdvit
