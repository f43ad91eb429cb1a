#pragma once

// U-shaped restoration network: in-projection, four encoder stages with
// down-sampling, a bottleneck stage, four decoder stages fed by skip
// connections, and an out-projection producing a residual R with S' = B + R.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "lmdvit/blocks.hpp"
#include "lmdvit/config.hpp"
#include "lmdvit/layers.hpp"

namespace lmdvit {

struct Stage {
  std::vector<AdaWptBlock> blocks;
};

/// What one stage decided during a forward pass.
struct StageTrace {
  DecisionMap decision;                     // token grid of the stage
  std::optional<ConfidenceMap> confidence;  // present when the stage predicted
  std::vector<WindowMask> window_keep;      // one entry per block
  std::size_t window_count = 0;             // windows per block

  /// Kept windows summed over blocks divided by windows summed over blocks.
  [[nodiscard]] double kept_ratio() const;
  /// Mean kept-window count per block (fractional).
  [[nodiscard]] std::vector<double> kept_per_block() const;
};

struct ModelOutput {
  Tensor restored;  // [3,H,W]
  std::vector<StageTrace> stages;
};

struct ForwardOptions {
  std::optional<double> beta;
  std::optional<double> s;
  bool straight_through = true;
  /// Per-stage decision overriding the predictor (token grid of that stage).
  std::vector<std::optional<DecisionMap>> forced;
};

class Model {
 public:
  static Model build(const ModelConfig& config, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return config_; }

  /// B: [3,H,W] with arbitrary H,W. Infer mode runs without recording a graph.
  /// Train mode needs `rng` for stages that predict decisions.
  ModelOutput forward(const Tensor& blurred, Mode mode, CounterRng* rng = nullptr,
                      const ForwardOptions& options = {}) const;

  [[nodiscard]] ParamList parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  /// Token grid extents of stage `stage` for a padded input of `height` x `width`.
  static std::pair<std::size_t, std::size_t> stage_grid(std::size_t stage, std::size_t height, std::size_t width);
  /// Input extents after padding to the model multiple.
  [[nodiscard]] std::pair<std::size_t, std::size_t> padded_extents(std::size_t height, std::size_t width) const;

 private:
  ModelConfig config_;
  Tensor in_weight_, in_bias_;
  LayerNorm in_norm_;
  std::vector<Stage> stages_;
  std::vector<Downsample> down_;
  std::vector<Upsample> up_;
  std::vector<Linear> skip_;
  Tensor out_weight_, out_bias_;
};

/// Pads the bottom and right of a [C,H,W] tensor by mirror folding up to (height, width).
Tensor reflect_pad_to(const Tensor& x, std::size_t height, std::size_t width);

/// Closed-form parameter count for `config`.
std::size_t analytic_parameter_count(const ModelConfig& config);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace lmdvit
