#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace lmdvit {

inline constexpr std::size_t kStageCount = 9;

/// Architecture and pruning knobs. Stage indices in `prune_stages` are
/// 1-based (1..9): encoders 1-4, bottleneck 5, decoders 6-9.
struct ModelConfig {
  std::string profile = "tiny";
  std::size_t window_size = 4;
  std::size_t base_channels = 8;
  std::vector<std::size_t> depths = std::vector<std::size_t>(kStageCount, 2);
  std::vector<std::size_t> heads = {1, 2, 4, 8, 16, 8, 4, 2, 1};
  std::vector<std::size_t> prune_stages = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  double beta = 0.5;
  double s = 0.5;
  double tau = 1.0;
  bool leff_variant = false;
  bool skip_train_remask = false;
  /// Stop-gradient between backbone features and the confidence predictor.
  bool detach_predictor_input = true;

  static ModelConfig tiny();
  static ModelConfig full();
  /// "tiny" or "full"; throws ConfigError otherwise.
  static ModelConfig from_profile(const std::string& name);

  /// Channel width of stage `stage` (0-based).
  [[nodiscard]] std::size_t stage_channels(std::size_t stage) const;
  /// Downscale exponent of stage `stage` (0-based): 0,1,2,3,4,3,2,1,0.
  [[nodiscard]] static std::size_t stage_scale(std::size_t stage);
  /// Input extents are padded up to a multiple of this.
  [[nodiscard]] std::size_t pad_multiple() const { return window_size << 4; }
  [[nodiscard]] bool prunes(std::size_t stage) const;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
/// Starts from the named profile (default tiny) and applies overrides.
/// Unknown keys are rejected with ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace lmdvit
