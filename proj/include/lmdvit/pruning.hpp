#pragma once

// Blurriness confidence prediction and keep/prune decisions.

#include <cstddef>
#include <string>
#include <vector>

#include "lmdvit/layers.hpp"
#include "lmdvit/rng.hpp"
#include "lmdvit/tensor.hpp"
#include "lmdvit/windowing.hpp"

namespace lmdvit {

/// Per-token (p_keep, p_prune) pairs over a height x width token grid.
struct ConfidenceMap {
  Tensor probs;  // [T, 2]
  std::size_t height = 0;
  std::size_t width = 0;

  [[nodiscard]] std::size_t tokens() const { return height * width; }
  /// Column 0 as [T, 1].
  [[nodiscard]] Tensor keep_prob() const;
};

/// Per-token keep indicators, stored as float so straight-through gradients flow.
struct DecisionMap {
  Tensor keep;  // [T, 1]
  std::size_t height = 0;
  std::size_t width = 0;

  static DecisionMap ones(std::size_t height, std::size_t width);
  static DecisionMap from_values(std::vector<double> values, std::size_t height, std::size_t width);
  [[nodiscard]] std::size_t tokens() const { return height * width; }
  [[nodiscard]] const std::vector<double>& values() const { return keep.values(); }
};

/// Nearest-neighbour upsampling or max-pool downsampling of the decision values
/// to another token grid. The result carries no graph.
DecisionMap resample_decision(const DecisionMap& d, std::size_t height, std::size_t width);

/// Initial keep logit of the predictor head (prune logit starts at 0), so p_keep ~ 0.95 at init.
inline constexpr double kInitialKeepLogit = 3.0;

struct PredictorParams {
  Linear local;        // C -> C/2
  Linear global;       // C -> C/2
  Linear fuse_hidden;  // C -> C/2
  Linear fuse_out;     // C/2 -> 2

  static PredictorParams make(std::size_t channels, CounterRng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// x: [T, C] tokens of a height x width grid. The global branch is averaged
/// over tokens kept by `prev` (values only), guarded by max(sum, 1e-6).
ConfidenceMap predict_confidence(const Tensor& x, const DecisionMap& prev, const PredictorParams& params);

/// Standard Gumbel noise, two values per token (keep, prune).
struct GumbelNoise {
  std::vector<double> values;  // [T * 2]
};

GumbelNoise sample_gumbel_noise(std::size_t tokens, CounterRng& rng);

/// Gumbel-Softmax decision. With `straight_through` the forward value is the
/// exact one-hot sample and the adjoint is that of the soft sample at
/// temperature `tau`; without it the soft sample itself is returned.
DecisionMap decide_train(const ConfidenceMap& c, double tau, const GumbelNoise& noise, bool straight_through = true);
DecisionMap decide_train(const ConfidenceMap& c, double tau, CounterRng& rng, bool straight_through = true);

/// keep = p_keep >= beta. No graph.
DecisionMap decide_test(const ConfidenceMap& c, double beta);

/// Window kept iff the mean of its token decisions is >= s. `decision` is a
/// row-major grid.height x grid.width plane in the frame the grid is defined in.
WindowMask pool_to_windows(const std::vector<double>& decision, const WindowGrid& grid, double s);
WindowMask pool_to_windows(const DecisionMap& d, const WindowGrid& grid, double s);

/// x: [T, C]; returns D * x broadcast over channels.
Tensor apply_decision(const Tensor& x, const DecisionMap& d);

}  // namespace lmdvit
