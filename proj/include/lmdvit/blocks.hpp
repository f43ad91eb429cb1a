#pragma once

// Window transformer layers and the adaptive window pruning block.
//
// Pipeline of one block on a [C,H,W] map:
//   tokens -> decision (predicted for kind F, inherited for kind P)
//   -> X' = D * X -> shift -> partition -> { W-MSA, W-LeFF } on windows
//   -> reverse -> unshift
// In infer mode only windows whose mean decision is >= s enter the
// transformer layers; the rest are written back unchanged. Train mode runs
// every window densely and then restores the pruned windows to X', so the
// two paths agree exactly for the same decisions.

#include <cstddef>
#include <optional>
#include <string>

#include "lmdvit/layers.hpp"
#include "lmdvit/pruning.hpp"
#include "lmdvit/rng.hpp"
#include "lmdvit/tensor.hpp"
#include "lmdvit/windowing.hpp"

namespace lmdvit {

enum class Mode { train, infer };
enum class BlockKind { first, post };

struct WmsaParams {
  Linear qkv;   // C -> 3C
  Linear proj;  // C -> C, zero-initialized
  RelativePositionTable position;
  std::size_t heads = 1;
  std::size_t window = 8;

  static WmsaParams make(std::size_t channels, std::size_t heads, std::size_t window, CounterRng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// windows: [N, w*w, C]. Multi-head attention inside each window with relative
/// position bias added to the logits.
Tensor wmsa(const Tensor& windows, const WmsaParams& p);

struct WleffParams {
  Linear expand;     // C -> 4C
  Tensor dw_weight;  // [4C, 1, 3, 3]
  Tensor dw_bias;    // [4C]
  Linear contract;   // 4C -> C, zero-initialized
  std::size_t window = 8;

  static WleffParams make(std::size_t channels, std::size_t window, CounterRng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// windows: [N, w*w, C]. Depthwise 3x3 convolution runs inside each window with reflect padding.
Tensor wleff(const Tensor& windows, const WleffParams& p);
/// Non-windowed variant over a whole [H*W, C] token map, zero padding.
Tensor leff_global(const Tensor& tokens, std::size_t height, std::size_t width, const WleffParams& p);

struct AdaWptBlock {
  BlockKind kind = BlockKind::first;
  std::size_t channels = 0;
  std::size_t window = 8;
  bool shifted = false;
  LayerNorm norm1;
  WmsaParams attn;
  LayerNorm norm2;
  WleffParams ffn;
  std::optional<PredictorParams> predictor;  // kind F with pruning enabled only

  static AdaWptBlock make(BlockKind kind, std::size_t channels, std::size_t heads, std::size_t window, bool shifted,
                          bool with_predictor, CounterRng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct BlockContext {
  Mode mode = Mode::infer;
  double beta = 0.5;
  double s = 0.5;
  double tau = 1.0;
  CounterRng* rng = nullptr;                     // Gumbel noise source in train mode
  bool pruning = true;                           // false: decisions are all ones
  bool straight_through = true;                  // false: soft Gumbel sample in the forward value
  bool skip_train_remask = false;                // skip restoring pruned windows in train mode
  bool leff_variant = false;
  bool detach_predictor_input = true;            // pruning loss trains the predictor only
  const DecisionMap* stage_decision = nullptr;   // decision consumed by kind P
  const DecisionMap* prev_decision = nullptr;    // predictor pooling mask; all ones when null
  const DecisionMap* forced_decision = nullptr;  // replaces the sampled decision in kind F; confidence still computed
};

struct BlockOutput {
  Tensor x;  // [C,H,W]
  DecisionMap decision;
  std::optional<ConfidenceMap> confidence;
  WindowMask window_keep;  // in the (possibly shifted) window frame of this block
};

BlockOutput adawpt_forward(const Tensor& x, const AdaWptBlock& block, const BlockContext& ctx);

/// 4x4 convolution, stride 2, zero padding 1: [C,H,W] -> [C_out, H/2, W/2].
struct Downsample {
  Tensor weight;  // [C_out, C, 4, 4]
  Tensor bias;

  static Downsample make(std::size_t in, std::size_t out, CounterRng& rng);
  [[nodiscard]] Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// 2x2 transposed convolution, stride 2: [C,H,W] -> [C_out, 2H, 2W].
struct Upsample {
  Tensor weight;  // [C, C_out, 2, 2]
  Tensor bias;

  static Upsample make(std::size_t in, std::size_t out, CounterRng& rng);
  [[nodiscard]] Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace lmdvit
