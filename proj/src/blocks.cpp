#include "lmdvit/blocks.hpp"

#include <cmath>

#include "lmdvit/errors.hpp"
#include "lmdvit/ops.hpp"

namespace lmdvit {

WmsaParams WmsaParams::make(std::size_t channels, std::size_t heads, std::size_t window, CounterRng& rng) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("channels " + std::to_string(channels) + " not divisible by " + std::to_string(heads) + " heads");
  }
  WmsaParams p;
  p.qkv = Linear::make(channels, 3 * channels, rng);
  p.proj = Linear::make(channels, channels, rng, Init::zeros);
  p.position = RelativePositionTable::make(window, heads, rng);
  p.heads = heads;
  p.window = window;
  return p;
}

void WmsaParams::collect(const std::string& prefix, ParamList& out) const {
  qkv.collect(prefix + ".qkv", out);
  proj.collect(prefix + ".proj", out);
  out.push_back({prefix + ".position_table", position.table});
}

Tensor wmsa(const Tensor& windows, const WmsaParams& p) {
  const std::size_t N = windows.dim(0), T = windows.dim(1), C = windows.dim(2);
  if (T != p.window * p.window) {
    throw DimensionError("wmsa: " + std::to_string(T) + " tokens per window, expected " + std::to_string(p.window * p.window));
  }
  const std::size_t h = p.heads, d = C / h;
  const Tensor qkv = ops::permute(ops::reshape(p.qkv(windows), {N, T, 3, h, d}), {2, 0, 3, 1, 4});  // [3,N,h,T,d]
  const Tensor q = ops::scale(ops::reshape(ops::slice(qkv, 0, 0, 1), {N, h, T, d}), 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor k = ops::reshape(ops::slice(qkv, 0, 1, 1), {N, h, T, d});
  const Tensor v = ops::reshape(ops::slice(qkv, 0, 2, 1), {N, h, T, d});
  const Tensor logits = ops::add(ops::matmul(q, ops::transpose(k, -1, -2)), p.position.bias());
  const Tensor attn = ops::softmax(logits, -1);
  const Tensor mixed = ops::reshape(ops::permute(ops::matmul(attn, v), {0, 2, 1, 3}), {N, T, C});
  return p.proj(mixed);
}

WleffParams WleffParams::make(std::size_t channels, std::size_t window, CounterRng& rng) {
  WleffParams p;
  p.expand = Linear::make(channels, 4 * channels, rng);
  p.dw_weight = make_param({4 * channels, 1, 3, 3}, Init::trunc_normal, rng);
  p.dw_bias = make_param({4 * channels}, Init::zeros, rng);
  p.contract = Linear::make(4 * channels, channels, rng, Init::zeros);
  p.window = window;
  return p;
}

void WleffParams::collect(const std::string& prefix, ParamList& out) const {
  expand.collect(prefix + ".expand", out);
  out.push_back({prefix + ".dw.weight", dw_weight});
  out.push_back({prefix + ".dw.bias", dw_bias});
  contract.collect(prefix + ".contract", out);
}

Tensor wleff(const Tensor& windows, const WleffParams& p) {
  const std::size_t N = windows.dim(0), T = windows.dim(1), w = p.window;
  if (T != w * w) throw DimensionError("wleff: window token count mismatch");
  const Tensor hidden = ops::gelu(p.expand(windows));  // [N,T,4C]
  const std::size_t H4 = hidden.dim(2);
  const Tensor planes = ops::permute(ops::reshape(hidden, {N, w, w, H4}), {0, 3, 1, 2});
  const Tensor conv = ops::gelu(ops::conv2d(planes, p.dw_weight, p.dw_bias, 1, ops::Padding::reflect(1), H4));
  const Tensor back = ops::reshape(ops::permute(conv, {0, 2, 3, 1}), {N, T, H4});
  return p.contract(back);
}

Tensor leff_global(const Tensor& tokens, std::size_t height, std::size_t width, const WleffParams& p) {
  const Tensor hidden = ops::gelu(p.expand(tokens));  // [HW, 4C]
  const std::size_t H4 = hidden.dim(1);
  const Tensor conv = ops::gelu(
      ops::conv2d(from_tokens(hidden, height, width), p.dw_weight, p.dw_bias, 1, ops::Padding::zero(1), H4));
  return p.contract(to_tokens(conv));
}

AdaWptBlock AdaWptBlock::make(BlockKind kind, std::size_t channels, std::size_t heads, std::size_t window,
                              bool shifted, bool with_predictor, CounterRng& rng) {
  AdaWptBlock b;
  b.kind = kind;
  b.channels = channels;
  b.window = window;
  b.shifted = shifted;
  b.norm1 = LayerNorm::make(channels);
  b.attn = WmsaParams::make(channels, heads, window, rng);
  b.norm2 = LayerNorm::make(channels);
  b.ffn = WleffParams::make(channels, window, rng);
  if (kind == BlockKind::first && with_predictor) b.predictor = PredictorParams::make(channels, rng);
  return b;
}

void AdaWptBlock::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attn.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  ffn.collect(prefix + ".ffn", out);
  if (predictor) predictor->collect(prefix + ".predictor", out);
}

namespace {

DecisionMap block_decision(const Tensor& tokens, std::size_t H, std::size_t W, const AdaWptBlock& block,
                           const BlockContext& ctx, std::optional<ConfidenceMap>& confidence) {
  if (block.kind == BlockKind::post) {
    if (!ctx.stage_decision) throw UsageError("post block needs the stage decision of its first block");
    return *ctx.stage_decision;
  }
  const bool predicts = ctx.pruning && block.predictor;
  if (predicts) {
    const DecisionMap prev = ctx.prev_decision ? resample_decision(*ctx.prev_decision, H, W) : DecisionMap::ones(H, W);
    confidence = predict_confidence(ctx.detach_predictor_input ? tokens.detach() : tokens, prev, *block.predictor);
  }
  if (ctx.forced_decision) {
    if (ctx.forced_decision->height != H || ctx.forced_decision->width != W) {
      throw DimensionError("forced decision grid does not match the feature map");
    }
    return *ctx.forced_decision;
  }
  if (!predicts) return DecisionMap::ones(H, W);
  if (ctx.mode == Mode::train) {
    if (!ctx.rng) throw UsageError("train mode needs a random stream for Gumbel noise");
    return decide_train(*confidence, ctx.tau, *ctx.rng, ctx.straight_through);
  }
  return decide_test(*confidence, ctx.beta);
}

// Attention then feed-forward sublayers on a stack of windows.
Tensor transformer_layers(const Tensor& windows, const AdaWptBlock& block) {
  const Tensor y = ops::add(windows, wmsa(block.norm1(windows), block.attn));
  return ops::add(y, wleff(block.norm2(y), block.ffn));
}

Tensor select_windows(const Tensor& processed_all, const Tensor& originals, const WindowMask& keep) {
  if (count_kept(keep) == 0) return originals;
  return scatter_back(gather_kept(processed_all, keep), originals, keep);
}

}  // namespace

BlockOutput adawpt_forward(const Tensor& x, const AdaWptBlock& block, const BlockContext& ctx) {
  if (x.rank() != 3 || x.dim(0) != block.channels) {
    throw DimensionError("block expects " + std::to_string(block.channels) + " channels, got " + shape_str(x.shape()));
  }
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const Tensor tokens = to_tokens(x);
  BlockOutput out;
  out.decision = block_decision(tokens, H, W, block, ctx, out.confidence);

  const Tensor masked = from_tokens(apply_decision(tokens, out.decision), H, W);
  const WindowGrid grid = WindowGrid::make(C, H, W, block.window, block.shifted);
  const Tensor windows = partition(cyclic_shift(masked, grid.shift, ShiftDirection::forward), grid);

  const bool unmasked = ctx.mode == Mode::train && ctx.skip_train_remask;
  if (unmasked) {
    out.window_keep.assign(grid.count(), 1);
  } else {
    const Tensor plane = Tensor::from({1, H, W}, out.decision.values());
    out.window_keep = pool_to_windows(cyclic_shift(plane, grid.shift, ShiftDirection::forward).values(), grid, ctx.s);
  }
  const WindowMask& keep = out.window_keep;
  const bool any_kept = count_kept(keep) > 0;

  Tensor result;
  if (ctx.leff_variant) {
    Tensor attended = windows;
    if (ctx.mode == Mode::train) {
      attended = select_windows(ops::add(windows, wmsa(block.norm1(windows), block.attn)), windows, keep);
    } else if (any_kept) {
      const Tensor kept = gather_kept(windows, keep);
      attended = scatter_back(ops::add(kept, wmsa(block.norm1(kept), block.attn)), windows, keep);
    }
    Tensor ffn_all = attended;
    if (ctx.mode == Mode::train || any_kept) {
      const Tensor map_tokens = to_tokens(window_reverse(attended, grid));
      const Tensor ff = leff_global(block.norm2(map_tokens), H, W, block.ffn);
      ffn_all = partition(from_tokens(ops::add(map_tokens, ff), H, W), grid);
    }
    result = select_windows(ffn_all, windows, keep);
  } else if (ctx.mode == Mode::train) {
    const Tensor dense = transformer_layers(windows, block);
    result = unmasked ? dense : select_windows(dense, windows, keep);
  } else {
    result = any_kept ? scatter_back(transformer_layers(gather_kept(windows, keep), block), windows, keep) : windows;
  }
  out.x = cyclic_shift(window_reverse(result, grid), grid.shift, ShiftDirection::inverse);
  return out;
}

Downsample Downsample::make(std::size_t in, std::size_t out, CounterRng& rng) {
  return {make_param({out, in, 4, 4}, Init::trunc_normal, rng), make_param({out}, Init::zeros, rng)};
}

Tensor Downsample::operator()(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw DimensionError("downsample needs even extents, got " + shape_str(x.shape()));
  }
  return ops::conv2d(x, weight, bias, 2, ops::Padding::zero(1));
}

void Downsample::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Upsample Upsample::make(std::size_t in, std::size_t out, CounterRng& rng) {
  return {make_param({in, out, 2, 2}, Init::trunc_normal, rng), make_param({out}, Init::zeros, rng)};
}

Tensor Upsample::operator()(const Tensor& x) const { return ops::conv_transpose2d(x, weight, bias, 2); }

void Upsample::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace lmdvit
