#include "lmdvit/pruning.hpp"

#include <algorithm>

#include "lmdvit/errors.hpp"
#include "lmdvit/ops.hpp"

namespace lmdvit {

Tensor ConfidenceMap::keep_prob() const { return ops::slice(probs, 1, 0, 1); }

DecisionMap DecisionMap::ones(std::size_t height, std::size_t width) {
  return {Tensor::full({height * width, 1}, 1.0), height, width};
}

DecisionMap DecisionMap::from_values(std::vector<double> values, std::size_t height, std::size_t width) {
  return {Tensor::from({height * width, 1}, std::move(values)), height, width};
}

DecisionMap resample_decision(const DecisionMap& d, std::size_t height, std::size_t width) {
  if (d.height == height && d.width == width) return DecisionMap::from_values(d.values(), height, width);
  const auto& v = d.values();
  std::vector<double> out(height * width, 0.0);
  if (height <= d.height) {
    if (d.height % height != 0 || d.width % width != 0) {
      throw DimensionError("decision grid " + std::to_string(d.height) + "x" + std::to_string(d.width) +
                           " cannot be pooled to " + std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t fy = d.height / height, fx = d.width / width;
    for (std::size_t y = 0; y < d.height; ++y) {
      for (std::size_t x = 0; x < d.width; ++x) {
        double& o = out[(y / fy) * width + x / fx];
        o = std::max(o, v[y * d.width + x]);
      }
    }
  } else {
    if (height % d.height != 0 || width % d.width != 0) {
      throw DimensionError("decision grid cannot be upsampled to " + std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t fy = height / d.height, fx = width / d.width;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out[y * width + x] = v[(y / fy) * d.width + x / fx];
    }
  }
  return DecisionMap::from_values(std::move(out), height, width);
}

PredictorParams PredictorParams::make(std::size_t channels, CounterRng& rng) {
  if (channels < 2 || channels % 2 != 0) {
    throw ConfigError("confidence predictor needs an even channel count, got " + std::to_string(channels));
  }
  const std::size_t half = channels / 2;
  PredictorParams p;
  p.local = Linear::make(channels, half, rng);
  p.global = Linear::make(channels, half, rng);
  p.fuse_hidden = Linear::make(channels, half, rng);
  p.fuse_out = Linear::make(half, 2, rng);
  // Start biased towards keeping so early training sees the dense network.
  p.fuse_out.bias.mutable_data()[0] = kInitialKeepLogit;
  return p;
}

void PredictorParams::collect(const std::string& prefix, ParamList& out) const {
  local.collect(prefix + ".local", out);
  global.collect(prefix + ".global", out);
  fuse_hidden.collect(prefix + ".fuse_hidden", out);
  fuse_out.collect(prefix + ".fuse_out", out);
}

ConfidenceMap predict_confidence(const Tensor& x, const DecisionMap& prev, const PredictorParams& params) {
  if (x.rank() != 2 || x.dim(0) != prev.tokens()) {
    throw DimensionError("predictor input " + shape_str(x.shape()) + " does not match decision grid of " +
                         std::to_string(prev.tokens()) + " tokens");
  }
  const Tensor mask = prev.keep.detach();
  const Tensor local = ops::gelu(params.local(x));
  const Tensor global = ops::gelu(params.global(x));
  // Masked mean over kept tokens, broadcast back to every token.
  const Tensor weighted = ops::sum_axis(ops::mul(global, mask), 0, true);  // [1, C/2]
  const Tensor denom = ops::clamp_min(ops::sum(mask), 1e-6);
  const Tensor pooled = ops::div(weighted, denom);
  const Tensor broadcast = ops::add(Tensor::zeros(local.shape()), pooled);
  const Tensor fused = ops::concat({local, broadcast}, 1);
  const Tensor logits = params.fuse_out(ops::gelu(params.fuse_hidden(fused)));
  return {ops::softmax(logits, -1), prev.height, prev.width};
}

GumbelNoise sample_gumbel_noise(std::size_t tokens, CounterRng& rng) {
  GumbelNoise g;
  g.values.resize(tokens * 2);
  for (auto& v : g.values) v = rng.gumbel();
  return g;
}

DecisionMap decide_train(const ConfidenceMap& c, double tau, const GumbelNoise& noise, bool straight_through) {
  if (tau <= 0.0) throw UsageError("Gumbel-Softmax temperature must be positive");
  const std::size_t T = c.tokens();
  if (noise.values.size() != T * 2) throw DimensionError("Gumbel noise does not match confidence map");
  const Tensor logp = ops::log(ops::clamp_min(c.probs, 1e-12));
  const Tensor noisy = ops::add(logp, Tensor::from({T, 2}, noise.values));
  const Tensor soft = ops::softmax(ops::scale(noisy, 1.0 / tau), -1);
  Tensor sample = soft;
  if (straight_through) {
    std::vector<double> hard(T * 2, 0.0);
    const auto& z = noisy.values();
    for (std::size_t t = 0; t < T; ++t) hard[t * 2 + (z[t * 2] >= z[t * 2 + 1] ? 0 : 1)] = 1.0;
    sample = ops::straight_through(Tensor::from({T, 2}, std::move(hard)), soft);
  }
  return {ops::slice(sample, 1, 0, 1), c.height, c.width};
}

DecisionMap decide_train(const ConfidenceMap& c, double tau, CounterRng& rng, bool straight_through) {
  return decide_train(c, tau, sample_gumbel_noise(c.tokens(), rng), straight_through);
}

DecisionMap decide_test(const ConfidenceMap& c, double beta) {
  const auto& p = c.probs.values();
  std::vector<double> keep(c.tokens());
  for (std::size_t t = 0; t < keep.size(); ++t) keep[t] = p[t * 2] >= beta ? 1.0 : 0.0;
  return DecisionMap::from_values(std::move(keep), c.height, c.width);
}

WindowMask pool_to_windows(const std::vector<double>& decision, const WindowGrid& grid, double s) {
  if (decision.size() != grid.height * grid.width) {
    throw DimensionError("decision plane of " + std::to_string(decision.size()) + " tokens does not match " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
  }
  const std::size_t w = grid.window;
  const double per_window = static_cast<double>(w * w);
  WindowMask keep(grid.count(), 0);
  for (std::size_t wr = 0; wr < grid.rows(); ++wr) {
    for (std::size_t wc = 0; wc < grid.cols(); ++wc) {
      double total = 0.0;
      for (std::size_t ty = 0; ty < w; ++ty) {
        for (std::size_t tx = 0; tx < w; ++tx) total += decision[(wr * w + ty) * grid.width + wc * w + tx];
      }
      keep[wr * grid.cols() + wc] = total / per_window >= s ? 1 : 0;
    }
  }
  return keep;
}

WindowMask pool_to_windows(const DecisionMap& d, const WindowGrid& grid, double s) {
  return pool_to_windows(d.values(), grid, s);
}

Tensor apply_decision(const Tensor& x, const DecisionMap& d) {
  if (x.rank() != 2 || x.dim(0) != d.tokens()) {
    throw DimensionError("apply_decision: tokens " + shape_str(x.shape()) + " vs decision of " +
                         std::to_string(d.tokens()) + " tokens");
  }
  return ops::mul(x, d.keep);
}

}  // namespace lmdvit
