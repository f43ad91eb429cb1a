#include "lmdvit/layers.hpp"

#include "lmdvit/errors.hpp"

namespace lmdvit {

Tensor make_param(Shape shape, Init init, CounterRng& rng) {
  std::vector<double> values(shape_numel(shape), 0.0);
  if (init == Init::trunc_normal) {
    for (auto& v : values) v = rng.truncated_normal(0.02);
  }
  return Tensor::from(std::move(shape), std::move(values), true);
}

Linear Linear::make(std::size_t in, std::size_t out, CounterRng& rng, Init init) {
  return {make_param({in, out}, init, rng), make_param({out}, Init::zeros, rng)};
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::make(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Tensor to_tokens(const Tensor& map) {
  if (map.rank() != 3) throw DimensionError("to_tokens expects [C,H,W], got " + shape_str(map.shape()));
  const std::size_t C = map.dim(0), H = map.dim(1), W = map.dim(2);
  return ops::reshape(ops::permute(map, {1, 2, 0}), {H * W, C});
}

Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width) {
  if (tokens.rank() != 2 || tokens.dim(0) != height * width) {
    throw DimensionError("from_tokens: " + shape_str(tokens.shape()) + " is not " + std::to_string(height) + "x" +
                         std::to_string(width) + " tokens");
  }
  const std::size_t C = tokens.dim(1);
  return ops::permute(ops::reshape(tokens, {height, width, C}), {2, 0, 1});
}

}  // namespace lmdvit
