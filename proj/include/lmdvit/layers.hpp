#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lmdvit/ops.hpp"
#include "lmdvit/rng.hpp"
#include "lmdvit/tensor.hpp"

namespace lmdvit {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

enum class Init { trunc_normal, zeros };

/// Leaf parameter with truncated-normal (std 0.02) or zero values.
Tensor make_param(Shape shape, Init init, CounterRng& rng);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear make(std::size_t in, std::size_t out, CounterRng& rng, Init init = Init::trunc_normal);
  [[nodiscard]] Tensor operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-6;

  static LayerNorm make(std::size_t width);
  [[nodiscard]] Tensor operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// [C,H,W] -> [H*W, C]
Tensor to_tokens(const Tensor& map);
/// [H*W, C] -> [C,H,W]
Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

}  // namespace lmdvit
