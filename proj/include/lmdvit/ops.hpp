#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "lmdvit/tensor.hpp"

namespace lmdvit::ops {

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);
Tensor leaky_relu(const Tensor& x, double slope = 0.01);
/// Exact erf form.
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces `axis`; the axis is kept with extent 1 when `keepdim`.
Tensor sum_axis(const Tensor& x, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, int axis, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
/// General axis permutation: out axis i is input axis `axes[i]`.
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& x, int axis_a, int axis_b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
/// out.flat[i] = x.flat[index[i]]; adjoint scatters back with accumulation.
Tensor gather_flat(const Tensor& x, Shape shape, std::vector<std::size_t> index);

/// Matrix product over the last two axes. Leading axes of `b` must either
/// equal those of `a` or be absent.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] @ weight[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, int axis = -1);
/// Normalizes over the last axis then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

enum class PadMode { none, zero, reflect };

struct Padding {
  PadMode mode = PadMode::none;
  std::size_t amount = 0;

  static Padding none() { return {}; }
  static Padding zero(std::size_t p) { return {PadMode::zero, p}; }
  static Padding reflect(std::size_t p) { return {PadMode::reflect, p}; }
};

/// Pads the last two axes symmetrically. Reflect excludes the edge sample
/// and requires amount < extent.
Tensor pad2d(const Tensor& x, Padding padding);

/// Cross-correlation. x: [C_in,H,W] or [B,C_in,H,W]; kernel: [C_out, C_in/groups, kh, kw].
/// bias may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1,
              Padding padding = Padding::none(), std::size_t groups = 1);

/// x: [C_in,H,W]; kernel: [C_in, C_out, kh, kw]. Output extent (H-1)*stride + kh.
Tensor conv_transpose2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        std::size_t stride);

/// Forward value equals `hard`; the adjoint passes straight into `soft`.
Tensor straight_through(const Tensor& hard, const Tensor& soft);

struct ComplexPlanes {
  Tensor real;
  Tensor imag;
};

/// Unnormalized 2-D DFT over the last two axes of a real tensor.
ComplexPlanes fft2(const Tensor& x);

}  // namespace lmdvit::ops
