#pragma once

// Training objectives: a cross-entropy constraint on blurriness confidence and
// a blur-weighted reconstruction loss built from L1, SSIM and frequency terms.

#include <cstddef>
#include <vector>

#include "lmdvit/pruning.hpp"
#include "lmdvit/tensor.hpp"

namespace lmdvit {

struct LossWeights {
  double lambda0 = 0.01;  // pruning loss
  double w = 0.8;         // blur-region weight
  double lambda1 = 1.0;   // L1
  double lambda2 = 1.0;   // 1 - SSIM
  double lambda3 = 0.1;   // frequency L1

  void validate() const;
};

/// Area-average pooling of a height x width plane to a rows x cols grid.
std::vector<double> area_pool(const std::vector<double>& plane, std::size_t height, std::size_t width,
                              std::size_t rows, std::size_t cols);

/// Mean binary cross-entropy between p_keep and the soft target t, with log
/// clamped at 1e-12.
Tensor confidence_cross_entropy(const ConfidenceMap& c, const std::vector<double>& target);

/// lambda0 * sum over maps of the cross-entropy against `mask` (height x width,
/// values in [0,1]) area-pooled to each map's grid.
Tensor pruning_loss(const std::vector<const ConfidenceMap*>& confidences, const std::vector<double>& mask,
                    std::size_t height, std::size_t width, const LossWeights& weights);

/// Mean SSIM of two [C,H,W] tensors; 11x11 Gaussian window (sigma 1.5) over the
/// valid region, K1 = 0.01, K2 = 0.03, dynamic range 1. Differentiable.
Tensor ssim_tensor(const Tensor& a, const Tensor& b);

/// Mean of |Re| and |Im| differences of the orthonormal 2-D DFT per channel.
Tensor fft_l1(const Tensor& a, const Tensor& b);

/// L1 + lambda2 (1 - SSIM) + lambda3 FFT-L1, with the L1 coefficient lambda1.
Tensor image_loss(const Tensor& a, const Tensor& b, const LossWeights& weights);

/// w L'(M S', M S) + (1 - w) L'((1 - M) S', (1 - M) S). `mask` is [1,H,W].
Tensor reconstruction_loss(const Tensor& restored, const Tensor& sharp, const Tensor& mask, const LossWeights& weights);

}  // namespace lmdvit
