#pragma once

// Evaluation metrics on plain values (no graph).

#include <cstddef>
#include <vector>

#include "lmdvit/tensor.hpp"
#include "lmdvit/windowing.hpp"

namespace lmdvit {

/// Reported in place of +infinity for identical inputs.
inline constexpr double kPsnrCap = 99.0;

/// a, b: [C,H,W].
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
/// MSE restricted to pixels with mask > 0.5; mask is H x W. Throws UsageError on an empty mask.
double weighted_psnr(const Tensor& a, const Tensor& b, const std::vector<double>& mask, double peak = 1.0);

/// SSIM map over the valid region: (H-10) x (W-10) per channel, channel-major.
std::vector<double> ssim_map(const Tensor& a, const Tensor& b);
double ssim(const Tensor& a, const Tensor& b);
/// Mean of the SSIM map over positions whose window centre lies in the mask.
/// When no centre does, positions whose window touches the mask are used.
double weighted_ssim(const Tensor& a, const Tensor& b, const std::vector<double>& mask);

struct PrecisionCounts {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;

  /// TP / (TP + FP), 1 when nothing was kept.
  [[nodiscard]] double precision() const;
};

/// A window is blurry when any mask pixel inside it is set. `mask` is a
/// height x width plane at the resolution of the window grid.
PrecisionCounts pruning_counts(const WindowMask& keep, const WindowGrid& grid, const std::vector<double>& mask);
double pruning_precision(const WindowMask& keep, const WindowGrid& grid, const std::vector<double>& mask);

}  // namespace lmdvit
