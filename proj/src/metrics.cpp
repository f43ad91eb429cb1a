#include "lmdvit/metrics.hpp"

#include <cmath>

#include "lmdvit/errors.hpp"

namespace lmdvit {

namespace {

void check_images(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 3) {
    throw DimensionError("metric inputs must be [C,H,W] of equal shape, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
}

void check_mask(const Tensor& a, const std::vector<double>& mask) {
  if (mask.size() != a.dim(1) * a.dim(2)) throw DimensionError("mask extents do not match image");
}

double to_psnr(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

constexpr std::size_t kWin = 11;
constexpr std::size_t kHalf = kWin / 2;

const std::vector<double>& gaussian_1d() {
  static const std::vector<double> g = [] {
    std::vector<double> v(kWin);
    double total = 0.0;
    for (std::size_t i = 0; i < kWin; ++i) {
      const double d = static_cast<double>(i) - static_cast<double>(kHalf);
      v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      total += v[i];
    }
    for (auto& x : v) x /= total;
    return v;
  }();
  return g;
}

// Separable valid-region Gaussian filter of one H x W plane.
std::vector<double> filter(const double* p, std::size_t H, std::size_t W) {
  const auto& g = gaussian_1d();
  const std::size_t Ho = H - kWin + 1, Wo = W - kWin + 1;
  std::vector<double> cols(Ho * W, 0.0);
  for (std::size_t y = 0; y < Ho; ++y) {
    for (std::size_t k = 0; k < kWin; ++k) {
      for (std::size_t x = 0; x < W; ++x) cols[y * W + x] += g[k] * p[(y + k) * W + x];
    }
  }
  std::vector<double> out(Ho * Wo, 0.0);
  for (std::size_t y = 0; y < Ho; ++y) {
    for (std::size_t x = 0; x < Wo; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) acc += g[k] * cols[y * W + x + k];
      out[y * Wo + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
  check_images(a, b);
  double se = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.at(i) - b.at(i);
    se += d * d;
  }
  return to_psnr(se / static_cast<double>(a.numel()), peak);
}

double weighted_psnr(const Tensor& a, const Tensor& b, const std::vector<double>& mask, double peak) {
  check_images(a, b);
  check_mask(a, mask);
  const std::size_t C = a.dim(0), HW = mask.size();
  double se = 0.0, count = 0.0;
  for (std::size_t p = 0; p < HW; ++p) {
    if (mask[p] <= 0.5) continue;
    count += 1.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = a.at(c * HW + p) - b.at(c * HW + p);
      se += d * d;
    }
  }
  if (count == 0.0) throw UsageError("weighted PSNR needs a non-empty mask");
  return to_psnr(se / (count * static_cast<double>(C)), peak);
}

std::vector<double> ssim_map(const Tensor& a, const Tensor& b) {
  check_images(a, b);
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  if (H < kWin || W < kWin) throw DimensionError("ssim needs images of at least 11x11");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t HW = H * W, n = (H - kWin + 1) * (W - kWin + 1);
  std::vector<double> out;
  out.reserve(C * n);
  std::vector<double> xx(HW), yy(HW), xy(HW);
  for (std::size_t c = 0; c < C; ++c) {
    const double* x = a.data().data() + c * HW;
    const double* y = b.data().data() + c * HW;
    for (std::size_t i = 0; i < HW; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter(x, H, W), my = filter(y, H, W);
    const auto ex = filter(xx.data(), H, W), ey = filter(yy.data(), H, W), exy = filter(xy.data(), H, W);
    for (std::size_t i = 0; i < n; ++i) {
      const double sx = ex[i] - mx[i] * mx[i], sy = ey[i] - my[i] * my[i], sxy = exy[i] - mx[i] * my[i];
      out.push_back(((2 * mx[i] * my[i] + c1) * (2 * sxy + c2)) /
                    ((mx[i] * mx[i] + my[i] * my[i] + c1) * (sx + sy + c2)));
    }
  }
  return out;
}

double ssim(const Tensor& a, const Tensor& b) {
  const auto map = ssim_map(a, b);
  double total = 0.0;
  for (double v : map) total += v;
  return total / static_cast<double>(map.size());
}

double weighted_ssim(const Tensor& a, const Tensor& b, const std::vector<double>& mask) {
  const auto map = ssim_map(a, b);
  check_mask(a, mask);
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const std::size_t Ho = H - kWin + 1, Wo = W - kWin + 1;
  auto average = [&](auto&& selected) {
    double total = 0.0, count = 0.0;
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t x = 0; x < Wo; ++x) {
        if (!selected(y, x)) continue;
        for (std::size_t c = 0; c < C; ++c) total += map[(c * Ho + y) * Wo + x];
        count += static_cast<double>(C);
      }
    }
    return count > 0.0 ? total / count : std::nan("");
  };
  const double centre = average([&](std::size_t y, std::size_t x) { return mask[(y + kHalf) * W + x + kHalf] > 0.5; });
  if (!std::isnan(centre)) return centre;
  bool any = false;
  for (double m : mask) any = any || m > 0.5;
  if (!any) throw UsageError("weighted SSIM needs a non-empty mask");
  return average([&](std::size_t y, std::size_t x) {
    for (std::size_t dy = 0; dy < kWin; ++dy) {
      for (std::size_t dx = 0; dx < kWin; ++dx) {
        if (mask[(y + dy) * W + x + dx] > 0.5) return true;
      }
    }
    return false;
  });
}

double PrecisionCounts::precision() const {
  const std::size_t kept = true_positive + false_positive;
  return kept == 0 ? 1.0 : static_cast<double>(true_positive) / static_cast<double>(kept);
}

PrecisionCounts pruning_counts(const WindowMask& keep, const WindowGrid& grid, const std::vector<double>& mask) {
  if (keep.size() != grid.count()) throw DimensionError("keep flags do not match the window grid");
  if (mask.size() != grid.height * grid.width) throw DimensionError("mask does not match the window grid extents");
  PrecisionCounts pc;
  const std::size_t w = grid.window;
  for (std::size_t wr = 0; wr < grid.rows(); ++wr) {
    for (std::size_t wc = 0; wc < grid.cols(); ++wc) {
      if (!keep[wr * grid.cols() + wc]) continue;
      bool blurry = false;
      for (std::size_t y = 0; y < w && !blurry; ++y) {
        for (std::size_t x = 0; x < w && !blurry; ++x) blurry = mask[(wr * w + y) * grid.width + wc * w + x] > 0.5;
      }
      ++(blurry ? pc.true_positive : pc.false_positive);
    }
  }
  return pc;
}

double pruning_precision(const WindowMask& keep, const WindowGrid& grid, const std::vector<double>& mask) {
  return pruning_counts(keep, grid, mask).precision();
}

}  // namespace lmdvit
