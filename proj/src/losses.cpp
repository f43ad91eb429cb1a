#include "lmdvit/losses.hpp"

#include <cmath>

#include "lmdvit/errors.hpp"
#include "lmdvit/ops.hpp"

namespace lmdvit {

void LossWeights::validate() const {
  if (lambda0 < 0 || lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw ConfigError("loss weights must be >= 0");
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("blur-region weight w must lie in [0,1]");
}

std::vector<double> area_pool(const std::vector<double>& plane, std::size_t height, std::size_t width,
                              std::size_t rows, std::size_t cols) {
  if (plane.size() != height * width) throw DimensionError("area_pool: plane size does not match extents");
  if (rows == 0 || cols == 0 || height % rows != 0 || width % cols != 0) {
    throw DimensionError("area_pool: " + std::to_string(height) + "x" + std::to_string(width) +
                         " does not pool evenly to " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  const std::size_t fy = height / rows, fx = width / cols;
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out[(y / fy) * cols + x / fx] += plane[y * width + x];
  }
  const double inv = 1.0 / static_cast<double>(fy * fx);
  for (auto& v : out) v *= inv;
  return out;
}

Tensor confidence_cross_entropy(const ConfidenceMap& c, const std::vector<double>& target) {
  const std::size_t T = c.tokens();
  if (target.size() != T) throw DimensionError("cross-entropy target does not match confidence grid");
  // Column 0 weighted by t, column 1 by 1 - t.
  std::vector<double> wts(T * 2);
  for (std::size_t t = 0; t < T; ++t) {
    wts[t * 2] = target[t];
    wts[t * 2 + 1] = 1.0 - target[t];
  }
  const Tensor logp = ops::log(ops::clamp_min(c.probs, 1e-12));
  const Tensor weighted = ops::mul(logp, Tensor::from({T, 2}, std::move(wts)));
  return ops::scale(ops::sum(weighted), -1.0 / static_cast<double>(T));
}

Tensor pruning_loss(const std::vector<const ConfidenceMap*>& confidences, const std::vector<double>& mask,
                    std::size_t height, std::size_t width, const LossWeights& weights) {
  Tensor total = Tensor::scalar(0.0);
  for (const ConfidenceMap* c : confidences) {
    total = ops::add(total, confidence_cross_entropy(*c, area_pool(mask, height, width, c->height, c->width)));
  }
  return ops::scale(total, weights.lambda0);
}

namespace {

constexpr std::size_t kSsimWindow = 11;

Tensor gaussian_kernel(Shape shape) {
  std::vector<double> g(kSsimWindow);
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return Tensor::from(std::move(shape), std::move(g));
}

// [C,1,H,W] -> [C,1,H-10,W-10]
Tensor gaussian_filter(const Tensor& x) {
  static const Tensor col = gaussian_kernel({1, 1, kSsimWindow, 1});
  static const Tensor row = gaussian_kernel({1, 1, 1, kSsimWindow});
  return ops::conv2d(ops::conv2d(x, col, Tensor{}), row, Tensor{});
}

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
  if (a.rank() != 3) throw DimensionError(std::string(what) + " expects [C,H,W] images");
}

}  // namespace

Tensor ssim_tensor(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "ssim");
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  if (H < kSsimWindow || W < kSsimWindow) throw DimensionError("ssim needs images of at least 11x11");
  const Tensor x = ops::reshape(a, {C, 1, H, W});
  const Tensor y = ops::reshape(b, {C, 1, H, W});
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Tensor mx = gaussian_filter(x), my = gaussian_filter(y);
  const Tensor mxx = ops::mul(mx, mx), myy = ops::mul(my, my), mxy = ops::mul(mx, my);
  const Tensor sxx = ops::sub(gaussian_filter(ops::mul(x, x)), mxx);
  const Tensor syy = ops::sub(gaussian_filter(ops::mul(y, y)), myy);
  const Tensor sxy = ops::sub(gaussian_filter(ops::mul(x, y)), mxy);
  const Tensor num = ops::mul(ops::add_scalar(ops::scale(mxy, 2.0), c1), ops::add_scalar(ops::scale(sxy, 2.0), c2));
  const Tensor den = ops::mul(ops::add_scalar(ops::add(mxx, myy), c1), ops::add_scalar(ops::add(sxx, syy), c2));
  return ops::mean(ops::div(num, den));
}

Tensor fft_l1(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "fft_l1");
  const double norm = 1.0 / std::sqrt(static_cast<double>(a.dim(1) * a.dim(2)));
  const ops::ComplexPlanes f = ops::fft2(ops::sub(a, b));
  const Tensor re = ops::mean(ops::abs(f.real));
  const Tensor im = ops::mean(ops::abs(f.imag));
  return ops::scale(ops::add(re, im), 0.5 * norm);
}

Tensor image_loss(const Tensor& a, const Tensor& b, const LossWeights& weights) {
  check_pair(a, b, "image_loss");
  Tensor loss = ops::scale(ops::mean(ops::abs(ops::sub(a, b))), weights.lambda1);
  if (weights.lambda2 != 0.0) {
    loss = ops::add(loss, ops::scale(ops::add_scalar(ops::scale(ssim_tensor(a, b), -1.0), 1.0), weights.lambda2));
  }
  if (weights.lambda3 != 0.0) loss = ops::add(loss, ops::scale(fft_l1(a, b), weights.lambda3));
  return loss;
}

Tensor reconstruction_loss(const Tensor& restored, const Tensor& sharp, const Tensor& mask, const LossWeights& weights) {
  check_pair(restored, sharp, "reconstruction_loss");
  if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != sharp.dim(1) || mask.dim(2) != sharp.dim(2)) {
    throw DimensionError("reconstruction_loss: mask " + shape_str(mask.shape()) + " does not match image " +
                         shape_str(sharp.shape()));
  }
  const Tensor m = mask.detach();
  const Tensor inv = ops::add_scalar(ops::scale(m, -1.0), 1.0);
  const Tensor blur_term = image_loss(ops::mul(restored, m), ops::mul(sharp, m), weights);
  const Tensor sharp_term = image_loss(ops::mul(restored, inv), ops::mul(sharp, inv), weights);
  return ops::add(ops::scale(blur_term, weights.w), ops::scale(sharp_term, 1.0 - weights.w));
}

}  // namespace lmdvit
