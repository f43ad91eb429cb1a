#include "lmdvit/windowing.hpp"

#include <algorithm>

#include "lmdvit/errors.hpp"
#include "lmdvit/ops.hpp"

namespace lmdvit {

WindowGrid WindowGrid::make(std::size_t channels, std::size_t height, std::size_t width, std::size_t window,
                            bool shifted) {
  if (window == 0 || height % window != 0 || width % window != 0) {
    throw DimensionError("feature map " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by window " + std::to_string(window));
  }
  return {window, channels, height, width, shifted ? window / 2 : 0};
}

namespace {

void check_map(const Tensor& x, const WindowGrid& g) {
  if (x.rank() != 3 || x.dim(0) != g.channels || x.dim(1) != g.height || x.dim(2) != g.width) {
    throw DimensionError("feature map " + shape_str(x.shape()) + " does not match window grid [" +
                         std::to_string(g.channels) + "," + std::to_string(g.height) + "," + std::to_string(g.width) + "]");
  }
}

// index[(n*w*w + t)*C + c] = flat position of (c, y, x) in the [C,H,W] map.
std::vector<std::size_t> partition_index(const WindowGrid& g) {
  const std::size_t w = g.window, C = g.channels, T = w * w;
  std::vector<std::size_t> index(g.count() * T * C);
  for (std::size_t wr = 0; wr < g.rows(); ++wr) {
    for (std::size_t wc = 0; wc < g.cols(); ++wc) {
      const std::size_t n = wr * g.cols() + wc;
      for (std::size_t ty = 0; ty < w; ++ty) {
        for (std::size_t tx = 0; tx < w; ++tx) {
          const std::size_t y = wr * w + ty, x = wc * w + tx;
          const std::size_t base = (n * T + ty * w + tx) * C;
          for (std::size_t c = 0; c < C; ++c) index[base + c] = (c * g.height + y) * g.width + x;
        }
      }
    }
  }
  return index;
}

}  // namespace

Tensor partition(const Tensor& x, const WindowGrid& grid) {
  check_map(x, grid);
  return ops::gather_flat(x, {grid.count(), grid.tokens_per_window(), grid.channels}, partition_index(grid));
}

Tensor window_reverse(const Tensor& windows, const WindowGrid& grid) {
  if (windows.rank() != 3 || windows.dim(0) != grid.count() || windows.dim(1) != grid.tokens_per_window() ||
      windows.dim(2) != grid.channels) {
    throw DimensionError("windows " + shape_str(windows.shape()) + " do not match window grid");
  }
  const auto fwd = partition_index(grid);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return ops::gather_flat(windows, {grid.channels, grid.height, grid.width}, std::move(inv));
}

Tensor cyclic_shift(const Tensor& x, std::size_t offset, ShiftDirection direction) {
  if (offset == 0) return x;
  if (x.rank() < 2) throw DimensionError("cyclic_shift needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t H = x.dim(-2), W = x.dim(-1);
  const std::size_t planes = x.numel() / (H * W);
  // forward: out(y, x) = in(y - offset, x - offset)
  const std::size_t dy = direction == ShiftDirection::forward ? H - offset % H : offset % H;
  const std::size_t dx = direction == ShiftDirection::forward ? W - offset % W : offset % W;
  std::vector<std::size_t> index(x.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < H; ++y) {
      const std::size_t sy = (y + dy) % H;
      for (std::size_t xx = 0; xx < W; ++xx) {
        index[(p * H + y) * W + xx] = (p * H + sy) * W + (xx + dx) % W;
      }
    }
  }
  return ops::gather_flat(x, x.shape(), std::move(index));
}

std::size_t count_kept(const WindowMask& keep) {
  return static_cast<std::size_t>(std::count_if(keep.begin(), keep.end(), [](auto k) { return k != 0; }));
}

Tensor gather_kept(const Tensor& windows, const WindowMask& keep) {
  if (windows.rank() != 3 || keep.size() != windows.dim(0)) {
    throw DimensionError("keep mask of length " + std::to_string(keep.size()) + " does not match windows " +
                         shape_str(windows.shape()));
  }
  const std::size_t kept = count_kept(keep);
  if (kept == 0) throw DimensionError("gather_kept with an empty keep set");
  const std::size_t row = windows.dim(1) * windows.dim(2);
  std::vector<std::size_t> index;
  index.reserve(kept * row);
  for (std::size_t n = 0; n < keep.size(); ++n) {
    if (!keep[n]) continue;
    for (std::size_t i = 0; i < row; ++i) index.push_back(n * row + i);
  }
  return ops::gather_flat(windows, {kept, windows.dim(1), windows.dim(2)}, std::move(index));
}

Tensor scatter_back(const Tensor& processed, const Tensor& originals, const WindowMask& keep) {
  if (originals.rank() != 3 || keep.size() != originals.dim(0)) {
    throw DimensionError("keep mask of length " + std::to_string(keep.size()) + " does not match windows " +
                         shape_str(originals.shape()));
  }
  const std::size_t kept = count_kept(keep);
  if (kept == 0) {
    if (processed.defined()) throw DimensionError("scatter_back: processed windows given for an empty keep set");
    return originals;
  }
  if (!processed.defined() || processed.rank() != 3 || processed.dim(0) != kept ||
      processed.dim(1) != originals.dim(1) || processed.dim(2) != originals.dim(2)) {
    throw DimensionError("scatter_back: processed " + (processed.defined() ? shape_str(processed.shape()) : "<none>") +
                         " does not match " + std::to_string(kept) + " kept windows of " + shape_str(originals.shape()));
  }
  const std::size_t N = originals.dim(0);
  const std::size_t row = originals.dim(1) * originals.dim(2);
  // Rows [0, N) of the stacked tensor are originals, rows [N, N + kept) processed.
  const Tensor stacked = ops::concat({originals, processed}, 0);
  std::vector<std::size_t> index(N * row);
  std::size_t next = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t src = keep[n] ? N + next++ : n;
    for (std::size_t i = 0; i < row; ++i) index[n * row + i] = src * row + i;
  }
  return ops::gather_flat(stacked, originals.shape(), std::move(index));
}

std::vector<std::size_t> relative_position_index(std::size_t window) {
  const std::size_t w = window, T = w * w, side = 2 * w - 1;
  std::vector<std::size_t> index(T * T);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t yi = i / w, xi = i % w;
    for (std::size_t j = 0; j < T; ++j) {
      const std::size_t yj = j / w, xj = j % w;
      index[i * T + j] = (yi + w - 1 - yj) * side + (xi + w - 1 - xj);
    }
  }
  return index;
}

RelativePositionTable RelativePositionTable::make(std::size_t window, std::size_t heads, CounterRng& rng) {
  const std::size_t side = 2 * window - 1;
  std::vector<double> values(side * side * heads);
  for (auto& v : values) v = rng.truncated_normal(0.02);
  RelativePositionTable t;
  t.table = Tensor::from({side * side, heads}, std::move(values), true);
  t.index = relative_position_index(window);
  t.window = window;
  t.heads = heads;
  return t;
}

Tensor RelativePositionTable::bias() const {
  const std::size_t T = window * window;
  std::vector<std::size_t> flat(heads * T * T);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t k = 0; k < T * T; ++k) flat[h * T * T + k] = index[k] * heads + h;
  }
  return ops::gather_flat(table, {heads, T, T}, std::move(flat));
}

}  // namespace lmdvit
