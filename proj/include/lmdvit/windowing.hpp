#pragma once

// Window partitioning for window attention. Window order and intra-window
// token order are both row-major.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lmdvit/rng.hpp"
#include "lmdvit/tensor.hpp"

namespace lmdvit {

/// Per-window keep flags (1 = processed).
using WindowMask = std::vector<std::uint8_t>;

struct WindowGrid {
  std::size_t window = 8;
  std::size_t channels = 0;
  std::size_t height = 0;  // token rows of the feature map
  std::size_t width = 0;
  std::size_t shift = 0;   // 0 or window / 2

  /// Throws DimensionError when the extents are not multiples of `window`.
  static WindowGrid make(std::size_t channels, std::size_t height, std::size_t width, std::size_t window,
                         bool shifted);

  [[nodiscard]] std::size_t rows() const { return height / window; }
  [[nodiscard]] std::size_t cols() const { return width / window; }
  [[nodiscard]] std::size_t count() const { return rows() * cols(); }
  [[nodiscard]] std::size_t tokens_per_window() const { return window * window; }
};

/// [C,H,W] -> [N, w*w, C].
Tensor partition(const Tensor& x, const WindowGrid& grid);
/// [N, w*w, C] -> [C,H,W]; inverse of partition.
Tensor window_reverse(const Tensor& windows, const WindowGrid& grid);

enum class ShiftDirection { forward, inverse };

/// Toroidal roll of the last two axes; forward moves (0,0) to (offset,offset).
Tensor cyclic_shift(const Tensor& x, std::size_t offset, ShiftDirection direction);

/// Rows of `windows` whose keep flag is set; shape [N_keep, w*w, C]. N_keep must be > 0.
Tensor gather_kept(const Tensor& windows, const WindowMask& keep);
/// Places `processed` rows at kept positions and `originals` rows elsewhere.
/// With an empty keep set `processed` must be undefined.
Tensor scatter_back(const Tensor& processed, const Tensor& originals, const WindowMask& keep);

std::size_t count_kept(const WindowMask& keep);

/// idx[i * w*w + j] = index into the (2w-1)^2 bias table for query token i, key token j.
std::vector<std::size_t> relative_position_index(std::size_t window);

/// Learnable relative position bias, one table column per head.
struct RelativePositionTable {
  Tensor table;  // [(2w-1)^2, heads]
  std::vector<std::size_t> index;
  std::size_t window = 0;
  std::size_t heads = 0;

  static RelativePositionTable make(std::size_t window, std::size_t heads, CounterRng& rng);
  /// Bias gathered to [heads, w*w, w*w].
  [[nodiscard]] Tensor bias() const;
};

}  // namespace lmdvit
