#pragma once

// Analytic FLOPs model. FLOPs are 2 x multiply-accumulates of every linear,
// convolution and attention product, plus one add per relative position bias
// entry. Normalization and pointwise activations are not counted. W-MSA and
// W-LeFF costs scale with the number of kept windows; everything else is dense.

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmdvit/config.hpp"
#include "lmdvit/model.hpp"

namespace lmdvit {

/// kept[stage][block]: windows processed by that block (fractions allowed).
using KeptCounts = std::vector<std::vector<double>>;

struct LayerFlops {
  std::string name;
  double dense = 0.0;
  double pruned = 0.0;
  bool window_local = false;
};

struct FlopsReport {
  std::vector<LayerFlops> layers;
  double dense_total = 0.0;
  double pruned_total = 0.0;
  double window_local_dense = 0.0;
  double window_local_pruned = 0.0;

  /// 1 - pruned / dense.
  [[nodiscard]] double reduction() const;
  [[nodiscard]] double window_local_reduction() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Multiply-accumulates of one dense window.
double wmsa_window_macs(std::size_t channels, std::size_t window);
double wleff_window_macs(std::size_t channels, std::size_t window);
/// Position bias additions of one window.
double position_bias_adds(std::size_t heads, std::size_t window);

/// Windows per block for every stage at the padded input extents.
KeptCounts window_totals(const ModelConfig& config, std::size_t height, std::size_t width);
/// `fraction` of the windows kept in pruning stages, all kept elsewhere.
KeptCounts kept_fraction(const ModelConfig& config, std::size_t height, std::size_t width, double fraction);
/// Kept counts measured during a forward pass.
KeptCounts kept_counts(const ModelOutput& output);

/// `height` x `width` are input extents; the model padding is applied here.
/// Throws UsageError when a kept count is negative or exceeds its window total.
FlopsReport flops_report(const ModelConfig& config, std::size_t height, std::size_t width, const KeptCounts& kept);

}  // namespace lmdvit
