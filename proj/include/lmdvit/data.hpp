#pragma once

// Synthetic locally blurred samples with exact blur masks, PPM/PGM I/O and
// the on-disk dataset layout.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmdvit/tensor.hpp"

namespace lmdvit {

struct GenConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_objects = 1;
  std::size_t max_objects = 1;
  double area_fraction = 0.2;  // target mask area / image area, split across objects
  std::size_t min_kernel = 5;
  std::size_t max_kernel = 15;
  double global_prob = 0.0;    // probability of a globally blurred sample

  void validate() const;
};

nlohmann::json to_json(const GenConfig& c);
/// Unknown keys are rejected with ConfigError.
GenConfig gen_config_from_json(const nlohmann::json& j);

struct SampleMeta {
  std::uint64_t seed = 0;
  std::size_t kernel_length = 0;
  double angle = 0.0;
  std::string object;  // "ellipse", "polygon" or "global"
  bool global = false;
};

struct BlurSample {
  Tensor blurred;  // [3,H,W]
  Tensor sharp;    // [3,H,W]
  Tensor mask;     // [1,H,W], values 0 or 1
  SampleMeta meta;

  [[nodiscard]] std::vector<double> mask_plane() const { return mask.values(); }
};

/// Normalized linear motion kernel of length `length` (px) at `angle` (rad),
/// bilinearly splatted on a square grid of odd side `2 * ceil(length / 2) + 1`.
std::vector<double> motion_kernel(std::size_t length, double angle, std::size_t& side);

/// Procedural sharp image in [0,1]: gradients, rectangles, ellipses and band-limited noise.
Tensor gen_sharp(std::uint64_t seed, std::size_t height, std::size_t width);

/// Throws ConfigError when no object placement fits after bounded retries.
BlurSample gen_sample(std::uint64_t seed, const GenConfig& config);

/// round(v * 255) / 255 with clamping to [0,1].
Tensor quantize(const Tensor& image);

void write_image(const std::filesystem::path& path, const Tensor& image);  // binary PPM
Tensor read_image(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Tensor& mask);    // binary PGM, 0/255
Tensor read_mask(const std::filesystem::path& path);

struct DatasetSplit {
  std::string name;
  std::size_t count = 0;
};

/// Writes `{split}/{id}_{blur,sharp,mask}` files and `manifest.json` under `dir`.
/// Throws UsageError when `dir` exists and is not empty unless `force`.
void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetSplit>& splits, std::uint64_t seed,
                   const GenConfig& config, bool force);

/// Seed of sample `index` in split number `split_index`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t split_index, std::size_t index);

/// Loads every sample of `split`. Throws UsageError when a file is missing.
std::vector<BlurSample> load_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace lmdvit
