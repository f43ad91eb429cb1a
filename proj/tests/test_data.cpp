#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lmdvit/data.hpp"
#include "lmdvit/errors.hpp"

using namespace lmdvit;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lmdvit_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Mean forward-difference gradient magnitude over all channels.
double mean_gradient(const Tensor& img) {
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y + 1 < H; ++y) {
      for (std::size_t x = 0; x + 1 < W; ++x) {
        const double v = img.at((c * H + y) * W + x);
        const double gx = img.at((c * H + y) * W + x + 1) - v, gy = img.at((c * H + y + 1) * W + x) - v;
        total += std::sqrt(gx * gx + gy * gy);
        ++n;
      }
    }
  }
  return total / static_cast<double>(n);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

}  // namespace

TEST_CASE("sharp images are deterministic, bounded and textured") {
  CHECK(gen_sharp(3, 32, 40).values() == gen_sharp(3, 32, 40).values());
  CHECK(gen_sharp(3, 32, 40).values() != gen_sharp(4, 32, 40).values());
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor s = gen_sharp(seed, 64, 64);
    for (double v : s.values()) REQUIRE((v >= 0.0 && v <= 1.0));
    CHECK(mean_gradient(s) > 0.01);
  }
}

TEST_CASE("motion kernels are normalized") {
  for (std::size_t len : {1, 2, 5, 9, 15}) {
    for (double angle : {0.0, 0.4, 1.5707963267948966, 2.7}) {
      std::size_t side = 0;
      const auto k = motion_kernel(len, angle, side);
      CHECK(side % 2 == 1);
      CHECK(k.size() == side * side);
      double sum = 0.0;
      for (double v : k) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  std::size_t side = 0;
  const auto delta = motion_kernel(1, 0.3, side);
  CHECK(side == 3);
  CHECK(delta[4] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("local samples composite only inside the mask") {
  const GenConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const BlurSample s = gen_sample(seed, cfg);
    CHECK_FALSE(s.meta.global);
    CHECK(s.meta.kernel_length >= 5);
    CHECK(s.meta.kernel_length <= 15);
    const auto m = s.mask_plane();
    const std::size_t HW = m.size();
    bool any_difference = false;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < HW; ++i) {
        const double d = s.blurred.at(c * HW + i) - s.sharp.at(c * HW + i);
        CHECK((m[i] == 0.0 || m[i] == 1.0));
        if (m[i] == 0.0) REQUIRE(d == 0.0);
        any_difference |= d != 0.0;
      }
    }
    CHECK(any_difference);
  }
}

TEST_CASE("unit kernel leaves the image sharp but still marks the object") {
  GenConfig cfg;
  cfg.min_kernel = cfg.max_kernel = 1;
  const BlurSample s = gen_sample(11, cfg);
  CHECK(s.blurred.values() == s.sharp.values());
  double area = 0.0;
  for (double v : s.mask_plane()) area += v;
  CHECK(area > 0.0);
}

TEST_CASE("mask area averages near the target fraction") {
  const GenConfig cfg;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = gen_sample(seed, cfg).mask_plane();
    double a = 0.0;
    for (double v : m) a += v;
    total += a / static_cast<double>(m.size());
  }
  CHECK(std::abs(total / 100.0 - 0.2) <= 0.05);
}

TEST_CASE("global samples blur everything") {
  GenConfig cfg;
  cfg.global_prob = 1.0;
  const BlurSample s = gen_sample(2, cfg);
  CHECK(s.meta.global);
  CHECK(s.meta.object == "global");
  for (double v : s.mask_plane()) CHECK(v == 1.0);
  CHECK(s.blurred.values() != s.sharp.values());
}

TEST_CASE("generator config validation and strict JSON") {
  GenConfig bad;
  bad.area_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = GenConfig{};
  bad.min_kernel = 9;
  bad.max_kernel = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const GenConfig round = gen_config_from_json(to_json(GenConfig{}));
  CHECK(to_json(round) == to_json(GenConfig{}));
  CHECK_THROWS_AS((void)gen_config_from_json(nlohmann::json{{"area", 0.2}}), ConfigError);
}

TEST_CASE("PPM and PGM round trips are exact") {
  const fs::path dir = scratch_dir("io");
  const Tensor img = quantize(gen_sharp(5, 17, 23));
  write_image(dir / "a.ppm", img);
  CHECK(read_image(dir / "a.ppm").values() == img.values());
  CHECK(read_image(dir / "a.ppm").shape() == img.shape());

  const Tensor tiny = Tensor::from({3, 1, 1}, {0.0, 128.0 / 255.0, 1.0});
  write_image(dir / "t.ppm", tiny);
  CHECK(read_image(dir / "t.ppm").values() == tiny.values());

  const Tensor mask = gen_sample(5, GenConfig{}).mask;
  write_mask(dir / "m.pgm", mask);
  CHECK(read_mask(dir / "m.pgm").values() == mask.values());
  write_mask(dir / "one.pgm", Tensor::full({1, 1, 1}, 1.0));
  CHECK(read_mask(dir / "one.pgm").values() == std::vector<double>{1.0});
  fs::remove_all(dir);
}

TEST_CASE("malformed files are rejected") {
  const fs::path dir = scratch_dir("bad");
  spit(dir / "gray.pgm", std::string("P5\n2 1\n255\n") + '\x00' + '\x80');
  CHECK_THROWS_AS((void)read_mask(dir / "gray.pgm"), FormatError);
  spit(dir / "magic.ppm", "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS((void)read_image(dir / "magic.ppm"), FormatError);
  spit(dir / "extents.ppm", "P6\nx 1\n255\n");
  CHECK_THROWS_AS((void)read_image(dir / "extents.ppm"), FormatError);
  spit(dir / "zero.ppm", "P6\n0 4\n255\n");
  CHECK_THROWS_AS((void)read_image(dir / "zero.ppm"), FormatError);
  spit(dir / "short.ppm", "P6\n2 2\n255\nabc");
  CHECK_THROWS_AS((void)read_image(dir / "short.ppm"), FormatError);
  spit(dir / "depth.ppm", "P6\n1 1\n65535\nabcdef");
  CHECK_THROWS_AS((void)read_image(dir / "depth.ppm"), FormatError);
  CHECK_THROWS_AS(write_image(dir / "x.ppm", Tensor::zeros({1, 2, 2})), DimensionError);
  fs::remove_all(dir);
}

TEST_CASE("dataset layout, manifest and regeneration") {
  const fs::path a = scratch_dir("ds_a"), b = scratch_dir("ds_b");
  GenConfig cfg;
  cfg.height = cfg.width = 32;
  cfg.area_fraction = 0.15;
  write_dataset(a, {{"train", 3}, {"test", 2}}, 9, cfg, false);
  write_dataset(b, {{"train", 3}, {"test", 2}}, 9, cfg, false);
  for (const char* name : {"train/0000_blur.ppm", "train/0002_mask.pgm", "test/0001_sharp.ppm", "manifest.json"}) {
    CHECK(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest.at("seed").get<std::uint64_t>() == 9);
  CHECK(manifest.at("splits").at("train").size() == 3);
  CHECK(manifest.at("splits").at("test")[1].at("seed").get<std::uint64_t>() == sample_seed(9, 1, 1));

  const auto train = load_split(a, "train");
  REQUIRE(train.size() == 3);
  const BlurSample direct = gen_sample(sample_seed(9, 0, 2), cfg);
  CHECK(train[2].blurred.values() == quantize(direct.blurred).values());
  CHECK(train[2].mask.values() == direct.mask.values());

  CHECK_THROWS_AS(write_dataset(a, {{"train", 1}}, 9, cfg, false), UsageError);
  CHECK_NOTHROW(write_dataset(a, {{"train", 1}}, 9, cfg, true));
  CHECK_THROWS_AS((void)load_split(a, "test"), UsageError);

  const fs::path empty = scratch_dir("ds_empty");
  write_dataset(empty, {{"train", 0}}, 1, cfg, false);
  CHECK(load_split(empty, "train").empty());

  fs::remove(b / "train" / "0001_sharp.ppm");
  CHECK_THROWS_AS((void)load_split(b, "train"), UsageError);
  for (const auto& d : {a, b, empty}) fs::remove_all(d);
}
