#include "lmdvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lmdvit/errors.hpp"
#include "lmdvit/rng.hpp"

namespace lmdvit {

void GenConfig::validate() const {
  if (height == 0 || width == 0) throw ConfigError("image extents must be positive");
  if (min_objects == 0 || min_objects > max_objects) throw ConfigError("object count range must satisfy 1 <= min <= max");
  if (!(area_fraction > 0.0 && area_fraction < 1.0)) throw ConfigError("area_fraction must lie in (0,1)");
  if (min_kernel == 0 || min_kernel > max_kernel) throw ConfigError("kernel length range must satisfy 1 <= min <= max");
  if (!(global_prob >= 0.0 && global_prob <= 1.0)) throw ConfigError("global_prob must lie in [0,1]");
}

nlohmann::json to_json(const GenConfig& c) {
  return {{"height", c.height},           {"width", c.width},           {"min_objects", c.min_objects},
          {"max_objects", c.max_objects}, {"area_fraction", c.area_fraction}, {"min_kernel", c.min_kernel},
          {"max_kernel", c.max_kernel},   {"global_prob", c.global_prob}};
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  GenConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "height") c.height = v.get<std::size_t>();
      else if (key == "width") c.width = v.get<std::size_t>();
      else if (key == "min_objects") c.min_objects = v.get<std::size_t>();
      else if (key == "max_objects") c.max_objects = v.get<std::size_t>();
      else if (key == "area_fraction") c.area_fraction = v.get<double>();
      else if (key == "min_kernel") c.min_kernel = v.get<std::size_t>();
      else if (key == "max_kernel") c.max_kernel = v.get<std::size_t>();
      else if (key == "global_prob") c.global_prob = v.get<double>();
      else throw ConfigError("unknown generator config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad generator config value: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<double> motion_kernel(std::size_t length, double angle, std::size_t& side) {
  if (length == 0) throw ConfigError("kernel length must be >= 1");
  const std::size_t radius = (length + 1) / 2;
  side = 2 * radius + 1;
  std::vector<double> k(side * side, 0.0);
  if (length == 1) {
    k[radius * side + radius] = 1.0;
    return k;
  }
  // Samples every 1/8 px along the segment, splatted bilinearly.
  const std::size_t steps = 8 * (length - 1);
  const double half = 0.5 * static_cast<double>(length - 1);
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = -half + static_cast<double>(i) * (2.0 * half / static_cast<double>(steps));
    const double x = t * dx + static_cast<double>(radius), y = t * dy + static_cast<double>(radius);
    const double fx = std::floor(x), fy = std::floor(y);
    const double ax = x - fx, ay = y - fy;
    const auto ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
    const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    const std::size_t xs[4] = {ix, ix + 1, ix, ix + 1}, ys[4] = {iy, iy, iy + 1, iy + 1};
    for (int c = 0; c < 4; ++c) {
      if (wts[c] > 0.0) k[ys[c] * side + xs[c]] += wts[c];
    }
  }
  double total = 0.0;
  for (double v : k) total += v;
  for (auto& v : k) v /= total;
  return k;
}

Tensor gen_sharp(std::uint64_t seed, std::size_t height, std::size_t width) {
  CounterRng rng(seed);
  const std::size_t HW = height * width;
  const double H = static_cast<double>(height), W = static_cast<double>(width);
  std::vector<double> img(3 * HW);
  for (std::size_t c = 0; c < 3; ++c) {
    const double a = rng.uniform(0.2, 0.8), bx = rng.uniform(-0.3, 0.3), by = rng.uniform(-0.3, 0.3);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        img[c * HW + y * width + x] = a + bx * (static_cast<double>(x) / W - 0.5) + by * (static_cast<double>(y) / H - 0.5);
      }
    }
  }
  const auto shapes = rng.uniform_int(8, 14);
  for (std::int64_t s = 0; s < shapes; ++s) {
    const bool ellipse = rng.uniform() < 0.5;
    const double cx = rng.uniform(0, W), cy = rng.uniform(0, H);
    const double rx = rng.uniform(2.0, std::max(3.0, W / 4)), ry = rng.uniform(2.0, std::max(3.0, H / 4));
    const double color[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double u = (static_cast<double>(x) + 0.5 - cx) / rx, v = (static_cast<double>(y) + 0.5 - cy) / ry;
        const bool inside = ellipse ? u * u + v * v <= 1.0 : std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) img[c * HW + y * width + x] = color[c];
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    for (int k = 0; k < 4; ++k) {
      const double freq = rng.uniform(0.05, 0.45) * 2.0 * std::numbers::pi;
      const double dir = rng.uniform(0, std::numbers::pi), phase = rng.uniform(0, 2 * std::numbers::pi);
      const double fx = freq * std::cos(dir), fy = freq * std::sin(dir);
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          img[c * HW + y * width + x] +=
              0.03 * std::sin(fx * static_cast<double>(x) + fy * static_cast<double>(y) + phase);
        }
      }
    }
  }
  for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
  return Tensor::from({3, height, width}, std::move(img));
}

namespace {

using Plane = std::vector<double>;

struct ObjectShape {
  bool ellipse = true;
  double cx = 0, cy = 0, rotation = 0, aspect = 1;
  std::vector<double> radii;  // polygon vertex radii at equally spaced angles

  [[nodiscard]] bool contains(double px, double py, double scale) const {
    const double dx = px - cx, dy = py - cy;
    const double u = dx * std::cos(rotation) + dy * std::sin(rotation);
    const double v = (-dx * std::sin(rotation) + dy * std::cos(rotation)) / aspect;
    const double r = std::hypot(u, v);
    if (ellipse) return r <= scale;
    const double n = static_cast<double>(radii.size());
    double theta = std::atan2(v, u);
    if (theta < 0) theta += 2 * std::numbers::pi;
    const double pos = theta / (2 * std::numbers::pi) * n;
    const auto i = static_cast<std::size_t>(pos) % radii.size();
    const double frac = pos - std::floor(pos);
    return r <= scale * (radii[i] * (1 - frac) + radii[(i + 1) % radii.size()] * frac);
  }
};

Plane support_of(const ObjectShape& shape, double scale, std::size_t H, std::size_t W) {
  Plane p(H * W, 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      p[y * W + x] = shape.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, scale) ? 1.0 : 0.0;
    }
  }
  return p;
}

// Chebyshev dilation by `r`, separable.
Plane dilate(const Plane& p, std::size_t H, std::size_t W, std::size_t r) {
  Plane rows(H * W, 0.0), out(H * W, 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (p[y * W + x] == 0.0) continue;
      const std::size_t lo = x >= r ? x - r : 0, hi = std::min(W - 1, x + r);
      for (std::size_t xx = lo; xx <= hi; ++xx) rows[y * W + xx] = 1.0;
    }
  }
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (rows[y * W + x] == 0.0) continue;
      const std::size_t lo = y >= r ? y - r : 0, hi = std::min(H - 1, y + r);
      for (std::size_t yy = lo; yy <= hi; ++yy) out[yy * W + x] = 1.0;
    }
  }
  return out;
}

double area(const Plane& p) {
  double a = 0.0;
  for (double v : p) a += v;
  return a;
}

bool touches_border(const Plane& p, std::size_t H, std::size_t W) {
  for (std::size_t x = 0; x < W; ++x) {
    if (p[x] != 0.0 || p[(H - 1) * W + x] != 0.0) return true;
  }
  for (std::size_t y = 0; y < H; ++y) {
    if (p[y * W] != 0.0 || p[y * W + W - 1] != 0.0) return true;
  }
  return false;
}

// 0.5 on the support's outer ring, 1 further inside.
Plane feather(const Plane& support, std::size_t H, std::size_t W) {
  Plane alpha(support);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (support[y * W + x] == 0.0) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy) {
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
          edge = yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(H) || xx >= static_cast<std::ptrdiff_t>(W) ||
                 support[static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx)] == 0.0;
        }
      }
      if (edge) alpha[y * W + x] = 0.5;
    }
  }
  return alpha;
}

enum class Boundary { zero, reflect };

// Correlation with a point-symmetric kernel of odd side.
Plane blur_plane(const double* p, std::size_t H, std::size_t W, const std::vector<double>& k, std::size_t side,
                 Boundary boundary) {
  const auto r = static_cast<std::ptrdiff_t>(side / 2);
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  auto mirror = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return std::ptrdiff_t{0};
    const std::ptrdiff_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
  };
  Plane out(H * W, 0.0);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t ky = -r; ky <= r; ++ky) {
        for (std::ptrdiff_t kx = -r; kx <= r; ++kx) {
          const double kv = k[static_cast<std::size_t>((ky + r) * static_cast<std::ptrdiff_t>(side) + kx + r)];
          if (kv == 0.0) continue;
          std::ptrdiff_t yy = y + ky, xx = x + kx;
          if (yy < 0 || xx < 0 || yy >= h || xx >= w) {
            if (boundary == Boundary::zero) continue;
            yy = mirror(yy, h);
            xx = mirror(xx, w);
          }
          acc += kv * p[yy * w + xx];
        }
      }
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

}  // namespace

BlurSample gen_sample(std::uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  CounterRng rng(seed);
  const std::size_t H = cfg.height, W = cfg.width, HW = H * W;
  BlurSample out;
  out.meta.seed = seed;
  const Tensor background = gen_sharp(rng.next_u64(), H, W);
  std::vector<double> sharp = background.values();

  if (rng.uniform() < cfg.global_prob) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.min_kernel),
                                                              static_cast<std::int64_t>(cfg.max_kernel)));
    const double angle = rng.uniform(0.0, std::numbers::pi);
    std::size_t side = 0;
    const auto k = motion_kernel(len, angle, side);
    std::vector<double> blurred(3 * HW);
    for (std::size_t c = 0; c < 3; ++c) {
      const Plane b = blur_plane(sharp.data() + c * HW, H, W, k, side, Boundary::reflect);
      std::copy(b.begin(), b.end(), blurred.begin() + static_cast<std::ptrdiff_t>(c * HW));
    }
    out.meta = {seed, len, angle, "global", true};
    out.sharp = Tensor::from({3, H, W}, std::move(sharp));
    out.blurred = Tensor::from({3, H, W}, std::move(blurred));
    out.mask = Tensor::full({1, H, W}, 1.0);
    return out;
  }

  std::vector<double> blurred = sharp;
  Plane mask(HW, 0.0);
  const auto objects = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.min_objects),
                                                                static_cast<std::int64_t>(cfg.max_objects)));
  const double target = cfg.area_fraction * static_cast<double>(HW) / static_cast<double>(objects);
  for (std::size_t o = 0; o < objects; ++o) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.min_kernel),
                                                              static_cast<std::int64_t>(cfg.max_kernel)));
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const std::size_t radius = (len + 1) / 2;
    Plane support, dilated;
    ObjectShape shape;
    bool placed = false;
    for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
      shape.ellipse = rng.uniform() < 0.5;
      shape.cx = rng.uniform(0.3, 0.7) * static_cast<double>(W);
      shape.cy = rng.uniform(0.3, 0.7) * static_cast<double>(H);
      shape.rotation = rng.uniform(0.0, std::numbers::pi);
      shape.aspect = rng.uniform(0.6, 1.0);
      shape.radii.clear();
      if (!shape.ellipse) {
        const auto n = rng.uniform_int(5, 8);
        for (std::int64_t i = 0; i < n; ++i) shape.radii.push_back(rng.uniform(0.7, 1.0));
      }
      double lo = 0.0, hi = static_cast<double>(std::max(H, W));
      for (int it = 0; it < 48; ++it) {
        const double mid = 0.5 * (lo + hi);
        (area(dilate(support_of(shape, mid, H, W), H, W, radius)) < target ? lo : hi) = mid;
      }
      support = support_of(shape, hi, H, W);
      dilated = dilate(support, H, W, radius);
      placed = area(support) > 0.0 && !touches_border(support, H, W);
    }
    if (!placed) throw ConfigError("could not place a blurred object inside the frame; lower area_fraction");

    const Plane alpha = feather(support, H, W);
    std::size_t side = 0;
    const auto k = motion_kernel(len, angle, side);
    const Plane blurred_alpha = blur_plane(alpha.data(), H, W, k, side, Boundary::zero);
    const Tensor layer = gen_sharp(rng.next_u64(), H, W);
    for (std::size_t c = 0; c < 3; ++c) {
      Plane fg(HW);
      for (std::size_t i = 0; i < HW; ++i) fg[i] = alpha[i] * layer.at(c * HW + i);
      const Plane blurred_fg = blur_plane(fg.data(), H, W, k, side, Boundary::zero);
      for (std::size_t i = 0; i < HW; ++i) {
        double& s = sharp[c * HW + i];
        double& b = blurred[c * HW + i];
        s = fg[i] + (1.0 - alpha[i]) * s;
        b = blurred_fg[i] + (1.0 - blurred_alpha[i]) * b;
      }
    }
    for (std::size_t i = 0; i < HW; ++i) mask[i] = std::max(mask[i], dilated[i]);
    if (o == 0) out.meta = {seed, len, angle, shape.ellipse ? "ellipse" : "polygon", false};
  }
  for (auto& v : blurred) v = std::clamp(v, 0.0, 1.0);
  out.sharp = Tensor::from({3, H, W}, std::move(sharp));
  out.blurred = Tensor::from({3, H, W}, std::move(blurred));
  out.mask = Tensor::from({1, H, W}, std::move(mask));
  return out;
}

Tensor quantize(const Tensor& image) {
  std::vector<double> v = image.values();
  for (auto& x : v) x = std::round(std::clamp(x, 0.0, 1.0) * 255.0) / 255.0;
  return Tensor::from(image.shape(), std::move(v));
}

// ---------------------------------------------------------------------------
// PPM / PGM

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, std::size_t channels, std::size_t H,
               std::size_t W, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write " + path.string());
  f << magic << "\n" << W << " " << H << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(channels * H * W));
  if (!f) throw UsageError("failed writing " + path.string());
}

struct Pnm {
  std::size_t width = 0, height = 0;
  std::vector<unsigned char> bytes;
};

Pnm read_pnm(const std::filesystem::path& path, const std::string& magic, std::size_t channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    while (true) {
      const int c = f.get();
      if (c == EOF) break;
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
    return t;
  };
  if (token() != magic) throw FormatError(path.string() + ": expected " + magic + " header");
  Pnm p;
  try {
    p.width = std::stoul(token());
    p.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed extents");
  }
  if (p.width == 0 || p.height == 0 || p.width > 65536 || p.height > 65536) {
    throw FormatError(path.string() + ": invalid extents");
  }
  p.bytes.resize(channels * p.width * p.height);
  f.read(reinterpret_cast<char*>(p.bytes.data()), static_cast<std::streamsize>(p.bytes.size()));
  if (static_cast<std::size_t>(f.gcount()) != p.bytes.size()) throw FormatError(path.string() + ": truncated pixel data");
  return p;
}

unsigned char to_byte(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("write_image expects [3,H,W]");
  const std::size_t H = image.dim(1), W = image.dim(2), HW = H * W;
  std::vector<unsigned char> bytes(3 * HW);
  for (std::size_t i = 0; i < HW; ++i) {
    for (std::size_t c = 0; c < 3; ++c) bytes[i * 3 + c] = to_byte(image.at(c * HW + i));
  }
  write_pnm(path, "P6", 3, H, W, bytes);
}

Tensor read_image(const std::filesystem::path& path) {
  const Pnm p = read_pnm(path, "P6", 3);
  const std::size_t HW = p.width * p.height;
  std::vector<double> v(3 * HW);
  for (std::size_t i = 0; i < HW; ++i) {
    for (std::size_t c = 0; c < 3; ++c) v[c * HW + i] = p.bytes[i * 3 + c] / 255.0;
  }
  return Tensor::from({3, p.height, p.width}, std::move(v));
}

void write_mask(const std::filesystem::path& path, const Tensor& mask) {
  if (mask.rank() != 3 || mask.dim(0) != 1) throw DimensionError("write_mask expects [1,H,W]");
  std::vector<unsigned char> bytes(mask.numel());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.at(i) > 0.5 ? 255 : 0;
  write_pnm(path, "P5", 1, mask.dim(1), mask.dim(2), bytes);
}

Tensor read_mask(const std::filesystem::path& path) {
  const Pnm p = read_pnm(path, "P5", 1);
  std::vector<double> v(p.bytes.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (p.bytes[i] != 0 && p.bytes[i] != 255) {
      throw FormatError(path.string() + ": mask value " + std::to_string(p.bytes[i]) + " is neither 0 nor 255");
    }
    v[i] = p.bytes[i] == 255 ? 1.0 : 0.0;
  }
  return Tensor::from({1, p.height, p.width}, std::move(v));
}

// ---------------------------------------------------------------------------
// Dataset layout

std::uint64_t sample_seed(std::uint64_t seed, std::size_t split_index, std::size_t index) {
  return CounterRng(seed).split(split_index).split(index).next_u64();
}

namespace {

std::string sample_id(std::size_t i) {
  std::ostringstream s;
  s.width(4);
  s.fill('0');
  s << i;
  return s.str();
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetSplit>& splits, std::uint64_t seed,
                   const GenConfig& config, bool force) {
  namespace fs = std::filesystem;
  config.validate();
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(dir);
  nlohmann::json manifest = {{"seed", seed}, {"config", to_json(config)}, {"splits", nlohmann::json::object()}};
  for (std::size_t si = 0; si < splits.size(); ++si) {
    const auto& split = splits[si];
    fs::create_directories(dir / split.name);
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < split.count; ++i) {
      const std::uint64_t s = sample_seed(seed, si, i);
      const BlurSample sample = gen_sample(s, config);
      const std::string id = sample_id(i);
      write_image(dir / split.name / (id + "_blur.ppm"), sample.blurred);
      write_image(dir / split.name / (id + "_sharp.ppm"), sample.sharp);
      write_mask(dir / split.name / (id + "_mask.pgm"), sample.mask);
      entries.push_back({{"id", id},
                         {"seed", s},
                         {"kernel_length", sample.meta.kernel_length},
                         {"angle", sample.meta.angle},
                         {"object", sample.meta.object},
                         {"global", sample.meta.global}});
    }
    manifest["splits"][split.name] = entries;
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw UsageError("cannot write manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
}

std::vector<BlurSample> load_split(const std::filesystem::path& dir, const std::string& split) {
  namespace fs = std::filesystem;
  std::ifstream f(dir / "manifest.json");
  if (!f) throw UsageError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  if (!manifest.contains("splits") || !manifest["splits"].contains(split)) {
    throw UsageError("dataset " + dir.string() + " has no split '" + split + "'");
  }
  std::vector<BlurSample> out;
  for (const auto& e : manifest["splits"][split]) {
    const std::string id = e.at("id").get<std::string>();
    const fs::path base = dir / split;
    for (const char* suffix : {"_blur.ppm", "_sharp.ppm", "_mask.pgm"}) {
      if (!fs::exists(base / (id + suffix))) throw UsageError("missing file " + (base / (id + suffix)).string());
    }
    BlurSample s;
    s.blurred = read_image(base / (id + "_blur.ppm"));
    s.sharp = read_image(base / (id + "_sharp.ppm"));
    s.mask = read_mask(base / (id + "_mask.pgm"));
    s.meta = {e.at("seed").get<std::uint64_t>(), e.at("kernel_length").get<std::size_t>(), e.at("angle").get<double>(),
              e.at("object").get<std::string>(), e.at("global").get<bool>()};
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lmdvit
