#include "lmdvit/model.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "lmdvit/errors.hpp"
#include "lmdvit/ops.hpp"

namespace lmdvit {

double StageTrace::kept_ratio() const {
  std::size_t kept = 0;
  for (const auto& k : window_keep) kept += count_kept(k);
  const std::size_t total = window_count * window_keep.size();
  return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total);
}

std::vector<double> StageTrace::kept_per_block() const {
  std::vector<double> out;
  out.reserve(window_keep.size());
  for (const auto& k : window_keep) out.push_back(static_cast<double>(count_kept(k)));
  return out;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  CounterRng rng(seed);
  Model m;
  m.config_ = config;
  const std::size_t c0 = config.base_channels, w = config.window_size;
  m.in_weight_ = make_param({c0, 3, 3, 3}, Init::trunc_normal, rng);
  m.in_bias_ = make_param({c0}, Init::zeros, rng);
  m.in_norm_ = LayerNorm::make(c0);
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::size_t c = config.stage_channels(s);
    if (s > kStageCount / 2) {
      const std::size_t c_prev = config.stage_channels(s - 1);
      m.up_.push_back(Upsample::make(c_prev, c, rng));
      m.skip_.push_back(Linear::make(2 * c, c, rng));
    }
    Stage stage;
    for (std::size_t b = 0; b < config.depths[s]; ++b) {
      const BlockKind kind = b == 0 ? BlockKind::first : BlockKind::post;
      stage.blocks.push_back(AdaWptBlock::make(kind, c, config.heads[s], w, b % 2 == 1, config.prunes(s), rng));
    }
    m.stages_.push_back(std::move(stage));
    if (s < kStageCount / 2) m.down_.push_back(Downsample::make(c, config.stage_channels(s + 1), rng));
  }
  m.out_weight_ = make_param({3, c0, 3, 3}, Init::zeros, rng);
  m.out_bias_ = make_param({3}, Init::zeros, rng);
  return m;
}

std::pair<std::size_t, std::size_t> Model::padded_extents(std::size_t height, std::size_t width) const {
  const std::size_t m = config_.pad_multiple();
  return {(height + m - 1) / m * m, (width + m - 1) / m * m};
}

std::pair<std::size_t, std::size_t> Model::stage_grid(std::size_t stage, std::size_t height, std::size_t width) {
  const std::size_t f = std::size_t{1} << ModelConfig::stage_scale(stage);
  return {height / f, width / f};
}

namespace {

// Mirror index for position i on an axis of extent n, folding repeatedly.
std::size_t fold(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  const std::size_t r = i % period;
  return r < n ? r : period - r;
}

}  // namespace

Tensor reflect_pad_to(const Tensor& x, std::size_t hp, std::size_t wp) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (hp == H && wp == W) return x;
  std::vector<std::size_t> index(C * hp * wp);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < hp; ++y) {
      for (std::size_t xx = 0; xx < wp; ++xx) index[(c * hp + y) * wp + xx] = (c * H + fold(y, H)) * W + fold(xx, W);
    }
  }
  return ops::gather_flat(x, {C, hp, wp}, std::move(index));
}

ModelOutput Model::forward(const Tensor& blurred, Mode mode, CounterRng* rng, const ForwardOptions& options) const {
  if (!blurred.defined() || blurred.rank() != 3 || blurred.dim(0) != 3) {
    throw UsageError("model input must be a [3,H,W] image, got " +
                     (blurred.defined() ? shape_str(blurred.shape()) : std::string("nothing")));
  }
  if (!options.forced.empty() && options.forced.size() != kStageCount) {
    throw UsageError("forced decisions need one optional entry per stage");
  }
  std::optional<NoGradGuard> no_grad;
  if (mode == Mode::infer) no_grad.emplace();

  const std::size_t H = blurred.dim(1), W = blurred.dim(2);
  const auto [hp, wp] = padded_extents(H, W);
  const Tensor padded = reflect_pad_to(blurred, hp, wp);

  Tensor x = ops::leaky_relu(ops::conv2d(padded, in_weight_, in_bias_, 1, ops::Padding::zero(1)));
  x = from_tokens(in_norm_(to_tokens(x)), hp, wp);

  ModelOutput out;
  out.stages.resize(kStageCount);
  std::optional<DecisionMap> previous;
  std::vector<Tensor> skips;

  auto run_stage = [&](std::size_t s, Tensor feat) {
    StageTrace& trace = out.stages[s];
    BlockContext ctx;
    ctx.mode = mode;
    ctx.beta = options.beta.value_or(config_.beta);
    ctx.s = options.s.value_or(config_.s);
    ctx.tau = config_.tau;
    ctx.rng = rng;
    ctx.pruning = config_.prunes(s);
    ctx.straight_through = options.straight_through;
    ctx.skip_train_remask = config_.skip_train_remask;
    ctx.detach_predictor_input = config_.detach_predictor_input;
    ctx.leff_variant = config_.leff_variant;
    ctx.prev_decision = previous ? &*previous : nullptr;
    if (!options.forced.empty() && options.forced[s]) ctx.forced_decision = &*options.forced[s];
    for (std::size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      if (b > 0) ctx.stage_decision = &trace.decision;
      BlockOutput bo = adawpt_forward(feat, stages_[s].blocks[b], ctx);
      if (b == 0) {
        trace.decision = bo.decision;
        trace.confidence = bo.confidence;
        trace.window_count = bo.window_keep.size();
      }
      trace.window_keep.push_back(std::move(bo.window_keep));
      feat = bo.x;
    }
    previous = trace.decision;
    return feat;
  };

  constexpr std::size_t half = kStageCount / 2;
  for (std::size_t s = 0; s < half; ++s) {
    x = run_stage(s, x);
    skips.push_back(x);
    x = down_[s](x);
  }
  x = run_stage(half, x);
  for (std::size_t s = half + 1; s < kStageCount; ++s) {
    const std::size_t d = s - half - 1;
    x = up_[d](x);
    const Tensor& skip = skips[half - 1 - d];
    const std::size_t h = skip.dim(1), w = skip.dim(2);
    x = from_tokens(skip_[d](to_tokens(ops::concat({x, skip}, 0))), h, w);
    x = run_stage(s, x);
  }

  const Tensor residual = ops::conv2d(x, out_weight_, out_bias_, 1, ops::Padding::zero(1));
  Tensor restored = ops::add(padded, residual);
  if (hp != H) restored = ops::slice(restored, 1, 0, H);
  if (wp != W) restored = ops::slice(restored, 2, 0, W);
  out.restored = restored;
  return out;
}

ParamList Model::parameters() const {
  ParamList p;
  p.push_back({"in_proj.weight", in_weight_});
  p.push_back({"in_proj.bias", in_bias_});
  in_norm_.collect("in_proj.norm", p);
  std::size_t up_index = 0;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::string sp = "stage" + std::to_string(s + 1);
    if (s > kStageCount / 2) {
      up_[up_index].collect(sp + ".up", p);
      skip_[up_index].collect(sp + ".skip", p);
      ++up_index;
    }
    for (std::size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      stages_[s].blocks[b].collect(sp + ".block" + std::to_string(b), p);
    }
    if (s < kStageCount / 2) down_[s].collect(sp + ".down", p);
  }
  p.push_back({"out_proj.weight", out_weight_});
  p.push_back({"out_proj.bias", out_bias_});
  return p;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

std::size_t analytic_parameter_count(const ModelConfig& config) {
  const std::size_t c0 = config.base_channels, w = config.window_size;
  std::size_t n = 27 * c0 + c0 + 2 * c0;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::size_t c = config.stage_channels(s), h = config.heads[s];
    const std::size_t block = 2 * c + (3 * c * c + 3 * c) + (c * c + c) + (2 * w - 1) * (2 * w - 1) * h + 2 * c +
                              (4 * c * c + 4 * c) + (36 * c + 4 * c) + (4 * c * c + c);
    n += config.depths[s] * block;
    if (config.prunes(s)) n += 3 * (c * c / 2 + c / 2) + (c + 2);
    if (s < kStageCount / 2) n += 16 * c * (2 * c) + 2 * c;
    if (s > kStageCount / 2) {
      n += 4 * (2 * c) * c + c;
      n += 2 * c * c + c;
    }
  }
  n += 27 * c0 + 3;
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O (little-endian host assumed)

namespace {

constexpr char kMagic[4] = {'L', 'M', 'D', 'V'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : f_(path, std::ios::binary), path_(path.string()) {
    if (!f_) throw FormatError("cannot open checkpoint " + path_);
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    f_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f_.gcount()) != n) throw FormatError("checkpoint " + path_ + " truncated in " + what);
  }
  template <typename T>
  T get(const char* what) {
    T v{};
    bytes(&v, sizeof(T), what);
    return v;
  }
  bool at_end() { return f_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream f_;
  std::string path_;
};

}  // namespace

void Model::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write checkpoint " + path.string());
  f.write(kMagic, 4);
  put<std::uint32_t>(f, kCheckpointVersion);
  const std::string blob = to_json(config_).dump();
  put<std::uint64_t>(f, blob.size());
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (const auto& [name, t] : parameters()) {
    put<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(f, e);
    f.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!f) throw UsageError("failed writing checkpoint " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic): " + path.string());
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto blob_size = r.get<std::uint64_t>("config length");
  if (blob_size > (std::uint64_t{1} << 24)) throw FormatError("checkpoint config blob too large");
  std::string blob(blob_size, '\0');
  r.bytes(blob.data(), blob.size(), "config");
  ModelConfig config;
  try {
    config = model_config_from_json(nlohmann::json::parse(blob));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config rejected: ") + e.what());
  }

  Model m = build(config, 0);
  std::map<std::string, Tensor> slots;
  for (auto& [name, t] : m.parameters()) slots.emplace(name, t);
  while (!r.at_end()) {
    const auto name_len = r.get<std::uint32_t>("record name length");
    if (name_len > 4096) throw FormatError("checkpoint record name too long");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "record name");
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("checkpoint has unknown parameter '" + name + "'");
    const auto rank = r.get<std::uint32_t>("record rank");
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint64_t>("record extents");
    if (shape != it->second.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                        shape_str(it->second.shape()));
    }
    auto dst = it->second.mutable_data();
    r.bytes(dst.data(), dst.size() * sizeof(double), "record data");
    slots.erase(it);
  }
  if (!slots.empty()) throw FormatError("checkpoint is missing parameter '" + slots.begin()->first + "'");
  return m;
}

}  // namespace lmdvit
