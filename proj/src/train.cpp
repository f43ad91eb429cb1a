#include "lmdvit/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "lmdvit/errors.hpp"
#include "lmdvit/metrics.hpp"
#include "lmdvit/ops.hpp"
#include "lmdvit/optim.hpp"

namespace lmdvit {

// ---------------------------------------------------------------------------
// Run configuration

namespace {

using json = nlohmann::json;

template <typename Fn>
void for_keys(const json& j, const char* section, Fn&& fn) {
  if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
  for (const auto& [key, v] : j.items()) {
    if (!fn(key, v)) throw ConfigError(std::string("unknown key '") + key + "' in section '" + section + "'");
  }
}

json to_json(const LossWeights& w) {
  return {{"lambda0", w.lambda0}, {"w", w.w}, {"lambda1", w.lambda1}, {"lambda2", w.lambda2}, {"lambda3", w.lambda3}};
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"train",
           {{"steps", c.train.steps},
            {"batch_size", c.train.batch_size},
            {"lr", c.train.lr},
            {"min_lr", c.train.min_lr},
            {"cosine_period", c.train.cosine_period},
            {"weight_decay", c.train.weight_decay},
            {"seed", c.train.seed},
            {"dense_warmup_steps", c.train.dense_warmup_steps},
            {"loss", to_json(c.train.loss)}}},
          {"data", to_json(c.data)},
          {"eval", {{"betas", c.eval.betas}, {"s_values", c.eval.s_values}}},
          {"io",
           {{"data_dir", c.io.data_dir},
            {"train_split", c.io.train_split},
            {"eval_split", c.io.eval_split},
            {"checkpoint", c.io.checkpoint},
            {"log", c.io.log}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    for_keys(j, "root", [&](const std::string& key, const json& v) {
      if (key == "model") {
        c.model = model_config_from_json(v);
      } else if (key == "data") {
        c.data = gen_config_from_json(v);
      } else if (key == "train") {
        for_keys(v, "train", [&](const std::string& k, const json& x) {
          if (k == "steps") c.train.steps = x.get<std::size_t>();
          else if (k == "batch_size") c.train.batch_size = x.get<std::size_t>();
          else if (k == "lr") c.train.lr = x.get<double>();
          else if (k == "min_lr") c.train.min_lr = x.get<double>();
          else if (k == "cosine_period") c.train.cosine_period = x.get<std::size_t>();
          else if (k == "weight_decay") c.train.weight_decay = x.get<double>();
          else if (k == "seed") c.train.seed = x.get<std::uint64_t>();
          else if (k == "dense_warmup_steps") c.train.dense_warmup_steps = x.get<std::size_t>();
          else if (k == "loss") {
            for_keys(x, "train.loss", [&](const std::string& lk, const json& lv) {
              if (lk == "lambda0") c.train.loss.lambda0 = lv.get<double>();
              else if (lk == "w") c.train.loss.w = lv.get<double>();
              else if (lk == "lambda1") c.train.loss.lambda1 = lv.get<double>();
              else if (lk == "lambda2") c.train.loss.lambda2 = lv.get<double>();
              else if (lk == "lambda3") c.train.loss.lambda3 = lv.get<double>();
              else return false;
              return true;
            });
          } else {
            return false;
          }
          return true;
        });
      } else if (key == "eval") {
        for_keys(v, "eval", [&](const std::string& k, const json& x) {
          if (k == "betas") c.eval.betas = x.get<std::vector<double>>();
          else if (k == "s_values") c.eval.s_values = x.get<std::vector<double>>();
          else return false;
          return true;
        });
      } else if (key == "io") {
        for_keys(v, "io", [&](const std::string& k, const json& x) {
          if (k == "data_dir") c.io.data_dir = x.get<std::string>();
          else if (k == "train_split") c.io.train_split = x.get<std::string>();
          else if (k == "eval_split") c.io.eval_split = x.get<std::string>();
          else if (k == "checkpoint") c.io.checkpoint = x.get<std::string>();
          else if (k == "log") c.io.log = x.get<std::string>();
          else return false;
          return true;
        });
      } else {
        return false;
      }
      return true;
    });
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  if (c.train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (c.train.cosine_period == 0) throw ConfigError("train.cosine_period must be >= 1");
  if (!(c.train.lr > 0.0) || c.train.min_lr < 0.0) throw ConfigError("learning rates must be positive");
  c.train.loss.validate();
  for (double b : c.eval.betas) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("eval.betas entries must lie in (0,1)");
  }
  for (double s : c.eval.s_values) {
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("eval.s_values entries must lie in (0,1]");
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<double> padded_mask(const Model& model, const Tensor& mask) {
  const auto [hp, wp] = model.padded_extents(mask.dim(1), mask.dim(2));
  return reflect_pad_to(mask, hp, wp).values();
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<std::optional<DecisionMap>> all_kept(const Model& model, const Tensor& image) {
  const auto [hp, wp] = model.padded_extents(image.dim(1), image.dim(2));
  std::vector<std::optional<DecisionMap>> forced;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const auto [h, w] = Model::stage_grid(s, hp, wp);
    forced.emplace_back(DecisionMap::ones(h, w));
  }
  return forced;
}

}  // namespace

TrainResult train(Model& model, const std::vector<BlurSample>& data, const TrainConfig& config,
                  const std::function<void(const LogRow&)>& on_step) {
  if (data.empty() && config.steps > 0) throw UsageError("training needs at least one sample");
  config.loss.validate();
  const ParamList named = model.parameters();
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.tensor);
  AdamWOptions opts;
  opts.weight_decay = config.weight_decay;
  AdamW optim(params, opts);
  const CosineSchedule schedule{config.lr, config.min_lr, static_cast<std::int64_t>(config.cosine_period)};

  const CounterRng root(config.seed);
  CounterRng order_rng = root.split(1);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();

  TrainResult result;
  std::vector<double> kept_sum(kStageCount, 0.0);
  std::size_t kept_samples = 0;
  const std::size_t last_pass_start = config.steps * config.batch_size > data.size()
                                          ? config.steps * config.batch_size - data.size()
                                          : 0;
  std::size_t seen = 0;

  for (std::size_t step = 0; step <= config.steps; ++step) {
    const bool update = step < config.steps;
    const double lr = schedule.lr(static_cast<std::int64_t>(step));
    LogRow row{step, lr, 0.0, 0.0, 0.0, 0.0};
    optim.zero_grad();
    // Step `steps` only evaluates the final loss.
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }
        cursor = 0;
      }
      const BlurSample& sample = data[order[cursor++]];
      CounterRng noise = root.split(2).split(step * config.batch_size + b);
      NanTrapGuard trap;
      ForwardOptions fo;
      if (step < config.dense_warmup_steps) fo.forced = all_kept(model, sample.blurred);
      const ModelOutput out = model.forward(sample.blurred, Mode::train, &noise, fo);
      std::vector<const ConfidenceMap*> confs;
      for (const auto& st : out.stages) {
        if (st.confidence) confs.push_back(&*st.confidence);
      }
      const auto [hp, wp] = model.padded_extents(sample.mask.dim(1), sample.mask.dim(2));
      const Tensor lp = confs.empty() ? Tensor::scalar(0.0)
                                      : pruning_loss(confs, padded_mask(model, sample.mask), hp, wp, config.loss);
      const Tensor lr_loss = reconstruction_loss(out.restored, sample.sharp, sample.mask, config.loss);
      const Tensor total = ops::scale(ops::add(lr_loss, lp), 1.0 / static_cast<double>(config.batch_size));
      if (!std::isfinite(total.item())) throw NumericError("non-finite training loss at step " + std::to_string(step));
      row.loss_r += lr_loss.item() / static_cast<double>(config.batch_size);
      row.loss_p += lp.item() / static_cast<double>(config.batch_size);
      row.psnr += psnr(out.restored.detach(), sample.sharp) / static_cast<double>(config.batch_size);
      if (update) {
        backward(total);
        if (seen >= last_pass_start) {
          for (std::size_t s = 0; s < kStageCount; ++s) kept_sum[s] += out.stages[s].kept_ratio();
          ++kept_samples;
        }
        ++seen;
      } else {
        Tape::current().clear();
      }
    }
    row.loss = row.loss_r + row.loss_p;
    if (update) {
      for (const auto& p : named) {
        if (p.tensor.has_grad() && !all_finite(p.tensor.grad())) {
          throw NumericError("non-finite gradient in parameter '" + p.name + "' at step " + std::to_string(step));
        }
      }
      optim.step(lr);
    }
    result.log.push_back(row);
    if (on_step) on_step(row);
  }
  optim.zero_grad();
  result.kept_ratio.assign(kStageCount, 1.0);
  if (kept_samples > 0) {
    for (std::size_t s = 0; s < kStageCount; ++s) result.kept_ratio[s] = kept_sum[s] / static_cast<double>(kept_samples);
  }
  return result;
}

void write_train_log(const std::string& path, const std::vector<LogRow>& log, const std::string& hash) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot write log " + path);
  f << "# config " << hash << "\n";
  f << "step,lr,loss,loss_r,loss_p,psnr\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.12g,%.12g,%.12g,%.6f\n", r.step, r.lr, r.loss, r.loss_r, r.loss_p,
                  r.psnr);
    f << buf;
  }
}

// ---------------------------------------------------------------------------
// Evaluation

std::size_t eval_threads_from_env() {
  const char* v = std::getenv("LMDVIT_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string("LMDVIT_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

EvalRow evaluate_sample(const Model& model, const BlurSample& sample, const EvalOptions& options,
                        const std::string& id) {
  if (!sample.mask.defined()) throw UsageError("sample " + id + " has no mask");
  EvalRow row;
  row.id = id;
  ForwardOptions fo;
  fo.beta = options.beta;
  fo.s = options.s;
  const ModelOutput out = model.forward(sample.blurred, Mode::infer, nullptr, fo);
  const Tensor& restored = options.identity ? sample.blurred : out.restored;
  const std::vector<double> mask = sample.mask.values();
  std::vector<double> inverse(mask.size());
  bool any_sharp = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    inverse[i] = mask[i] > 0.5 ? 0.0 : 1.0;
    any_sharp = any_sharp || inverse[i] > 0.5;
  }
  row.psnr = psnr(restored, sample.sharp);
  row.ssim = ssim(restored, sample.sharp);
  row.psnr_w = weighted_psnr(restored, sample.sharp, mask);
  row.ssim_w = weighted_ssim(restored, sample.sharp, mask);
  row.psnr_sharp = any_sharp ? weighted_psnr(restored, sample.sharp, inverse) : kPsnrCap;

  const auto [hp, wp] = model.padded_extents(sample.mask.dim(1), sample.mask.dim(2));
  const std::vector<double> pmask = reflect_pad_to(sample.mask, hp, wp).values();
  const StageTrace& last = out.stages.back();
  const WindowGrid grid = WindowGrid::make(1, hp, wp, model.config().window_size, false);
  row.precision = pruning_precision(last.window_keep.front(), grid, pmask);

  std::size_t kept = 0, total = 0;
  for (const auto& st : out.stages) {
    row.stage_kept_ratio.push_back(st.kept_ratio());
    for (const auto& k : st.window_keep) kept += count_kept(k);
    total += st.window_count * st.window_keep.size();
  }
  row.kept_ratio = static_cast<double>(kept) / static_cast<double>(total);
  row.kept = kept_counts(out);
  return row;
}

EvalSummary evaluate(const Model& model, const std::vector<BlurSample>& data, const EvalOptions& options) {
  EvalSummary summary;
  summary.rows.resize(data.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= data.size()) return;
      try {
        char id[16];
        std::snprintf(id, sizeof id, "%04zu", i);
        summary.rows[i] = evaluate_sample(model, data[i], options, id);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, data.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  EvalRow& m = summary.mean;
  m.id = "mean";
  const double n = static_cast<double>(data.size());
  if (data.empty()) return summary;
  m.psnr = m.ssim = m.psnr_w = m.ssim_w = m.psnr_sharp = m.precision = m.kept_ratio = 0.0;
  m.stage_kept_ratio.assign(kStageCount, 0.0);
  m.kept = summary.rows.front().kept;
  for (auto& stage : m.kept) std::fill(stage.begin(), stage.end(), 0.0);
  for (const auto& r : summary.rows) {
    m.psnr += r.psnr / n;
    m.ssim += r.ssim / n;
    m.psnr_w += r.psnr_w / n;
    m.ssim_w += r.ssim_w / n;
    m.psnr_sharp += r.psnr_sharp / n;
    m.precision += r.precision / n;
    m.kept_ratio += r.kept_ratio / n;
    for (std::size_t s = 0; s < kStageCount; ++s) {
      m.stage_kept_ratio[s] += r.stage_kept_ratio[s] / n;
      for (std::size_t b = 0; b < m.kept[s].size(); ++b) m.kept[s][b] += r.kept[s][b] / n;
    }
  }
  const Tensor& first = data.front().blurred;
  summary.flops = flops_report(model.config(), first.dim(1), first.dim(2), m.kept);
  return summary;
}

void write_eval_csv(const std::string& path, const EvalSummary& summary) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot write report " + path);
  f << "sample_id,psnr,ssim,psnr_w,ssim_w,precision,kept_ratio\n";
  char buf[256];
  auto emit = [&](const EvalRow& r) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.id.c_str(), r.psnr, r.ssim, r.psnr_w,
                  r.ssim_w, r.precision, r.kept_ratio);
    f << buf;
  };
  for (const auto& r : summary.rows) emit(r);
  emit(summary.mean);
}

}  // namespace lmdvit
