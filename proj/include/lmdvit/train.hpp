#pragma once

// Run configuration, the training loop and dataset evaluation.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmdvit/config.hpp"
#include "lmdvit/data.hpp"
#include "lmdvit/flops.hpp"
#include "lmdvit/losses.hpp"
#include "lmdvit/model.hpp"

namespace lmdvit {

struct TrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 1;
  double lr = 2e-4;
  double min_lr = 1e-6;
  std::size_t cosine_period = 2000;
  double weight_decay = 0.02;
  std::uint64_t seed = 0;
  /// Leading steps that keep every window; the predictor still learns from the pruning loss.
  std::size_t dense_warmup_steps = 0;
  LossWeights loss;
};

struct EvalConfig {
  std::vector<double> betas = {0.5};
  std::vector<double> s_values = {};
};

struct IoConfig {
  std::string data_dir;
  std::string train_split = "train";
  std::string eval_split = "test";
  std::string checkpoint;
  std::string log;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GenConfig data;
  EvalConfig eval;
  IoConfig io;
};

nlohmann::json to_json(const RunConfig& c);
/// Every section and key is optional; unknown keys anywhere raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
/// FNV-1a 64-bit hash of the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& c);

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_r = 0.0;
  double loss_p = 0.0;
  double psnr = 0.0;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<double> kept_ratio;  // per stage, averaged over the last pass over the data
};

/// Trains `model` in place. The loss before any update is logged as step 0.
/// Throws NumericError naming the first operation that produced a non-finite value.
TrainResult train(Model& model, const std::vector<BlurSample>& data, const TrainConfig& config,
                  const std::function<void(const LogRow&)>& on_step = {});

/// CSV with header `step,lr,loss,loss_r,loss_p,psnr` preceded by a `# config <hash>` line.
void write_train_log(const std::string& path, const std::vector<LogRow>& log, const std::string& hash);

struct EvalRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_w = 0.0;
  double ssim_w = 0.0;
  double psnr_sharp = 0.0;  // outside the mask; 99 when the mask covers everything
  double precision = 1.0;
  double kept_ratio = 1.0;
  std::vector<double> stage_kept_ratio;
  KeptCounts kept;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  EvalRow mean;
  FlopsReport flops;  // at the mean kept counts
};

struct EvalOptions {
  double beta = 0.5;
  std::optional<double> s;
  std::size_t threads = 1;
  /// Evaluate the blurred input itself instead of the model output.
  bool identity = false;
};

/// Worker count from LMDVIT_THREADS (default 1).
std::size_t eval_threads_from_env();

EvalRow evaluate_sample(const Model& model, const BlurSample& sample, const EvalOptions& options,
                        const std::string& id);
EvalSummary evaluate(const Model& model, const std::vector<BlurSample>& data, const EvalOptions& options);

/// Header: sample_id,psnr,ssim,psnr_w,ssim_w,precision,kept_ratio.
void write_eval_csv(const std::string& path, const EvalSummary& summary);

}  // namespace lmdvit
