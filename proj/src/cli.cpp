#include "lmdvit/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "lmdvit/data.hpp"
#include "lmdvit/errors.hpp"
#include "lmdvit/flops.hpp"
#include "lmdvit/model.hpp"
#include "lmdvit/train.hpp"

namespace lmdvit {

namespace {

namespace fs = std::filesystem;

RunConfig resolve_config(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw UsageError("--beta must lie in (0,1), got " + std::to_string(beta));
}

void check_s(const std::optional<double>& s) {
  if (s && !(*s > 0.0 && *s <= 1.0)) throw UsageError("--s must lie in (0,1], got " + std::to_string(*s));
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot write " + path);
  f << j.dump(2) << "\n";
}

struct GenArgs {
  std::string config, out, split = "train";
  std::size_t count = 0, test_count = 0;
  std::uint64_t seed = 0;
  bool force = false;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  const RunConfig rc = resolve_config(a.config);
  std::vector<DatasetSplit> splits{{a.split, a.count}};
  if (a.test_count > 0) splits.push_back({"test", a.test_count});
  write_dataset(a.out, splits, a.seed, rc.data, a.force);
  out << "wrote " << a.count + a.test_count << " samples to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, ckpt, log;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = resolve_config(a.config);
  if (a.steps) rc.train.steps = *a.steps;
  if (a.seed) rc.train.seed = *a.seed;
  const std::string data_dir = a.data.empty() ? rc.io.data_dir : a.data;
  if (data_dir.empty()) throw UsageError("train needs --data or io.data_dir");
  const std::string hash = config_hash(rc);
  const auto data = load_split(data_dir, rc.io.train_split);
  Model model = Model::build(rc.model, rc.train.seed);
  out << "config " << hash << ", " << model.parameter_count() << " parameters, " << data.size() << " samples\n";
  const TrainResult result = train(model, data, rc.train);
  model.save(a.ckpt);
  write_train_log(a.log.empty() ? a.ckpt + ".log.csv" : a.log, result.log, hash);
  char buf[64];
  out << "final loss " << result.log.back().loss << "\nkept-window ratio per stage:";
  for (double k : result.kept_ratio) {
    std::snprintf(buf, sizeof buf, " %.3f", k);
    out << buf;
  }
  out << "\n";
  return kExitOk;
}

struct InferArgs {
  std::string ckpt, input, output, dump;
  double beta = 0.5;
  std::optional<double> s;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  check_beta(a.beta);
  check_s(a.s);
  const Model model = Model::load(a.ckpt);
  const Tensor image = read_image(a.input);
  ForwardOptions fo;
  fo.beta = a.beta;
  fo.s = a.s;
  const ModelOutput result = model.forward(image, Mode::infer, nullptr, fo);
  write_image(a.output, result.restored);
  if (!a.dump.empty()) {
    fs::create_directories(a.dump);
    const std::size_t H = image.dim(1), W = image.dim(2);
    for (std::size_t s = 0; s < kStageCount; ++s) {
      const DecisionMap& d = result.stages[s].decision;
      const std::size_t f = std::size_t{1} << ModelConfig::stage_scale(s);
      std::vector<double> plane(H * W);
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) plane[y * W + x] = d.values()[(y / f) * d.width + x / f];
      }
      write_mask(fs::path(a.dump) / ("stage" + std::to_string(s + 1) + ".pgm"), Tensor::from({1, H, W}, plane));
    }
  }
  out << "kept-window ratio per stage:";
  char buf[32];
  for (const auto& st : result.stages) {
    std::snprintf(buf, sizeof buf, " %.3f", st.kept_ratio());
    out << buf;
  }
  out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt, data, split = "test", report = "eval.csv", flops_json, sweep_report;
  double beta = 0.5;
  std::optional<double> s;
  std::vector<double> betas;
  bool baseline = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  check_beta(a.beta);
  check_s(a.s);
  for (double b : a.betas) check_beta(b);
  const Model model = Model::load(a.ckpt);
  const auto data = load_split(a.data, a.split);
  if (data.empty()) throw UsageError("split '" + a.split + "' is empty");
  EvalOptions eo;
  eo.beta = a.beta;
  eo.s = a.s;
  eo.threads = eval_threads_from_env();
  eo.identity = a.baseline;
  const EvalSummary summary = evaluate(model, data, eo);
  write_eval_csv(a.report, summary);
  write_json(a.flops_json.empty() ? a.report + ".flops.json" : a.flops_json, summary.flops.to_json());
  char buf[256];
  std::snprintf(buf, sizeof buf, "psnr %.3f ssim %.4f psnr_w %.3f ssim_w %.4f precision %.3f kept %.3f flops_reduction %.3f\n",
                summary.mean.psnr, summary.mean.ssim, summary.mean.psnr_w, summary.mean.ssim_w, summary.mean.precision,
                summary.mean.kept_ratio, summary.flops.reduction());
  out << buf;
  if (!a.betas.empty()) {
    const std::string path = a.sweep_report.empty() ? a.report + ".sweep.csv" : a.sweep_report;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw UsageError("cannot write " + path);
    f << "beta,psnr,ssim,psnr_w,ssim_w,precision,kept_ratio,flops,reduction_ratio\n";
    for (double b : a.betas) {
      eo.beta = b;
      const EvalSummary s = evaluate(model, data, eo);
      std::snprintf(buf, sizeof buf, "%.3f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6g,%.6f\n", b, s.mean.psnr, s.mean.ssim,
                    s.mean.psnr_w, s.mean.ssim_w, s.mean.precision, s.mean.kept_ratio, s.flops.pruned_total,
                    s.flops.reduction());
      f << buf;
    }
  }
  return kExitOk;
}

struct FlopsArgs {
  std::string config, ckpt, out;
  std::size_t height = 64, width = 64;
  double keep_fraction = 1.0;
};

int cmd_flops(const FlopsArgs& a, std::ostream& out) {
  if (!(a.keep_fraction >= 0.0 && a.keep_fraction <= 1.0)) throw UsageError("--keep-fraction must lie in [0,1]");
  if (a.height == 0 || a.width == 0) throw UsageError("--height and --width must be positive");
  const ModelConfig mc = a.ckpt.empty() ? resolve_config(a.config).model : Model::load(a.ckpt).config();
  const FlopsReport r = flops_report(mc, a.height, a.width, kept_fraction(mc, a.height, a.width, a.keep_fraction));
  if (a.out.empty()) {
    out << r.to_json().dump(2) << "\n";
  } else {
    write_json(a.out, r.to_json());
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local motion deblurring transformer with adaptive window pruning"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic locally blurred dataset");
  g->add_option("--config", gen.config, "Run config JSON (data section)");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--count", gen.count, "Samples in the main split")->required();
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_option("--split", gen.split, "Name of the main split");
  g->add_option("--test-count", gen.test_count, "Samples in an extra 'test' split");
  g->add_flag("--force", gen.force, "Allow writing into a non-empty directory");

  TrainArgs tr;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "Run config JSON");
  t->add_option("--data", tr.data, "Dataset directory");
  t->add_option("--out-ckpt", tr.ckpt, "Checkpoint to write")->required();
  t->add_option("--log", tr.log, "Training log CSV (default <ckpt>.log.csv)");
  auto* steps_opt = t->add_option("--steps", steps, "Override train.steps");
  auto* seed_opt = t->add_option("--seed", seed, "Override train.seed");

  InferArgs inf;
  double infer_s = 0.0;
  auto* i = app.add_subcommand("infer", "Deblur one PPM image");
  i->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  i->add_option("--input", inf.input, "Input PPM")->required();
  i->add_option("--output", inf.output, "Output PPM")->required();
  i->add_option("--beta", inf.beta, "Keep threshold on blurriness confidence");
  auto* infer_s_opt = i->add_option("--s", infer_s, "Window keep threshold");
  i->add_option("--dump-decisions", inf.dump, "Directory for per-stage decision PGMs");

  EvalArgs ev;
  double eval_s = 0.0;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--split", ev.split, "Split name");
  e->add_option("--beta", ev.beta, "Keep threshold");
  auto* eval_s_opt = e->add_option("--s", eval_s, "Window keep threshold");
  e->add_option("--betas", ev.betas, "Beta sweep values")->delimiter(',');
  e->add_option("--report", ev.report, "Metrics CSV");
  e->add_option("--flops-json", ev.flops_json, "FLOPs JSON (default <report>.flops.json)");
  e->add_option("--sweep-report", ev.sweep_report, "Beta sweep CSV (default <report>.sweep.csv)");
  e->add_flag("--baseline", ev.baseline, "Score the blurred input instead of the model output");

  FlopsArgs fl;
  auto* f = app.add_subcommand("flops", "Analytic FLOPs report");
  f->add_option("--config", fl.config, "Run config JSON");
  f->add_option("--ckpt", fl.ckpt, "Checkpoint (overrides --config)");
  f->add_option("--height", fl.height, "Input height");
  f->add_option("--width", fl.width, "Input width");
  f->add_option("--keep-fraction", fl.keep_fraction, "Fraction of windows kept in pruning stages");
  f->add_option("--out", fl.out, "Output JSON (default stdout)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen, out);
    if (t->parsed()) {
      if (steps_opt->count() > 0) tr.steps = steps;
      if (seed_opt->count() > 0) tr.seed = seed;
      return cmd_train(tr, out);
    }
    if (i->parsed()) {
      if (infer_s_opt->count() > 0) inf.s = infer_s;
      return cmd_infer(inf, out);
    }
    if (e->parsed()) {
      if (eval_s_opt->count() > 0) ev.s = eval_s;
      return cmd_eval(ev, out);
    }
    if (f->parsed()) return cmd_flops(fl, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& ex) {
    err << "format error: " << ex.what() << "\n";
    return kExitData;
  } catch (const DimensionError& ex) {
    err << "data error: " << ex.what() << "\n";
    return kExitData;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& ex) {
    err << "io error: " << ex.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace lmdvit
