#include "insgen/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <set>

#include "insgen/config.hpp"
#include "insgen/plot.hpp"
#include "insgen/rng.hpp"

namespace insgen {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCliSampleStream = 0x636c69;

void write_run_plots(const std::filesystem::path& out_dir, const std::vector<RunRecord>& records,
                     const Dataset& dataset, const TrainConfig& tc, const TrainState& state) {
  // Final sample scatter over the dataset.
  const int n_plot = std::min(4 * dataset.count(), 4096);
  Tensor samples = sample_generator(state.gen_ema, std::max(n_plot, 16), tc.latent_dim,
                                    RngStream(tc.seed).substream(kCliSampleStream));
  PlotSeries data_series{"data", "#9e9e9e", {}};
  for (int i = 0; i < dataset.count(); ++i) {
    data_series.points.emplace_back(dataset.samples.at(i, 0),
                                    dataset.dim() > 1 ? dataset.samples.at(i, 1) : 0.0);
  }
  PlotSeries fake_series{"samples", "#1565c0", {}};
  for (int i = 0; i < samples.rows(); ++i) {
    fake_series.points.emplace_back(samples.at(i, 0), samples.cols() > 1 ? samples.at(i, 1) : 0.0);
  }
  write_scatter_svg(out_dir / "samples.svg", {data_series, fake_series}, "generated samples");

  auto curve = [&](auto getter) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : records) pts.emplace_back(static_cast<double>(r.step), getter(r));
    return pts;
  };
  write_line_svg(out_dir / "losses.svg",
                 {{"l_d", "#c62828", curve([](const RunRecord& r) { return r.l_d; })},
                  {"l_g", "#1565c0", curve([](const RunRecord& r) { return r.l_g; })},
                  {"c_r_d", "#ef6c00", curve([](const RunRecord& r) { return r.c_r_d; })},
                  {"c_f_d", "#6a1b9a", curve([](const RunRecord& r) { return r.c_f_d; })},
                  {"c_f_g", "#2e7d32", curve([](const RunRecord& r) { return r.c_f_g; })}},
                 "loss terms");
  write_line_svg(out_dir / "logits.svg",
                 {{"real", "#2e7d32", curve([](const RunRecord& r) { return r.mean_real_logit; })},
                  {"fake", "#c62828", curve([](const RunRecord& r) { return r.mean_fake_logit; })}},
                 "discriminator logits");
  write_line_svg(out_dir / "frechet.svg",
                 {{"frechet", "#1565c0", curve([](const RunRecord& r) { return r.frechet; })}},
                 "Frechet distance", /*log_y=*/true);
}

json resolve_config(const std::filesystem::path& config_path, const std::vector<std::string>& overrides) {
  json cfg = load_config_file(config_path);
  apply_env_overrides(cfg);
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

}  // namespace

TrainingOutcome run_training_job(const json& cfg, const std::filesystem::path& out_dir) {
  Dataset dataset = materialize_dataset(cfg);
  TrainConfig tc = materialize_train_config(cfg);

  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / "config_resolved.json") << cfg.dump(2) << "\n";

  TrainingOutcome outcome;
  outcome.out_dir = out_dir;
  RunOptions opts;
  opts.out_dir = out_dir;
  opts.sink = [&outcome](const RunRecord& r) { outcome.records.push_back(r); };
  TrainState state = run(tc, dataset, opts);
  write_run_plots(out_dir, outcome.records, dataset, tc, state);
  return outcome;
}

int cmd_train(const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
              const std::filesystem::path& out_dir) {
  json cfg = resolve_config(config_path, overrides);
  TrainingOutcome outcome = run_training_job(cfg, out_dir);
  if (!outcome.records.empty()) {
    const RunRecord& last = outcome.records.back();
    std::printf("finished %llu steps: frechet=%.4f modes=%d hq=%.3f\n",
                static_cast<unsigned long long>(last.step), last.frechet, last.mode_coverage,
                last.hq_fraction);
  } else {
    std::printf("finished 0 steps (initial checkpoint only)\n");
  }
  return 0;
}

int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_arg,
             const std::filesystem::path& out_dir) {
  CheckpointInfo info = checkpoint_peek(checkpoint);
  if (info.config_json.empty()) {
    throw std::runtime_error("checkpoint carries no embedded config: " + checkpoint.string());
  }
  json cfg = json::parse(info.config_json);
  validate_config(cfg);

  Dataset dataset;
  if (dataset_arg.extension() == ".csv") {
    dataset = load_table(dataset_arg);
  } else {
    json ds_cfg = load_config_file(dataset_arg);
    dataset = materialize_dataset(ds_cfg);
  }

  TrainConfig tc = materialize_train_config(cfg);
  TrainState state = checkpoint_load(checkpoint, tc, dataset);

  const int count = 10 * dataset.count();
  Tensor samples = sample_generator(state.gen_ema, count, tc.latent_dim,
                                    RngStream(tc.seed).substream(kCliSampleStream).substream(1));

  const double frechet = frechet_distance(fit_gaussian(dataset.samples), fit_gaussian(samples));
  ModeCoverage cov;
  if (dataset.meta.centers) {
    cov = mode_coverage(samples, *dataset.meta.centers, dataset.meta.sigma, tc.hq_radius_mult);
  }
  // Memorization diagnostic against an even/odd split of the reference set.
  double gap = 0.0;
  if (dataset.count() >= 2) {
    const int half = dataset.count() / 2;
    Tensor train_ref = Tensor::zeros({half, dataset.dim()});
    Tensor holdout = Tensor::zeros({dataset.count() - half, dataset.dim()});
    for (int i = 0; i < dataset.count(); ++i) {
      Tensor& dst = i < half ? train_ref : holdout;
      const int r = i < half ? i : i - half;
      for (int j = 0; j < dataset.dim(); ++j) dst.at(r, j) = dataset.samples.at(i, j);
    }
    gap = memorization_gap(samples, train_ref, holdout);
  }

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "eval_metrics.csv");
    if (!out) throw std::runtime_error("cannot write eval metrics");
    char buf[256];
    out << "metric,value\n";
    std::snprintf(buf, sizeof(buf), "frechet,%.17g\n", frechet);
    out << buf;
    std::snprintf(buf, sizeof(buf), "mode_coverage,%d\n", cov.covered);
    out << buf;
    std::snprintf(buf, sizeof(buf), "hq_fraction,%.17g\n", cov.hq_fraction);
    out << buf;
    std::snprintf(buf, sizeof(buf), "memorization_gap,%.17g\n", gap);
    out << buf;
    std::snprintf(buf, sizeof(buf), "samples,%d\n", count);
    out << buf;
  }
  {
    Dataset fake_ds;
    fake_ds.samples = samples;
    save_table(fake_ds, out_dir / "samples.csv");
  }
  {
    PlotSeries data_series{"data", "#9e9e9e", {}};
    for (int i = 0; i < dataset.count(); ++i) {
      data_series.points.emplace_back(dataset.samples.at(i, 0),
                                      dataset.dim() > 1 ? dataset.samples.at(i, 1) : 0.0);
    }
    PlotSeries fake_series{"samples", "#1565c0", {}};
    for (int i = 0; i < samples.rows(); ++i) {
      fake_series.points.emplace_back(samples.at(i, 0), samples.cols() > 1 ? samples.at(i, 1) : 0.0);
    }
    write_scatter_svg(out_dir / "samples.svg", {data_series, fake_series}, "evaluation samples");
  }
  std::printf("eval: frechet=%.4f modes=%d hq=%.3f gap=%.4f\n", frechet, cov.covered,
              cov.hq_fraction, gap);
  return 0;
}

int cmd_ablate(const std::filesystem::path& config_path, const std::vector<std::string>& presets,
               const std::vector<std::string>& overrides, const std::filesystem::path& out_dir) {
  if (presets.empty()) throw std::invalid_argument("ablate: at least one preset is required");
  json base = resolve_config(config_path, overrides);

  std::vector<std::pair<std::string, RunRecord>> finals;
  for (const auto& preset : presets) {
    json cfg = base;
    apply_preset(cfg, preset);
    std::string dir_name = preset;
    std::replace(dir_name.begin(), dir_name.end(), '+', 'p');
    TrainingOutcome outcome = run_training_job(cfg, out_dir / dir_name);
    RunRecord last = outcome.records.empty() ? RunRecord{} : outcome.records.back();
    finals.emplace_back(preset, last);
    std::printf("%-12s frechet=%.4f modes=%d hq=%.3f\n", preset.c_str(), last.frechet,
                last.mode_coverage, last.hq_fraction);
  }

  if (finals.size() > 1) {
    std::ofstream out(out_dir / "ablation_summary.csv");
    if (!out) throw std::runtime_error("cannot write ablation summary");
    out << "preset,frechet,mode_coverage,hq_fraction\n";
    char buf[256];
    for (const auto& [preset, rec] : finals) {
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%d,%.17g\n", preset.c_str(), rec.frechet,
                    rec.mode_coverage, rec.hq_fraction);
      out << buf;
    }
  }
  return 0;
}

int cmd_sweep_queue(const std::filesystem::path& config_path, const std::vector<int>& lengths,
                    const std::vector<std::string>& overrides, const std::filesystem::path& out_dir,
                    bool parallel) {
  json base = resolve_config(config_path, overrides);

  std::vector<int> distinct;
  for (int len : lengths) {
    if (len <= 0) throw std::invalid_argument("sweep-queue: lengths must be positive, got " + std::to_string(len));
    if (std::find(distinct.begin(), distinct.end(), len) != distinct.end()) {
      std::fprintf(stderr, "warning: duplicate queue length %d ignored\n", len);
      continue;
    }
    distinct.push_back(len);
  }
  if (distinct.empty()) throw std::invalid_argument("sweep-queue: no queue lengths given");

  auto run_one = [&](int len) {
    json cfg = base;
    cfg["contrastive"]["queue_fake"] = len;
    TrainingOutcome outcome = run_training_job(cfg, out_dir / ("queue_" + std::to_string(len)));
    return outcome.records.empty() ? RunRecord{} : outcome.records.back();
  };

  std::vector<RunRecord> finals(distinct.size());
  if (parallel) {
    std::vector<std::future<RunRecord>> futures;
    for (int len : distinct) {
      futures.push_back(std::async(std::launch::async, run_one, len));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) finals[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < distinct.size(); ++i) finals[i] = run_one(distinct[i]);
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "queue_sweep.csv");
  if (!out) throw std::runtime_error("cannot write sweep table");
  out << "queue_fake,frechet,mode_coverage,hq_fraction\n";
  char buf[256];
  PlotSeries curve{"frechet", "#1565c0", {}};
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%d,%.17g\n", distinct[i], finals[i].frechet,
                  finals[i].mode_coverage, finals[i].hq_fraction);
    out << buf;
    curve.points.emplace_back(static_cast<double>(distinct[i]), finals[i].frechet);
    std::printf("queue=%d frechet=%.4f modes=%d\n", distinct[i], finals[i].frechet,
                finals[i].mode_coverage);
  }
  write_line_svg(out_dir / "queue_sweep.svg", {curve}, "Frechet vs fake-queue capacity");
  return 0;
}

int run_cli(std::vector<std::string> args) {
  CLI::App app{"InsGen desk-scale GAN laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::vector<std::string> overrides;

  auto* train = app.add_subcommand("train", "run a training job");
  train->add_option("config", config_path, "config file")->required();
  train->add_option("--set", overrides, "override: section.key=value");
  train->add_option("--out", out_dir, "output directory");

  std::string ckpt_path, dataset_arg;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("dataset", dataset_arg, "dataset config file or csv")->required();
  eval->add_option("--out", out_dir, "output directory");

  std::vector<std::string> presets;
  auto* ablate = app.add_subcommand("ablate", "run ablation presets");
  ablate->add_option("config", config_path, "config file")->required();
  ablate->add_option("--preset", presets, "preset name (repeatable)")
      ->check(CLI::IsMember(ablation_presets()));
  ablate->add_option("--set", overrides, "override: section.key=value");
  ablate->add_option("--out", out_dir, "output directory");

  std::vector<int> lengths;
  bool parallel = false;
  auto* sweep = app.add_subcommand("sweep-queue", "sweep fake-queue capacity");
  sweep->add_option("config", config_path, "config file")->required();
  sweep->add_option("--lengths", lengths, "queue lengths")->required();
  sweep->add_option("--set", overrides, "override: section.key=value");
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_flag("--parallel", parallel, "run lengths concurrently");

  std::vector<const char*> argv;
  argv.push_back("insgen");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) return cmd_train(config_path, overrides, out_dir);
    if (eval->parsed()) return cmd_eval(ckpt_path, dataset_arg, out_dir);
    if (ablate->parsed()) {
      if (presets.empty()) presets = ablation_presets();
      return cmd_ablate(config_path, presets, overrides, out_dir);
    }
    if (sweep->parsed()) return cmd_sweep_queue(config_path, lengths, overrides, out_dir, parallel);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace insgen
