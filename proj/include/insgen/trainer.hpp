#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "insgen/augment.hpp"
#include "insgen/contrastive.hpp"
#include "insgen/datasets.hpp"
#include "insgen/gan_losses.hpp"
#include "insgen/metrics.hpp"
#include "insgen/nets.hpp"
#include "insgen/tensor.hpp"

namespace insgen {

// Per-parameter-tensor Adam with bias correction. Parameters with no
// gradient buffer are treated as zero-gradient.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(double lr, double beta1, double beta2, double eps = 1e-8);

  void attach(std::vector<Tensor> params);
  void step();
  void zero_grad();

  std::uint64_t iterations() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v,
               std::uint64_t t);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// Stream keys for every stochastic draw in a run; all descend from
// (seed, key, step or d-call index). Exposed so reference computations in
// tests can replay the exact draws.
namespace trainer_stream {
inline constexpr std::uint64_t kBatch = 0x626174;
inline constexpr std::uint64_t kDStep = 0x647374;
inline constexpr std::uint64_t kGStep = 0x677374;
inline constexpr std::uint64_t kEval = 0x6576;
// Substream indices within a d-step / g-step.
inline constexpr std::uint64_t kLatent = 1;
inline constexpr std::uint64_t kRealAug = 2;
inline constexpr std::uint64_t kFakeAug = 3;
inline constexpr std::uint64_t kCr = 4;
inline constexpr std::uint64_t kCfLatent = 5;
inline constexpr std::uint64_t kCf = 6;
}  // namespace trainer_stream

struct AdaSettings {
  double p0 = 0.0;
  double target = 0.6;
  double step_size = 0.01;
  double p_max = 0.8;
  int window = 4;
  int interval = 4;  // d-steps between controller updates
};

struct TrainConfig {
  int steps = 20000;
  int batch = 32;
  double lr_d = 2.5e-3;
  double lr_g = 2.5e-3;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;
  double momentum_alpha = 0.999;
  std::uint64_t seed = 0;
  int eval_every = 500;
  int ckpt_every = 5000;
  int d_steps_per_g = 1;
  int r1_interval = 16;
  int eval_samples = 1024;
  double hq_radius_mult = 3.0;

  int latent_dim = 2;
  std::vector<int> g_hidden{64, 64, 64};
  std::vector<int> d_hidden{64, 64, 64};
  int feat_dim = 64;
  int proj_dim = 32;
  double lrelu_slope = 0.2;

  LossWeights weights;
  ContrastiveConfig contrastive;
  AugmentConfig augment;
  AdaSettings ada;

  // Canonical config document carried into checkpoints; empty outside the
  // CLI path.
  std::string config_json;

  void validate() const;
};

struct TrainState {
  std::uint64_t step = 0;
  // Total d_step invocations; derived as step * d_steps_per_g on resume.
  std::uint64_t d_calls = 0;
  NetworkParams gen;
  NetworkParams gen_ema;
  DiscriminatorBundle disc;
  DiscriminatorBundle disc_momentum;
  AdamOptimizer adam_d;
  AdamOptimizer adam_g;
  AdaState ada;
  FeatureQueue queue_real{1, 1};
  FeatureQueue queue_fake{1, 1};
  std::uint64_t seed = 0;
};

struct StepParts {
  double l_d = 0, c_r_d = 0, c_f_d = 0, r1 = 0;
  double l_g = 0, c_f_g = 0;
  double mean_real_logit = 0, mean_fake_logit = 0;
};

// Fresh state from config and dataset (queue capacities default to 5% of
// the dataset when unset).
TrainState init_state(const TrainConfig& cfg, const Dataset& dataset);

// One discriminator update on the given real batch: Eq.-10-style total,
// Adam on the online discriminator, momentum update, queue pushes, and the
// augmentation controller on schedule.
StepParts d_step(TrainState& state, const TrainConfig& cfg, const Tensor& real_batch);

// One generator update: adversarial + loop-back total, Adam on the
// generator, then the EMA copy.
StepParts g_step(TrainState& state, const TrainConfig& cfg);

using RecordSink = std::function<void(const RunRecord&)>;

struct RunOptions {
  std::filesystem::path out_dir;  // empty disables checkpoints and the CSV
  RecordSink sink;                // optional extra consumer of metric rows
};

// Alternating optimization from state.step to cfg.steps. Deterministic in
// (cfg, dataset, platform): every stochastic draw is derived from
// (seed, step index, purpose), so resuming from a checkpoint replays the
// exact uninterrupted trajectory.
TrainState run(const TrainConfig& cfg, const Dataset& dataset, const RunOptions& opts = {});
TrainState run_from(TrainState state, const TrainConfig& cfg, const Dataset& dataset,
                    const RunOptions& opts = {});

RunRecord evaluate(const TrainState& state, const TrainConfig& cfg, const Dataset& dataset,
                   const StepParts& parts);

// Versioned binary checkpoint holding every TrainState field as named
// tensor sections. Loading rebuilds the state skeleton from `cfg` and
// validates each section's shape against it.
void checkpoint_save(const TrainState& state, const TrainConfig& cfg,
                     const std::filesystem::path& path);
TrainState checkpoint_load(const std::filesystem::path& path, const TrainConfig& cfg,
                           const Dataset& dataset);
// Reads the embedded config document and step without rebuilding the state.
struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  std::string config_json;
};
CheckpointInfo checkpoint_peek(const std::filesystem::path& path);

// Appends rows to <out_dir>/metrics.csv, flushing after each row.
class CsvMetricsWriter {
 public:
  explicit CsvMetricsWriter(const std::filesystem::path& path);
  void append(const RunRecord& rec);
  static std::string header();
  static std::string format_row(const RunRecord& rec);

 private:
  std::filesystem::path path_;
};

// Deterministic latent batch for (seed, step) pairs.
Tensor sample_latents(int batch, int latent_dim, const RngStream& rng);
// Deterministic sampling of the EMA generator.
Tensor sample_generator(const NetworkParams& gen, int count, int latent_dim, const RngStream& rng);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace insgen
