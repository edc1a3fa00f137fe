#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "insgen/augment.hpp"
#include "insgen/nets.hpp"
#include "insgen/rng.hpp"
#include "insgen/tensor.hpp"

namespace insgen {

// Fixed-capacity FIFO of unit-norm embeddings serving as negatives. Oldest
// entries are evicted first; stored rows are copies with no gradient linkage.
class FeatureQueue {
 public:
  FeatureQueue(int capacity, int dim);

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int fill() const { return static_cast<int>(entries_.size()); }

  // Appends each row of keys (B, dim). Rows must be unit-norm within 1e-6
  // when strict.
  void push(const Tensor& keys, bool strict = false);
  // Copy of current contents as a (fill, dim) constant tensor, oldest first.
  Tensor snapshot() const;

  const std::deque<std::vector<double>>& entries() const { return entries_; }
  void restore(std::vector<std::vector<double>> rows);

 private:
  int capacity_;
  int dim_;
  std::deque<std::vector<double>> entries_;
};

struct ContrastiveConfig {
  double tau = 2.0;        // temperature
  double sigma_eps = 0.1;  // latent perturbation std
  int queue_real = 0;      // capacities; 0 means "derive from dataset size"
  int queue_fake = 0;
  double warmup_fraction = 0.25;
  // When set, the generator also receives gradient through the positive key
  // path of its loop-back loss (single-path query-only gradient otherwise).
  bool generator_dual_path = false;
};

// Substream keys used to derive the independent draws inside the composite
// objectives. Exposed so tests can rebuild a view bit-exactly.
namespace stream_tag {
inline constexpr std::uint64_t kPerturb = 0x101;
inline constexpr std::uint64_t kQueryView = 0x102;
inline constexpr std::uint64_t kKeyView = 0x103;
}  // namespace stream_tag

// Mean over the batch of -log( exp(q.k+/tau) / (exp(q.k+/tau) +
// sum_i exp(q.n_i/tau)) ). All rows must be unit norm; the positive term is
// part of the denominator.
Tensor info_nce(Graph& g, const Tensor& queries, const Tensor& pos_keys, const Tensor& negatives,
                double tau);

// z + eps with eps ~ N(0, sigma_eps^2 I), deterministic in the stream.
Tensor perturb_latent(const Tensor& z, double sigma_eps, const RngStream& rng);

// Composite objective result; loss is absent while the queue is still
// warming up (keys are computed and pushed regardless).
struct ContrastiveResult {
  std::optional<Tensor> loss;
  bool warmed() const { return loss.has_value(); }
};

int warmup_threshold(const FeatureQueue& queue, double warmup_fraction);

// Real-instance discrimination: online real head on one augmented view
// against the momentum real head on an independent view, negatives from the
// real queue. Keys are pushed after the snapshot is taken.
ContrastiveResult c_r_d(Graph& g, const DiscriminatorBundle& online,
                        const DiscriminatorBundle& momentum, const Tensor& real_batch,
                        FeatureQueue& queue_real, const ContrastiveConfig& cfg,
                        const AugmentConfig& aug, const RngStream& rng);

// Fake-instance discrimination with latent noise perturbation. Generator
// outputs are detached: no gradient reaches the generator from this loss.
ContrastiveResult c_f_d(Graph& g, const DiscriminatorBundle& online,
                        const DiscriminatorBundle& momentum, const NetworkParams& generator,
                        const Tensor& z_batch, FeatureQueue& queue_fake,
                        const ContrastiveConfig& cfg, const AugmentConfig& aug,
                        const RngStream& rng);

// Loop-back generator objective: same structure as c_f_d but without the
// latent perturbation, gradient flowing to the generator through the query
// path. Does not push keys.
ContrastiveResult c_f_g(Graph& g, const DiscriminatorBundle& online,
                        const DiscriminatorBundle& momentum, const NetworkParams& generator,
                        const Tensor& z_batch, const FeatureQueue& queue_fake,
                        const ContrastiveConfig& cfg, const AugmentConfig& aug,
                        const RngStream& rng);

}  // namespace insgen
