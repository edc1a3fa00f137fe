#include "insgen/contrastive.hpp"

#include <cmath>
#include <stdexcept>

namespace insgen {

namespace {

void require_unit_rows(const char* what, const Tensor& t, double tol) {
  const int r = t.rows(), c = t.cols();
  for (int i = 0; i < r; ++i) {
    double nsq = 0.0;
    for (int j = 0; j < c; ++j) nsq += t.at(i, j) * t.at(i, j);
    if (std::abs(std::sqrt(nsq) - 1.0) > tol) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) +
                                  " is not unit-norm (|x| = " + std::to_string(std::sqrt(nsq)) + ")");
    }
  }
}

}  // namespace

// ==================== FeatureQueue ====================

FeatureQueue::FeatureQueue(int capacity, int dim) : capacity_(capacity), dim_(dim) {
  if (capacity <= 0) throw std::invalid_argument("queue capacity must be positive");
  if (dim <= 0) throw std::invalid_argument("queue dim must be positive");
}

void FeatureQueue::push(const Tensor& keys, bool strict) {
  if (keys.cols() != dim_) {
    throw std::invalid_argument("queue push: key dim " + std::to_string(keys.cols()) +
                                " does not match queue dim " + std::to_string(dim_));
  }
  if (strict) require_unit_rows("queue push", keys, 1e-6);
  for (int i = 0; i < keys.rows(); ++i) {
    std::vector<double> row(dim_);
    for (int j = 0; j < dim_; ++j) row[j] = keys.at(i, j);
    entries_.push_back(std::move(row));
    if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
  }
}

Tensor FeatureQueue::snapshot() const {
  if (entries_.empty()) throw std::logic_error("queue snapshot: queue is empty");
  Tensor out = Tensor::zeros({fill(), dim_});
  int i = 0;
  for (const auto& row : entries_) {
    for (int j = 0; j < dim_; ++j) out.at(i, j) = row[j];
    ++i;
  }
  return out;
}

void FeatureQueue::restore(std::vector<std::vector<double>> rows) {
  if (static_cast<int>(rows.size()) > capacity_) {
    throw std::invalid_argument("queue restore: more rows than capacity");
  }
  entries_.clear();
  for (auto& r : rows) {
    if (static_cast<int>(r.size()) != dim_) throw std::invalid_argument("queue restore: row dim mismatch");
    entries_.push_back(std::move(r));
  }
}

// ==================== InfoNCE ====================

Tensor info_nce(Graph& g, const Tensor& queries, const Tensor& pos_keys, const Tensor& negatives,
                double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
  if (negatives.rows() < 1) throw std::invalid_argument("info_nce: at least one negative is required");
  if (queries.shape() != pos_keys.shape() || queries.cols() != negatives.cols()) {
    throw std::invalid_argument("info_nce: inconsistent shapes " + shape_str(queries.shape()) + ", " +
                                shape_str(pos_keys.shape()) + ", " + shape_str(negatives.shape()));
  }
  if (g.strict()) {
    require_unit_rows("info_nce queries", queries, 1e-6);
    require_unit_rows("info_nce keys", pos_keys, 1e-6);
    require_unit_rows("info_nce negatives", negatives, 1e-6);
  }

  Tensor pos_sim = g.rows_dot(queries, pos_keys);                  // (B,1)
  Tensor neg_sim = g.matmul(queries, g.transpose(negatives));     // (B,N)
  Tensor logits = g.scale(g.concat_cols(pos_sim, neg_sim), 1.0 / tau);
  Tensor lse = g.logsumexp_rows(logits);                           // (B,1)
  return g.mean(g.sub(lse, g.scale(pos_sim, 1.0 / tau)));
}

Tensor perturb_latent(const Tensor& z, double sigma_eps, const RngStream& rng) {
  if (sigma_eps < 0.0) throw std::invalid_argument("perturb_latent: sigma_eps must be non-negative");
  RngStream stream = rng;
  Tensor out = z.clone(false);
  for (auto& v : out.data()) v += sigma_eps * stream.normal();
  return out;
}

// ==================== Composite objectives ====================

int warmup_threshold(const FeatureQueue& queue, double warmup_fraction) {
  const int t = static_cast<int>(std::ceil(warmup_fraction * queue.capacity()));
  return std::max(1, t);
}

ContrastiveResult c_r_d(Graph& g, const DiscriminatorBundle& online,
                        const DiscriminatorBundle& momentum, const Tensor& real_batch,
                        FeatureQueue& queue_real, const ContrastiveConfig& cfg,
                        const AugmentConfig& aug, const RngStream& rng) {
  Tensor view_k = apply(g, real_batch, aug, rng.substream(stream_tag::kKeyView));
  Tensor keys = disc_forward(g, momentum, view_k, DiscHead::Real).detach();

  ContrastiveResult result;
  if (queue_real.fill() >= warmup_threshold(queue_real, cfg.warmup_fraction)) {
    Tensor view_q = apply(g, real_batch, aug, rng.substream(stream_tag::kQueryView));
    Tensor queries = disc_forward(g, online, view_q, DiscHead::Real);
    result.loss = info_nce(g, queries, keys, queue_real.snapshot(), cfg.tau);
  }
  queue_real.push(keys, g.strict());
  return result;
}

ContrastiveResult c_f_d(Graph& g, const DiscriminatorBundle& online,
                        const DiscriminatorBundle& momentum, const NetworkParams& generator,
                        const Tensor& z_batch, FeatureQueue& queue_fake,
                        const ContrastiveConfig& cfg, const AugmentConfig& aug,
                        const RngStream& rng) {
  // Key image: G(z + eps) through the momentum fake head. The generator
  // output is detached; this loss trains the discriminator only.
  Tensor z_pert = perturb_latent(z_batch, cfg.sigma_eps, rng.substream(stream_tag::kPerturb));
  Tensor x_key = net_eval(generator, z_pert);
  Tensor view_k = apply(g, x_key, aug, rng.substream(stream_tag::kKeyView));
  Tensor keys = disc_forward(g, momentum, view_k, DiscHead::Fake).detach();

  ContrastiveResult result;
  if (queue_fake.fill() >= warmup_threshold(queue_fake, cfg.warmup_fraction)) {
    Tensor x_query = net_eval(generator, z_batch);
    Tensor view_q = apply(g, x_query, aug, rng.substream(stream_tag::kQueryView));
    Tensor queries = disc_forward(g, online, view_q, DiscHead::Fake);
    result.loss = info_nce(g, queries, keys, queue_fake.snapshot(), cfg.tau);
  }
  queue_fake.push(keys, g.strict());
  return result;
}

ContrastiveResult c_f_g(Graph& g, const DiscriminatorBundle& online,
                        const DiscriminatorBundle& momentum, const NetworkParams& generator,
                        const Tensor& z_batch, const FeatureQueue& queue_fake,
                        const ContrastiveConfig& cfg, const AugmentConfig& aug,
                        const RngStream& rng) {
  ContrastiveResult result;
  if (queue_fake.fill() < warmup_threshold(queue_fake, cfg.warmup_fraction)) return result;

  // Query path carries the generator gradient. No latent perturbation here:
  // both views come from the same z.
  Tensor x_query = net_forward(g, generator, z_batch);
  Tensor view_q = apply(g, x_query, aug, rng.substream(stream_tag::kQueryView));
  Tensor queries = disc_forward(g, online, view_q, DiscHead::Fake);

  Tensor x_key = cfg.generator_dual_path ? x_query : x_query.detach();
  Tensor view_k = apply(g, x_key, aug, rng.substream(stream_tag::kKeyView));
  Tensor keys = disc_forward(g, momentum, view_k, DiscHead::Fake);
  if (!cfg.generator_dual_path) keys = keys.detach();

  result.loss = info_nce(g, queries, keys, queue_fake.snapshot(), cfg.tau);
  return result;
}

}  // namespace insgen
