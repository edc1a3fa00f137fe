#include "insgen/augment.hpp"

#include <cmath>
#include <stdexcept>

namespace insgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Left-composes x -> M x + c onto the running affine (A, b).
void compose(std::vector<double>& A, std::vector<double>& b, const std::vector<double>& M,
             const std::vector<double>& c, int d) {
  std::vector<double> newA(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> newb(d, 0.0);
  for (int r = 0; r < d; ++r) {
    for (int k = 0; k < d; ++k) {
      const double m = M[static_cast<std::size_t>(r) * d + k];
      if (m == 0.0) continue;
      for (int cidx = 0; cidx < d; ++cidx) newA[static_cast<std::size_t>(r) * d + cidx] += m * A[static_cast<std::size_t>(k) * d + cidx];
      newb[r] += m * b[k];
    }
    newb[r] += c[r];
  }
  A = std::move(newA);
  b = std::move(newb);
}

void set_identity(std::vector<double>& M, int d) {
  std::fill(M.begin(), M.end(), 0.0);
  for (int i = 0; i < d; ++i) M[static_cast<std::size_t>(i) * d + i] = 1.0;
}

}  // namespace

AugmentConfig default_augment_pipeline(double p, double rot_max_deg, double noise_sigma,
                                       double scale_log, double trans_range) {
  AugmentConfig cfg;
  cfg.p = p;
  cfg.ops = {
      {AugmentOpKind::SignFlip, 0.0},
      {AugmentOpKind::Rotation, rot_max_deg},
      {AugmentOpKind::Scaling, scale_log},
      {AugmentOpKind::Translation, trans_range},
      {AugmentOpKind::Noise, noise_sigma},
  };
  return cfg;
}

Tensor apply_with_keys(Graph& g, const Tensor& batch, const AugmentConfig& cfg, const RngStream& rng,
                       std::span<const std::uint64_t> row_keys) {
  const int b = batch.rows(), d = batch.cols();
  if (static_cast<int>(row_keys.size()) != b) {
    throw std::invalid_argument("augment: row key count " + std::to_string(row_keys.size()) +
                                " does not match batch rows " + std::to_string(b));
  }
  if (cfg.p < 0.0 || cfg.p > 1.0) throw std::invalid_argument("augment: p must lie in [0,1]");

  std::vector<double> mats(static_cast<std::size_t>(b) * d * d);
  std::vector<double> offsets(static_cast<std::size_t>(b) * d, 0.0);
  std::vector<double> A(static_cast<std::size_t>(d) * d), bias(d);
  std::vector<double> M(static_cast<std::size_t>(d) * d), c(d);

  for (int i = 0; i < b; ++i) {
    RngStream row_rng = rng.substream(row_keys[i]);
    set_identity(A, d);
    std::fill(bias.begin(), bias.end(), 0.0);

    for (const AugmentOp& op : cfg.ops) {
      const bool engaged = row_rng.uniform() < cfg.p;
      if (!engaged) continue;
      set_identity(M, d);
      std::fill(c.begin(), c.end(), 0.0);
      switch (op.kind) {
        case AugmentOpKind::SignFlip:
          for (int k = 0; k < d; ++k) M[static_cast<std::size_t>(k) * d + k] = -1.0;
          break;
        case AugmentOpKind::Rotation: {
          const double theta = row_rng.uniform(-op.param, op.param) * kPi / 180.0;
          if (d >= 2) {
            M[0] = std::cos(theta);
            M[1] = -std::sin(theta);
            M[static_cast<std::size_t>(d)] = std::sin(theta);
            M[static_cast<std::size_t>(d) + 1] = std::cos(theta);
          }
          break;
        }
        case AugmentOpKind::Scaling: {
          const double s = std::exp(row_rng.uniform(-op.param, op.param));
          for (int k = 0; k < d; ++k) M[static_cast<std::size_t>(k) * d + k] = s;
          break;
        }
        case AugmentOpKind::Translation:
          for (int k = 0; k < d; ++k) c[k] = row_rng.uniform(-op.param, op.param);
          break;
        case AugmentOpKind::Noise:
          for (int k = 0; k < d; ++k) c[k] = op.param * row_rng.normal();
          break;
      }
      compose(A, bias, M, c, d);
    }

    std::copy(A.begin(), A.end(), mats.begin() + static_cast<std::size_t>(i) * d * d);
    std::copy(bias.begin(), bias.end(), offsets.begin() + static_cast<std::size_t>(i) * d);
  }
  return g.row_affine(batch, mats, offsets);
}

Tensor apply(Graph& g, const Tensor& batch, const AugmentConfig& cfg, const RngStream& rng) {
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(batch.rows()));
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = i;
  return apply_with_keys(g, batch, cfg, rng, keys);
}

double AdaState::window_mean() const {
  if (window.empty()) return 0.0;
  double acc = 0.0;
  for (double v : window) acc += v;
  return acc / static_cast<double>(window.size());
}

void ada_update(AdaState& state, const Tensor& real_logits) {
  double mean_sign = 0.0;
  for (double v : real_logits.data()) mean_sign += v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
  mean_sign /= static_cast<double>(real_logits.size());

  state.window.push_back(mean_sign);
  while (state.window.size() > state.window_capacity) state.window.pop_front();

  const double wm = state.window_mean();
  if (wm > state.target) {
    state.p += state.step_size;
  } else if (wm < state.target) {
    state.p -= state.step_size;
  }
  state.p = std::min(std::max(state.p, 0.0), state.p_max);
}

}  // namespace insgen
