#pragma once

#include <optional>

#include "insgen/nets.hpp"
#include "insgen/tensor.hpp"

namespace insgen {

struct LossWeights {
  double lambda_r_d = 1.0;  // weight of the real-instance term
  double lambda_f_d = 1.0;  // weight of the fake-instance term
  double lambda_g = 1.0;    // weight of the generator loop-back term
  double r1_gamma = 0.1;
};

// Non-saturating logistic discriminator loss:
// mean(softplus(-real)) + mean(softplus(fake)).
Tensor d_logistic_loss(Graph& g, const Tensor& real_logits, const Tensor& fake_logits);

// Non-saturating generator loss: mean(softplus(-fake)).
Tensor g_nonsat_loss(Graph& g, const Tensor& fake_logits);

// Gradient of the domain logit w.r.t. the input batch, built from forward
// ops so that a backward pass differentiates it w.r.t. the discriminator
// parameters. Activation masks are held constant, which is exact almost
// everywhere for piecewise-linear activations.
Tensor domain_input_gradient(Graph& g, const DiscriminatorBundle& d, const Tensor& batch);

// (gamma/2) * mean over the batch of |grad_x D_domain(x)|^2.
Tensor r1_penalty(Graph& g, const DiscriminatorBundle& d, const Tensor& real_batch, double gamma);

// L'_D = L_D + lambda_r_d * C^r_D + lambda_f_d * C^f_D + R1.
// Absent contrastive parts (queue warmup) contribute zero.
Tensor total_d_loss(Graph& g, const Tensor& l_d, const std::optional<Tensor>& c_r_d,
                    const std::optional<Tensor>& c_f_d, const std::optional<Tensor>& r1,
                    const LossWeights& w);

// L'_G = L_G + lambda_g * C^f_G.
Tensor total_g_loss(Graph& g, const Tensor& l_g, const std::optional<Tensor>& c_f_g,
                    const LossWeights& w);

}  // namespace insgen
