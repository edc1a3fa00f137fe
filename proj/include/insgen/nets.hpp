#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "insgen/tensor.hpp"

namespace insgen {

struct LinearLayer {
  Tensor weight;  // (in, out)
  Tensor bias;    // (1, out)
  // Leaky-relu slope applied after the layer; absent means linear.
  std::optional<double> activation_slope;
};

// Ordered stack of affine layers. Forward maps a (B, in) batch through each
// layer (and its activation, when set) in order.
struct NetworkParams {
  std::string name;
  std::vector<LinearLayer> layers;

  int input_dim() const;
  int output_dim() const;
  std::vector<Tensor> parameters() const;  // w0, b0, w1, b1, ...
  void set_requires_grad(bool value);
  NetworkParams clone(const std::string& new_name, bool requires_grad) const;
  // Throws unless consecutive layer dimensions chain.
  void validate() const;
};

// Discriminator backbone plus its three heads. The domain head emits the
// real/fake logit; the instance heads project features onto the unit sphere.
struct DiscriminatorBundle {
  NetworkParams backbone;
  NetworkParams domain_head;  // single affine layer to one logit
  NetworkParams real_head;    // 2 affine layers, output l2-normalized
  NetworkParams fake_head;    // 2 affine layers, output l2-normalized

  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool value);
  DiscriminatorBundle clone(const std::string& prefix, bool requires_grad) const;
};

enum class DiscHead { Domain, Real, Fake };

NetworkParams build_generator(int latent_dim, const std::vector<int>& hidden, int out_dim,
                              std::uint64_t seed, double slope = 0.2);

DiscriminatorBundle build_discriminator(int in_dim, const std::vector<int>& hidden, int feat_dim,
                                        int proj_dim, std::uint64_t seed, double slope = 0.2);

// Differentiable forward pass on the given graph.
Tensor net_forward(Graph& g, const NetworkParams& net, const Tensor& input);
// Plain forward with no graph recording; for evaluation and sampling.
Tensor net_eval(const NetworkParams& net, const Tensor& input);

Tensor disc_features(Graph& g, const DiscriminatorBundle& d, const Tensor& batch);
Tensor head_forward(Graph& g, const DiscriminatorBundle& d, const Tensor& features, DiscHead head);
Tensor disc_forward(Graph& g, const DiscriminatorBundle& d, const Tensor& batch, DiscHead head);

// momentum := alpha * momentum + (1 - alpha) * online, elementwise.
void momentum_update(const NetworkParams& online, NetworkParams& momentum, double alpha);
void momentum_update(const DiscriminatorBundle& online, DiscriminatorBundle& momentum, double alpha);

}  // namespace insgen
