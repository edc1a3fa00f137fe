#include "insgen/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "insgen/rng.hpp"

namespace insgen {

namespace {

// Uniform in +-sqrt(1/in_dim), zero biases.
LinearLayer init_layer(int in_dim, int out_dim, RngStream rng, std::optional<double> slope) {
  if (in_dim <= 0 || out_dim <= 0) {
    throw std::invalid_argument("layer dimensions must be positive, got " + std::to_string(in_dim) +
                                "x" + std::to_string(out_dim));
  }
  const double bound = std::sqrt(1.0 / in_dim);
  Tensor w = Tensor::zeros({in_dim, out_dim}, true);
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
  return LinearLayer{w, Tensor::zeros({1, out_dim}, true), slope};
}

NetworkParams build_mlp(const std::string& name, int in_dim, const std::vector<int>& hidden,
                        int out_dim, RngStream rng, double slope, bool activate_last) {
  NetworkParams net;
  net.name = name;
  int prev = in_dim;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    net.layers.push_back(init_layer(prev, hidden[i], rng.substream(i), slope));
    prev = hidden[i];
  }
  net.layers.push_back(init_layer(prev, out_dim, rng.substream(hidden.size()),
                                  activate_last ? std::optional<double>(slope) : std::nullopt));
  net.validate();
  return net;
}

}  // namespace

// ==================== NetworkParams ====================

int NetworkParams::input_dim() const {
  if (layers.empty()) throw std::logic_error(name + ": network has no layers");
  return layers.front().weight.rows();
}

int NetworkParams::output_dim() const {
  if (layers.empty()) throw std::logic_error(name + ": network has no layers");
  return layers.back().weight.cols();
}

std::vector<Tensor> NetworkParams::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

void NetworkParams::set_requires_grad(bool value) {
  for (auto& l : layers) {
    l.weight.set_requires_grad(value);
    l.bias.set_requires_grad(value);
  }
}

NetworkParams NetworkParams::clone(const std::string& new_name, bool requires_grad) const {
  NetworkParams copy;
  copy.name = new_name;
  for (const auto& l : layers) {
    copy.layers.push_back({l.weight.clone(requires_grad), l.bias.clone(requires_grad), l.activation_slope});
  }
  return copy;
}

void NetworkParams::validate() const {
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].weight.cols() != layers[i + 1].weight.rows()) {
      throw std::invalid_argument(name + ": layer " + std::to_string(i) + " output " +
                                  std::to_string(layers[i].weight.cols()) + " does not chain into layer " +
                                  std::to_string(i + 1) + " input " +
                                  std::to_string(layers[i + 1].weight.rows()));
    }
  }
  for (const auto& l : layers) {
    if (l.bias.cols() != l.weight.cols() || l.bias.rows() != 1) {
      throw std::invalid_argument(name + ": bias shape " + shape_str(l.bias.shape()) +
                                  " does not match weight " + shape_str(l.weight.shape()));
    }
  }
}

// ==================== DiscriminatorBundle ====================

std::vector<Tensor> DiscriminatorBundle::parameters() const {
  std::vector<Tensor> out;
  for (const auto* net : {&backbone, &domain_head, &real_head, &fake_head}) {
    for (auto& t : net->parameters()) out.push_back(t);
  }
  return out;
}

void DiscriminatorBundle::set_requires_grad(bool value) {
  backbone.set_requires_grad(value);
  domain_head.set_requires_grad(value);
  real_head.set_requires_grad(value);
  fake_head.set_requires_grad(value);
}

DiscriminatorBundle DiscriminatorBundle::clone(const std::string& prefix, bool requires_grad) const {
  DiscriminatorBundle copy;
  copy.backbone = backbone.clone(prefix + ".backbone", requires_grad);
  copy.domain_head = domain_head.clone(prefix + ".domain", requires_grad);
  copy.real_head = real_head.clone(prefix + ".real", requires_grad);
  copy.fake_head = fake_head.clone(prefix + ".fake", requires_grad);
  return copy;
}

// ==================== Builders ====================

NetworkParams build_generator(int latent_dim, const std::vector<int>& hidden, int out_dim,
                              std::uint64_t seed, double slope) {
  RngStream rng(seed, 0x67656e);  // generator stream
  return build_mlp("gen", latent_dim, hidden, out_dim, rng, slope, /*activate_last=*/false);
}

DiscriminatorBundle build_discriminator(int in_dim, const std::vector<int>& hidden, int feat_dim,
                                        int proj_dim, std::uint64_t seed, double slope) {
  RngStream rng(seed, 0x64697363);  // discriminator stream
  DiscriminatorBundle d;
  // Feature output keeps its nonlinearity; the heads project from activated
  // features.
  d.backbone = build_mlp("disc.backbone", in_dim, hidden, feat_dim, rng.substream(0), slope,
                         /*activate_last=*/true);
  d.domain_head = build_mlp("disc.domain", feat_dim, {}, 1, rng.substream(1), slope, false);
  d.real_head = build_mlp("disc.real", feat_dim, {proj_dim}, proj_dim, rng.substream(2), slope, false);
  d.fake_head = build_mlp("disc.fake", feat_dim, {proj_dim}, proj_dim, rng.substream(3), slope, false);
  return d;
}

// ==================== Forward ====================

Tensor net_forward(Graph& g, const NetworkParams& net, const Tensor& input) {
  Tensor h = input;
  for (const auto& layer : net.layers) {
    Tensor ones = Tensor::full({h.rows(), 1}, 1.0);
    h = g.add(g.matmul(h, layer.weight), g.matmul(ones, layer.bias));
    if (layer.activation_slope) h = g.leaky_relu(h, *layer.activation_slope);
  }
  return h;
}

Tensor net_eval(const NetworkParams& net, const Tensor& input) {
  Tensor h = input.clone(false);
  for (const auto& layer : net.layers) {
    const int b = h.rows(), in = layer.weight.rows(), out = layer.weight.cols();
    Tensor next = Tensor::zeros({b, out});
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < out; ++j) next.at(i, j) = layer.bias.at(0, j);
      for (int k = 0; k < in; ++k) {
        const double hv = h.at(i, k);
        if (hv == 0.0) continue;
        for (int j = 0; j < out; ++j) next.at(i, j) += hv * layer.weight.at(k, j);
      }
    }
    if (layer.activation_slope) {
      for (auto& v : next.data()) v = v > 0 ? v : *layer.activation_slope * v;
    }
    h = next;
  }
  return h;
}

Tensor disc_features(Graph& g, const DiscriminatorBundle& d, const Tensor& batch) {
  if (batch.cols() != d.backbone.input_dim()) {
    throw std::invalid_argument("disc_forward: batch " + shape_str(batch.shape()) +
                                " does not match backbone input " +
                                std::to_string(d.backbone.input_dim()));
  }
  return net_forward(g, d.backbone, batch);
}

Tensor head_forward(Graph& g, const DiscriminatorBundle& d, const Tensor& features, DiscHead head) {
  switch (head) {
    case DiscHead::Domain:
      return net_forward(g, d.domain_head, features);
    case DiscHead::Real:
      return g.l2_normalize_rows(net_forward(g, d.real_head, features));
    case DiscHead::Fake:
      return g.l2_normalize_rows(net_forward(g, d.fake_head, features));
  }
  throw std::invalid_argument("disc_forward: unknown head tag");
}

Tensor disc_forward(Graph& g, const DiscriminatorBundle& d, const Tensor& batch, DiscHead head) {
  return head_forward(g, d, disc_features(g, d, batch), head);
}

// ==================== Momentum updates ====================

void momentum_update(const NetworkParams& online, NetworkParams& momentum, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("momentum alpha must lie in [0,1]");
  if (online.layers.size() != momentum.layers.size()) {
    throw std::invalid_argument("momentum_update: layer count mismatch between " + online.name +
                                " and " + momentum.name);
  }
  for (std::size_t i = 0; i < online.layers.size(); ++i) {
    for (auto [src, dst] : {std::pair{&online.layers[i].weight, &momentum.layers[i].weight},
                            std::pair{&online.layers[i].bias, &momentum.layers[i].bias}}) {
      if (src->shape() != dst->shape()) {
        throw std::invalid_argument("momentum_update: shape mismatch at layer " + std::to_string(i) +
                                    ": " + shape_str(src->shape()) + " vs " + shape_str(dst->shape()));
      }
      auto& s = src->data();
      auto& t = dst->data();
      for (std::size_t k = 0; k < s.size(); ++k) t[k] = alpha * t[k] + (1.0 - alpha) * s[k];
    }
  }
}

void momentum_update(const DiscriminatorBundle& online, DiscriminatorBundle& momentum, double alpha) {
  momentum_update(online.backbone, momentum.backbone, alpha);
  momentum_update(online.domain_head, momentum.domain_head, alpha);
  momentum_update(online.real_head, momentum.real_head, alpha);
  momentum_update(online.fake_head, momentum.fake_head, alpha);
}

}  // namespace insgen
