#include "insgen/gan_losses.hpp"

#include <stdexcept>

namespace insgen {

namespace {

void require_logits(const char* what, const Tensor& t) {
  if (t.shape().size() != 2 || t.cols() != 1) {
    throw std::invalid_argument(std::string(what) + ": expected (B,1) logits, got " +
                                shape_str(t.shape()));
  }
}

}  // namespace

Tensor d_logistic_loss(Graph& g, const Tensor& real_logits, const Tensor& fake_logits) {
  require_logits("d_logistic_loss real", real_logits);
  require_logits("d_logistic_loss fake", fake_logits);
  Tensor real_term = g.mean(g.softplus(g.scale(real_logits, -1.0)));
  Tensor fake_term = g.mean(g.softplus(fake_logits));
  return g.add(real_term, fake_term);
}

Tensor g_nonsat_loss(Graph& g, const Tensor& fake_logits) {
  require_logits("g_nonsat_loss", fake_logits);
  return g.mean(g.softplus(g.scale(fake_logits, -1.0)));
}

Tensor domain_input_gradient(Graph& g, const DiscriminatorBundle& d, const Tensor& batch) {
  // Flatten backbone + domain head into one affine chain.
  std::vector<const LinearLayer*> chain;
  for (const auto& l : d.backbone.layers) chain.push_back(&l);
  for (const auto& l : d.domain_head.layers) chain.push_back(&l);
  if (chain.empty()) throw std::invalid_argument("domain_input_gradient: empty network");
  if (chain.back()->weight.cols() != 1) {
    throw std::invalid_argument("domain_input_gradient: domain output must be a single logit");
  }

  const int b = batch.rows();

  // Forward, keeping pre-activations for the derivative masks.
  std::vector<Tensor> preacts;
  Tensor h = batch;
  for (const LinearLayer* layer : chain) {
    Tensor ones = Tensor::full({b, 1}, 1.0);
    Tensor z = g.add(g.matmul(h, layer->weight), g.matmul(ones, layer->bias));
    preacts.push_back(z);
    h = layer->activation_slope ? g.leaky_relu(z, *layer->activation_slope) : z;
  }

  // Vector-Jacobian walk back to the input. Masks are detached values of
  // the activation derivative at the recorded pre-activations.
  auto mask_of = [](const Tensor& z, double slope) {
    Tensor m = Tensor::zeros(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) m.data()[i] = z.data()[i] > 0 ? 1.0 : slope;
    return m;
  };

  Tensor u = Tensor::full({b, 1}, 1.0);
  const int last = static_cast<int>(chain.size()) - 1;
  if (chain[last]->activation_slope) u = g.mul(u, mask_of(preacts[last], *chain[last]->activation_slope));
  for (int l = last; l >= 0; --l) {
    u = g.matmul(u, g.transpose(chain[l]->weight));
    if (l > 0 && chain[l - 1]->activation_slope) {
      u = g.mul(u, mask_of(preacts[l - 1], *chain[l - 1]->activation_slope));
    }
  }
  return u;  // (B, in_dim)
}

Tensor r1_penalty(Graph& g, const DiscriminatorBundle& d, const Tensor& real_batch, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("r1_penalty: gamma must be non-negative");
  Tensor grad = domain_input_gradient(g, d, real_batch);
  return g.scale(g.sum(g.square(grad)), gamma / (2.0 * real_batch.rows()));
}

Tensor total_d_loss(Graph& g, const Tensor& l_d, const std::optional<Tensor>& c_r_d,
                    const std::optional<Tensor>& c_f_d, const std::optional<Tensor>& r1,
                    const LossWeights& w) {
  Tensor total = l_d;
  if (c_r_d) total = g.add(total, g.scale(*c_r_d, w.lambda_r_d));
  if (c_f_d) total = g.add(total, g.scale(*c_f_d, w.lambda_f_d));
  if (r1) total = g.add(total, *r1);
  return total;
}

Tensor total_g_loss(Graph& g, const Tensor& l_g, const std::optional<Tensor>& c_f_g,
                    const LossWeights& w) {
  Tensor total = l_g;
  if (c_f_g) total = g.add(total, g.scale(*c_f_g, w.lambda_g));
  return total;
}

}  // namespace insgen
