#include "insgen/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace insgen {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian platform");

// ==================== Adam ====================

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0) throw std::invalid_argument("adam: lr must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw std::invalid_argument("adam: betas must lie in [0,1)");
  }
}

void AdamOptimizer::attach(std::vector<Tensor> params) {
  params_ = std::move(params);
  m_.clear();
  v_.clear();
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
  t_ = 0;
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const std::vector<double>* grad = p.has_grad() ? &std::as_const(p).grad() : nullptr;
    auto& m = m_[i];
    auto& v = v_[i];
    auto& data = p.data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad ? (*grad)[k] : 0.0;
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      data[k] -= lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
    }
  }
}

void AdamOptimizer::restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v,
                            std::uint64_t t) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("adam restore: moment count mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].size() || v[i].size() != params_[i].size()) {
      throw std::invalid_argument("adam restore: moment size mismatch at tensor " + std::to_string(i));
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

// ==================== Config ====================

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("trainer.steps must be >= 0");
  if (batch <= 0) throw std::invalid_argument("trainer.batch must be positive");
  if (lr_d <= 0 || lr_g <= 0) throw std::invalid_argument("learning rates must be positive");
  if (ema_decay < 0 || ema_decay >= 1) throw std::invalid_argument("trainer.ema_decay must lie in [0,1)");
  if (momentum_alpha < 0 || momentum_alpha > 1) {
    throw std::invalid_argument("trainer.momentum_alpha must lie in [0,1]");
  }
  if (eval_every <= 0) throw std::invalid_argument("trainer.eval_every must be positive");
  if (d_steps_per_g <= 0) throw std::invalid_argument("trainer.d_steps_per_g must be positive");
  if (latent_dim <= 0 || feat_dim <= 0 || proj_dim <= 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (eval_samples < 2) throw std::invalid_argument("eval.samples must be >= 2");
  if (contrastive.tau <= 0) throw std::invalid_argument("contrastive.tau must be positive");
  if (contrastive.sigma_eps < 0) throw std::invalid_argument("contrastive.sigma_eps must be >= 0");
  if (contrastive.warmup_fraction < 0 || contrastive.warmup_fraction > 1) {
    throw std::invalid_argument("contrastive.warmup_fraction must lie in [0,1]");
  }
  if (weights.lambda_r_d < 0 || weights.lambda_f_d < 0 || weights.lambda_g < 0 || weights.r1_gamma < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (augment.p < 0 || augment.p > 1) throw std::invalid_argument("augment.p must lie in [0,1]");
}

// ==================== State ====================

TrainState init_state(const TrainConfig& cfg, const Dataset& dataset) {
  TrainState st;
  st.seed = cfg.seed;
  st.gen = build_generator(cfg.latent_dim, cfg.g_hidden, dataset.dim(), cfg.seed, cfg.lrelu_slope);
  st.gen_ema = st.gen.clone("gen_ema", false);
  st.disc = build_discriminator(dataset.dim(), cfg.d_hidden, cfg.feat_dim, cfg.proj_dim, cfg.seed,
                                cfg.lrelu_slope);
  st.disc_momentum = st.disc.clone("disc_m", false);
  st.adam_d = AdamOptimizer(cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  st.adam_d.attach(st.disc.parameters());
  st.adam_g = AdamOptimizer(cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  st.adam_g.attach(st.gen.parameters());
  st.ada.p = cfg.ada.p0;
  st.ada.target = cfg.ada.target;
  st.ada.step_size = cfg.ada.step_size;
  st.ada.p_max = cfg.ada.p_max;
  st.ada.window_capacity = static_cast<std::size_t>(std::max(1, cfg.ada.window));
  // Queue capacity defaults to ~5% of the dataset; the fake queue matches
  // the real one unless set explicitly.
  const int default_cap = std::max(1, static_cast<int>(std::lround(0.05 * dataset.count())));
  const int cap_real = cfg.contrastive.queue_real > 0 ? cfg.contrastive.queue_real : default_cap;
  const int cap_fake = cfg.contrastive.queue_fake > 0 ? cfg.contrastive.queue_fake : cap_real;
  st.queue_real = FeatureQueue(cap_real, cfg.proj_dim);
  st.queue_fake = FeatureQueue(cap_fake, cfg.proj_dim);
  return st;
}

// ==================== Steps ====================

Tensor sample_latents(int batch, int latent_dim, const RngStream& rng) {
  RngStream stream = rng;
  Tensor z = Tensor::zeros({batch, latent_dim});
  for (auto& v : z.data()) v = stream.normal();
  return z;
}

Tensor sample_generator(const NetworkParams& gen, int count, int latent_dim, const RngStream& rng) {
  return net_eval(gen, sample_latents(count, latent_dim, rng));
}

namespace {

double tensor_mean(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return acc / static_cast<double>(t.size());
}

[[noreturn]] void abort_non_finite(const char* which, std::uint64_t step, const StepParts& parts) {
  std::ostringstream os;
  os << which << " produced a non-finite loss at step " << step << " (l_d=" << parts.l_d
     << " c_r_d=" << parts.c_r_d << " c_f_d=" << parts.c_f_d << " r1=" << parts.r1
     << " l_g=" << parts.l_g << " c_f_g=" << parts.c_f_g << ")";
  throw std::runtime_error(os.str());
}

}  // namespace

StepParts d_step(TrainState& state, const TrainConfig& cfg, const Tensor& real_batch) {
  const std::uint64_t call = state.d_calls++;
  RngStream rng = RngStream(state.seed).substream(trainer_stream::kDStep).substream(call);

  state.gen.set_requires_grad(false);
  state.adam_d.zero_grad();

  AugmentConfig aug = cfg.augment;
  aug.p = state.ada.p;

  Graph g;
  StepParts parts;

  Tensor z = sample_latents(cfg.batch, cfg.latent_dim, rng.substream(trainer_stream::kLatent));
  Tensor fake = net_eval(state.gen, z);
  Tensor real_view = apply(g, real_batch, aug, rng.substream(trainer_stream::kRealAug));
  Tensor fake_view = apply(g, fake, aug, rng.substream(trainer_stream::kFakeAug));
  Tensor real_logits = disc_forward(g, state.disc, real_view, DiscHead::Domain);
  Tensor fake_logits = disc_forward(g, state.disc, fake_view, DiscHead::Domain);
  Tensor l_d = d_logistic_loss(g, real_logits, fake_logits);
  parts.l_d = l_d.value();
  parts.mean_real_logit = tensor_mean(real_logits);
  parts.mean_fake_logit = tensor_mean(fake_logits);

  // Lazy R1: applied every r1_interval d-steps with gamma rescaled to keep
  // the average penalty strength.
  std::optional<Tensor> r1;
  if (cfg.weights.r1_gamma > 0 && cfg.r1_interval > 0 && call % cfg.r1_interval == 0) {
    r1 = r1_penalty(g, state.disc, real_view.detach(), cfg.weights.r1_gamma * cfg.r1_interval);
    parts.r1 = r1->value();
  }

  ContrastiveResult crd, cfd;
  if (cfg.weights.lambda_r_d > 0) {
    crd = c_r_d(g, state.disc, state.disc_momentum, real_batch, state.queue_real, cfg.contrastive,
                aug, rng.substream(trainer_stream::kCr));
    if (crd.loss) parts.c_r_d = crd.loss->value();
  }
  if (cfg.weights.lambda_f_d > 0) {
    Tensor z_cf = sample_latents(cfg.batch, cfg.latent_dim, rng.substream(trainer_stream::kCfLatent));
    cfd = c_f_d(g, state.disc, state.disc_momentum, state.gen, z_cf, state.queue_fake,
                cfg.contrastive, aug, rng.substream(trainer_stream::kCf));
    if (cfd.loss) parts.c_f_d = cfd.loss->value();
  }

  Tensor total = total_d_loss(g, l_d, crd.loss, cfd.loss, r1, cfg.weights);
  if (!std::isfinite(total.value())) abort_non_finite("d_step", state.step, parts);
  g.backward(total);
  state.adam_d.step();

  momentum_update(state.disc, state.disc_momentum, cfg.momentum_alpha);
  if (cfg.ada.interval > 0 && call % cfg.ada.interval == 0) {
    ada_update(state.ada, real_logits);
  }

  state.gen.set_requires_grad(true);
  return parts;
}

StepParts g_step(TrainState& state, const TrainConfig& cfg) {
  RngStream rng = RngStream(state.seed).substream(trainer_stream::kGStep).substream(state.step);

  state.disc.set_requires_grad(false);
  state.adam_g.zero_grad();

  AugmentConfig aug = cfg.augment;
  aug.p = state.ada.p;

  Graph g;
  StepParts parts;

  Tensor z = sample_latents(cfg.batch, cfg.latent_dim, rng.substream(trainer_stream::kLatent));
  Tensor fake = net_forward(g, state.gen, z);
  Tensor fake_view = apply(g, fake, aug, rng.substream(trainer_stream::kFakeAug));
  Tensor fake_logits = disc_forward(g, state.disc, fake_view, DiscHead::Domain);
  Tensor l_g = g_nonsat_loss(g, fake_logits);
  parts.l_g = l_g.value();

  ContrastiveResult cfgl;
  if (cfg.weights.lambda_g > 0) {
    cfgl = c_f_g(g, state.disc, state.disc_momentum, state.gen, z, state.queue_fake, cfg.contrastive,
                 aug, rng.substream(trainer_stream::kCf));
    if (cfgl.loss) parts.c_f_g = cfgl.loss->value();
  }

  Tensor total = total_g_loss(g, l_g, cfgl.loss, cfg.weights);
  if (!std::isfinite(total.value())) abort_non_finite("g_step", state.step, parts);
  g.backward(total);
  state.adam_g.step();

  momentum_update(state.gen, state.gen_ema, cfg.ema_decay);

  state.disc.set_requires_grad(true);
  return parts;
}

// ==================== Evaluation ====================

RunRecord evaluate(const TrainState& state, const TrainConfig& cfg, const Dataset& dataset,
                   const StepParts& parts) {
  RunRecord rec;
  rec.step = state.step;
  rec.l_d = parts.l_d;
  rec.c_r_d = parts.c_r_d;
  rec.c_f_d = parts.c_f_d;
  rec.r1 = parts.r1;
  rec.l_g = parts.l_g;
  rec.c_f_g = parts.c_f_g;
  rec.mean_real_logit = parts.mean_real_logit;
  rec.mean_fake_logit = parts.mean_fake_logit;
  rec.aug_p = state.ada.p;

  RngStream rng = RngStream(state.seed).substream(trainer_stream::kEval).substream(state.step);
  Tensor samples = sample_generator(state.gen_ema, cfg.eval_samples, cfg.latent_dim, rng);
  rec.frechet = frechet_distance(fit_gaussian(dataset.samples), fit_gaussian(samples));
  if (dataset.meta.centers) {
    ModeCoverage cov = mode_coverage(samples, *dataset.meta.centers, dataset.meta.sigma,
                                     cfg.hq_radius_mult);
    rec.mode_coverage = cov.covered;
    rec.hq_fraction = cov.hq_fraction;
  }
  return rec;
}

// ==================== Run loop ====================

namespace {

Tensor sample_real_batch(const Dataset& dataset, int batch, const RngStream& rng) {
  RngStream stream = rng;
  Tensor out = Tensor::zeros({batch, dataset.dim()});
  for (int i = 0; i < batch; ++i) {
    const int idx = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(dataset.count()));
    for (int j = 0; j < dataset.dim(); ++j) out.at(i, j) = dataset.samples.at(idx, j);
  }
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "checkpoint_%06llu.bin", static_cast<unsigned long long>(step));
  return dir / buf;
}

}  // namespace

TrainState run(const TrainConfig& cfg, const Dataset& dataset, const RunOptions& opts) {
  cfg.validate();
  if (dataset.count() < 1) throw std::invalid_argument("run: dataset is empty");
  if (dataset.dim() < 1) throw std::invalid_argument("run: dataset has no columns");
  return run_from(init_state(cfg, dataset), cfg, dataset, opts);
}

TrainState run_from(TrainState state, const TrainConfig& cfg, const Dataset& dataset,
                    const RunOptions& opts) {
  cfg.validate();
  const bool persist = !opts.out_dir.empty();
  std::optional<CsvMetricsWriter> writer;
  if (persist) {
    std::filesystem::create_directories(opts.out_dir);
    if (state.step == 0) {
      // Fresh run: truncate the metrics log and emit the initial checkpoint.
      std::ofstream(opts.out_dir / "metrics.csv", std::ios::trunc)
          << CsvMetricsWriter::header() << "\n";
      checkpoint_save(state, cfg, checkpoint_path(opts.out_dir, 0));
    }
    writer.emplace(opts.out_dir / "metrics.csv");
  }

  for (std::uint64_t s = state.step; s < static_cast<std::uint64_t>(cfg.steps); ++s) {
    StepParts parts;
    for (int k = 0; k < cfg.d_steps_per_g; ++k) {
      RngStream batch_rng = RngStream(state.seed).substream(trainer_stream::kBatch).substream(state.d_calls);
      Tensor real_batch = sample_real_batch(dataset, cfg.batch, batch_rng);
      parts = d_step(state, cfg, real_batch);
    }
    StepParts gparts = g_step(state, cfg);
    parts.l_g = gparts.l_g;
    parts.c_f_g = gparts.c_f_g;
    state.step = s + 1;

    const bool last = state.step == static_cast<std::uint64_t>(cfg.steps);
    if (state.step % static_cast<std::uint64_t>(cfg.eval_every) == 0 || last) {
      RunRecord rec = evaluate(state, cfg, dataset, parts);
      if (writer) writer->append(rec);
      if (opts.sink) opts.sink(rec);
    }
    if (persist && cfg.ckpt_every > 0 &&
        (state.step % static_cast<std::uint64_t>(cfg.ckpt_every) == 0 || last)) {
      checkpoint_save(state, cfg, checkpoint_path(opts.out_dir, state.step));
    }
  }
  if (persist && cfg.steps > 0) {
    checkpoint_save(state, cfg, opts.out_dir / "checkpoint_final.bin");
  }
  return state;
}

// ==================== Metrics CSV ====================

CsvMetricsWriter::CsvMetricsWriter(const std::filesystem::path& path) : path_(path) {
  if (!std::filesystem::exists(path_)) {
    std::ofstream out(path_);
    if (!out) throw std::runtime_error("cannot open metrics log " + path_.string());
    out << header() << "\n";
  }
}

std::string CsvMetricsWriter::header() {
  return "step,l_d,c_r_d,c_f_d,r1,l_g,c_f_g,mean_real_logit,mean_fake_logit,aug_p,frechet,"
         "mode_coverage,hq_fraction";
}

std::string CsvMetricsWriter::format_row(const RunRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g",
                static_cast<unsigned long long>(r.step), r.l_d, r.c_r_d, r.c_f_d, r.r1, r.l_g,
                r.c_f_g, r.mean_real_logit, r.mean_fake_logit, r.aug_p, r.frechet, r.mode_coverage,
                r.hq_fraction);
  return buf;
}

void CsvMetricsWriter::append(const RunRecord& rec) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to metrics log " + path_.string());
  out << format_row(rec) << "\n";
  out.flush();
}

// ==================== Checkpoints ====================

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'I', 'N', 'S', 'G', 'E', 'N', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated checkpoint file (unexpected end of data)");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("truncated checkpoint file (unexpected end of data)");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

struct Section {
  std::vector<int> shape;
  std::vector<double> data;
};

void write_section(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                   const std::vector<double>& data) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  if (n != data.size()) {
    throw std::logic_error("checkpoint section " + name + " shape does not match its data");
  }
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) write_u64(out, static_cast<std::uint64_t>(d));
  for (double v : data) write_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Fixed serialization order for all named tensors of a state.
class SectionSet {
 public:
  void add(const std::string& name, const std::vector<int>& shape, std::vector<double> data) {
    names_.push_back(name);
    sections_[name] = Section{shape, std::move(data)};
  }
  void add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.data()); }
  void add_scalar(const std::string& name, double v) {
    add(name, {1, 1}, std::vector<double>{v});
  }

  const std::vector<std::string>& names() const { return names_; }
  const Section& at(const std::string& name) const { return sections_.at(name); }

 private:
  std::vector<std::string> names_;
  std::map<std::string, Section> sections_;
};

void add_net_sections(SectionSet& set, const std::string& prefix, const NetworkParams& net) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    set.add(prefix + ".layer" + std::to_string(i) + ".weight", net.layers[i].weight);
    set.add(prefix + ".layer" + std::to_string(i) + ".bias", net.layers[i].bias);
  }
}

void add_bundle_sections(SectionSet& set, const std::string& prefix, const DiscriminatorBundle& d) {
  add_net_sections(set, prefix + ".backbone", d.backbone);
  add_net_sections(set, prefix + ".domain", d.domain_head);
  add_net_sections(set, prefix + ".real", d.real_head);
  add_net_sections(set, prefix + ".fake", d.fake_head);
}

void add_adam_sections(SectionSet& set, const std::string& prefix, const AdamOptimizer& adam,
                       const std::vector<Tensor>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    set.add(prefix + ".m." + std::to_string(i), params[i].shape(), adam.first_moments()[i]);
    set.add(prefix + ".v." + std::to_string(i), params[i].shape(), adam.second_moments()[i]);
  }
  set.add_scalar(prefix + ".t", static_cast<double>(adam.iterations()));
}

void add_queue_sections(SectionSet& set, const std::string& prefix, const FeatureQueue& q) {
  set.add(prefix + ".meta", {1, 3},
          {static_cast<double>(q.capacity()), static_cast<double>(q.fill()),
           static_cast<double>(q.dim())});
  if (q.fill() > 0) {
    std::vector<double> rows;
    rows.reserve(static_cast<std::size_t>(q.fill()) * q.dim());
    for (const auto& r : q.entries()) rows.insert(rows.end(), r.begin(), r.end());
    set.add(prefix + ".rows", {q.fill(), q.dim()}, std::move(rows));
  }
}

SectionSet collect_sections(const TrainState& state) {
  SectionSet set;
  add_net_sections(set, "gen", state.gen);
  add_net_sections(set, "gen_ema", state.gen_ema);
  add_bundle_sections(set, "disc", state.disc);
  add_bundle_sections(set, "disc_m", state.disc_momentum);
  add_adam_sections(set, "adam_d", state.adam_d, state.disc.parameters());
  add_adam_sections(set, "adam_g", state.adam_g, state.gen.parameters());
  add_queue_sections(set, "queue_real", state.queue_real);
  add_queue_sections(set, "queue_fake", state.queue_fake);
  set.add_scalar("ada.p", state.ada.p);
  if (!state.ada.window.empty()) {
    std::vector<double> w(state.ada.window.begin(), state.ada.window.end());
    const int n = static_cast<int>(w.size());
    set.add("ada.window", {n, 1}, std::move(w));
  }
  return set;
}

std::map<std::string, Section> read_sections(std::istream& in, std::uint32_t count) {
  std::map<std::string, Section> sections;
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::uint32_t name_len = read_u32(in);
    if (name_len > 4096) throw std::runtime_error("corrupt checkpoint file (invalid section name)");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("truncated checkpoint file (unexpected end of data)");
    const std::uint32_t ndim = read_u32(in);
    if (ndim > 8) throw std::runtime_error("corrupt checkpoint file (invalid section rank)");
    Section sec;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      sec.shape.push_back(static_cast<int>(read_u64(in)));
      if (sec.shape.back() < 0 || n > (1u << 30)) {
        throw std::runtime_error("corrupt checkpoint file (invalid section shape)");
      }
      n *= static_cast<std::size_t>(sec.shape.back());
    }
    sec.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) sec.data[i] = std::bit_cast<double>(read_u64(in));
    sections[name] = std::move(sec);
  }
  return sections;
}

const Section& expect_section(const std::map<std::string, Section>& sections,
                              const std::string& name, const std::vector<int>& shape) {
  auto it = sections.find(name);
  if (it == sections.end()) {
    throw std::runtime_error("checkpoint is missing tensor " + name);
  }
  if (it->second.shape != shape) {
    throw std::runtime_error("shape mismatch for tensor " + name + ": file " +
                             shape_str(it->second.shape) + " vs expected " + shape_str(shape));
  }
  return it->second;
}

void load_net_sections(const std::map<std::string, Section>& sections, const std::string& prefix,
                       NetworkParams& net) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    net.layers[i].weight.data() =
        expect_section(sections, prefix + ".layer" + std::to_string(i) + ".weight",
                       net.layers[i].weight.shape())
            .data;
    net.layers[i].bias.data() =
        expect_section(sections, prefix + ".layer" + std::to_string(i) + ".bias",
                       net.layers[i].bias.shape())
            .data;
  }
}

void load_bundle_sections(const std::map<std::string, Section>& sections, const std::string& prefix,
                          DiscriminatorBundle& d) {
  load_net_sections(sections, prefix + ".backbone", d.backbone);
  load_net_sections(sections, prefix + ".domain", d.domain_head);
  load_net_sections(sections, prefix + ".real", d.real_head);
  load_net_sections(sections, prefix + ".fake", d.fake_head);
}

void load_adam_sections(const std::map<std::string, Section>& sections, const std::string& prefix,
                        AdamOptimizer& adam, const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> m, v;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m.push_back(expect_section(sections, prefix + ".m." + std::to_string(i), params[i].shape()).data);
    v.push_back(expect_section(sections, prefix + ".v." + std::to_string(i), params[i].shape()).data);
  }
  const double t = expect_section(sections, prefix + ".t", {1, 1}).data[0];
  adam.restore(std::move(m), std::move(v), static_cast<std::uint64_t>(t));
}

void load_queue_sections(const std::map<std::string, Section>& sections, const std::string& prefix,
                         FeatureQueue& q) {
  const Section& meta = expect_section(sections, prefix + ".meta", {1, 3});
  const int capacity = static_cast<int>(meta.data[0]);
  const int fill = static_cast<int>(meta.data[1]);
  const int dim = static_cast<int>(meta.data[2]);
  if (capacity != q.capacity() || dim != q.dim()) {
    throw std::runtime_error("shape mismatch for tensor " + prefix + ".meta: file queue " +
                             std::to_string(capacity) + "x" + std::to_string(dim) +
                             " vs expected " + std::to_string(q.capacity()) + "x" +
                             std::to_string(q.dim()));
  }
  std::vector<std::vector<double>> rows;
  if (fill > 0) {
    const Section& data = expect_section(sections, prefix + ".rows", {fill, dim});
    for (int i = 0; i < fill; ++i) {
      rows.emplace_back(data.data.begin() + static_cast<std::ptrdiff_t>(i) * dim,
                        data.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * dim);
    }
  }
  q.restore(std::move(rows));
}

}  // namespace

void checkpoint_save(const TrainState& state, const TrainConfig& cfg,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint " + path.string() + " for writing");

  SectionSet set = collect_sections(state);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_u64(out, fnv1a_hash(cfg.config_json));
  write_u64(out, state.step);
  write_u32(out, static_cast<std::uint32_t>(cfg.config_json.size()));
  out.write(cfg.config_json.data(), static_cast<std::streamsize>(cfg.config_json.size()));
  write_u32(out, static_cast<std::uint32_t>(set.names().size()));
  for (const auto& name : set.names()) {
    const Section& sec = set.at(name);
    write_section(out, name, sec.shape, sec.data);
  }
  if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

CheckpointInfo checkpoint_peek(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  CheckpointInfo info;
  info.version = read_u32(in);
  if (info.version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(info.version) +
                             " (expected " + std::to_string(kVersion) + ")");
  }
  info.config_hash = read_u64(in);
  info.step = read_u64(in);
  const std::uint32_t json_len = read_u32(in);
  info.config_json.resize(json_len);
  in.read(info.config_json.data(), json_len);
  if (!in) throw std::runtime_error("truncated checkpoint file (unexpected end of data)");
  if (fnv1a_hash(info.config_json) != info.config_hash) {
    throw std::runtime_error("checkpoint config hash does not match embedded config");
  }
  return info;
}

TrainState checkpoint_load(const std::filesystem::path& path, const TrainConfig& cfg,
                           const Dataset& dataset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " (expected " + std::to_string(kVersion) + ")");
  }
  const std::uint64_t stored_hash = read_u64(in);
  const std::uint64_t step = read_u64(in);
  const std::uint32_t json_len = read_u32(in);
  std::string json(json_len, '\0');
  in.read(json.data(), json_len);
  if (!in) throw std::runtime_error("truncated checkpoint file (unexpected end of data)");
  if (fnv1a_hash(json) != stored_hash) {
    throw std::runtime_error("checkpoint config hash does not match embedded config");
  }
  const std::uint32_t n_sections = read_u32(in);
  auto sections = read_sections(in, n_sections);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("corrupt checkpoint file (trailing data)");
  }

  TrainState state = init_state(cfg, dataset);
  load_net_sections(sections, "gen", state.gen);
  load_net_sections(sections, "gen_ema", state.gen_ema);
  load_bundle_sections(sections, "disc", state.disc);
  load_bundle_sections(sections, "disc_m", state.disc_momentum);
  load_adam_sections(sections, "adam_d", state.adam_d, state.disc.parameters());
  load_adam_sections(sections, "adam_g", state.adam_g, state.gen.parameters());
  load_queue_sections(sections, "queue_real", state.queue_real);
  load_queue_sections(sections, "queue_fake", state.queue_fake);
  state.ada.p = expect_section(sections, "ada.p", {1, 1}).data[0];
  if (auto it = sections.find("ada.window"); it != sections.end()) {
    state.ada.window.assign(it->second.data.begin(), it->second.data.end());
  }
  state.step = step;
  state.d_calls = step * static_cast<std::uint64_t>(cfg.d_steps_per_g);
  return state;
}

}  // namespace insgen
