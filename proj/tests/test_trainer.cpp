#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "insgen/trainer.hpp"

using namespace insgen;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.steps = 24;
  cfg.batch = 8;
  cfg.eval_every = 8;
  cfg.ckpt_every = 12;
  cfg.g_hidden = {12, 12};
  cfg.d_hidden = {12, 12};
  cfg.feat_dim = 12;
  cfg.proj_dim = 6;
  cfg.eval_samples = 64;
  cfg.contrastive.queue_real = 16;
  cfg.contrastive.queue_fake = 16;
  cfg.seed = 123;
  return cfg;
}

Dataset tiny_dataset() { return make_ring(8, 2.0, 0.15, 128, 9); }

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

bool params_bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].data() != b[i].data()) return false;
  }
  return true;
}

std::vector<Tensor> clone_all(const std::vector<Tensor>& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.clone(false));
  return out;
}

}  // namespace

TEST_CASE("adam leaves parameters unchanged on a zero-grad step from fresh state") {
  Tensor p = Tensor::row({1.0, -2.0, 3.0}, true);
  AdamOptimizer adam(0.01, 0.0, 0.99);
  adam.attach({p});
  adam.zero_grad();
  p.grad();  // allocate zeros
  adam.step();
  CHECK(p.data()[0] == 1.0);
  CHECK(p.data()[1] == -2.0);
  CHECK(p.data()[2] == 3.0);
  CHECK(adam.iterations() == 1);
}

TEST_CASE("adam moves parameters against the gradient") {
  Tensor p = Tensor::row({1.0}, true);
  AdamOptimizer adam(0.1, 0.9, 0.999);
  adam.attach({p});
  p.grad()[0] = 2.5;
  adam.step();
  CHECK(p.data()[0] < 1.0);
}

TEST_CASE("generator is frozen through a d_step") {
  TrainConfig cfg = tiny_config();
  Dataset ds = tiny_dataset();
  TrainState state = init_state(cfg, ds);
  std::vector<Tensor> before = clone_all(state.gen.parameters());

  Tensor batch = Tensor::zeros({cfg.batch, 2});
  for (int i = 0; i < cfg.batch; ++i) {
    batch.at(i, 0) = ds.samples.at(i, 0);
    batch.at(i, 1) = ds.samples.at(i, 1);
  }
  d_step(state, cfg, batch);

  CHECK(params_bitwise_equal(before, clone_all(state.gen.parameters())));
  for (const Tensor& p : state.gen.parameters()) {
    CHECK(p.requires_grad());  // restored after the step
    if (p.has_grad()) {
      for (double v : p.grad()) CHECK(v == 0.0);
    }
  }
  // The discriminator moved.
  CHECK_FALSE(params_bitwise_equal(clone_all(state.disc.parameters()),
                                   clone_all(init_state(cfg, ds).disc.parameters())));
}

TEST_CASE("discriminator is frozen through a g_step") {
  TrainConfig cfg = tiny_config();
  Dataset ds = tiny_dataset();
  TrainState state = init_state(cfg, ds);
  std::vector<Tensor> before = clone_all(state.disc.parameters());

  g_step(state, cfg);

  CHECK(params_bitwise_equal(before, clone_all(state.disc.parameters())));
  for (const Tensor& p : state.disc.parameters()) {
    CHECK(p.requires_grad());
    CHECK_FALSE(p.has_grad());  // fresh state, D never touched
  }
}

TEST_CASE("d_step with zero lambdas and p=0 reproduces a plain GAN step bitwise") {
  TrainConfig cfg = tiny_config();
  cfg.weights.lambda_r_d = 0.0;
  cfg.weights.lambda_f_d = 0.0;
  cfg.ada.p0 = 0.0;
  Dataset ds = tiny_dataset();

  TrainState state = init_state(cfg, ds);
  Tensor batch = Tensor::zeros({cfg.batch, 2});
  for (int i = 0; i < cfg.batch; ++i) {
    batch.at(i, 0) = ds.samples.at(i, 0);
    batch.at(i, 1) = ds.samples.at(i, 1);
  }
  d_step(state, cfg, batch);

  // Reference: the same update assembled from the public pieces, replaying
  // the same stream derivations.
  TrainState ref = init_state(cfg, ds);
  RngStream rng = RngStream(ref.seed).substream(trainer_stream::kDStep).substream(0);
  AugmentConfig aug = cfg.augment;
  aug.p = 0.0;
  ref.adam_d.zero_grad();
  Graph g;
  Tensor z = sample_latents(cfg.batch, cfg.latent_dim, rng.substream(trainer_stream::kLatent));
  Tensor fake = net_eval(ref.gen, z);
  Tensor real_view = apply(g, batch, aug, rng.substream(trainer_stream::kRealAug));
  Tensor fake_view = apply(g, fake, aug, rng.substream(trainer_stream::kFakeAug));
  Tensor real_logits = disc_forward(g, ref.disc, real_view, DiscHead::Domain);
  Tensor fake_logits = disc_forward(g, ref.disc, fake_view, DiscHead::Domain);
  Tensor l_d = d_logistic_loss(g, real_logits, fake_logits);
  Tensor r1 = r1_penalty(g, ref.disc, real_view.detach(), cfg.weights.r1_gamma * cfg.r1_interval);
  Tensor total = g.add(l_d, r1);
  g.backward(total);
  ref.adam_d.step();

  CHECK(params_bitwise_equal(clone_all(state.disc.parameters()),
                             clone_all(ref.disc.parameters())));
}

TEST_CASE("g_step with lambda_g=0 reproduces a plain non-saturating step bitwise") {
  TrainConfig cfg = tiny_config();
  cfg.weights.lambda_g = 0.0;
  Dataset ds = tiny_dataset();

  TrainState state = init_state(cfg, ds);
  g_step(state, cfg);

  TrainState ref = init_state(cfg, ds);
  RngStream rng = RngStream(ref.seed).substream(trainer_stream::kGStep).substream(0);
  AugmentConfig aug = cfg.augment;
  aug.p = 0.0;
  ref.adam_g.zero_grad();
  Graph g;
  Tensor z = sample_latents(cfg.batch, cfg.latent_dim, rng.substream(trainer_stream::kLatent));
  Tensor fake = net_forward(g, ref.gen, z);
  Tensor fake_view = apply(g, fake, aug, rng.substream(trainer_stream::kFakeAug));
  Tensor l_g = g_nonsat_loss(g, disc_forward(g, ref.disc, fake_view, DiscHead::Domain));
  g.backward(l_g);
  ref.adam_g.step();
  momentum_update(ref.gen, ref.gen_ema, cfg.ema_decay);

  CHECK(params_bitwise_equal(clone_all(state.gen.parameters()), clone_all(ref.gen.parameters())));
  CHECK(params_bitwise_equal(clone_all(state.gen_ema.parameters()),
                             clone_all(ref.gen_ema.parameters())));
}

TEST_CASE("ema_decay=0 makes the EMA track the generator exactly") {
  TrainConfig cfg = tiny_config();
  cfg.ema_decay = 0.0;
  Dataset ds = tiny_dataset();
  TrainState state = init_state(cfg, ds);
  g_step(state, cfg);
  CHECK(params_bitwise_equal(clone_all(state.gen.parameters()),
                             clone_all(state.gen_ema.parameters())));
}

TEST_CASE("two identical runs produce identical metrics logs") {
  TrainConfig cfg = tiny_config();
  Dataset ds = tiny_dataset();
  auto dir1 = temp_dir("insgen_run_a");
  auto dir2 = temp_dir("insgen_run_b");
  run(cfg, ds, {dir1, nullptr});
  run(cfg, ds, {dir2, nullptr});
  const std::string a = slurp(dir1 / "metrics.csv");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(dir2 / "metrics.csv"));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("steps=0 emits the initial checkpoint only") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 0;
  Dataset ds = tiny_dataset();
  auto dir = temp_dir("insgen_run_zero");
  run(cfg, ds, {dir, nullptr});
  CHECK(std::filesystem::exists(dir / "checkpoint_000000.bin"));
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoint_final.bin"));
  int checkpoints = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().filename().string().rfind("checkpoint_", 0) == 0) ++checkpoints;
  }
  CHECK(checkpoints == 1);
  // Metrics log holds only the header.
  std::string csv = slurp(dir / "metrics.csv");
  CHECK(csv == CsvMetricsWriter::header() + "\n");
  std::filesystem::remove_all(dir);
}

TEST_CASE("split-resume reproduces the unbroken run bitwise on metrics") {
  TrainConfig cfg = tiny_config();
  Dataset ds = tiny_dataset();

  auto full_dir = temp_dir("insgen_run_full");
  run(cfg, ds, {full_dir, nullptr});

  // Split at an eval boundary so the half run logs exactly the same rows.
  auto split_dir = temp_dir("insgen_run_split");
  TrainConfig half = cfg;
  half.steps = 16;
  run(half, ds, {split_dir, nullptr});
  TrainState resumed = checkpoint_load(split_dir / "checkpoint_000016.bin", cfg, ds);
  CHECK(resumed.step == 16);
  run_from(std::move(resumed), cfg, ds, {split_dir, nullptr});

  CHECK(slurp(full_dir / "metrics.csv") == slurp(split_dir / "metrics.csv"));
  std::filesystem::remove_all(full_dir);
  std::filesystem::remove_all(split_dir);
}

TEST_CASE("checkpoint save-load-save is byte identical") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 6;
  cfg.config_json = "{\"check\":1}";
  Dataset ds = tiny_dataset();
  auto dir = temp_dir("insgen_ckpt_rt");
  std::filesystem::create_directories(dir);

  TrainState state = run(cfg, ds, {});
  checkpoint_save(state, cfg, dir / "a.bin");
  TrainState loaded = checkpoint_load(dir / "a.bin", cfg, ds);
  checkpoint_save(loaded, cfg, dir / "b.bin");
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK(loaded.step == state.step);
  CHECK(loaded.d_calls == state.d_calls);
  CHECK(loaded.ada.p == state.ada.p);
  CHECK(loaded.queue_real.fill() == state.queue_real.fill());
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint peek reports header fields") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 2;
  cfg.config_json = "{\"x\":42}";
  Dataset ds = tiny_dataset();
  auto dir = temp_dir("insgen_ckpt_peek");
  std::filesystem::create_directories(dir);
  TrainState state = run(cfg, ds, {});
  checkpoint_save(state, cfg, dir / "c.bin");
  CheckpointInfo info = checkpoint_peek(dir / "c.bin");
  CHECK(info.step == 2);
  CHECK(info.config_json == "{\"x\":42}");
  CHECK(info.config_hash == fnv1a_hash("{\"x\":42}"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("loading with the wrong proj_dim names the offending tensor") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 1;
  Dataset ds = tiny_dataset();
  auto dir = temp_dir("insgen_ckpt_shape");
  std::filesystem::create_directories(dir);
  TrainState state = run(cfg, ds, {});
  checkpoint_save(state, cfg, dir / "c.bin");

  TrainConfig wrong = cfg;
  wrong.proj_dim = 5;
  try {
    checkpoint_load(dir / "c.bin", wrong, ds);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("shape mismatch") != std::string::npos);
    CHECK(msg.find("disc.real") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated checkpoints are rejected as truncated") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 1;
  Dataset ds = tiny_dataset();
  auto dir = temp_dir("insgen_ckpt_trunc");
  std::filesystem::create_directories(dir);
  TrainState state = run(cfg, ds, {});
  checkpoint_save(state, cfg, dir / "c.bin");

  std::string bytes = slurp(dir / "c.bin");
  std::ofstream(dir / "t.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 7);
  try {
    checkpoint_load(dir / "t.bin", cfg, ds);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  // Garbage header is a different diagnostic.
  std::ofstream(dir / "g.bin", std::ios::binary) << "NOTACKPT" << bytes.substr(8);
  try {
    checkpoint_load(dir / "g.bin", cfg, ds);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("full config keeps every logged loss finite once queues warm up") {
  TrainConfig cfg = tiny_config();
  cfg.steps = 40;
  cfg.eval_every = 4;
  Dataset ds = tiny_dataset();
  std::vector<RunRecord> records;
  RunOptions opts;
  opts.sink = [&records](const RunRecord& r) { records.push_back(r); };
  run(cfg, ds, opts);
  REQUIRE(records.size() == 10);
  for (const auto& r : records) {
    CHECK(std::isfinite(r.l_d));
    CHECK(std::isfinite(r.l_g));
    CHECK(std::isfinite(r.c_r_d));
    CHECK(std::isfinite(r.c_f_d));
    CHECK(std::isfinite(r.c_f_g));
    CHECK(std::isfinite(r.frechet));
  }
  // Contrastive terms engage after warmup.
  CHECK(records.back().c_r_d != 0.0);
  CHECK(records.back().c_f_d != 0.0);
  CHECK(records.back().c_f_g != 0.0);
}
