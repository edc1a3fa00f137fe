#include "insgen/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace insgen {

using nlohmann::json;

json default_config() {
  return json{
      {"dataset",
       {{"kind", "ring"},
        {"modes", 8},
        {"radius", 2.0},
        {"sigma", 0.15},
        {"count", 2048},
        {"side", 5},
        {"spacing", 1.0},
        {"path", ""},
        {"subsample", 0},
        {"mirror", false},
        {"seed", 1}}},
      {"model",
       {{"latent_dim", 2},
        {"g_hidden", json::array({64, 64, 64})},
        {"d_hidden", json::array({64, 64, 64})},
        {"feat_dim", 64},
        {"proj_dim", 32},
        {"lrelu_slope", 0.2}}},
      {"loss",
       {{"lambda_r_d", 1.0},
        {"lambda_f_d", 1.0},
        {"lambda_g", 1.0},
        {"r1_gamma", 0.1},
        {"r1_interval", 16}}},
      {"contrastive",
       {{"tau", 2.0},
        {"sigma_eps", 0.1},
        {"queue_real", 0},
        {"queue_fake", 0},
        {"warmup_fraction", 0.25},
        {"generator_dual_path", false}}},
      {"augment",
       {{"p0", 0.0},
        {"target", 0.6},
        {"step_size", 0.01},
        {"p_max", 0.8},
        {"interval", 4},
        {"window", 4},
        {"rot_max_deg", 30.0},
        {"noise_sigma", 0.05},
        {"scale_log", 0.2},
        {"trans_range", 0.25}}},
      {"trainer",
       {{"steps", 20000},
        {"batch", 32},
        {"lr_d", 0.0025},
        {"lr_g", 0.0025},
        {"beta1", 0.0},
        {"beta2", 0.99},
        {"ema_decay", 0.999},
        {"momentum_alpha", 0.999},
        {"seed", 0},
        {"eval_every", 500},
        {"ckpt_every", 5000},
        {"d_steps_per_g", 1}}},
      {"eval", {{"samples", 1024}, {"hq_radius_mult", 3.0}}},
  };
}

namespace {

void validate_against(const json& defaults, const json& cfg, const std::string& path) {
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) {
      throw std::invalid_argument("unknown config key: " + key_path);
    }
    const json& ref = defaults.at(it.key());
    const json& val = it.value();
    if (ref.is_object()) {
      if (!val.is_object()) throw std::invalid_argument("config key " + key_path + " must be a section");
      validate_against(ref, val, key_path);
    } else if (ref.is_array()) {
      if (!val.is_array()) throw std::invalid_argument("config key " + key_path + " must be a list");
      for (const auto& v : val) {
        if (!v.is_number()) throw std::invalid_argument("config key " + key_path + " must hold numbers");
      }
    } else if (ref.is_boolean()) {
      if (!val.is_boolean()) throw std::invalid_argument("config key " + key_path + " must be a boolean");
    } else if (ref.is_string()) {
      if (!val.is_string()) throw std::invalid_argument("config key " + key_path + " must be a string");
    } else if (ref.is_number()) {
      if (!val.is_number()) throw std::invalid_argument("config key " + key_path + " must be a number");
    }
  }
}

void merge_into(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object()) {
      merge_into(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

json parse_scalar_like(const json& ref, const std::string& text, const std::string& key_path) {
  try {
    if (ref.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw std::invalid_argument("not a boolean");
    }
    if (ref.is_string()) return text;
    if (ref.is_array()) {
      json arr = json::array();
      std::size_t pos = 0;
      while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string cell = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!cell.empty()) arr.push_back(std::stod(cell));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      return arr;
    }
    if (ref.is_number_integer() || ref.is_number_unsigned()) {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
    return std::stod(text);
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse value '" + text + "' for config key " + key_path);
  }
}

const json& default_config_ref() {
  static const json defaults = default_config();
  return defaults;
}

}  // namespace

void validate_config(const json& cfg) {
  if (!cfg.is_object()) throw std::invalid_argument("config root must be an object");
  validate_against(default_config(), cfg, "");
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  json user;
  try {
    in >> user;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config parse error in " + path.string() + ": " + e.what());
  }
  validate_config(user);
  json cfg = default_config();
  merge_into(cfg, user);
  return cfg;
}

void apply_override(json& cfg, const std::string& dotted_assignment) {
  const std::size_t eq = dotted_assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override must look like section.key=value, got '" + dotted_assignment + "'");
  }
  const std::string path = dotted_assignment.substr(0, eq);
  const std::string value = dotted_assignment.substr(eq + 1);

  json* node = &cfg;
  const json* ref = &default_config_ref();
  std::size_t pos = 0;
  std::string key_path;
  while (true) {
    const std::size_t dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    key_path = key_path.empty() ? key : key_path + "." + key;
    if (!ref->contains(key)) throw std::invalid_argument("unknown config key: " + key_path);
    ref = &ref->at(key);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (ref->is_object()) throw std::invalid_argument("config key " + key_path + " is a section, not a value");
  *node = parse_scalar_like(*ref, value, key_path);
}

void apply_env_overrides(json& cfg) {
  const json& defaults = default_config_ref();
  for (auto sec = defaults.begin(); sec != defaults.end(); ++sec) {
    for (auto key = sec->begin(); key != sec->end(); ++key) {
      std::string env_name = "INSGEN_" + sec.key() + "_" + key.key();
      for (auto& c : env_name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* value = std::getenv(env_name.c_str())) {
        apply_override(cfg, sec.key() + "." + key.key() + "=" + value);
      }
    }
  }
}

std::string canonical_dump(const json& cfg) { return cfg.dump(); }

TrainConfig materialize_train_config(const json& cfg) {
  validate_config(cfg);
  TrainConfig tc;
  const json& t = cfg.at("trainer");
  tc.steps = t.at("steps").get<int>();
  tc.batch = t.at("batch").get<int>();
  tc.lr_d = t.at("lr_d").get<double>();
  tc.lr_g = t.at("lr_g").get<double>();
  tc.adam_beta1 = t.at("beta1").get<double>();
  tc.adam_beta2 = t.at("beta2").get<double>();
  tc.ema_decay = t.at("ema_decay").get<double>();
  tc.momentum_alpha = t.at("momentum_alpha").get<double>();
  tc.seed = t.at("seed").get<std::uint64_t>();
  tc.eval_every = t.at("eval_every").get<int>();
  tc.ckpt_every = t.at("ckpt_every").get<int>();
  tc.d_steps_per_g = t.at("d_steps_per_g").get<int>();

  const json& m = cfg.at("model");
  tc.latent_dim = m.at("latent_dim").get<int>();
  tc.g_hidden = m.at("g_hidden").get<std::vector<int>>();
  tc.d_hidden = m.at("d_hidden").get<std::vector<int>>();
  tc.feat_dim = m.at("feat_dim").get<int>();
  tc.proj_dim = m.at("proj_dim").get<int>();
  tc.lrelu_slope = m.at("lrelu_slope").get<double>();

  const json& l = cfg.at("loss");
  tc.weights.lambda_r_d = l.at("lambda_r_d").get<double>();
  tc.weights.lambda_f_d = l.at("lambda_f_d").get<double>();
  tc.weights.lambda_g = l.at("lambda_g").get<double>();
  tc.weights.r1_gamma = l.at("r1_gamma").get<double>();
  tc.r1_interval = l.at("r1_interval").get<int>();

  const json& c = cfg.at("contrastive");
  tc.contrastive.tau = c.at("tau").get<double>();
  tc.contrastive.sigma_eps = c.at("sigma_eps").get<double>();
  tc.contrastive.queue_real = c.at("queue_real").get<int>();
  tc.contrastive.queue_fake = c.at("queue_fake").get<int>();
  tc.contrastive.warmup_fraction = c.at("warmup_fraction").get<double>();
  tc.contrastive.generator_dual_path = c.at("generator_dual_path").get<bool>();

  const json& a = cfg.at("augment");
  tc.ada.p0 = a.at("p0").get<double>();
  tc.ada.target = a.at("target").get<double>();
  tc.ada.step_size = a.at("step_size").get<double>();
  tc.ada.p_max = a.at("p_max").get<double>();
  tc.ada.interval = a.at("interval").get<int>();
  tc.ada.window = a.at("window").get<int>();
  tc.augment = default_augment_pipeline(tc.ada.p0, a.at("rot_max_deg").get<double>(),
                                        a.at("noise_sigma").get<double>(),
                                        a.at("scale_log").get<double>(),
                                        a.at("trans_range").get<double>());

  const json& e = cfg.at("eval");
  tc.eval_samples = e.at("samples").get<int>();
  tc.hq_radius_mult = e.at("hq_radius_mult").get<double>();

  tc.config_json = canonical_dump(cfg);
  tc.validate();
  return tc;
}

Dataset materialize_dataset(const json& cfg) {
  validate_config(cfg);
  const json& d = cfg.at("dataset");
  const std::string kind = d.at("kind").get<std::string>();
  const std::uint64_t seed = d.at("seed").get<std::uint64_t>();

  Dataset ds;
  if (kind == "ring") {
    ds = make_ring(d.at("modes").get<int>(), d.at("radius").get<double>(),
                   d.at("sigma").get<double>(), d.at("count").get<int>(), seed);
  } else if (kind == "grid") {
    ds = make_grid(d.at("side").get<int>(), d.at("spacing").get<double>(),
                   d.at("sigma").get<double>(), d.at("count").get<int>(), seed);
  } else if (kind == "csv") {
    const std::string path = d.at("path").get<std::string>();
    if (path.empty()) throw std::invalid_argument("dataset.path is required when dataset.kind is 'csv'");
    ds = load_table(path);
  } else {
    throw std::invalid_argument("dataset.kind must be ring, grid, or csv, got '" + kind + "'");
  }

  const int n = d.at("subsample").get<int>();
  const bool mirror = d.at("mirror").get<bool>();
  if (n > 0 || mirror) {
    ds = subsample(ds, n > 0 ? n : ds.count(), seed, mirror);
  }
  return ds;
}

std::vector<std::string> ablation_presets() {
  return {"baseline", "+cr", "+cf_vanilla", "+cf", "+cfg"};
}

void apply_preset(json& cfg, const std::string& preset) {
  auto on = [&](const char* key) {
    double v = cfg.at("loss").at(key).get<double>();
    cfg["loss"][key] = v > 0 ? v : 1.0;
  };
  auto off = [&](const char* key) { cfg["loss"][key] = 0.0; };

  if (preset == "baseline") {
    off("lambda_r_d");
    off("lambda_f_d");
    off("lambda_g");
  } else if (preset == "+cr") {
    on("lambda_r_d");
    off("lambda_f_d");
    off("lambda_g");
  } else if (preset == "+cf_vanilla") {
    on("lambda_r_d");
    on("lambda_f_d");
    off("lambda_g");
    cfg["contrastive"]["sigma_eps"] = 0.0;
  } else if (preset == "+cf") {
    on("lambda_r_d");
    on("lambda_f_d");
    off("lambda_g");
  } else if (preset == "+cfg") {
    on("lambda_r_d");
    on("lambda_f_d");
    on("lambda_g");
  } else {
    throw std::invalid_argument("unknown ablation preset '" + preset + "'");
  }
}

}  // namespace insgen
