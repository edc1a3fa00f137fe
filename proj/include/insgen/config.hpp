#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "insgen/datasets.hpp"
#include "insgen/trainer.hpp"

namespace insgen {

// Full default run configuration; every known key present.
nlohmann::json default_config();

// Recursively rejects keys that are not part of the schema, reporting the
// offending dotted path. Scalar types must match the defaults.
void validate_config(const nlohmann::json& cfg);

// Reads a config file and merges it over the defaults; unknown keys reject.
nlohmann::json load_config_file(const std::filesystem::path& path);

// "section.key=value" assignment. Lists use comma syntax: "model.g_hidden=32,32".
void apply_override(nlohmann::json& cfg, const std::string& dotted_assignment);

// Applies INSGEN_<SECTION>_<KEY> environment variables for every known key.
void apply_env_overrides(nlohmann::json& cfg);

// Sorted-key single-line dump used for hashing and checkpoint embedding.
std::string canonical_dump(const nlohmann::json& cfg);

TrainConfig materialize_train_config(const nlohmann::json& cfg);
Dataset materialize_dataset(const nlohmann::json& cfg);

// Ablation presets mirroring the study rows: baseline, +cr, +cf_vanilla,
// +cf, +cfg. Later presets enable successively more terms; the vanilla
// variant zeroes the latent perturbation.
std::vector<std::string> ablation_presets();
void apply_preset(nlohmann::json& cfg, const std::string& preset);

}  // namespace insgen
