#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "insgen/metrics.hpp"

namespace insgen {

// Entry point for the command-line tool; args excludes the program name.
// Returns the process exit status (0 iff all requested outputs were written).
int run_cli(std::vector<std::string> args);

struct TrainingOutcome {
  std::vector<RunRecord> records;
  std::filesystem::path out_dir;
};

// Runs one training job from a resolved config document: metrics CSV,
// checkpoints, and the standard SVG plots all land in out_dir.
TrainingOutcome run_training_job(const nlohmann::json& cfg, const std::filesystem::path& out_dir);

int cmd_train(const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
              const std::filesystem::path& out_dir);
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_arg,
             const std::filesystem::path& out_dir);
int cmd_ablate(const std::filesystem::path& config_path, const std::vector<std::string>& presets,
               const std::vector<std::string>& overrides, const std::filesystem::path& out_dir);
int cmd_sweep_queue(const std::filesystem::path& config_path, const std::vector<int>& lengths,
                    const std::vector<std::string>& overrides, const std::filesystem::path& out_dir,
                    bool parallel);

}  // namespace insgen
