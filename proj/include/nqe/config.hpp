#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "nqe/trainer.hpp"

namespace nqe {

struct RunPaths {
  std::string store;
  std::string data;
  std::string checkpoint;
  std::string loss_csv;
  std::string report;
};

struct RunConfig {
  TrainConfig train;
  RunPaths paths;
};

// TOML, parsed with toml++. Sections are [model], [train], [ablation] and
// [paths]; syntax errors, unknown sections or keys and ill-typed values raise
// FormatError with the line number.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace nqe
