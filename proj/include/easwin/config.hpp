// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "easwin/data.hpp"
#include "easwin/model.hpp"
#include "easwin/trainer.hpp"

namespace easwin {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | files
  std::string preset = "default";
  SyntheticSpec spec = synthetic_preset("default");
  std::string train_path;
  std::string val_path;
  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  std::string checkpoint;
  std::vector<Index> frame_counts = {16, 8, 4, 2};
  Index batch_size = 64;
  bool operator==(const EvalConfig&) const = default;
};

/// Tiny model checked against central finite differences in 64-bit.
struct GradcheckConfig {
  Index d_model = 8;
  Index heads = 2;
  Index frames = 4;
  Index tokens = 4;
  Index window = 2;
  Index depth_t = 1;
  Index depth_s = 1;
  Index input_dim = 3;
  Index batch = 2;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  bool operator==(const GradcheckConfig&) const = default;
};

struct BenchConfig {
  Index d_model = 128;
  Index heads = 8;
  Index tokens = 16;
  Index window = 4;
  std::vector<Index> frames = {8, 16, 32, 64};
  Index repeats = 1;
  bool operator==(const BenchConfig&) const = default;
};

/// Everything a command needs; the persisted config.json of a run.
struct RunConfig {
  HeadConfig head;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  GradcheckConfig gradcheck;
  BenchConfig bench;
  std::string output_dir = "runs/default";

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Every from_json rejects unknown keys and wrong types with ConfigError naming
// the dotted path; missing keys keep their defaults.
nlohmann::json to_json(const HeadConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SyntheticSpec& s);
nlohmann::json to_json(const RunConfig& c);
HeadConfig head_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& c);

/// Sets one key by dotted path ("train.lr") in a possibly partial config
/// document, creating sections as needed. The value is parsed as JSON when
/// possible and taken as a string otherwise. Paths outside the canonical
/// config are ConfigErrors.
void apply_override(nlohmann::json& j, const std::string& path, const std::string& value);

/// Dotted paths of every leaf key of the canonical config, sorted.
std::vector<std::string> config_keys();

/// Generates the synthetic splits or reads the two embedding files.
SyntheticData load_datasets(const DataConfig& data);

}  // namespace easwin
