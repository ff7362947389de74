#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/data/corrupt.hpp"
#include "polydeform/data/scene.hpp"

namespace polydeform::data {

struct DatasetConfig {
  SceneConfig scene;
  CorruptionConfig corruption;
  int train_instances = 2000;
  int val_instances = 100;
  int test_instances = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

/// One usable instance: where it lives and its corrupted initialization.
struct DatasetItem {
  int scene = 0;
  int instance = 0;
  BinaryMask init_mask{1, 1};
};

struct Split {
  std::string name;
  std::vector<SyntheticScene> scenes;
  std::vector<DatasetItem> items;
};

struct Dataset {
  DatasetConfig config;
  std::vector<Split> splits;  // train, val, test

  /// Throws ContractError for unknown names.
  const Split& split(const std::string& name) const;
};

/// Deterministic in the config (including its seed).
Dataset build_dataset(const DatasetConfig& cfg);

/// Layout: manifest.json, images/<split>_<k>.png, annotations/<split>_<k>.json
/// (polygon JSON) and masks/<split>_<k>_<i>_{gt,init}.png.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws ValidationError on missing or malformed files.
Dataset load_dataset(const std::filesystem::path& dir);

std::string dataset_config_hash(const DatasetConfig& cfg);

}  // namespace polydeform::data
