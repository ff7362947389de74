#include "polydeform/data/dataset.hpp"

#include <cstdio>

#include "polydeform/error.hpp"
#include "polydeform/io/png_io.hpp"
#include "polydeform/io/polygon_json.hpp"
#include "polydeform/model/config.hpp"

namespace polydeform::data {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSplitNames[3] = {"train", "val", "test"};

std::string scene_stem(const std::string& split, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05zu", split.c_str(), k);
  return buf;
}

std::string mask_name(const std::string& stem, std::size_t i, const char* kind) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s_%02zu_%s.png", stem.c_str(), i, kind);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = io::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

Split build_split(const DatasetConfig& cfg, int split_id, int target) {
  Split split;
  split.name = kSplitNames[split_id];
  const std::uint64_t split_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(split_id));
  int guard = 0;
  while (static_cast<int>(split.items.size()) < target) {
    if (++guard > target * 20 + 100) throw ContractError("build_dataset: scenes yield too few usable instances");
    const std::size_t k = split.scenes.size();
    auto scene = generate_scene(mix_seed(split_seed, k), cfg.scene);
    for (std::size_t i = 0; i < scene.instances.size() && static_cast<int>(split.items.size()) < target; ++i) {
      auto init = corrupt_mask(scene.instances[i].mask, cfg.corruption, mix_seed(scene.seed, 1000 + i));
      if (!init) continue;
      split.items.push_back({static_cast<int>(k), static_cast<int>(i), std::move(*init)});
    }
    split.scenes.push_back(std::move(scene));
  }
  return split;
}

}  // namespace

void DatasetConfig::validate() const {
  scene.validate();
  corruption.validate();
  if (train_instances < 0 || val_instances < 0 || test_instances < 0) {
    throw ValidationError("dataset: instance counts must be >= 0");
  }
}

nlohmann::json to_json(const DatasetConfig& cfg) {
  return {{"scene", to_json(cfg.scene)},
          {"corruption", to_json(cfg.corruption)},
          {"train_instances", cfg.train_instances},
          {"val_instances", cfg.val_instances},
          {"test_instances", cfg.test_instances},
          {"seed", cfg.seed}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("dataset config must be a JSON object");
  DatasetConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "scene") cfg.scene = scene_config_from_json(value);
      else if (key == "corruption") cfg.corruption = corruption_config_from_json(value);
      else if (key == "train_instances") cfg.train_instances = value.get<int>();
      else if (key == "val_instances") cfg.val_instances = value.get<int>();
      else if (key == "test_instances") cfg.test_instances = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw ValidationError("dataset: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("dataset." + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string dataset_config_hash(const DatasetConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(model::fnv1a64(to_json(cfg).dump())));
  return buf;
}

const Split& Dataset::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ContractError("dataset has no split '" + name + "'");
}

Dataset build_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  const int targets[3] = {cfg.train_instances, cfg.val_instances, cfg.test_instances};
  for (int s = 0; s < 3; ++s) ds.splits.push_back(build_split(cfg, s, targets[s]));
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "annotations");
  fs::create_directories(dir / "masks");
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["config"] = to_json(ds.config);
  manifest["config_hash"] = dataset_config_hash(ds.config);
  manifest["classes"] = class_names();
  for (const auto& split : ds.splits) {
    nlohmann::json scenes = nlohmann::json::array();
    for (std::size_t k = 0; k < split.scenes.size(); ++k) {
      const auto& scene = split.scenes[k];
      const auto stem = scene_stem(split.name, k);
      io::write_file(dir / "images" / (stem + ".png"), io::encode_png(scene.image));
      io::PolygonDocument doc;
      for (std::size_t i = 0; i < scene.instances.size(); ++i) {
        const auto& inst = scene.instances[i];
        doc.instances.push_back({class_names()[static_cast<std::size_t>(inst.label)], 1.0, inst.polygons});
        io::write_file(dir / "masks" / mask_name(stem, i, "gt"), io::encode_mask_png(inst.mask));
      }
      write_text(dir / "annotations" / (stem + ".json"), io::dump_polygon_json(doc));
      scenes.push_back({{"stem", stem}, {"seed", scene.seed}, {"instances", scene.instances.size()}});
    }
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : split.items) {
      const auto stem = scene_stem(split.name, static_cast<std::size_t>(item.scene));
      io::write_file(dir / "masks" / mask_name(stem, static_cast<std::size_t>(item.instance), "init"),
                     io::encode_mask_png(item.init_mask));
      items.push_back({item.scene, item.instance});
    }
    manifest["splits"][split.name] = {{"scenes", scenes}, {"items", items}};
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset manifest: " + std::string(e.what()));
  } catch (const Error& e) {
    throw ValidationError("dataset manifest: " + std::string(e.what()));
  }
  Dataset ds;
  try {
    ds.config = dataset_config_from_json(manifest.at("config"));
    for (const char* name : kSplitNames) {
      const auto& js = manifest.at("splits").at(name);
      Split split;
      split.name = name;
      for (const auto& sj : js.at("scenes")) {
        const std::string stem = sj.at("stem").get<std::string>();
        SyntheticScene scene;
        scene.seed = sj.at("seed").get<std::uint64_t>();
        scene.image = io::decode_png(io::read_file(dir / "images" / (stem + ".png")));
        const auto doc = io::parse_polygon_json(read_text(dir / "annotations" / (stem + ".json")));
        for (std::size_t i = 0; i < doc.instances.size(); ++i) {
          SceneInstance inst;
          inst.label = class_id(doc.instances[i].label);
          inst.polygons = doc.instances[i].polygons;
          inst.mask = io::decode_mask_png(io::read_file(dir / "masks" / mask_name(stem, i, "gt")));
          scene.instances.push_back(std::move(inst));
        }
        split.scenes.push_back(std::move(scene));
      }
      for (const auto& ij : js.at("items")) {
        DatasetItem item;
        item.scene = ij.at(0).get<int>();
        item.instance = ij.at(1).get<int>();
        if (item.scene < 0 || item.scene >= static_cast<int>(split.scenes.size()) || item.instance < 0 ||
            item.instance >= static_cast<int>(split.scenes[static_cast<std::size_t>(item.scene)].instances.size())) {
          throw ValidationError("dataset manifest: item reference out of range");
        }
        const auto stem = scene_stem(name, static_cast<std::size_t>(item.scene));
        item.init_mask =
            io::decode_mask_png(io::read_file(dir / "masks" / mask_name(stem, static_cast<std::size_t>(item.instance), "init")));
        split.items.push_back(std::move(item));
      }
      ds.splits.push_back(std::move(split));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset manifest: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace polydeform::data
