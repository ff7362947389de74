#pragma once

// Binary checkpoint container:
//
//   magic "PDCKPT01" | u32 version | u64 manifest length | manifest JSON
//   u64 tensor count | per tensor:
//     u32 name length | name | u8 dtype (0 = f32, 1 = f64) | u32 rank
//     u64 dims[rank] | little-endian values
//
// All integers are little-endian. The manifest carries architecture
// hyperparameters, the config hash, step count and RNG state.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/autodiff/parameters.hpp"
#include "polydeform/autodiff/tensor.hpp"

namespace polydeform::autodiff {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct CheckpointTensor {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  /// Values widened to double; narrowing back to the stored dtype is exact.
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws ValidationError on truncated or malformed input.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter as `prefix + name`.
template <typename T>
void append_parameters(Checkpoint& ckpt, const ParameterSet<T>& params, const std::string& prefix = "");

/// Restores parameters stored as `prefix + name`; throws CompatibilityError
/// on missing names or shape mismatches.
template <typename T>
void restore_parameters(const Checkpoint& ckpt, ParameterSet<T>& params, const std::string& prefix = "");

}  // namespace polydeform::autodiff
