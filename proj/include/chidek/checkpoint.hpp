#pragma once

#include "chidek/train.hpp"

#include <filesystem>
#include <string>

namespace chidek {

inline constexpr int kCheckpointVersion = 1;

// Layout: a text header ("chidek-checkpoint", "version=N", the model config
// as key=value lines, "end"), then little-endian binary records: tensor
// count, and per tensor its name, rows, cols, value count and f64 values;
// the Adam moments as counted f64 runs and the step counter; finally a
// CRC-32 of every preceding byte.
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Additionally checks every stored tensor against the shapes implied by
// `expected`; a mismatch raises a Shape error naming the tensor.
Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace chidek
