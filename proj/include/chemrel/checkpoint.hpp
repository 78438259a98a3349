#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "chemrel/encoder.hpp"

namespace chemrel {

/// Model plus named scalar metadata (label scaling and the like).
struct Checkpoint {
  encoder::Model model;
  std::map<std::string, double> metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary container; layout documented in docs/checkpoint.md.
std::vector<unsigned char> serialize(const Checkpoint& checkpoint);
Checkpoint deserialize(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace chemrel
