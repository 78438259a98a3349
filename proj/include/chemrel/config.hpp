#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "chemrel/data.hpp"
#include "chemrel/encoder.hpp"
#include "chemrel/training.hpp"

namespace chemrel::config {

/// Flat `key = value` file. '#' starts a comment; blank lines are ignored.
/// Duplicate keys and malformed lines are SchemaErrors carrying the line number.
std::map<std::string, std::string> parse(std::string_view text);

/// Canonical text form, keys sorted, one per line.
std::string format(const std::map<std::string, std::string>& values);

/// Everything one training command needs. Keys are documented in docs/formats.md.
struct RunSettings {
  std::filesystem::path dataset;
  std::string schema_name = "aqueous";
  data::CsvSchema schema = data::CsvSchema::aqueous();
  /// data.seed drives both the split and the batch order.
  data::SplitSpec split;
  encoder::ModelConfig model;
  training::TrainConfig train;
  std::vector<std::uint64_t> suite_seeds{0, 1, 2, 3, 4};
  training::SuiteMode suite_mode = training::SuiteMode::DataSeed;
};

/// Resolves keys over the defaults. Unknown keys, bad values and a missing
/// data.path raise SchemaError naming the key. Relative data.path entries are
/// taken relative to `base_dir`.
RunSettings resolve(const std::map<std::string, std::string>& values, const std::filesystem::path& base_dir);

/// Every key with its resolved value; resolve(snapshot(s), "/") == s.
std::map<std::string, std::string> snapshot(const RunSettings& settings);

}  // namespace chemrel::config
