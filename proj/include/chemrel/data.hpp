#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chemrel::data {

struct SoluRecord {
  std::string solute;
  /// log10 solubility in mol/L.
  double log_s = 0.0;
  std::optional<std::string> solvent;
  /// Kelvin.
  std::optional<double> temperature;
  std::optional<double> measurement_count;
  std::optional<double> measurement_std;
  /// Parsed for completeness, never used as a feature.
  std::optional<double> solvent_density;
};

/// Column names; empty optional columns are not read.
struct CsvSchema {
  std::string solute_column = "smiles";
  std::string label_column = "logS";
  std::string solvent_column;
  std::string temperature_column;
  std::string count_column;
  std::string std_column;
  std::string density_column;

  static CsvSchema aqueous();
  /// CombiSolu-like: solute, solvent, temperature, density, logS.
  static CsvSchema combisolu();
};

struct LoadResult {
  std::vector<SoluRecord> records;
  std::size_t skipped = 0;
  std::vector<std::string> headers;
};

/// RFC 4180 reader. Rows missing any configured field (solute, label and, when
/// configured, solvent, temperature, density) are skipped and counted.
/// Throws SchemaError listing the available headers when a column is absent.
LoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema);
LoadResult parse_csv(std::string_view contents, const CsvSchema& schema);

/// Splits one CSV line set into rows of fields (quotes, escaped quotes and
/// quoted newlines honoured).
std::vector<std::vector<std::string>> parse_csv_rows(std::string_view contents);

enum class SplitMode { Random, Accurate, T298 };

std::string_view to_string(SplitMode mode);
SplitMode split_mode_from_string(std::string_view text);

struct SplitSpec {
  std::uint64_t seed = 0;
  double test_fraction = 0.10;
  /// Fraction of the non-test remainder held out for validation.
  double validation_fraction = 0.10;
  SplitMode mode = SplitMode::Random;
  /// Accurate mode drops records whose logS rounds to one of these values.
  std::vector<double> outliers{6.4};
};

/// Record indices per partition.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  /// Dropped outliers (accurate mode).
  std::vector<std::size_t> excluded;
};

/// Molecules with more than one measurement and std <= 0.2, outliers removed.
/// Returns record indices. Throws InvalidInputError when the metadata is missing.
std::vector<std::size_t> accurate_subset(std::span<const SoluRecord> records, std::span<const double> outliers = {});

/// 297.5 K <= T < 298.5 K.
bool rounds_to_298(double kelvin);

/// Random: 10% of unique solutes to test, 10% of the rest to validation.
/// Accurate / T298: the fixed subset is the test set; the seed only divides
/// the remaining solutes into train and validation.
Split make_split(std::span<const SoluRecord> records, const SplitSpec& spec);

/// Split manifest JSON: seed, mode and per-partition SMILES and row indices.
std::string split_manifest_json(std::span<const SoluRecord> records, const Split& split, const SplitSpec& spec);

/// Min-max affine map fitted on training labels.
struct LabelScaler {
  double min = 0.0;
  double max = 1.0;

  static LabelScaler fit(std::span<const double> labels);
  double forward(double label) const { return (label - min) / (max - min); }
  double inverse(double scaled) const { return scaled * (max - min) + min; }
};

std::vector<double> labels(std::span<const SoluRecord> records, std::span<const std::size_t> indices);

struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

ErrorMetrics metrics(std::span<const double> predictions, std::span<const double> targets);

struct RunMetrics {
  std::vector<ErrorMetrics> runs;
  ErrorMetrics mean;
  /// Sample standard deviation over runs divided by sqrt(number of runs).
  ErrorMetrics standard_error;
};

RunMetrics summarize(std::span<const ErrorMetrics> runs);

/// Mean and standard error of one scalar over runs.
std::pair<double, double> mean_and_standard_error(std::span<const double> values);

/// Table with one row per run, then AVG and SE rows (SE in parentheses).
std::string format_table(const RunMetrics& summary, std::string_view title = "");

/// Standard deviation (population) of the values.
double standard_deviation(std::span<const double> values);

}  // namespace chemrel::data
