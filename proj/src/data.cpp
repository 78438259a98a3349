#include "chemrel/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "chemrel/error.hpp"
#include "chemrel/io.hpp"

namespace chemrel::data {

CsvSchema CsvSchema::aqueous() { return CsvSchema{}; }

CsvSchema CsvSchema::combisolu() {
  CsvSchema s;
  s.solute_column = "solute_smiles";
  s.label_column = "logS";
  s.solvent_column = "solvent_smiles";
  s.temperature_column = "temperature";
  s.density_column = "solvent_density";
  return s;
}

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view contents) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  const auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < contents.size(); ++i) {
    const char c = contents[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < contents.size() && contents[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw SchemaError("CSV ends inside a quoted field");
  if (any) end_row();
  return rows;
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_number(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

LoadResult parse_csv(std::string_view contents, const CsvSchema& schema) {
  auto rows = parse_csv_rows(contents);
  if (rows.empty()) throw SchemaError("CSV has no header row");
  LoadResult out;
  for (auto& h : rows[0]) out.headers.push_back(trim(h));
  if (!out.headers.empty() && out.headers[0].starts_with("\xEF\xBB\xBF")) out.headers[0].erase(0, 3);

  const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    auto it = std::find(out.headers.begin(), out.headers.end(), name);
    if (it == out.headers.end()) {
      std::string available;
      for (const auto& h : out.headers) available += (available.empty() ? "" : ", ") + h;
      throw SchemaError(fmt::format("CSV has no column '{}' (available: {})", name, available));
    }
    return static_cast<std::size_t>(it - out.headers.begin());
  };
  const auto solute = column(schema.solute_column);
  const auto label = column(schema.label_column);
  if (!solute || !label) throw SchemaError("schema needs solute and label columns");
  const auto solvent = column(schema.solvent_column);
  const auto temperature = column(schema.temperature_column);
  const auto count = column(schema.count_column);
  const auto std_dev = column(schema.std_column);
  const auto density = column(schema.density_column);

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto field = [&](std::optional<std::size_t> c) -> std::string {
      return c && *c < row.size() ? trim(row[*c]) : std::string();
    };
    SoluRecord rec;
    rec.solute = field(solute);
    const auto log_s = parse_number(field(label));
    bool ok = !rec.solute.empty() && log_s.has_value();
    if (solvent) {
      std::string s = field(solvent);
      ok = ok && !s.empty();
      rec.solvent = std::move(s);
    }
    if (temperature) {
      rec.temperature = parse_number(field(temperature));
      ok = ok && rec.temperature && *rec.temperature > 0.0;
    }
    if (density) {
      rec.solvent_density = parse_number(field(density));
      ok = ok && rec.solvent_density.has_value();
    }
    if (count) rec.measurement_count = parse_number(field(count));
    if (std_dev) rec.measurement_std = parse_number(field(std_dev));
    if (!ok) {
      ++out.skipped;
      continue;
    }
    rec.log_s = *log_s;
    out.records.push_back(std::move(rec));
  }
  return out;
}

LoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return parse_csv(io::read_file(path), schema);
}

std::string_view to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::Random:
      return "random";
    case SplitMode::Accurate:
      return "accurate";
    case SplitMode::T298:
      return "t298";
  }
  return "random";
}

SplitMode split_mode_from_string(std::string_view text) {
  if (text == "random") return SplitMode::Random;
  if (text == "accurate") return SplitMode::Accurate;
  if (text == "t298") return SplitMode::T298;
  throw SchemaError(fmt::format("unknown split mode '{}' (random, accurate, t298)", text));
}

namespace {

bool is_outlier(double log_s, std::span<const double> outliers) {
  const double rounded = std::round(log_s * 10.0) / 10.0;
  return std::any_of(outliers.begin(), outliers.end(),
                     [rounded](double o) { return std::abs(rounded - o) < 1e-9; });
}

// Deterministic Fisher-Yates; std::shuffle's algorithm is unspecified.
template <typename T>
void shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

// Unique solutes of `indices` in first-appearance order.
std::vector<std::string> unique_solutes(std::span<const SoluRecord> records, std::span<const std::size_t> indices) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i : indices)
    if (seen.insert(records[i].solute).second) out.push_back(records[i].solute);
  return out;
}

std::size_t portion(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
}

// Assigns whole solutes: the first `n_first` shuffled solutes go to `first`.
void divide(std::span<const SoluRecord> records, std::span<const std::size_t> indices, std::uint64_t seed,
            double fraction, std::vector<std::size_t>& first, std::vector<std::size_t>& rest) {
  auto solutes = unique_solutes(records, indices);
  shuffle(solutes, seed);
  const std::size_t n_first = portion(solutes.size(), fraction);
  std::unordered_set<std::string> chosen(solutes.begin(), solutes.begin() + static_cast<std::ptrdiff_t>(n_first));
  for (std::size_t i : indices) (chosen.contains(records[i].solute) ? first : rest).push_back(i);
}

}  // namespace

std::vector<std::size_t> accurate_subset(std::span<const SoluRecord> records, std::span<const double> outliers) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.measurement_count || !r.measurement_std) {
      throw InvalidInputError(
          fmt::format("accurate subset needs measurement count and std; record {} ({}) has none", i, r.solute));
    }
    if (*r.measurement_count > 1.0 && *r.measurement_std <= 0.2 && !is_outlier(r.log_s, outliers)) out.push_back(i);
  }
  return out;
}

bool rounds_to_298(double kelvin) { return kelvin >= 297.5 && kelvin < 298.5; }

Split make_split(std::span<const SoluRecord> records, const SplitSpec& spec) {
  Split split;
  std::vector<std::size_t> pool;
  switch (spec.mode) {
    case SplitMode::Random: {
      std::vector<std::size_t> all(records.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      divide(records, all, spec.seed, spec.test_fraction, split.test, pool);
      break;
    }
    case SplitMode::Accurate: {
      split.test = accurate_subset(records, spec.outliers);
      std::unordered_set<std::string> test_solutes;
      for (std::size_t i : split.test) test_solutes.insert(records[i].solute);
      std::set<std::size_t> test_rows(split.test.begin(), split.test.end());
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (test_rows.contains(i)) continue;
        if (is_outlier(records[i].log_s, spec.outliers) || test_solutes.contains(records[i].solute)) {
          split.excluded.push_back(i);
        } else {
          pool.push_back(i);
        }
      }
      break;
    }
    case SplitMode::T298: {
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].temperature) {
          throw InvalidInputError(fmt::format("t298 split needs temperatures; record {} has none", i));
        }
        (rounds_to_298(*records[i].temperature) ? split.test : pool).push_back(i);
      }
      break;
    }
  }
  // The train/validation division depends only on the seed.
  divide(records, pool, spec.seed ^ 0x9e3779b97f4a7c15ULL, spec.validation_fraction, split.validation, split.train);
  return split;
}

std::string split_manifest_json(std::span<const SoluRecord> records, const Split& split, const SplitSpec& spec) {
  using nlohmann::json;
  const auto part = [&](const std::vector<std::size_t>& idx) {
    return json{{"rows", idx}, {"smiles", unique_solutes(records, idx)}};
  };
  json doc{{"schema_version", 1},
           {"seed", spec.seed},
           {"mode", to_string(spec.mode)},
           {"test_fraction", spec.test_fraction},
           {"validation_fraction", spec.validation_fraction},
           {"train", part(split.train)},
           {"validation", part(split.validation)},
           {"test", part(split.test)},
           {"excluded", part(split.excluded)}};
  return doc.dump(2) + "\n";
}

LabelScaler LabelScaler::fit(std::span<const double> labels) {
  if (labels.empty()) throw InvalidInputError("cannot fit label scaling on no labels");
  const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
  if (*hi == *lo) throw InvalidInputError("labels are constant; min-max scaling is degenerate");
  return LabelScaler{*lo, *hi};
}

std::vector<double> labels(std::span<const SoluRecord> records, std::span<const std::size_t> indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records[i].log_s);
  return out;
}

ErrorMetrics metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw InvalidInputError(
        fmt::format("metrics: {} predictions vs {} targets", predictions.size(), targets.size()));
  }
  if (predictions.empty()) throw InvalidInputError("metrics: no samples");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const double n = static_cast<double>(predictions.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

std::pair<double, double> mean_and_standard_error(std::span<const double> values) {
  if (values.size() < 2) throw InvalidInputError("standard error needs at least two runs");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sample_std = std::sqrt(ss / (n - 1.0));
  return {mean, sample_std / std::sqrt(n)};
}

RunMetrics summarize(std::span<const ErrorMetrics> runs) {
  RunMetrics out;
  out.runs.assign(runs.begin(), runs.end());
  std::vector<double> mae, rmse;
  for (const auto& r : runs) {
    mae.push_back(r.mae);
    rmse.push_back(r.rmse);
  }
  const auto [mae_mean, mae_se] = mean_and_standard_error(mae);
  const auto [rmse_mean, rmse_se] = mean_and_standard_error(rmse);
  out.mean = {mae_mean, rmse_mean};
  out.standard_error = {mae_se, rmse_se};
  return out;
}

std::string format_table(const RunMetrics& summary, std::string_view title) {
  std::string out;
  if (!title.empty()) out += fmt::format("{}\n", title);
  out += fmt::format("{:<8}{:>10}{:>10}\n", "run", "MAE", "RMSE");
  for (std::size_t i = 0; i < summary.runs.size(); ++i) {
    out += fmt::format("{:<8}{:>10.3f}{:>10.3f}\n", i + 1, summary.runs[i].mae, summary.runs[i].rmse);
  }
  out += fmt::format("{:<8}{:>10.3f}{:>10.3f}\n", "AVG", summary.mean.mae, summary.mean.rmse);
  out += fmt::format("{:<8}{:>10}{:>10}\n", "SE", fmt::format("({:.3f})", summary.standard_error.mae),
                     fmt::format("({:.3f})", summary.standard_error.rmse));
  return out;
}

double standard_deviation(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

}  // namespace chemrel::data
