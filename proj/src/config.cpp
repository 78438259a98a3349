#include "chemrel/config.hpp"

#include <charconv>
#include <functional>

#include <fmt/format.h>

#include "chemrel/error.hpp"

namespace chemrel::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string number(double v) { return fmt::format("{}", v); }

template <typename T>
T parse_unsigned(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw SchemaError(fmt::format("config key '{}': expected a non-negative integer, got '{}'", key, value));
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw SchemaError(fmt::format("config key '{}': expected a number, got '{}'", key, value));
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw SchemaError(fmt::format("config key '{}': expected true or false, got '{}'", key, value));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto item = trim(std::string_view(value).substr(start, comma == std::string::npos ? comma : comma - start));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (const auto& v : items) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += number(v);
    } else {
      out += fmt::format("{}", v);
    }
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> parse(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw SchemaError(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw SchemaError(fmt::format("config line {}: empty key", line_no));
    if (!out.emplace(key, value).second) {
      throw SchemaError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
    }
  }
  return out;
}

std::string format(const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& [k, v] : values) out += fmt::format("{} = {}\n", k, v);
  return out;
}

RunSettings resolve(const std::map<std::string, std::string>& values, const std::filesystem::path& base_dir) {
  RunSettings s;
  // Schema presets first so explicit column keys can override them.
  if (const auto it = values.find("data.schema"); it != values.end()) {
    if (it->second == "aqueous") {
      s.schema = data::CsvSchema::aqueous();
    } else if (it->second == "combisolu") {
      s.schema = data::CsvSchema::combisolu();
    } else {
      throw SchemaError(fmt::format("config key 'data.schema': expected aqueous or combisolu, got '{}'", it->second));
    }
    s.schema_name = it->second;
  }

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"data.path", [&](auto&, auto& v) { s.dataset = v; }},
      {"data.schema", [](auto&, auto&) {}},
      {"data.solute_column", [&](auto&, auto& v) { s.schema.solute_column = v; }},
      {"data.label_column", [&](auto&, auto& v) { s.schema.label_column = v; }},
      {"data.solvent_column", [&](auto&, auto& v) { s.schema.solvent_column = v; }},
      {"data.temperature_column", [&](auto&, auto& v) { s.schema.temperature_column = v; }},
      {"data.count_column", [&](auto&, auto& v) { s.schema.count_column = v; }},
      {"data.std_column", [&](auto&, auto& v) { s.schema.std_column = v; }},
      {"data.density_column", [&](auto&, auto& v) { s.schema.density_column = v; }},
      {"data.split", [&](auto&, auto& v) { s.split.mode = data::split_mode_from_string(v); }},
      {"data.seed", [&](auto& k, auto& v) { s.split.seed = s.train.data_seed = parse_unsigned<std::uint64_t>(k, v); }},
      {"data.test_fraction", [&](auto& k, auto& v) { s.split.test_fraction = parse_double(k, v); }},
      {"data.validation_fraction", [&](auto& k, auto& v) { s.split.validation_fraction = parse_double(k, v); }},
      {"data.outliers",
       [&](auto& k, auto& v) {
         s.split.outliers.clear();
         for (const auto& item : split_list(v)) s.split.outliers.push_back(parse_double(k, item));
       }},
      {"model.layers", [&](auto& k, auto& v) { s.model.num_layers = parse_unsigned<std::size_t>(k, v); }},
      {"model.heads", [&](auto& k, auto& v) { s.model.num_heads = parse_unsigned<std::size_t>(k, v); }},
      {"model.head_dim", [&](auto& k, auto& v) { s.model.head_dim = parse_unsigned<std::size_t>(k, v); }},
      {"model.ffn_dim", [&](auto& k, auto& v) { s.model.ffn_dim = parse_unsigned<std::size_t>(k, v); }},
      {"model.head_hidden", [&](auto& k, auto& v) { s.model.head_hidden = parse_unsigned<std::size_t>(k, v); }},
      {"model.max_tokens", [&](auto& k, auto& v) { s.model.max_tokens = parse_unsigned<std::size_t>(k, v); }},
      {"model.temperature", [&](auto& k, auto& v) { s.model.use_temperature_feature = parse_bool(k, v); }},
      {"train.epochs", [&](auto& k, auto& v) { s.train.epochs = parse_unsigned<std::size_t>(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { s.train.batch_size = parse_unsigned<std::size_t>(k, v); }},
      {"train.learning_rate", [&](auto& k, auto& v) { s.train.learning_rate = parse_double(k, v); }},
      {"train.beta1", [&](auto& k, auto& v) { s.train.beta1 = parse_double(k, v); }},
      {"train.beta2", [&](auto& k, auto& v) { s.train.beta2 = parse_double(k, v); }},
      {"train.epsilon", [&](auto& k, auto& v) { s.train.epsilon = parse_double(k, v); }},
      {"train.weight_decay", [&](auto& k, auto& v) { s.train.weight_decay = parse_double(k, v); }},
      {"train.huber_delta", [&](auto& k, auto& v) { s.train.huber_delta = parse_double(k, v); }},
      {"train.warmup_fraction", [&](auto& k, auto& v) { s.train.warmup_fraction = parse_double(k, v); }},
      {"train.seed", [&](auto& k, auto& v) { s.train.model_seed = parse_unsigned<std::uint64_t>(k, v); }},
      {"train.freeze_encoder", [&](auto& k, auto& v) { s.train.freeze_encoder = parse_bool(k, v); }},
      {"train.max_steps",
       [&](auto& k, auto& v) {
         if (v == "none") {
           s.train.max_steps.reset();
         } else {
           s.train.max_steps = parse_unsigned<std::size_t>(k, v);
         }
       }},
      {"suite.seeds",
       [&](auto& k, auto& v) {
         s.suite_seeds.clear();
         for (const auto& item : split_list(v)) s.suite_seeds.push_back(parse_unsigned<std::uint64_t>(k, item));
         if (s.suite_seeds.empty()) throw SchemaError("config key 'suite.seeds': needs at least one seed");
       }},
      {"suite.mode",
       [&](auto& k, auto& v) {
         if (v == "data") {
           s.suite_mode = training::SuiteMode::DataSeed;
         } else if (v == "model") {
           s.suite_mode = training::SuiteMode::ModelSeed;
         } else {
           throw SchemaError(fmt::format("config key '{}': expected data or model, got '{}'", k, v));
         }
       }},
  };

  for (const auto& [key, value] : values) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw SchemaError(fmt::format("unknown config key '{}'", key));
    try {
      it->second(key, value);
    } catch (const Error& e) {
      if (std::string_view(e.what()).find(key) != std::string_view::npos) throw;
      throw SchemaError(fmt::format("config key '{}': {}", key, e.what()));
    }
  }
  if (s.dataset.empty()) throw SchemaError("config key 'data.path' is required");
  if (s.dataset.is_relative()) s.dataset = base_dir / s.dataset;
  s.dataset = s.dataset.lexically_normal();

  const auto check = [](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw SchemaError(fmt::format("config key '{}': {}", key, e.what()));
    }
  };
  check("model.*", [&] {
    encoder::ModelConfig probe = s.model;
    probe.vocab_size = 1;
    probe.validate();
  });
  check("train.*", [&] { s.train.validate(); });
  if (!(s.split.test_fraction > 0.0 && s.split.test_fraction < 1.0)) {
    throw SchemaError("config key 'data.test_fraction': must lie strictly between 0 and 1");
  }
  if (!(s.split.validation_fraction > 0.0 && s.split.validation_fraction < 1.0)) {
    throw SchemaError("config key 'data.validation_fraction': must lie strictly between 0 and 1");
  }
  return s;
}

std::map<std::string, std::string> snapshot(const RunSettings& s) {
  std::map<std::string, std::string> out{
      {"data.path", s.dataset.string()},
      {"data.schema", s.schema_name},
      {"data.solute_column", s.schema.solute_column},
      {"data.label_column", s.schema.label_column},
      {"data.solvent_column", s.schema.solvent_column},
      {"data.temperature_column", s.schema.temperature_column},
      {"data.count_column", s.schema.count_column},
      {"data.std_column", s.schema.std_column},
      {"data.density_column", s.schema.density_column},
      {"data.split", std::string(data::to_string(s.split.mode))},
      {"data.seed", std::to_string(s.split.seed)},
      {"data.test_fraction", number(s.split.test_fraction)},
      {"data.validation_fraction", number(s.split.validation_fraction)},
      {"data.outliers", join(s.split.outliers)},
      {"model.layers", std::to_string(s.model.num_layers)},
      {"model.heads", std::to_string(s.model.num_heads)},
      {"model.head_dim", std::to_string(s.model.head_dim)},
      {"model.ffn_dim", std::to_string(s.model.ffn_dim)},
      {"model.head_hidden", std::to_string(s.model.head_hidden)},
      {"model.max_tokens", std::to_string(s.model.max_tokens)},
      {"model.temperature", s.model.use_temperature_feature ? "true" : "false"},
      {"train.epochs", std::to_string(s.train.epochs)},
      {"train.batch_size", std::to_string(s.train.batch_size)},
      {"train.learning_rate", number(s.train.learning_rate)},
      {"train.beta1", number(s.train.beta1)},
      {"train.beta2", number(s.train.beta2)},
      {"train.epsilon", number(s.train.epsilon)},
      {"train.weight_decay", number(s.train.weight_decay)},
      {"train.huber_delta", number(s.train.huber_delta)},
      {"train.warmup_fraction", number(s.train.warmup_fraction)},
      {"train.seed", std::to_string(s.train.model_seed)},
      {"train.freeze_encoder", s.train.freeze_encoder ? "true" : "false"},
      {"train.max_steps", s.train.max_steps ? std::to_string(*s.train.max_steps) : "none"},
      {"suite.seeds", join(s.suite_seeds)},
      {"suite.mode", s.suite_mode == training::SuiteMode::DataSeed ? "data" : "model"},
  };
  return out;
}

}  // namespace chemrel::config
