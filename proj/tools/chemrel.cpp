// chemrel command-line tool: tokenize, parse, train, evaluate, explain,
// render and replay. Exit codes: 0 ok, 1 runtime failure, 2 usage or config
// error. Every command that writes files stages them and commits them
// together with a run manifest, so a failed run leaves nothing behind.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "chemrel/checkpoint.hpp"
#include "chemrel/config.hpp"
#include "chemrel/data.hpp"
#include "chemrel/error.hpp"
#include "chemrel/io.hpp"
#include "chemrel/relevance.hpp"
#include "chemrel/render.hpp"
#include "chemrel/smiles.hpp"
#include "chemrel/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chemrel;

namespace {

constexpr std::string_view kVersion = "0.1.0";
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string absolute_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

void require_file(const fs::path& path, std::string_view what) {
  if (!fs::is_regular_file(path)) throw UsageError(fmt::format("{} not found: {}", what, path.string()));
}

/// Collects outputs, then commits them after a manifest describing the run.
class RunOutput {
 public:
  RunOutput(fs::path dir, std::string command, json arguments)
      : dir_(std::move(dir)), command_(std::move(command)), arguments_(std::move(arguments)) {}

  void input(std::string role, const fs::path& path) {
    inputs_.push_back({{"role", std::move(role)}, {"path", absolute_path(path)}, {"sha256", io::sha256_file(path)}});
  }
  void add(std::string name, std::string contents) { files_.emplace_back(std::move(name), std::move(contents)); }
  json& extra() { return extra_; }
  json& arguments() { return arguments_; }

  void commit() {
    json outputs = json::array();
    for (const auto& [name, contents] : files_) outputs.push_back({{"path", name}, {"sha256", io::sha256(contents)}});
    json manifest{{"schema_version", 1},       {"tool", "chemrel"},   {"version", kVersion},
                  {"command", command_},       {"arguments", arguments_}, {"inputs", inputs_},
                  {"outputs", outputs}};
    for (const auto& [k, v] : extra_.items()) manifest[k] = v;
    io::StagedOutput staged(dir_);
    staged.add("run_manifest.json", manifest.dump(2) + "\n");
    for (auto& [name, contents] : files_) staged.add(name, std::move(contents));
    staged.commit();
    fmt::print(stderr, "wrote {} files to {}\n", files_.size() + 1, dir_.string());
  }

 private:
  fs::path dir_;
  std::string command_;
  json arguments_;
  json inputs_ = json::array();
  json extra_ = json::object();
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string bytes_to_string(const std::vector<unsigned char>& bytes) { return {bytes.begin(), bytes.end()}; }

std::string metrics_json(const data::ErrorMetrics& m, std::size_t n, double label_std) {
  return json{{"mae", m.mae}, {"rmse", m.rmse}, {"n", n}, {"test_label_std", label_std}}.dump(2) + "\n";
}

// ---- tokenize / parse ----

int cmd_tokenize(const std::string& smiles_text, const std::optional<std::string>& solvent, bool specials) {
  if (smiles_text.empty()) throw UsageError("tokenize: empty SMILES");
  auto tokens = smiles::tokenize(smiles_text);
  if (specials || solvent) {
    std::optional<smiles::TokenSequence> solv;
    if (solvent) solv = smiles::tokenize(*solvent);
    tokens = smiles::prepare_input(tokens, solv);
  }
  const auto texts = tokens.texts();
  fmt::print("{}\n", fmt::join(texts, " "));
  return 0;
}

std::string_view bond_name(smiles::BondOrder order) {
  switch (order) {
    case smiles::BondOrder::Single:
      return "single";
    case smiles::BondOrder::Double:
      return "double";
    case smiles::BondOrder::Triple:
      return "triple";
    case smiles::BondOrder::Aromatic:
      return "aromatic";
  }
  return "?";
}

int cmd_parse(const std::string& smiles_text) {
  if (smiles_text.empty()) throw UsageError("parse: empty SMILES");
  const auto graph = smiles::parse(smiles_text);
  fmt::print("atoms {} bonds {} ring_closures {}\n", graph.atoms.size(), graph.bonds.size(), graph.ring_closures);
  for (std::size_t i = 0; i < graph.atoms.size(); ++i) {
    const auto& a = graph.atoms[i];
    fmt::print("atom {} {}{} token {}{}\n", i, a.element, a.aromatic ? " aromatic" : "", graph.atom_token_map[i],
               a.charge != 0 ? fmt::format(" charge {:+d}", a.charge) : "");
  }
  for (const auto& b : graph.bonds) fmt::print("bond {}-{} {}\n", b.a, b.b, bond_name(b.order));
  return 0;
}

// ---- train ----

void print_epoch(const training::EpochLog& e) {
  fmt::print(stderr, "epoch {:>3}  train_loss {:.5f}  val_loss {:.5f}  val_mae {:.4f}\n", e.epoch, e.train_loss,
             e.val_loss, e.val_mae);
}

int run_train(const config::RunSettings& settings, bool suite, const fs::path& out_dir,
              const std::optional<fs::path>& config_path) {
  require_file(settings.dataset, "dataset");
  const auto loaded = data::load_csv(settings.dataset, settings.schema);
  if (loaded.skipped > 0) fmt::print(stderr, "skipped {} incomplete rows\n", loaded.skipped);
  const auto& records = loaded.records;
  if (records.empty()) throw Error("dataset has no usable rows");

  const auto snapshot = config::snapshot(settings);
  RunOutput out(out_dir, "train", json{{"suite", suite}});
  out.input("dataset", settings.dataset);
  if (config_path) out.input("config", *config_path);
  out.extra()["config"] = snapshot;
  out.extra()["seeds"] = json{{"data", settings.split.seed},
                              {"model", settings.train.model_seed},
                              {"suite", settings.suite_seeds},
                              {"suite_mode", snapshot.at("suite.mode")}};
  out.add("config.snapshot", config::format(snapshot));

  if (!suite) {
    const auto split = data::make_split(records, settings.split);
    fmt::print(stderr, "split: {} train, {} validation, {} test\n", split.train.size(), split.validation.size(),
               split.test.size());
    const auto result = training::fit(records, split, settings.model, settings.train, print_epoch);
    const auto checkpoint = result.checkpoint();
    const auto evaluation = training::evaluate(checkpoint, records, split.test);
    const double label_std = data::standard_deviation(evaluation.targets);
    fmt::print("test MAE {:.4f}  RMSE {:.4f}  label std {:.4f}  (n = {})\n", evaluation.metrics.mae,
               evaluation.metrics.rmse, label_std, evaluation.targets.size());
    out.add("model.ckpt", bytes_to_string(serialize(checkpoint)));
    out.add("training_log.csv", training::training_log_csv(result.log));
    out.add("split.json", data::split_manifest_json(records, split, settings.split));
    out.add("metrics.json", metrics_json(evaluation.metrics, evaluation.targets.size(), label_std));
    out.commit();
    return 0;
  }

  const auto suite_result = training::run_suite(
      records, settings.split, settings.model, settings.train, settings.suite_seeds, settings.suite_mode,
      [&](std::size_t k, const training::SuiteRun& run) {
        fmt::print(stderr, "run {} (seed {}): test MAE {:.4f} RMSE {:.4f} label std {:.4f}\n", k + 1, run.seed,
                   run.evaluation.metrics.mae, run.evaluation.metrics.rmse, run.test_label_std);
        const std::string prefix = fmt::format("seed_{}/", run.seed);
        data::SplitSpec spec = settings.split;
        if (settings.suite_mode == training::SuiteMode::DataSeed) spec.seed = run.seed;
        out.add(prefix + "model.ckpt", bytes_to_string(serialize(run.result.checkpoint())));
        out.add(prefix + "training_log.csv", training::training_log_csv(run.result.log));
        out.add(prefix + "split.json", data::split_manifest_json(records, data::make_split(records, spec), spec));
        out.add(prefix + "metrics.json",
                metrics_json(run.evaluation.metrics, run.evaluation.targets.size(), run.test_label_std));
      });
  std::string table;
  json runs = json::array();
  for (const auto& run : suite_result.runs) {
    runs.push_back({{"seed", run.seed},
                    {"mae", run.evaluation.metrics.mae},
                    {"rmse", run.evaluation.metrics.rmse},
                    {"test_label_std", run.test_label_std}});
  }
  json summary{{"runs", runs}};
  if (suite_result.runs.size() >= 2) {
    table = data::format_table(suite_result.summary,
                               fmt::format("{} split, {} seeds", data::to_string(settings.split.mode),
                                           snapshot.at("suite.mode")));
    summary["mean"] = {{"mae", suite_result.summary.mean.mae}, {"rmse", suite_result.summary.mean.rmse}};
    summary["standard_error"] = {{"mae", suite_result.summary.standard_error.mae},
                                 {"rmse", suite_result.summary.standard_error.rmse}};
    fmt::print("{}", table);
    out.add("suite_table.txt", table);
  }
  out.add("suite.json", summary.dump(2) + "\n");
  out.commit();
  return 0;
}

config::RunSettings settings_from_file(const fs::path& config_path) {
  require_file(config_path, "config file");
  const auto values = config::parse(io::read_file(config_path));
  return config::resolve(values, fs::absolute(config_path).parent_path());
}

// ---- evaluate ----

int run_evaluate(const fs::path& checkpoint_path, const fs::path& dataset, const std::string& schema_name,
                 const std::optional<fs::path>& split_path, const std::string& partition, bool strict,
                 const fs::path& out_dir) {
  require_file(checkpoint_path, "checkpoint");
  require_file(dataset, "dataset");
  data::CsvSchema schema;
  if (schema_name == "aqueous") {
    schema = data::CsvSchema::aqueous();
  } else if (schema_name == "combisolu") {
    schema = data::CsvSchema::combisolu();
  } else {
    throw UsageError(fmt::format("--schema must be aqueous or combisolu, got '{}'", schema_name));
  }
  const auto checkpoint = load_checkpoint(checkpoint_path);
  const auto records = data::load_csv(dataset, schema).records;

  std::vector<std::size_t> rows;
  if (split_path) {
    require_file(*split_path, "split manifest");
    const auto doc = json::parse(io::read_file(*split_path));
    if (!doc.contains(partition)) throw UsageError(fmt::format("split manifest has no '{}' partition", partition));
    rows = doc.at(partition).at("rows").get<std::vector<std::size_t>>();
    for (auto r : rows)
      if (r >= records.size()) throw FormatError(fmt::format("split row {} is outside the dataset", r));
  } else {
    rows.resize(records.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  }

  const auto evaluation = training::evaluate(checkpoint, records, rows, strict);
  if (!evaluation.unknown_token_records.empty()) {
    fmt::print(stderr, "warning: {} molecules contain tokens missing from the checkpoint vocabulary\n",
               evaluation.unknown_token_records.size());
  }
  const double label_std = data::standard_deviation(evaluation.targets);
  fmt::print("MAE {:.4f}  RMSE {:.4f}  label std {:.4f}  (n = {})\n", evaluation.metrics.mae, evaluation.metrics.rmse,
             label_std, evaluation.targets.size());

  std::string csv = "row,smiles,solvent,target,prediction,unknown_tokens\n";
  const std::set<std::size_t> unknown(evaluation.unknown_token_records.begin(), evaluation.unknown_token_records.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = records[rows[i]];
    csv += fmt::format("{},\"{}\",\"{}\",{:.17g},{:.17g},{}\n", rows[i], r.solute, r.solvent.value_or(""),
                       evaluation.targets[i], evaluation.predictions[i], unknown.contains(rows[i]) ? 1 : 0);
  }

  json args{{"checkpoint", absolute_path(checkpoint_path)},
            {"dataset", absolute_path(dataset)},
            {"schema", schema_name},
            {"partition", partition},
            {"strict_vocabulary", strict}};
  if (split_path) args["split"] = absolute_path(*split_path);
  RunOutput out(out_dir, "evaluate", args);
  out.input("checkpoint", checkpoint_path);
  out.input("dataset", dataset);
  if (split_path) out.input("split", *split_path);
  out.add("predictions.csv", csv);
  out.add("metrics.json", metrics_json(evaluation.metrics, evaluation.targets.size(), label_std));
  out.add("parity.svg", render::parity_plot_svg(evaluation.predictions, evaluation.targets,
                                                fmt::format("{} ({})", dataset.filename().string(), partition)));
  out.commit();
  return 0;
}

// ---- explain ----

int run_explain(const fs::path& checkpoint_path, const std::string& solute, const std::optional<std::string>& solvent,
                const std::optional<double>& temperature, const fs::path& out_dir) {
  require_file(checkpoint_path, "checkpoint");
  if (solute.empty()) throw UsageError("explain: empty SMILES");
  const auto checkpoint = load_checkpoint(checkpoint_path);
  const auto scaler = training::scaler_from(checkpoint);
  std::optional<double> model_temperature = temperature;
  if (temperature && !checkpoint.model.config().use_temperature_feature) {
    fmt::print(stderr, "note: model has no temperature feature; --temp {} is not used\n", *temperature);
    model_temperature.reset();
  }
  if (!temperature && checkpoint.model.config().use_temperature_feature) {
    throw UsageError("this model needs --temp (kelvin)");
  }
  const auto ex = relevance::explain(checkpoint.model, solute, solvent, model_temperature,
                                     [&](double y) { return scaler.inverse(y); });
  if (!ex.unknown_tokens.empty()) {
    fmt::print(stderr, "warning: tokens not in the model vocabulary (encoded as <UNK>): {}\n",
               fmt::join(ex.unknown_tokens, " "));
  }

  std::vector<render::Depiction> depictions;
  for (const auto& g : ex.graphs) depictions.push_back(render::layout(g));
  const auto labels = ex.tokens.texts();
  const auto figures = render::attention_heatmaps_svg(ex.averaged, ex.relevance, labels);

  fmt::print("tokens: {}\n", fmt::join(labels, " "));
  fmt::print("prediction: {:.4f} log(mol/L)\n", ex.prediction);
  for (const auto& mol : ex.atoms) {
    for (const auto& a : mol.atoms) {
      fmt::print("{} atom {:>2} {:<2} relevance {:.4f}\n", mol.segment == 0 ? "solute " : "solvent", a.atom,
                 a.element, a.scaled);
    }
  }

  json args{{"checkpoint", absolute_path(checkpoint_path)}, {"smiles", solute}};
  if (solvent) args["solvent"] = *solvent;
  if (temperature) args["temperature"] = *temperature;
  RunOutput out(out_dir, "explain", args);
  out.input("checkpoint", checkpoint_path);
  out.add("relevance.json", relevance::to_json(ex));
  out.add("molecule.svg", render::molecule_svg(depictions, ex.atoms));
  out.add("attention_layers.svg", figures.layers);
  out.add("relevance_matrix.svg", figures.relevance);
  out.commit();
  return 0;
}

// ---- render ----

int run_render(const std::optional<fs::path>& relevance_path, const std::optional<fs::path>& predictions_path,
               const fs::path& out_dir) {
  if (relevance_path.has_value() == predictions_path.has_value()) {
    throw UsageError("render: give exactly one of --relevance or --predictions");
  }
  RunOutput out(out_dir, "render", json::object());
  if (relevance_path) {
    require_file(*relevance_path, "relevance file");
    const auto doc = json::parse(io::read_file(*relevance_path));
    if (doc.value("schema_version", 0) != 1) throw FormatError("unsupported relevance schema_version");
    std::vector<std::string> smiles_list{doc.at("smiles").get<std::string>()};
    if (doc.contains("solvent_smiles")) smiles_list.push_back(doc.at("solvent_smiles").get<std::string>());
    std::vector<render::Depiction> depictions;
    std::vector<relevance::AtomRelevance> weights(smiles_list.size());
    for (std::size_t m = 0; m < smiles_list.size(); ++m) {
      depictions.push_back(render::layout(smiles::parse(smiles_list[m])));
      weights[m].segment = m;
    }
    for (const auto& a : doc.at("atoms")) {
      const std::size_t m = a.at("molecule") == "solvent" ? 1 : 0;
      if (m >= weights.size()) throw FormatError("relevance file lists solvent atoms but no solvent SMILES");
      weights[m].atoms.push_back({a.at("index").get<std::size_t>(), a.at("element").get<std::string>(),
                                  a.at("token_position").get<std::size_t>(), a.at("raw").get<double>(),
                                  a.at("scaled").get<double>()});
    }
    out.arguments()["relevance"] = absolute_path(*relevance_path);
    out.input("relevance", *relevance_path);
    out.add("molecule.svg", render::molecule_svg(depictions, weights));
  } else {
    require_file(*predictions_path, "predictions file");
    const auto rows = data::parse_csv_rows(io::read_file(*predictions_path));
    if (rows.empty()) throw FormatError("predictions file is empty");
    const auto& header = rows.front();
    const auto column = [&](std::string_view name) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw SchemaError(fmt::format("predictions file has no '{}' column", name));
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t target_col = column("target"), pred_col = column("prediction");
    std::vector<double> targets, predictions;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() <= std::max(target_col, pred_col)) continue;
      targets.push_back(std::stod(rows[i][target_col]));
      predictions.push_back(std::stod(rows[i][pred_col]));
    }
    out.arguments()["predictions"] = absolute_path(*predictions_path);
    out.input("predictions", *predictions_path);
    out.add("parity.svg", render::parity_plot_svg(predictions, targets, predictions_path->filename().string()));
  }
  out.commit();
  return 0;
}

// ---- replay ----

std::optional<fs::path> opt_path(const json& args, const char* key) {
  if (!args.contains(key)) return std::nullopt;
  return fs::path(args.at(key).get<std::string>());
}

int run_replay(const fs::path& manifest_path, const fs::path& out_dir) {
  require_file(manifest_path, "run manifest");
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("run manifest is not valid JSON: {}", e.what()));
  }
  if (manifest.value("tool", "") != "chemrel" || manifest.value("schema_version", 0) != 1) {
    throw FormatError("not a chemrel run manifest");
  }
  if (manifest.value("version", "") != kVersion) {
    fmt::print(stderr, "warning: manifest written by version {}, replaying with {}\n",
               manifest.value("version", "?"), kVersion);
  }
  for (const auto& in : manifest.at("inputs")) {
    const fs::path path = in.at("path").get<std::string>();
    if (!fs::is_regular_file(path)) throw Error(fmt::format("replay input missing: {}", path.string()));
    const auto digest = io::sha256_file(path);
    if (digest != in.at("sha256").get<std::string>()) {
      throw Error(fmt::format("replay input changed since the run: {} ({})", path.string(),
                              in.at("role").get<std::string>()));
    }
  }
  const auto command = manifest.at("command").get<std::string>();
  const auto& args = manifest.at("arguments");
  if (command == "train") {
    const auto snapshot = manifest.at("config").get<std::map<std::string, std::string>>();
    const auto settings = config::resolve(snapshot, "/");
    std::optional<fs::path> config_path;
    for (const auto& in : manifest.at("inputs"))
      if (in.at("role") == "config") config_path = fs::path(in.at("path").get<std::string>());
    return run_train(settings, args.at("suite").get<bool>(), out_dir, config_path);
  }
  if (command == "evaluate") {
    return run_evaluate(args.at("checkpoint").get<std::string>(), args.at("dataset").get<std::string>(),
                        args.at("schema").get<std::string>(), opt_path(args, "split"),
                        args.at("partition").get<std::string>(), args.at("strict_vocabulary").get<bool>(), out_dir);
  }
  if (command == "explain") {
    std::optional<std::string> solvent;
    std::optional<double> temperature;
    if (args.contains("solvent")) solvent = args.at("solvent").get<std::string>();
    if (args.contains("temperature")) temperature = args.at("temperature").get<double>();
    return run_explain(args.at("checkpoint").get<std::string>(), args.at("smiles").get<std::string>(), solvent,
                       temperature, out_dir);
  }
  if (command == "render") {
    return run_render(opt_path(args, "relevance"), opt_path(args, "predictions"), out_dir);
  }
  throw FormatError(fmt::format("run manifest has unknown command '{}'", command));
}

int report(const std::exception& e, int code) {
  fmt::print(stderr, "error: {}\n", e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-gradient relevance for SMILES solubility models"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string smiles_text, config_file, out_dir, checkpoint_file, dataset_file, schema_name = "aqueous",
                                                                                partition = "test", manifest_file;
  std::optional<std::string> solvent, split_file, relevance_file, predictions_file;
  std::optional<double> temperature;
  bool with_specials = false, suite = false, strict = false;

  auto* tokenize = app.add_subcommand("tokenize", "Print the tokens of a SMILES string");
  tokenize->add_option("smiles", smiles_text, "SMILES string")->required();
  tokenize->add_option("--solvent", solvent, "Solvent SMILES (implies --with-specials)");
  tokenize->add_flag("--with-specials", with_specials, "Include <REG> and <SEP>");

  auto* parse = app.add_subcommand("parse", "Parse a SMILES string and print its graph");
  parse->add_option("smiles", smiles_text, "SMILES string")->required();

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config_file, "Config file (key = value)")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_flag("--suite", suite, "Run one training per suite seed and tabulate");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  evaluate->add_option("checkpoint", checkpoint_file, "Checkpoint file")->required();
  evaluate->add_option("dataset", dataset_file, "CSV dataset")->required();
  evaluate->add_option("--out", out_dir, "Output directory")->required();
  evaluate->add_option("--schema", schema_name, "aqueous or combisolu")->capture_default_str();
  evaluate->add_option("--split", split_file, "Split manifest selecting the rows");
  evaluate->add_option("--partition", partition, "Partition of the split manifest")->capture_default_str();
  evaluate->add_flag("--strict-vocabulary", strict, "Fail on tokens missing from the vocabulary");

  auto* explain = app.add_subcommand("explain", "Relevance of each atom for one prediction");
  explain->add_option("checkpoint", checkpoint_file, "Checkpoint file")->required();
  explain->add_option("smiles", smiles_text, "Solute SMILES")->required();
  explain->add_option("--solvent", solvent, "Solvent SMILES");
  explain->add_option("--temp", temperature, "Temperature in kelvin");
  explain->add_option("--out", out_dir, "Output directory")->required();

  auto* render_cmd = app.add_subcommand("render", "Redraw figures from saved outputs");
  render_cmd->add_option("--relevance", relevance_file, "relevance.json from explain");
  render_cmd->add_option("--predictions", predictions_file, "predictions.csv from evaluate");
  render_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
  replay->add_option("manifest", manifest_file, "run_manifest.json")->required();
  replay->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*tokenize) return cmd_tokenize(smiles_text, solvent, with_specials);
    if (*parse) return cmd_parse(smiles_text);
    if (*train) return run_train(settings_from_file(config_file), suite, out_dir, fs::path(config_file));
    if (*evaluate) {
      return run_evaluate(checkpoint_file, dataset_file, schema_name,
                          split_file ? std::optional<fs::path>(*split_file) : std::nullopt, partition, strict,
                          out_dir);
    }
    if (*explain) return run_explain(checkpoint_file, smiles_text, solvent, temperature, out_dir);
    if (*render_cmd) {
      return run_render(relevance_file ? std::optional<fs::path>(*relevance_file) : std::nullopt,
                        predictions_file ? std::optional<fs::path>(*predictions_file) : std::nullopt, out_dir);
    }
    if (*replay) return run_replay(manifest_file, out_dir);
  } catch (const UsageError& e) {
    return report(e, kUsageError);
  } catch (const SchemaError& e) {
    return report(e, kUsageError);
  } catch (const SmilesError& e) {
    fmt::print(stderr, "error: invalid SMILES ({} stage, position {}): {}\n",
               e.stage() == SmilesError::Stage::Tokenize ? "tokenize" : "parse", e.position(), e.what());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    return report(e, kRuntimeFailure);
  }
  return kUsageError;
}
