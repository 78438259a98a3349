// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "chemrel/checkpoint.hpp"
#include "chemrel/config.hpp"
#include "chemrel/data.hpp"
#include "chemrel/encoder.hpp"
#include "chemrel/io.hpp"
#include "chemrel/relevance.hpp"
#include "chemrel/smiles.hpp"
#include "chemrel/training.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
namespace fx = chemrel::testing;
using nlohmann::json;
using namespace chemrel;

namespace {

int failures = 0;

void report(std::string_view name, bool ok, const std::string& detail) {
  fmt::print("{} {}: {}\n", ok ? "PASS" : "FAIL", name, detail);
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Runs one criterion; an exception counts as FAIL.
void criterion(std::string_view name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(name, ok, detail);
  } catch (const std::exception& e) {
    report(name, false, fmt::format("exception: {}", e.what()));
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

Matrix random_matrix(std::size_t n, std::uint64_t seed) {
  Matrix m(n, n);
  const auto v = fx::random_values(n * n, seed, 0.0, 0.3);
  std::copy(v.begin(), v.end(), m.data().begin());
  return m;
}

std::vector<data::SoluRecord> huuskonen() {
  return data::load_csv(std::string(CHEMREL_DATA) + "/huuskonen_solubility.csv", data::CsvSchema::aqueous()).records;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count(const pt::ptree& node, const std::string& tag, const std::string& cls) {
  std::size_t n = 0;
  for (const auto& [name, child] : node) {
    if (name == tag && child.get<std::string>("<xmlattr>.class", "") == cls) ++n;
    n += count(child, tag, cls);
  }
  return n;
}

pt::ptree parse_svg(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree tree;
  pt::read_xml(in, tree);
  return tree;
}

// ---- criteria ----

std::pair<bool, std::string> gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  const encoder::Model m = fx::small_model();
  const auto tokens = fx::ten_tokens();
  std::size_t checked = 0, bad = 0;

  // Every parameter entry.
  encoder::ForwardOptions opts;
  opts.parameter_grads = true;
  {
    auto pass = encoder::run_forward(m, tokens, std::nullopt, opts);
    pass.tape.backward(pass.prediction);
  }
  for (const auto& [name, tensor] : m.parameters()) {
    auto values = ad::Tensor(tensor).mutable_values();
    const auto grad = tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + 1e-5;
      const double up = encoder::forward(m, tokens).value;
      values[i] = saved - 1e-5;
      const double down = encoder::forward(m, tokens).value;
      values[i] = saved;
      ++checked;
      if (!fx::grad_close(grad[i], (up - down) / 2e-5)) ++bad;
    }
  }
  const std::size_t parameter_checks = checked;

  // Every attention-probability entry of every layer and head.
  const auto p = encoder::predict_with_gradients(m, tokens);
  const auto& cfg = m.config();
  for (std::size_t l = 0; l < cfg.num_layers; ++l)
    for (std::size_t h = 0; h < cfg.num_heads; ++h)
      for (std::size_t q = 0; q < tokens.size(); ++q)
        for (std::size_t k = 0; k < tokens.size(); ++k) {
          encoder::ForwardOptions up, down;
          up.perturbation = encoder::AttentionPerturbation{l, h, q, k, 1e-5};
          down.perturbation = encoder::AttentionPerturbation{l, h, q, k, -1e-5};
          const double fd = (encoder::run_forward(m, tokens, std::nullopt, up).prediction.item() -
                             encoder::run_forward(m, tokens, std::nullopt, down).prediction.item()) /
                            2e-5;
          ++checked;
          if (!fx::grad_close(p.record.layers[l].gradient(h, q, k), fd)) ++bad;
        }
  const double elapsed = seconds_since(start);
  return {bad == 0 && tokens.size() == 10 && elapsed < 60.0,
          fmt::format("{} parameter + {} attention entries, {} outside rel 1e-3 / abs 1e-6, {:.2f} s (< 60 s)",
                      parameter_checks, checked - parameter_checks, bad, elapsed)};
}

std::pair<bool, std::string> relevance_oracle() {
  double worst_average = 0.0, worst_aggregate = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t heads = 1 + seed % 4, t = 2 + seed % 7;
    const auto a = fx::random_values(heads * t * t, seed, 0.0, 1.0);
    const auto g = fx::random_values(heads * t * t, seed + 1000, -2.0, 2.0);
    const Matrix m = relevance::head_average(a, g, heads, t);
    for (std::size_t q = 0; q < t; ++q)
      for (std::size_t k = 0; k < t; ++k) {
        double expect = 0.0;
        for (std::size_t h = 0; h < heads; ++h) expect += std::max(0.0, a[(h * t + q) * t + k] * g[(h * t + q) * t + k]);
        worst_average = std::max(worst_average, std::abs(m(q, k) - expect / static_cast<double>(heads)));
      }

    const std::size_t layers = 1 + seed % 4;
    std::vector<Matrix> bars;
    for (std::size_t l = 0; l < layers; ++l) bars.push_back(random_matrix(t, seed * 10 + l));
    Matrix expected = Matrix::identity(t);
    for (const auto& bar : bars) {
      Matrix factor = bar;
      for (std::size_t i = 0; i < t; ++i) factor(i, i) += 1.0;
      expected = multiply(factor, expected);
    }
    const auto r = relevance::aggregate(bars, t);
    for (std::size_t i = 0; i < t * t; ++i)
      worst_aggregate = std::max(worst_aggregate, std::abs(r.values.data()[i] - expected.data()[i]));
  }
  return {worst_average <= 1e-12 && worst_aggregate <= 1e-12,
          fmt::format("100 cases (L <= 4, t <= 8): max |aggregate - prod(I + A)| = {:.2e}, max |head_average - "
                      "loop| = {:.2e} (tol 1e-12)",
                      worst_aggregate, worst_average)};
}

std::pair<bool, std::string> identities() {
  // Zero gradients: every averaged matrix vanishes and R stays I exactly.
  bool identity_exact = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t heads = 2, t = 2 + seed % 7, layers = 1 + seed % 4;
    const auto a = fx::random_values(heads * t * t, seed, 0.0, 1.0);
    const std::vector<double> zeros(a.size(), 0.0);
    std::vector<Matrix> bars(layers, relevance::head_average(a, zeros, heads, t));
    const auto r = relevance::aggregate(bars, t);
    const Matrix id = Matrix::identity(t);
    identity_exact = identity_exact && std::equal(r.values.data().begin(), r.values.data().end(), id.data().begin());
  }

  // One layer of uniform attention relevance: every non-<REG> token gets the same value.
  const auto tokens = fx::ten_tokens();
  Matrix uniform(tokens.size(), tokens.size());
  for (double& v : uniform.data()) v = 0.1;
  const auto extracted = relevance::extract_reg(relevance::aggregate(std::span(&uniform, 1), tokens.size()), tokens);
  bool uniform_equal = extracted.size() == tokens.size() - 1;
  for (const auto& e : extracted) uniform_equal = uniform_equal && e.raw == extracted.front().raw;

  // R - I >= 0 and R^l >= R^(l-1) entrywise on the random suite.
  bool nonnegative = true, monotone = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t t = 2 + seed % 7, layers = 1 + seed % 4;
    std::vector<Matrix> bars;
    for (std::size_t l = 0; l < layers; ++l) bars.push_back(random_matrix(t, seed * 10 + l));
    Matrix previous = Matrix::identity(t);
    for (std::size_t l = 1; l <= layers; ++l) {
      const auto r = relevance::aggregate(std::span(bars).first(l), t);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j) {
          nonnegative = nonnegative && r.values(i, j) - (i == j ? 1.0 : 0.0) >= 0.0;
          monotone = monotone && r.values(i, j) >= previous(i, j);
        }
      previous = r.values;
    }
  }
  return {identity_exact && uniform_equal && nonnegative && monotone,
          fmt::format("zero gradients -> R == I exactly: {}; L=1 uniform A -> equal relevance over {} tokens: {}; "
                      "R - I >= 0: {}; R monotone in l: {}",
                      identity_exact, extracted.size(), uniform_equal, nonnegative, monotone)};
}

std::pair<bool, std::string> tokenizer_corpus() {
  std::ifstream in(std::string(CHEMREL_TEST_DATA) + "/tokenizer_corpus.tsv");
  std::size_t lines = 0, round_trip = 0, reference_tokens = 0, atom_counts = 0;
  for (std::string line; std::getline(in, line);) {
    std::istringstream fields(line);
    std::string smiles_text, toks, atoms;
    std::getline(fields, smiles_text, '\t');
    std::getline(fields, toks, '\t');
    std::getline(fields, atoms, '\t');
    std::vector<std::string> expected;
    std::istringstream ts(toks);
    for (std::string t; ts >> t;) expected.push_back(t);
    ++lines;
    const auto seq = smiles::tokenize(smiles_text);
    if (seq.joined() == smiles_text) ++round_trip;
    if (seq.texts() == expected) ++reference_tokens;
    const auto graph = smiles::parse(seq);
    if (graph.atoms.size() == smiles::atom_token_indices(seq).size() && graph.atoms.size() == std::stoul(atoms))
      ++atom_counts;
  }

  const auto glycolic = smiles::parse("OCC(O)=O");
  const auto doubles = std::count_if(glycolic.bonds.begin(), glycolic.bonds.end(),
                                     [](const smiles::Bond& b) { return b.order == smiles::BondOrder::Double; });
  const bool glycolic_ok =
      smiles::tokenize("OCC(O)=O").texts() == std::vector<std::string>{"O", "C", "C", "(", "O", ")", "=", "O"} &&
      glycolic.atoms.size() == 5 && glycolic.bonds.size() == 4 && doubles == 1;
  const auto ethanol = smiles::parse("CCO");
  const bool ethanol_ok = smiles::tokenize("CCO").texts() == std::vector<std::string>{"C", "C", "O"} &&
                          ethanol.atoms.size() == 3 && ethanol.bonds.size() == 2;
  // The string has 13 atom tokens; two ring closures (1 and 2).
  const auto bicyclic = smiles::parse("CC12CC(C)(NC(=O)N1)NC(=O)N2");
  const bool bicyclic_ok = bicyclic.atoms.size() == 13 && bicyclic.bonds.size() == 14 && bicyclic.ring_closures == 2;

  const bool ok = lines == 200 && round_trip == lines && reference_tokens == lines && atom_counts == lines &&
                  glycolic_ok && ethanol_ok && bicyclic_ok;
  return {ok, fmt::format("{} molecules: round trip {}/{}, reference tokens {}/{}, atom counts {}/{}; OCC(O)=O {}, "
                          "CCO {}, CC12CC(C)(NC(=O)N1)NC(=O)N2 (13 atoms, 2 closures) {}",
                          lines, round_trip, lines, reference_tokens, lines, atom_counts, lines,
                          glycolic_ok ? "ok" : "wrong", ethanol_ok ? "ok" : "wrong", bicyclic_ok ? "ok" : "wrong")};
}

std::pair<bool, std::string> overfit() {
  const auto start = std::chrono::steady_clock::now();
  const auto recs = huuskonen();
  std::vector<std::size_t> idx(32);
  std::iota(idx.begin(), idx.end(), 0);
  const auto scaler = data::LabelScaler::fit(data::labels(recs, idx));
  const auto examples = training::make_examples(recs, idx, scaler, false);
  std::vector<smiles::TokenSequence> corpus;
  for (const auto& e : examples) corpus.push_back(e.tokens);
  auto cfg = fx::small_config();
  cfg.head_dim = 8;
  cfg.head_hidden = 32;
  cfg.max_tokens = 160;
  auto vocab = Vocabulary::build(corpus);
  cfg.vocab_size = vocab.size();
  training::TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 8;
  tc.learning_rate = 3e-3;
  tc.weight_decay = 0.0;
  tc.max_steps = 2000;
  const auto result = training::train(encoder::init_parameters(cfg, vocab, 1), tc, examples, examples, scaler);
  const auto pred = training::predict(result.best_model, examples);
  double mae = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) mae += std::abs(pred[i] - examples[i].target) / pred.size();
  const double elapsed = seconds_since(start);
  return {mae < 0.1 && result.steps <= 2000 && elapsed < 300.0,
          fmt::format("32 samples: train MAE {:.4f} scaled (< 0.1) after {} steps (<= 2000), {:.1f} s (< 300 s)", mae,
                      result.steps, elapsed)};
}

std::pair<bool, std::string> determinism() {
  const auto recs = huuskonen();
  data::Split split;
  for (std::size_t i = 200; i < 260; ++i) (i < 248 ? split.train : split.validation).push_back(i);
  double worst = 0.0;
  bool logs_equal = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    training::TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.model_seed = seed;
    tc.data_seed = seed;
    const auto a = training::fit(recs, split, fx::small_config(), tc);
    const auto b = training::fit(recs, split, fx::small_config(), tc);
    worst = std::max(worst, std::abs(a.best_val_loss - b.best_val_loss));
    for (std::size_t e = 0; e < a.log.size(); ++e) {
      worst = std::max(worst, std::abs(a.log[e].val_loss - b.log[e].val_loss));
      logs_equal = logs_equal && a.log.size() == b.log.size();
    }
  }
  return {worst <= 1e-12 && logs_equal,
          fmt::format("5 seeds, two runs each: max validation-loss difference {:.1e} (tol 1e-12)", worst)};
}

// Trains the shipped aqueous config over 5 data seeds; keeps the first checkpoint for the explain check.
std::pair<bool, std::string> predictive_floor(const fs::path& checkpoint_out) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path config_path = fs::path(CHEMREL_SOURCE) / "configs" / "aqueous.cfg";
  const auto settings = config::resolve(config::parse(io::read_file(config_path)), config_path.parent_path());
  const auto records = data::load_csv(settings.dataset, settings.schema).records;
  std::vector<std::string> rows;
  bool all_beat = true;
  const auto suite = training::run_suite(
      records, settings.split, settings.model, settings.train, settings.suite_seeds, training::SuiteMode::DataSeed,
      [&](std::size_t k, const training::SuiteRun& run) {
        const bool beat = run.evaluation.metrics.rmse < run.test_label_std;
        all_beat = all_beat && beat;
        fmt::print("  data seed {}: test RMSE {:.3f} vs label std {:.3f} ({}), MAE {:.3f}, n = {}\n", run.seed,
                   run.evaluation.metrics.rmse, run.test_label_std, beat ? "beats mean" : "does not beat mean",
                   run.evaluation.metrics.mae, run.evaluation.targets.size());
        std::fflush(stdout);
        if (k == 0) save_checkpoint(checkpoint_out, run.result.checkpoint());
      });
  fmt::print("{}", data::format_table(suite.summary, "Huuskonen aqueous solubility, random 10% test split"));
  const double elapsed = seconds_since(start);
  return {all_beat && suite.runs.size() == 5 && records.size() >= 500,
          fmt::format("{} molecules, 5 data seeds: RMSE {:.3f} ({:.3f}), MAE {:.3f} ({:.3f}); every run below its test "
                      "label std: {}; {:.0f} s",
                      records.size(), suite.summary.mean.rmse, suite.summary.standard_error.rmse,
                      suite.summary.mean.mae, suite.summary.standard_error.mae, all_beat, elapsed)};
}

std::pair<bool, std::string> end_to_end_explain(const fs::path& checkpoint, const fs::path& work) {
  const fs::path out = work / "explain";
  fs::remove_all(out);
  const std::string cmd = fmt::format("{} explain {} 'OCC(O)=O' --solvent 'CCO' --temp 298 --out {} >/dev/null 2>&1",
                                      CHEMREL_CLI, checkpoint.string(), out.string());
  const auto start = std::chrono::steady_clock::now();
  const int status = std::system(cmd.c_str());
  const double elapsed = seconds_since(start);
  if (status != 0) return {false, fmt::format("explain exited with status {}", status)};

  const auto doc = json::parse(slurp(out / "relevance.json"));
  std::vector<std::string> texts;
  for (const auto& t : doc.at("tokens")) texts.push_back(t.at("text").get<std::string>());
  const std::vector<std::string> expected{"<REG>", "O", "C", "C", "(", "O", ")", "=", "O", "<SEP>", "C", "C", "O"};
  const bool tokens_ok = texts == expected;
  const bool atoms_ok = doc.at("atoms").size() == 8;

  const auto molecule = parse_svg(slurp(out / "molecule.svg"));
  const auto layers = parse_svg(slurp(out / "attention_layers.svg"));
  const auto matrix_svg = slurp(out / "relevance_matrix.svg");
  const auto matrix = parse_svg(matrix_svg);
  const std::size_t highlights = count(molecule, "circle", "highlight");
  const std::size_t molecules = count(molecule, "g", "molecule");
  const std::size_t t = expected.size();
  const auto layer_count = load_checkpoint(checkpoint).model.config().num_layers;
  const bool heatmaps_ok = count(layers, "rect", "cell") == layer_count * t * t &&
                           count(matrix, "rect", "cell") == t * t && matrix_svg.find("R - I") != std::string::npos;
  const bool ok = tokens_ok && atoms_ok && highlights == 8 && molecules == 2 && heatmaps_ok && elapsed < 10.0;
  return {ok, fmt::format("tokens [{}] ({} tokens, exact quoted sequence: {}); relevance JSON with {} atoms; "
                          "{} molecules and {} highlights for 8 atoms; {} layer panels + R - I panel well-formed: {}; "
                          "{:.2f} s (< 10 s)",
                          fmt::join(texts, " "), texts.size(), tokens_ok, doc.at("atoms").size(), molecules, highlights,
                          layer_count, heatmaps_ok, elapsed)};
}

std::pair<bool, std::string> metrics_arithmetic() {
  std::vector<data::ErrorMetrics> runs;
  for (double v : {0.6, 0.61, 0.59, 0.60, 0.60}) runs.push_back({v, v});
  const auto s = data::summarize(runs);
  // Sample std sqrt(0.0002 / 4) over sqrt(5).
  const double se = std::sqrt(0.0002 / 4.0) / std::sqrt(5.0);
  const bool ok = std::abs(s.mean.mae - 0.600) <= 1e-6 && std::abs(s.standard_error.mae - se) <= 1e-6 &&
                  std::abs(s.standard_error.mae - 0.0032) < 5e-5;
  return {ok, fmt::format("runs 0.6, 0.61, 0.59, 0.60, 0.60: mean {:.6f}, SE {:.7f} (hand value {:.7f}, tol 1e-6)",
                          s.mean.mae, s.standard_error.mae, se)};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "chemrel_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path checkpoint = work / "aqueous_seed0.ckpt";

  criterion("gradient-suite", gradient_suite);
  criterion("relevance-oracle", relevance_oracle);
  criterion("relevance-identities", identities);
  criterion("tokenizer-parser-corpus", tokenizer_corpus);
  criterion("training-overfit", overfit);
  criterion("training-determinism", determinism);
  criterion("predictive-floor", [&] { return predictive_floor(checkpoint); });
  criterion("end-to-end-explain", [&] { return end_to_end_explain(checkpoint, work); });
  criterion("metrics-arithmetic", metrics_arithmetic);

  fs::remove_all(work);
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
