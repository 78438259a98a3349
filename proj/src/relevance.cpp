#include "chemrel/relevance.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <json.hpp>

#include "chemrel/error.hpp"

namespace chemrel::relevance {

Matrix head_average(std::span<const double> attention, std::span<const double> gradient, std::size_t heads,
                    std::size_t tokens) {
  if (heads == 0) throw DimensionError("head_average: no heads");
  const std::size_t n = heads * tokens * tokens;
  if (attention.size() != n || gradient.size() != n) {
    throw DimensionError(fmt::format("head_average: expected {} entries, got {} attention / {} gradient", n,
                                     attention.size(), gradient.size()));
  }
  Matrix out(tokens, tokens);
  const double inv_heads = 1.0 / static_cast<double>(heads);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < tokens * tokens; ++i) {
      const double v = attention[h * tokens * tokens + i] * gradient[h * tokens * tokens + i];
      if (v > 0.0) out.data()[i] += v;
    }
  for (double& v : out.data()) v *= inv_heads;
  return out;
}

Matrix head_average(const encoder::LayerAttention& layer) {
  return head_average(layer.probabilities, layer.gradients, layer.heads, layer.tokens);
}

std::vector<Matrix> head_averages(const encoder::AttentionRecord& record) {
  if (!record.has_gradients) throw InvalidInputError("attention record carries no gradients");
  std::vector<Matrix> out;
  out.reserve(record.layers.size());
  for (const auto& layer : record.layers) out.push_back(head_average(layer));
  return out;
}

RelevanceMatrix aggregate(std::span<const Matrix> averaged, std::size_t tokens) {
  RelevanceMatrix out;
  out.values = Matrix::identity(tokens);
  for (std::size_t l = 0; l < averaged.size(); ++l) {
    const Matrix& a = averaged[l];
    if (a.rows() != tokens || a.cols() != tokens) {
      throw DimensionError(fmt::format("aggregate: layer {} is {}x{}, expected {}x{}", l + 1, a.rows(), a.cols(),
                                       tokens, tokens));
    }
    const Matrix& r = out.values;
    Matrix next = r;
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t k = 0; k < tokens; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < tokens; ++j) next(i, j) += aik * r(k, j);
      }
    out.values = std::move(next);
  }
  out.layers = averaged.size();
  return out;
}

std::vector<TokenRelevance> extract_reg(const RelevanceMatrix& relevance, const smiles::TokenSequence& tokens) {
  if (tokens.tokens.empty() || !tokens[relevance.reg_position].is_special(smiles::kReg)) {
    throw InvalidInputError("extract_reg: sequence has no <REG> token at the relevance reg position");
  }
  if (relevance.values.rows() != tokens.size()) {
    throw DimensionError(fmt::format("extract_reg: relevance is {}x{}, sequence has {} tokens",
                                     relevance.values.rows(), relevance.values.cols(), tokens.size()));
  }
  std::vector<TokenRelevance> out;
  const std::size_t reg = relevance.reg_position;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    if (j == reg || tokens[j].is_special(smiles::kPad)) continue;
    out.push_back(TokenRelevance{j, tokens[j].text, tokens[j].kind, relevance.values(reg, j), tokens[j].is_atom()});
  }
  return out;
}

std::vector<double> min_max_scale(std::span<const double> raw) {
  if (raw.empty()) return {};
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), 0.5);
  if (*hi == *lo) return out;
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  return out;
}

AtomRelevance atom_relevance(std::span<const TokenRelevance> token_relevance, const smiles::TokenSequence& tokens,
                             const smiles::MolecularGraph& graph, std::size_t segment, double prediction) {
  if (segment >= tokens.segments.size()) {
    throw InvalidInputError(fmt::format("atom_relevance: sequence has no segment {}", segment));
  }
  const auto [begin, end] = tokens.segments[segment];
  AtomRelevance out;
  out.prediction = prediction;
  out.segment = segment;
  std::vector<double> raw;
  for (std::size_t a = 0; a < graph.atoms.size(); ++a) {
    const std::size_t position = begin + graph.atom_token_map[a];
    if (position >= end || !tokens[position].is_atom()) {
      throw InvalidInputError(
          fmt::format("atom_relevance: atom {} maps to token {}, which is not an atom token", a, position));
    }
    auto it = std::find_if(token_relevance.begin(), token_relevance.end(),
                           [position](const TokenRelevance& t) { return t.position == position; });
    if (it == token_relevance.end()) {
      throw InvalidInputError(fmt::format("atom_relevance: no relevance for token {}", position));
    }
    out.atoms.push_back(AtomWeight{a, graph.atoms[a].element, position, it->raw, 0.0});
    raw.push_back(it->raw);
  }
  const std::size_t atom_tokens = static_cast<std::size_t>(std::count_if(
      tokens.tokens.begin() + static_cast<std::ptrdiff_t>(begin), tokens.tokens.begin() + static_cast<std::ptrdiff_t>(end),
      [](const smiles::Token& t) { return t.is_atom(); }));
  if (atom_tokens != graph.atoms.size()) {
    throw InvalidInputError(fmt::format("atom_relevance: graph has {} atoms, segment has {} atom tokens",
                                        graph.atoms.size(), atom_tokens));
  }
  const auto scaled = min_max_scale(raw);
  for (std::size_t i = 0; i < scaled.size(); ++i) out.atoms[i].scaled = scaled[i];
  return out;
}

Explanation explain(const encoder::Model& model, const std::string& solute,
                    const std::optional<std::string>& solvent, const std::optional<double>& temperature,
                    const std::function<double(double)>& to_label_units) {
  Explanation ex;
  ex.smiles = solute;
  ex.solvent_smiles = solvent;
  ex.temperature = temperature;

  const auto solute_tokens = smiles::tokenize(solute);
  ex.graphs.push_back(smiles::parse(solute_tokens));
  std::optional<smiles::TokenSequence> solvent_tokens;
  if (solvent) {
    solvent_tokens = smiles::tokenize(*solvent);
    ex.graphs.push_back(smiles::parse(*solvent_tokens));
  }
  ex.tokens = smiles::prepare_input(solute_tokens, solvent_tokens);
  ex.unknown_tokens = model.vocabulary().unknown_tokens(ex.tokens);

  auto prediction = encoder::predict_with_gradients(model, ex.tokens, temperature);
  ex.prediction = to_label_units ? to_label_units(prediction.value) : prediction.value;
  ex.record = std::move(prediction.record);
  ex.averaged = head_averages(ex.record);
  ex.relevance = aggregate(ex.averaged, ex.tokens.size());
  ex.token_relevance = extract_reg(ex.relevance, ex.tokens);
  for (std::size_t s = 0; s < ex.graphs.size(); ++s) {
    ex.atoms.push_back(atom_relevance(ex.token_relevance, ex.tokens, ex.graphs[s], s, ex.prediction));
  }
  return ex;
}

std::string to_json(const Explanation& ex) {
  using nlohmann::json;
  json doc;
  doc["schema_version"] = 1;
  doc["axis"] = "reg_row";
  doc["smiles"] = ex.smiles;
  if (ex.solvent_smiles) doc["solvent_smiles"] = *ex.solvent_smiles;
  doc["prediction"] = ex.prediction;
  if (ex.temperature) doc["temperature"] = *ex.temperature;

  json tokens = json::array();
  for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
    const auto& tok = ex.tokens[i];
    json entry{{"position", i}, {"text", tok.text}, {"kind", smiles::to_string(tok.kind)}, {"is_atom", tok.is_atom()}};
    auto it = std::find_if(ex.token_relevance.begin(), ex.token_relevance.end(),
                           [i](const TokenRelevance& t) { return t.position == i; });
    entry["raw_relevance"] = it == ex.token_relevance.end() ? json(nullptr) : json(it->raw);
    tokens.push_back(std::move(entry));
  }
  doc["tokens"] = std::move(tokens);

  json atoms = json::array();
  for (const auto& mol : ex.atoms) {
    for (const auto& a : mol.atoms) {
      atoms.push_back({{"molecule", mol.segment == 0 ? "solute" : "solvent"},
                       {"index", a.atom},
                       {"element", a.element},
                       {"token_position", a.token_position},
                       {"raw", a.raw},
                       {"scaled", a.scaled}});
    }
  }
  doc["atoms"] = std::move(atoms);
  if (!ex.unknown_tokens.empty()) doc["unknown_tokens"] = ex.unknown_tokens;
  return doc.dump(2) + "\n";
}

}  // namespace chemrel::relevance
