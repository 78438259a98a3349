#pragma once

// Gradient-weighted attention relevance.
//
// Axis convention: attention and relevance matrices are indexed [query][key].
// Row q of A holds how much query token q reads from each key, so the <REG>
// row of R holds the relevance of every token to the <REG> representation,
// which is the only vector the regression head sees.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chemrel/encoder.hpp"
#include "chemrel/matrix.hpp"
#include "chemrel/smiles.hpp"

namespace chemrel::relevance {

/// E_h((grad ⊙ A)^+): per-head elementwise product, negatives clamped to zero
/// per head, then the mean over heads. Inputs are [head][query][key].
Matrix head_average(std::span<const double> attention, std::span<const double> gradient, std::size_t heads,
                    std::size_t tokens);
Matrix head_average(const encoder::LayerAttention& layer);
/// One averaged matrix per layer; requires a record with gradients.
std::vector<Matrix> head_averages(const encoder::AttentionRecord& record);

struct RelevanceMatrix {
  Matrix values;
  std::size_t layers = 0;
  std::size_t reg_position = 0;
};

/// R^0 = I, R^l = R^{l-1} + Ā^l R^{l-1} for l = 1..L.
RelevanceMatrix aggregate(std::span<const Matrix> averaged, std::size_t tokens);

struct TokenRelevance {
  std::size_t position = 0;
  std::string text;
  smiles::TokenKind kind = smiles::TokenKind::Atom;
  double raw = 0.0;
  bool is_atom = false;
};

/// Entries R[reg][j] for every j except the <REG> self-entry and <PAD>
/// positions. <SEP> is kept with is_atom = false.
std::vector<TokenRelevance> extract_reg(const RelevanceMatrix& relevance, const smiles::TokenSequence& tokens);

/// Min-max scaling to [0, 1]; all 0.5 when max == min.
std::vector<double> min_max_scale(std::span<const double> raw);

struct AtomWeight {
  std::size_t atom = 0;
  std::string element;
  std::size_t token_position = 0;
  double raw = 0.0;
  double scaled = 0.0;
};

struct AtomRelevance {
  std::vector<AtomWeight> atoms;
  double prediction = 0.0;
  std::size_t segment = 0;
};

/// Atom-token entries of `token_relevance` for molecule `segment` of
/// `tokens`, mapped through the graph's atom_token_map and min-max scaled.
AtomRelevance atom_relevance(std::span<const TokenRelevance> token_relevance, const smiles::TokenSequence& tokens,
                             const smiles::MolecularGraph& graph, std::size_t segment = 0, double prediction = 0.0);

/// Everything one explanation produces.
struct Explanation {
  std::string smiles;
  std::optional<std::string> solvent_smiles;
  std::optional<double> temperature;
  double prediction = 0.0;
  smiles::TokenSequence tokens;
  std::vector<smiles::MolecularGraph> graphs;
  encoder::AttentionRecord record;
  std::vector<Matrix> averaged;
  RelevanceMatrix relevance;
  std::vector<TokenRelevance> token_relevance;
  std::vector<AtomRelevance> atoms;
  /// Input tokens absent from the model vocabulary (encoded as <UNK>).
  std::vector<std::string> unknown_tokens;
};

/// `to_label_units` maps the raw model output to label units.
Explanation explain(const encoder::Model& model, const std::string& solute,
                    const std::optional<std::string>& solvent = std::nullopt,
                    const std::optional<double>& temperature = std::nullopt,
                    const std::function<double(double)>& to_label_units = {});

/// Relevance export, schema documented in docs/formats.md.
std::string to_json(const Explanation& explanation);

}  // namespace chemrel::relevance
