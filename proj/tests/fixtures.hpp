#pragma once

#include <cstdint>
#include <string_view>

#include "chemrel/encoder.hpp"
#include "chemrel/smiles.hpp"
#include "chemrel/vocabulary.hpp"

namespace chemrel::testing {

/// Two layers, two heads, narrow widths: cheap enough for finite differences.
inline encoder::ModelConfig small_config(bool temperature = false) {
  encoder::ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.head_dim = 4;
  cfg.ffn_dim = 16;
  cfg.head_hidden = 8;
  cfg.max_tokens = 40;
  cfg.use_temperature_feature = temperature;
  cfg.vocab_size = Vocabulary().size();
  return cfg;
}

inline encoder::Model small_model(std::uint64_t seed = 7, bool temperature = false) {
  return encoder::init_parameters(small_config(temperature), Vocabulary(), seed);
}

/// 10 tokens including <REG>.
inline smiles::TokenSequence ten_tokens() { return smiles::prepare_input(smiles::tokenize("OCC(O)C=O")); }

inline smiles::TokenSequence input(std::string_view solute) {
  return smiles::prepare_input(smiles::tokenize(solute));
}

}  // namespace chemrel::testing
