#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chemrel/autodiff.hpp"
#include "chemrel/smiles.hpp"
#include "chemrel/vocabulary.hpp"

namespace chemrel::encoder {

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t head_dim = 16;
  std::size_t ffn_dim = 64;
  std::size_t vocab_size = 0;
  std::size_t max_tokens = 160;
  /// Width of the two hidden layers of the regression head.
  std::size_t head_hidden = 64;
  bool use_temperature_feature = false;

  std::size_t model_dim() const { return num_heads * head_dim; }
  /// Throws InvalidInputError naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Pre-norm block: x += MHA(LN1(x)); x += FFN(LN2(x)). Q/K/V are model_dim
/// wide and split column-wise into heads.
struct EncoderLayer {
  ad::Tensor norm1_gain, norm1_bias;
  ad::Tensor query, query_bias;
  ad::Tensor key, key_bias;
  ad::Tensor value, value_bias;
  ad::Tensor output, output_bias;
  ad::Tensor norm2_gain, norm2_bias;
  ad::Tensor ffn_in, ffn_in_bias;
  ad::Tensor ffn_out, ffn_out_bias;
};

/// LayerNorm on the <REG> vector, optional temperature feature appended, then
/// dense(model_dim[+1] -> hidden) ReLU dense(hidden -> hidden) ReLU dense(hidden -> 1).
struct RegressionHead {
  ad::Tensor norm_gain, norm_bias;
  ad::Tensor dense1, dense1_bias;
  ad::Tensor dense2, dense2_bias;
  ad::Tensor dense3, dense3_bias;
};

using NamedTensor = std::pair<std::string, ad::Tensor>;

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, Vocabulary vocabulary);
  /// Deep copies: parameters never alias between models.
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }

  ad::Tensor embedding;
  std::vector<EncoderLayer> layers;
  RegressionHead head;

  /// Stable names; handles alias this model's storage.
  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> head_parameters() const;
  std::size_t parameter_count() const;
  std::size_t head_parameter_count() const;
  void zero_grad() const;

 private:
  ModelConfig config_;
  Vocabulary vocabulary_;
};

/// Seeded scaled-uniform initialization: dense weights U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)), embeddings U(-1, 1), biases 0, norm gains 1 and biases 0.
Model init_parameters(const ModelConfig& config, Vocabulary vocabulary, std::uint64_t seed);

/// Allocates every parameter with the right shape, all zeros.
Model zero_model(const ModelConfig& config, Vocabulary vocabulary);

/// Temperature feature appended to the <REG> vector: (T - 298.15 K) / 100 K.
double temperature_feature(double kelvin);

/// Post-softmax attention of one layer, [head][query][key], plus dy/dA.
struct LayerAttention {
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::vector<double> probabilities;
  std::vector<double> gradients;

  std::size_t index(std::size_t h, std::size_t q, std::size_t k) const { return (h * tokens + q) * tokens + k; }
  double probability(std::size_t h, std::size_t q, std::size_t k) const { return probabilities[index(h, q, k)]; }
  double gradient(std::size_t h, std::size_t q, std::size_t k) const { return gradients[index(h, q, k)]; }
};

struct AttentionRecord {
  std::vector<LayerAttention> layers;
  std::size_t tokens = 0;
  std::size_t reg_position = 0;
  bool has_gradients = false;
  /// true at <PAD> positions.
  std::vector<bool> padding;
};

struct Prediction {
  double value = 0.0;
  AttentionRecord record;
};

/// Adds `delta` to one post-softmax attention entry before it is used.
/// Only for finite-difference checks of dy/dA.
struct AttentionPerturbation {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t query = 0;
  std::size_t key = 0;
  double delta = 0.0;
};

struct ForwardOptions {
  /// Record parameter gradients (training). Gradients accumulate into the
  /// model's parameter tensors.
  bool parameter_grads = false;
  /// Make every attention tensor a gradient target.
  bool attention_grads = false;
  std::optional<AttentionPerturbation> perturbation;
};

/// One recorded forward sweep. Owns its tape.
struct ForwardPass {
  ad::Tape tape;
  ad::Tensor prediction;
  /// Final hidden states, tokens x model_dim.
  ad::Tensor hidden;
  /// attention[layer][head], tokens x tokens.
  std::vector<std::vector<ad::Tensor>> attention;
  std::vector<bool> padding;

  AttentionRecord record() const;
};

/// Checks <REG> at position 0, length and temperature presence.
void validate_input(const Model& model, const smiles::TokenSequence& tokens,
                    const std::optional<double>& temperature);

/// Embeddings + sinusoidal positions through every encoder layer.
ForwardPass run_forward(const Model& model, const smiles::TokenSequence& tokens,
                        const std::optional<double>& temperature, const ForwardOptions& options = {});

/// Regression head applied to row `reg_position` of `hidden`.
ad::Tensor regress(ad::Tape& tape, const Model& model, const ad::Tensor& hidden, std::size_t reg_position,
                   const std::optional<double>& temperature, bool parameter_grads);

/// Sinusoidal position table, tokens x dim.
std::vector<double> position_encoding(std::size_t tokens, std::size_t dim);

Prediction forward(const Model& model, const smiles::TokenSequence& tokens,
                   const std::optional<double>& temperature = std::nullopt);

/// One forward and one backward from y itself; fills dy/dA for every layer.
/// Parameters are not touched.
Prediction predict_with_gradients(const Model& model, const smiles::TokenSequence& tokens,
                                  const std::optional<double>& temperature = std::nullopt);

}  // namespace chemrel::encoder
