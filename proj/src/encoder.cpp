#include "chemrel/encoder.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "chemrel/error.hpp"

namespace chemrel::encoder {

namespace {

using ad::Tensor;

Tensor clone(const Tensor& t) {
  if (!t.defined()) return t;
  auto v = t.values();
  return Tensor::from(t.shape(), std::vector<double>(v.begin(), v.end()), t.requires_grad());
}

std::vector<EncoderLayer> allocate_layers(const ModelConfig& c) {
  const std::size_t d = c.model_dim();
  std::vector<EncoderLayer> layers(c.num_layers);
  for (auto& l : layers) {
    l.norm1_gain = Tensor::from({d}, std::vector<double>(d, 1.0), true);
    l.norm1_bias = Tensor::zeros({d}, true);
    l.query = Tensor::zeros({d, d}, true);
    l.query_bias = Tensor::zeros({d}, true);
    l.key = Tensor::zeros({d, d}, true);
    l.key_bias = Tensor::zeros({d}, true);
    l.value = Tensor::zeros({d, d}, true);
    l.value_bias = Tensor::zeros({d}, true);
    l.output = Tensor::zeros({d, d}, true);
    l.output_bias = Tensor::zeros({d}, true);
    l.norm2_gain = Tensor::from({d}, std::vector<double>(d, 1.0), true);
    l.norm2_bias = Tensor::zeros({d}, true);
    l.ffn_in = Tensor::zeros({d, c.ffn_dim}, true);
    l.ffn_in_bias = Tensor::zeros({c.ffn_dim}, true);
    l.ffn_out = Tensor::zeros({c.ffn_dim, d}, true);
    l.ffn_out_bias = Tensor::zeros({d}, true);
  }
  return layers;
}

RegressionHead allocate_head(const ModelConfig& c) {
  const std::size_t d = c.model_dim();
  const std::size_t in = d + (c.use_temperature_feature ? 1 : 0);
  RegressionHead h;
  h.norm_gain = Tensor::from({d}, std::vector<double>(d, 1.0), true);
  h.norm_bias = Tensor::zeros({d}, true);
  h.dense1 = Tensor::zeros({in, c.head_hidden}, true);
  h.dense1_bias = Tensor::zeros({c.head_hidden}, true);
  h.dense2 = Tensor::zeros({c.head_hidden, c.head_hidden}, true);
  h.dense2_bias = Tensor::zeros({c.head_hidden}, true);
  h.dense3 = Tensor::zeros({c.head_hidden, 1}, true);
  h.dense3_bias = Tensor::zeros({1}, true);
  return h;
}

std::vector<NamedTensor> head_named(const RegressionHead& h) {
  return {{"head.norm.gain", h.norm_gain},     {"head.norm.bias", h.norm_bias},
          {"head.dense1.weight", h.dense1},    {"head.dense1.bias", h.dense1_bias},
          {"head.dense2.weight", h.dense2},    {"head.dense2.bias", h.dense2_bias},
          {"head.dense3.weight", h.dense3},    {"head.dense3.bias", h.dense3_bias}};
}

// mt19937_64 is specified bit-exactly; the distributions are not, so the
// uniform mapping is done by hand to keep initialization portable.
class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : rng_(seed) {}
  double operator()(double bound) {
    const double unit = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return (2.0 * unit - 1.0) * bound;
  }

 private:
  std::mt19937_64 rng_;
};

void fill_uniform(Tensor& t, Uniform& u, double bound) {
  for (double& v : t.mutable_values()) v = u(bound);
}

void fill_dense(Tensor& w, Uniform& u) {
  fill_uniform(w, u, 1.0 / std::sqrt(static_cast<double>(w.rows())));
}

}  // namespace

void ModelConfig::validate() const {
  const auto positive = [](std::size_t v, std::string_view name) {
    if (v < 1) throw InvalidInputError(fmt::format("model config: {} must be >= 1", name));
  };
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(head_dim, "head_dim");
  positive(ffn_dim, "ffn_dim");
  positive(vocab_size, "vocab_size");
  positive(max_tokens, "max_tokens");
  positive(head_hidden, "head_hidden");
}

Model::Model(ModelConfig config, Vocabulary vocabulary)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)) {
  if (config_.vocab_size != vocabulary_.size()) {
    throw InvalidInputError(fmt::format("model config: vocab_size {} differs from vocabulary size {}",
                                        config_.vocab_size, vocabulary_.size()));
  }
  config_.validate();
  embedding = Tensor::zeros({config_.vocab_size, config_.model_dim()}, true);
  layers = allocate_layers(config_);
  head = allocate_head(config_);
}

Model::Model(const Model& other)
    : embedding(clone(other.embedding)),
      layers(other.layers),
      head(other.head),
      config_(other.config_),
      vocabulary_(other.vocabulary_) {
  for (auto& l : layers)
    for (Tensor* t : {&l.norm1_gain, &l.norm1_bias, &l.query, &l.query_bias, &l.key, &l.key_bias, &l.value,
                      &l.value_bias, &l.output, &l.output_bias, &l.norm2_gain, &l.norm2_bias, &l.ffn_in,
                      &l.ffn_in_bias, &l.ffn_out, &l.ffn_out_bias})
      *t = clone(*t);
  for (Tensor* t : {&head.norm_gain, &head.norm_bias, &head.dense1, &head.dense1_bias, &head.dense2,
                    &head.dense2_bias, &head.dense3, &head.dense3_bias})
    *t = clone(*t);
}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("embedding", embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto name = [i](std::string_view leaf) { return fmt::format("layer{}.{}", i, leaf); };
    out.emplace_back(name("norm1.gain"), l.norm1_gain);
    out.emplace_back(name("norm1.bias"), l.norm1_bias);
    out.emplace_back(name("attn.query.weight"), l.query);
    out.emplace_back(name("attn.query.bias"), l.query_bias);
    out.emplace_back(name("attn.key.weight"), l.key);
    out.emplace_back(name("attn.key.bias"), l.key_bias);
    out.emplace_back(name("attn.value.weight"), l.value);
    out.emplace_back(name("attn.value.bias"), l.value_bias);
    out.emplace_back(name("attn.output.weight"), l.output);
    out.emplace_back(name("attn.output.bias"), l.output_bias);
    out.emplace_back(name("norm2.gain"), l.norm2_gain);
    out.emplace_back(name("norm2.bias"), l.norm2_bias);
    out.emplace_back(name("ffn.in.weight"), l.ffn_in);
    out.emplace_back(name("ffn.in.bias"), l.ffn_in_bias);
    out.emplace_back(name("ffn.out.weight"), l.ffn_out);
    out.emplace_back(name("ffn.out.bias"), l.ffn_out_bias);
  }
  for (auto& p : head_named(head)) out.push_back(std::move(p));
  return out;
}

std::vector<NamedTensor> Model::head_parameters() const { return head_named(head); }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.size();
  return n;
}

std::size_t Model::head_parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : head_parameters()) n += t.size();
  return n;
}

void Model::zero_grad() const {
  for (auto [name, t] : parameters()) t.zero_grad();
}

Model zero_model(const ModelConfig& config, Vocabulary vocabulary) {
  return Model(config, std::move(vocabulary));
}

Model init_parameters(const ModelConfig& config, Vocabulary vocabulary, std::uint64_t seed) {
  Model model(config, std::move(vocabulary));
  Uniform u(seed);
  fill_uniform(model.embedding, u, 1.0);
  for (auto& l : model.layers) {
    fill_dense(l.query, u);
    fill_dense(l.key, u);
    fill_dense(l.value, u);
    fill_dense(l.output, u);
    fill_dense(l.ffn_in, u);
    fill_dense(l.ffn_out, u);
  }
  fill_dense(model.head.dense1, u);
  fill_dense(model.head.dense2, u);
  fill_dense(model.head.dense3, u);
  return model;
}

double temperature_feature(double kelvin) { return (kelvin - 298.15) / 100.0; }

std::vector<double> position_encoding(std::size_t tokens, std::size_t dim) {
  std::vector<double> pe(tokens * dim);
  for (std::size_t pos = 0; pos < tokens; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double pair = static_cast<double>(i - i % 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(dim));
      pe[pos * dim + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

AttentionRecord ForwardPass::record() const {
  AttentionRecord rec;
  rec.padding = padding;
  rec.tokens = padding.size();
  for (const auto& heads : attention) {
    LayerAttention layer;
    layer.heads = heads.size();
    layer.tokens = rec.tokens;
    for (const auto& a : heads) {
      auto v = a.values();
      layer.probabilities.insert(layer.probabilities.end(), v.begin(), v.end());
      if (a.requires_grad()) {
        auto g = a.grad();
        layer.gradients.insert(layer.gradients.end(), g.begin(), g.end());
      }
    }
    if (layer.gradients.size() != layer.probabilities.size()) layer.gradients.assign(layer.probabilities.size(), 0.0);
    rec.layers.push_back(std::move(layer));
  }
  return rec;
}

void validate_input(const Model& model, const smiles::TokenSequence& tokens,
                    const std::optional<double>& temperature) {
  if (tokens.tokens.empty() || !tokens[0].is_special(smiles::kReg)) {
    throw InvalidInputError("encoder input must start with <REG>");
  }
  if (tokens.size() > model.config().max_tokens) {
    throw InvalidInputError(fmt::format("encoder input has {} tokens, model accepts at most {}", tokens.size(),
                                        model.config().max_tokens));
  }
  if (temperature.has_value() != model.config().use_temperature_feature) {
    throw InvalidInputError(model.config().use_temperature_feature
                                ? "model expects a temperature"
                                : "model has no temperature feature but a temperature was given");
  }
  if (temperature && !(*temperature > 0.0 && std::isfinite(*temperature))) {
    throw InvalidInputError("temperature must be a positive number of kelvin");
  }
}

ad::Tensor regress(ad::Tape& tape, const Model& model, const ad::Tensor& hidden, std::size_t reg_position,
                   const std::optional<double>& temperature, bool parameter_grads) {
  const auto P = [parameter_grads](const Tensor& t) { return parameter_grads ? t : t.detach(); };
  const auto& h = model.head;
  Tensor x = ad::select_row(tape, hidden, reg_position);
  x = ad::layer_norm(tape, x, P(h.norm_gain), P(h.norm_bias));
  if (model.config().use_temperature_feature) {
    if (!temperature) throw InvalidInputError("model expects a temperature");
    const Tensor parts[] = {x, Tensor::scalar(temperature_feature(*temperature))};
    x = ad::concat_cols(tape, parts);
  }
  x = ad::relu(tape, ad::add_row(tape, ad::matmul(tape, x, P(h.dense1)), P(h.dense1_bias)));
  x = ad::relu(tape, ad::add_row(tape, ad::matmul(tape, x, P(h.dense2)), P(h.dense2_bias)));
  return ad::add_row(tape, ad::matmul(tape, x, P(h.dense3)), P(h.dense3_bias));
}

ForwardPass run_forward(const Model& model, const smiles::TokenSequence& tokens,
                        const std::optional<double>& temperature, const ForwardOptions& options) {
  validate_input(model, tokens, temperature);
  const auto& cfg = model.config();
  const std::size_t t = tokens.size();
  const std::size_t d = cfg.model_dim();
  const std::size_t hd = cfg.head_dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto P = [&options](const Tensor& x) { return options.parameter_grads ? x : x.detach(); };

  ForwardPass pass;
  auto& tape = pass.tape;
  pass.padding.resize(t);
  for (std::size_t i = 0; i < t; ++i) pass.padding[i] = tokens[i].is_special(smiles::kPad);
  // std::vector<bool> has no contiguous storage; softmax takes a span<const bool>.
  std::unique_ptr<bool[]> mask(new bool[t]);
  for (std::size_t i = 0; i < t; ++i) mask[i] = pass.padding[i];
  const std::span<const bool> masked(mask.get(), t);

  const auto ids = model.vocabulary().encode(tokens);
  Tensor x = ad::gather_rows(tape, P(model.embedding), ids);
  x = ad::add(tape, x, Tensor::from({t, d}, position_encoding(t, d)));

  pass.attention.resize(cfg.num_layers);
  for (std::size_t li = 0; li < cfg.num_layers; ++li) {
    const auto& L = model.layers[li];
    Tensor h = ad::layer_norm(tape, x, P(L.norm1_gain), P(L.norm1_bias));
    Tensor q = ad::add_row(tape, ad::matmul(tape, h, P(L.query)), P(L.query_bias));
    Tensor k = ad::add_row(tape, ad::matmul(tape, h, P(L.key)), P(L.key_bias));
    Tensor v = ad::add_row(tape, ad::matmul(tape, h, P(L.value)), P(L.value_bias));
    std::vector<Tensor> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t hi = 0; hi < cfg.num_heads; ++hi) {
      Tensor qh = ad::slice_cols(tape, q, hi * hd, hd);
      Tensor kh = ad::slice_cols(tape, k, hi * hd, hd);
      Tensor vh = ad::slice_cols(tape, v, hi * hd, hd);
      Tensor scores = ad::scale(tape, ad::matmul_transposed(tape, qh, kh), inv_sqrt_d);
      Tensor a = ad::softmax_rows(tape, scores, masked);
      if (const auto& p = options.perturbation; p && p->layer == li && p->head == hi) {
        Tensor delta = Tensor::zeros({t, t});
        delta.mutable_values()[p->query * t + p->key] = p->delta;
        a = ad::add(tape, a, delta);
      }
      if (options.attention_grads) a.set_requires_grad(true);
      pass.attention[li].push_back(a);
      heads.push_back(ad::matmul(tape, a, vh));
    }
    Tensor merged = cfg.num_heads == 1 ? heads.front() : ad::concat_cols(tape, heads);
    x = ad::add(tape, x, ad::add_row(tape, ad::matmul(tape, merged, P(L.output)), P(L.output_bias)));

    Tensor f = ad::layer_norm(tape, x, P(L.norm2_gain), P(L.norm2_bias));
    f = ad::relu(tape, ad::add_row(tape, ad::matmul(tape, f, P(L.ffn_in)), P(L.ffn_in_bias)));
    f = ad::add_row(tape, ad::matmul(tape, f, P(L.ffn_out)), P(L.ffn_out_bias));
    x = ad::add(tape, x, f);
  }
  pass.hidden = x;
  pass.prediction = regress(tape, model, x, 0, temperature, options.parameter_grads);
  return pass;
}

Prediction forward(const Model& model, const smiles::TokenSequence& tokens,
                   const std::optional<double>& temperature) {
  ForwardPass pass = run_forward(model, tokens, temperature);
  return Prediction{pass.prediction.item(), pass.record()};
}

Prediction predict_with_gradients(const Model& model, const smiles::TokenSequence& tokens,
                                  const std::optional<double>& temperature) {
  ForwardOptions options;
  options.attention_grads = true;
  ForwardPass pass = run_forward(model, tokens, temperature, options);
  pass.tape.backward(pass.prediction);
  Prediction out{pass.prediction.item(), pass.record()};
  out.record.has_gradients = true;
  return out;
}

}  // namespace chemrel::encoder
