#include <gtest/gtest.h>

#include <cmath>

#include "chemrel/encoder.hpp"
#include "chemrel/error.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace chemrel;
using namespace chemrel::encoder;
using chemrel::testing::grad_close;
namespace fx = chemrel::testing;

TEST(Encoder, DefaultConfigParameterCounts) {
  ModelConfig cfg;
  cfg.vocab_size = Vocabulary().size();
  const Model m = zero_model(cfg, Vocabulary());
  // LN(32) + 33x64 + 64x64 + 64x1 with biases.
  EXPECT_EQ(m.head_parameter_count(), 64u + 32u * 64u + 64u + 64u * 64u + 64u + 64u + 1u);
  std::size_t total = 0;
  for (const auto& [name, t] : m.parameters()) total += t.size();
  EXPECT_EQ(total, m.parameter_count());
}

TEST(Encoder, ConfigValidationNamesField) {
  ModelConfig cfg = fx::small_config();
  cfg.num_heads = 0;
  try {
    cfg.validate();
    FAIL();
  } catch (const InvalidInputError& e) {
    EXPECT_NE(std::string(e.what()).find("num_heads"), std::string::npos);
  }
}

TEST(Encoder, InitIsDeterministicPerSeed) {
  const Model a = fx::small_model(3), b = fx::small_model(3), c = fx::small_model(4);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].second.values().begin(), pa[i].second.values().end(),
                           pb[i].second.values().begin()));
    differs |= !std::equal(pa[i].second.values().begin(), pa[i].second.values().end(),
                           pc[i].second.values().begin());
  }
  EXPECT_TRUE(differs);
}

TEST(Encoder, CopiesDoNotAlias) {
  Model a = fx::small_model();
  Model b = a;
  b.embedding.mutable_values()[0] += 1.0;
  EXPECT_NE(a.embedding.values()[0], b.embedding.values()[0]);
}

TEST(Encoder, AttentionRowsAreDistributions) {
  const auto p = forward(fx::small_model(), fx::ten_tokens());
  ASSERT_EQ(p.record.layers.size(), 2u);
  for (const auto& layer : p.record.layers)
    for (std::size_t h = 0; h < layer.heads; ++h)
      for (std::size_t q = 0; q < layer.tokens; ++q) {
        double s = 0.0;
        for (std::size_t k = 0; k < layer.tokens; ++k) {
          EXPECT_GE(layer.probability(h, q, k), 0.0);
          s += layer.probability(h, q, k);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
}

TEST(Encoder, FirstLayerAttentionMatchesManualRecomputation) {
  const Model m = fx::small_model();
  const auto tokens = fx::ten_tokens();
  const auto p = forward(m, tokens);
  const auto& cfg = m.config();
  const std::size_t t = tokens.size(), d = cfg.model_dim(), hd = cfg.head_dim;
  const auto ids = m.vocabulary().encode(tokens);
  const auto pe = position_encoding(t, d);
  const auto& L = m.layers[0];
  std::vector<double> h(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    std::vector<double> x(d);
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      x[c] = m.embedding.values()[ids[i] * d + c] + pe[i * d + c];
      mean += x[c] / static_cast<double>(d);
    }
    for (std::size_t c = 0; c < d; ++c) var += (x[c] - mean) * (x[c] - mean) / static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c)
      h[i * d + c] = (x[c] - mean) / std::sqrt(var + 1e-5) * L.norm1_gain.values()[c] + L.norm1_bias.values()[c];
  }
  const auto project = [&](const ad::Tensor& w, const ad::Tensor& b) {
    std::vector<double> out(t * d);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        double s = b.values()[c];
        for (std::size_t k = 0; k < d; ++k) s += h[i * d + k] * w.values()[k * d + c];
        out[i * d + c] = s;
      }
    return out;
  };
  const auto q = project(L.query, L.query_bias);
  const auto k = project(L.key, L.key_bias);
  for (std::size_t head = 0; head < cfg.num_heads; ++head)
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> s(t);
      double mx = -1e300, z = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[i * d + head * hd + c] * k[j * d + head * hd + c];
        s[j] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      for (double& v : s) z += (v = std::exp(v - mx));
      for (std::size_t j = 0; j < t; ++j)
        EXPECT_NEAR(p.record.layers[0].probability(head, i, j), s[j] / z, 1e-12);
    }
}

TEST(Encoder, AttentionGradientsMatchFiniteDifferences) {
  const Model m = fx::small_model();
  const auto tokens = fx::ten_tokens();
  ASSERT_EQ(tokens.size(), 10u);
  const auto p = predict_with_gradients(m, tokens);
  ASSERT_TRUE(p.record.has_gradients);
  const double h = 1e-5;
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t head = 0; head < 2; ++head)
      for (std::size_t q = 0; q < tokens.size(); ++q)
        for (std::size_t k = 0; k < tokens.size(); ++k) {
          ForwardOptions up, down;
          up.perturbation = AttentionPerturbation{l, head, q, k, h};
          down.perturbation = AttentionPerturbation{l, head, q, k, -h};
          const double fd = (run_forward(m, tokens, std::nullopt, up).prediction.item() -
                             run_forward(m, tokens, std::nullopt, down).prediction.item()) /
                            (2.0 * h);
          const double an = p.record.layers[l].gradient(head, q, k);
          EXPECT_TRUE(grad_close(an, fd)) << l << "/" << head << " (" << q << "," << k << ") " << an << " vs " << fd;
        }
}

TEST(Encoder, ParameterGradientsMatchFiniteDifferences) {
  Model m = fx::small_model(11, true);
  const auto tokens = fx::input("CC(=O)N");
  const double temperature = 310.0;
  ForwardOptions opts;
  opts.parameter_grads = true;
  {
    auto pass = run_forward(m, tokens, temperature, opts);
    pass.tape.backward(pass.prediction);
  }
  for (const auto& [name, tensor] : m.parameters()) {
    auto values = ad::Tensor(tensor).mutable_values();
    const auto grad = tensor.grad();
    // Probe about five entries per tensor.
    for (std::size_t i = 0; i < values.size(); i += std::max<std::size_t>(1, values.size() / 5)) {
      const double saved = values[i];
      values[i] = saved + 1e-5;
      const double up = forward(m, tokens, temperature).value;
      values[i] = saved - 1e-5;
      const double down = forward(m, tokens, temperature).value;
      values[i] = saved;
      const double fd = (up - down) / 2e-5;
      EXPECT_TRUE(grad_close(grad[i], fd)) << name << "[" << i << "] " << grad[i] << " vs " << fd;
    }
  }
}

TEST(Encoder, TrailingPaddingLeavesPredictionBitwiseUnchanged) {
  const Model m = fx::small_model();
  const auto tokens = fx::ten_tokens();
  const double plain = forward(m, tokens).value;
  for (std::size_t extra : {1u, 5u, 20u}) {
    const auto padded = smiles::pad_to(tokens, tokens.size() + extra);
    EXPECT_EQ(forward(m, padded).value, plain);
    const auto rec = forward(m, padded).record;
    for (std::size_t q = 0; q < tokens.size(); ++q)
      for (std::size_t k = tokens.size(); k < padded.size(); ++k) EXPECT_EQ(rec.layers[0].probability(0, q, k), 0.0);
  }
}

TEST(Encoder, HeadReadsOnlyTheRegRow) {
  const Model m = fx::small_model();
  const auto pass = run_forward(m, fx::ten_tokens(), std::nullopt);
  ad::Tape tape;
  const double base = regress(tape, m, pass.hidden, 0, std::nullopt, false).item();
  auto altered = ad::Tensor::from(pass.hidden.shape(), {pass.hidden.values().begin(), pass.hidden.values().end()});
  const std::size_t d = m.config().model_dim();
  for (std::size_t i = d; i < altered.size(); ++i) altered.mutable_values()[i] += 3.0 * std::sin(double(i));
  EXPECT_EQ(regress(tape, m, altered, 0, std::nullopt, false).item(), base);
  altered.mutable_values()[0] += 0.5;
  EXPECT_NE(regress(tape, m, altered, 0, std::nullopt, false).item(), base);
}

TEST(Encoder, InputValidation) {
  const Model m = fx::small_model();
  EXPECT_THROW(forward(m, smiles::tokenize("CCO")), InvalidInputError);
  EXPECT_THROW(forward(m, smiles::pad_to(fx::ten_tokens(), 41)), InvalidInputError);
  const Model t = fx::small_model(7, true);
  EXPECT_THROW(forward(t, fx::ten_tokens()), InvalidInputError);
  EXPECT_NO_THROW(forward(t, fx::ten_tokens(), 298.15));
  EXPECT_DOUBLE_EQ(temperature_feature(398.15), 1.0);
}

TEST(Encoder, SolventInputRunsAndUsesSeparator) {
  const Model m = fx::small_model();
  const auto in = smiles::prepare_input(smiles::tokenize("CCO"), smiles::tokenize("O"));
  const auto p = predict_with_gradients(m, in);
  EXPECT_TRUE(std::isfinite(p.value));
  EXPECT_EQ(p.record.tokens, in.size());
}
