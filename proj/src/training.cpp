#include "chemrel/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "chemrel/vocabulary.hpp"

namespace chemrel::training {

void TrainConfig::validate() const {
  if (epochs == 0) throw InvalidInputError("train config: epochs must be positive");
  if (batch_size == 0) throw InvalidInputError("train config: batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw InvalidInputError("train config: learning_rate must be >= 0");
  if (!(huber_delta > 0.0)) throw InvalidInputError("train config: huber_delta must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidInputError("train config: betas must lie in [0, 1)");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw InvalidInputError("train config: warmup_fraction must lie in [0, 1]");
  }
}

AdamW::AdamW(std::vector<ad::Tensor> parameters, double beta1, double beta2, double epsilon, double weight_decay)
    : parameters_(std::move(parameters)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {
  for (const auto& p : parameters_) {
    first_moment_.emplace_back(p.size(), 0.0);
    second_moment_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step(double learning_rate) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(beta1_, t);
  const double correction2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t k = 0; k < parameters_.size(); ++k) {
    auto values = parameters_[k].mutable_values();
    auto grad = parameters_[k].grad();
    auto& m = first_moment_[k];
    auto& v = second_moment_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] *= 1.0 - learning_rate * weight_decay_;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
}

double scheduled_learning_rate(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  const auto warmup = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(config.warmup_fraction * static_cast<double>(total_steps))));
  if (step >= warmup) return config.learning_rate;
  return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

std::vector<Example> make_examples(std::span<const data::SoluRecord> records, std::span<const std::size_t> indices,
                                   const data::LabelScaler& scaler, bool with_temperature) {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& r = records[i];
    const auto solute = smiles::tokenize(r.solute);
    std::optional<smiles::TokenSequence> solvent;
    if (r.solvent) solvent = smiles::tokenize(*r.solvent);
    Example ex;
    ex.tokens = smiles::prepare_input(solute, solvent);
    if (with_temperature) {
      if (!r.temperature) throw InvalidInputError(fmt::format("record {} ({}) has no temperature", i, r.solute));
      ex.temperature = r.temperature;
    }
    ex.target = scaler.forward(r.log_s);
    ex.record = i;
    out.push_back(std::move(ex));
  }
  return out;
}

Checkpoint TrainResult::checkpoint() const {
  Checkpoint ck;
  ck.model = best_model;
  ck.metadata["label.min"] = scaler.min;
  ck.metadata["label.max"] = scaler.max;
  ck.metadata["train.best_epoch"] = static_cast<double>(best_epoch);
  ck.metadata["train.best_val_loss"] = best_val_loss;
  return ck;
}

std::vector<double> predict(const encoder::Model& model, std::span<const Example> examples) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encoder::run_forward(model, ex.tokens, ex.temperature).prediction.item());
  return out;
}

double mean_loss(const encoder::Model& model, std::span<const Example> examples, double delta) {
  if (examples.empty()) throw InvalidInputError("mean_loss: no examples");
  const auto preds = predict(model, examples);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += ad::huber_value(preds[i], examples[i].target, delta);
  return total / static_cast<double>(preds.size());
}

namespace {

double mae_in_label_units(const encoder::Model& model, std::span<const Example> examples,
                          const data::LabelScaler& scaler) {
  const auto preds = predict(model, examples);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total += std::abs(scaler.inverse(preds[i]) - scaler.inverse(examples[i].target));
  }
  return total / static_cast<double>(preds.size());
}

}  // namespace

TrainResult train(encoder::Model model, const TrainConfig& config, std::span<const Example> train_set,
                  std::span<const Example> validation_set, const data::LabelScaler& scaler,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw InvalidInputError("train: empty training set");
  if (validation_set.empty()) throw InvalidInputError("train: empty validation set");

  std::vector<ad::Tensor> trainable;
  for (const auto& [name, t] : config.freeze_encoder ? model.head_parameters() : model.parameters()) {
    trainable.push_back(t);
  }
  AdamW optimizer(trainable, config.beta1, config.beta2, config.epsilon, config.weight_decay);

  const std::size_t batches_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  std::size_t total_steps = config.epochs * batches_per_epoch;
  if (config.max_steps) total_steps = std::min(total_steps, *config.max_steps);

  TrainResult result;
  result.scaler = scaler;
  result.best_model = model;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(config.data_seed * 0x2545F4914F6CDD1DULL + 1);

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs && step < total_steps; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size() && step < total_steps; start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      model.zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const Example& ex = train_set[order[b]];
        encoder::ForwardOptions options;
        options.parameter_grads = true;
        auto pass = encoder::run_forward(model, ex.tokens, ex.temperature, options);
        ad::Tensor loss = ad::scale(pass.tape, ad::huber_loss(pass.tape, pass.prediction, ex.target, config.huber_delta),
                                    inv_batch);
        const double value = loss.item() / inv_batch;
        if (!std::isfinite(value)) {
          throw TrainingAborted(fmt::format("non-finite loss at epoch {}, step {}", epoch, step),
                                result.best_model);
        }
        pass.tape.backward(loss);
        loss_sum += value;
        ++seen;
      }
      for (const auto& p : trainable) {
        for (double g : p.grad()) {
          if (!std::isfinite(g)) {
            throw TrainingAborted(fmt::format("non-finite gradient at epoch {}, step {}", epoch, step),
                                  result.best_model);
          }
        }
      }
      optimizer.step(scheduled_learning_rate(config, step, total_steps));
      ++step;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    entry.val_loss = mean_loss(model, validation_set, config.huber_delta);
    entry.val_mae = mae_in_label_units(model, validation_set, scaler);
    result.log.push_back(entry);
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      result.best_model = model;
    }
    if (on_epoch) on_epoch(entry);
  }
  result.steps = step;
  model.zero_grad();
  result.best_model.zero_grad();
  return result;
}

TrainResult fit(std::span<const data::SoluRecord> records, const data::Split& split,
                encoder::ModelConfig model_config, const TrainConfig& config, const EpochCallback& on_epoch) {
  const auto scaler = data::LabelScaler::fit(data::labels(records, split.train));
  const bool with_temperature = model_config.use_temperature_feature;
  const auto train_set = make_examples(records, split.train, scaler, with_temperature);
  const auto val_set = make_examples(records, split.validation, scaler, with_temperature);

  std::vector<smiles::TokenSequence> corpus;
  for (const auto& ex : train_set) corpus.push_back(ex.tokens);
  Vocabulary vocab = Vocabulary::build(corpus);
  model_config.vocab_size = vocab.size();
  std::size_t longest = 0;
  for (const auto* set : {&train_set, &val_set})
    for (const auto& ex : *set) longest = std::max(longest, ex.tokens.size());
  model_config.max_tokens = std::max(model_config.max_tokens, longest);

  auto model = encoder::init_parameters(model_config, std::move(vocab), config.model_seed);
  return train(std::move(model), config, train_set, val_set, scaler, on_epoch);
}

data::LabelScaler scaler_from(const Checkpoint& checkpoint) {
  const auto lo = checkpoint.metadata.find("label.min");
  const auto hi = checkpoint.metadata.find("label.max");
  if (lo == checkpoint.metadata.end() || hi == checkpoint.metadata.end()) {
    throw FormatError("checkpoint carries no label scaling (label.min / label.max)");
  }
  return data::LabelScaler{lo->second, hi->second};
}

Evaluation evaluate(const Checkpoint& checkpoint, std::span<const data::SoluRecord> records,
                    std::span<const std::size_t> indices, bool strict_vocabulary) {
  if (indices.empty()) throw InvalidInputError("evaluate: empty test set");
  const auto scaler = scaler_from(checkpoint);
  const auto& model = checkpoint.model;
  const auto examples = make_examples(records, indices, scaler, model.config().use_temperature_feature);
  Evaluation out;
  for (const auto& ex : examples) {
    const auto unknown = model.vocabulary().unknown_tokens(ex.tokens);
    if (unknown.empty()) continue;
    if (strict_vocabulary) {
      throw FormatError(fmt::format("vocabulary mismatch: token {} of {} is not in the checkpoint vocabulary",
                                    unknown.front(), records[ex.record].solute));
    }
    out.unknown_token_records.push_back(ex.record);
  }
  for (double p : predict(model, examples)) out.predictions.push_back(scaler.inverse(p));
  out.targets = data::labels(records, indices);
  out.metrics = data::metrics(out.predictions, out.targets);
  return out;
}

SuiteResult run_suite(std::span<const data::SoluRecord> records, const data::SplitSpec& split_spec,
                      const encoder::ModelConfig& model_config, const TrainConfig& config,
                      std::span<const std::uint64_t> seeds, SuiteMode mode,
                      const std::function<void(std::size_t, const SuiteRun&)>& on_run) {
  SuiteResult out;
  std::vector<data::ErrorMetrics> metrics;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    data::SplitSpec spec = split_spec;
    TrainConfig tc = config;
    if (mode == SuiteMode::DataSeed) {
      spec.seed = seeds[k];
      tc.data_seed = seeds[k];
    } else {
      tc.model_seed = seeds[k];
    }
    const auto split = data::make_split(records, spec);
    SuiteRun run;
    run.seed = seeds[k];
    run.result = fit(records, split, model_config, tc);
    run.evaluation = evaluate(run.result.checkpoint(), records, split.test);
    run.test_label_std = data::standard_deviation(run.evaluation.targets);
    metrics.push_back(run.evaluation.metrics);
    if (on_run) on_run(k, run);
    out.runs.push_back(std::move(run));
  }
  if (metrics.size() >= 2) out.summary = data::summarize(metrics);
  return out;
}

std::string training_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,train_loss,val_loss,val_mae\n";
  for (const auto& e : log) out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.train_loss, e.val_loss, e.val_mae);
  return out;
}

}  // namespace chemrel::training
