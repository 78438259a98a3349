#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chemrel/checkpoint.hpp"
#include "chemrel/data.hpp"
#include "chemrel/encoder.hpp"
#include "chemrel/error.hpp"
#include "chemrel/smiles.hpp"

namespace chemrel::training {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double huber_delta = 1.0;
  /// Linear warmup over this fraction of all steps, then constant.
  double warmup_fraction = 0.05;
  std::uint64_t model_seed = 0;
  std::uint64_t data_seed = 0;
  /// Update only the regression head.
  bool freeze_encoder = false;
  /// Stop after this many optimizer steps (the epoch in progress is logged).
  std::optional<std::size_t> max_steps;

  void validate() const;
};

/// Decoupled weight decay Adam with bias correction:
///   p <- p (1 - lr wd);  m, v moment updates;  p <- p - lr m_hat / (sqrt(v_hat) + eps).
class AdamW {
 public:
  AdamW(std::vector<ad::Tensor> parameters, double beta1, double beta2, double epsilon, double weight_decay);

  /// Applies one update from the gradients currently stored on the parameters.
  void step(double learning_rate);
  std::size_t steps() const noexcept { return steps_; }

 private:
  std::vector<ad::Tensor> parameters_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  double beta1_, beta2_, epsilon_, weight_decay_;
  std::size_t steps_ = 0;
};

/// Learning rate at optimizer step `step` (0-based).
double scheduled_learning_rate(const TrainConfig& config, std::size_t step, std::size_t total_steps);

struct Example {
  smiles::TokenSequence tokens;
  std::optional<double> temperature;
  /// Target in scaled units.
  double target = 0.0;
  std::size_t record = 0;
};

/// Tokenizes solute (and solvent) of the selected records and scales labels.
/// Temperatures are attached only when `with_temperature`.
std::vector<Example> make_examples(std::span<const data::SoluRecord> records, std::span<const std::size_t> indices,
                                   const data::LabelScaler& scaler, bool with_temperature);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  /// Validation MAE in label units.
  double val_mae = 0.0;
};

struct TrainResult {
  encoder::Model best_model;
  data::LabelScaler scaler;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t steps = 0;

  Checkpoint checkpoint() const;
};

/// Thrown when a loss turns non-finite; carries the best model so far.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& message, encoder::Model last_good)
      : Error(message), last_good_(std::move(last_good)) {}
  const encoder::Model& last_good() const noexcept { return last_good_; }

 private:
  encoder::Model last_good_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimizes mean Huber loss over shuffled mini-batches, keeping the model
/// with the lowest validation loss. `model` is trained in place.
TrainResult train(encoder::Model model, const TrainConfig& config, std::span<const Example> train_set,
                  std::span<const Example> validation_set, const data::LabelScaler& scaler,
                  const EpochCallback& on_epoch = {});

/// Builds the vocabulary from the training solutes, fits label scaling on the
/// training labels, initializes with config.model_seed and trains.
TrainResult fit(std::span<const data::SoluRecord> records, const data::Split& split,
                encoder::ModelConfig model_config, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean Huber loss of the model on scaled targets.
double mean_loss(const encoder::Model& model, std::span<const Example> examples, double delta);

/// Raw (scaled-unit) model outputs.
std::vector<double> predict(const encoder::Model& model, std::span<const Example> examples);

struct Evaluation {
  std::vector<double> predictions;
  std::vector<double> targets;
  data::ErrorMetrics metrics;
  /// Record indices whose tokens include entries missing from the vocabulary.
  std::vector<std::size_t> unknown_token_records;
};

/// Predictions are mapped back to label units before the metrics. With
/// `strict_vocabulary`, any token missing from the checkpoint vocabulary is a
/// FormatError; otherwise such records are flagged.
Evaluation evaluate(const Checkpoint& checkpoint, std::span<const data::SoluRecord> records,
                    std::span<const std::size_t> indices, bool strict_vocabulary = false);

/// Label scaling stored in checkpoint metadata.
data::LabelScaler scaler_from(const Checkpoint& checkpoint);

enum class SuiteMode { DataSeed, ModelSeed };

struct SuiteRun {
  std::uint64_t seed = 0;
  Evaluation evaluation;
  TrainResult result;
  double test_label_std = 0.0;
};

struct SuiteResult {
  std::vector<SuiteRun> runs;
  data::RunMetrics summary;
};

/// One training run per seed. DataSeed varies the split seed (and batch
/// order) with a fixed model seed; ModelSeed varies initialization with a
/// fixed split.
SuiteResult run_suite(std::span<const data::SoluRecord> records, const data::SplitSpec& split_spec,
                      const encoder::ModelConfig& model_config, const TrainConfig& config,
                      std::span<const std::uint64_t> seeds, SuiteMode mode,
                      const std::function<void(std::size_t, const SuiteRun&)>& on_run = {});

/// CSV text: epoch,train_loss,val_loss,val_mae.
std::string training_log_csv(std::span<const EpochLog> log);

}  // namespace chemrel::training
