#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cbmloc/nnet.hpp"
#include "cbmloc/synthgen.hpp"

namespace cbmloc {

struct AdversarialConfig {
  int pgd_steps = 10;
  double step_size = 0.05;
  double loss_weight = 1.0;
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 0.05;
  int batch_size = 32;
  double weight_decay = 0.0;
  std::optional<AdversarialConfig> adversarial;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& tc);

enum class Head { kConcepts, kLabel };

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double concept_accuracy = 0.0;  // NaN when not applicable
  double task_accuracy = 0.0;     // NaN when not applicable
};

struct TrainingData {
  Matrix inputs;               // one column per sample
  Matrix concept_targets;      // k x n (concept head)
  std::vector<int> labels;     // label head
};

/// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(const Network&, const EpochStats&)>;

/// Minibatch SGD with seeded shuffling. Weight decay adds weight_decay * theta
/// to every parameter gradient. With adversarial training each batch also
/// descends loss_weight * loss on inputs perturbed by sign-gradient ascent of
/// the same loss (clamped to [0, 1]). Throws std::runtime_error on a
/// non-finite loss.
std::vector<EpochStats> train(Network& net, const TrainingData& data, const TrainConfig& tc, Head head,
                              const EpochCallback& on_epoch = {});

/// Concept head on a dataset's pixels and concept labels.
std::vector<EpochStats> train(Network& net, const Dataset& ds, const TrainConfig& tc, Head head,
                              const EpochCallback& on_epoch = {});

TrainingData training_data(const Dataset& ds);

/// Fraction of concept entries where (output > 0.5) matches the target.
double concept_accuracy(const Matrix& outputs, const Matrix& targets);
double label_accuracy(const Matrix& logits, const std::vector<int>& labels);

/// Forward in fixed-size chunks to bound memory.
Matrix predict_batched(const Network& net, const Matrix& inputs, int chunk = 64);

double l2_norm(const Network& net);

}  // namespace cbmloc
