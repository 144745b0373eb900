#pragma once

#include <vector>

#include "cbmloc/nnet.hpp"
#include "cbmloc/synthgen.hpp"
#include "cbmloc/train.hpp"

namespace cbmloc {

/// Concept bottleneck model: concept predictor g (k sigmoid outputs) followed
/// by a linear label predictor f. With a residual connection f reads
/// concat(g(x), x); the x-columns of f's weight form residual_proj.
class CBModel {
 public:
  CBModel(Network g, Network f, bool residual);

  [[nodiscard]] const Network& g() const { return g_; }
  [[nodiscard]] const Network& f() const { return f_; }
  Network& g() { return g_; }
  Network& f() { return f_; }
  [[nodiscard]] bool residual() const { return residual_; }
  [[nodiscard]] int num_concepts() const { return g_.output_dim(); }
  [[nodiscard]] int num_classes() const { return f_.output_dim(); }

  /// L x m block of f's weight acting on the raw input (residual only).
  [[nodiscard]] Matrix residual_proj() const;
  void set_residual_proj(const Matrix& proj);

  /// Columns are samples.
  [[nodiscard]] Matrix predict_concepts(const Matrix& x) const;
  [[nodiscard]] Matrix label_logits(const Matrix& x) const;
  [[nodiscard]] std::vector<int> predict_label(const Matrix& x) const;

  /// Input to f built from concept probabilities (and x when residual).
  [[nodiscard]] Matrix f_input(const Matrix& concepts, const Matrix& x) const;

 private:
  Network g_;
  Network f_;
  bool residual_ = false;
};

struct CBMTrainResult {
  std::vector<EpochStats> concept_history;
  std::vector<EpochStats> label_history;
};

/// Sequential training: g on concept labels (BCE), then f by softmax
/// cross-entropy on (g(x), y) with g frozen. `label_tc` trains f; when omitted
/// it reuses `tc`.
CBModel train_cbm(const Dataset& ds, const NetworkConfig& g_config, const TrainConfig& tc, bool residual = false,
                  CBMTrainResult* result = nullptr, const TrainConfig* label_tc = nullptr,
                  const EpochCallback& on_concept_epoch = {});

/// Trains f only, for an already trained g.
CBModel fit_label_predictor(Network g, const Dataset& ds, const TrainConfig& tc, bool residual = false,
                            std::vector<EpochStats>* history = nullptr);

struct Evaluation {
  double concept_accuracy = 0.0;
  std::vector<double> per_concept_accuracy;
  double task_accuracy = 0.0;
};

Evaluation evaluate(const CBModel& model, const Dataset& ds);

}  // namespace cbmloc
