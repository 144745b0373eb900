#include "cbmloc/cbm.hpp"

#include <stdexcept>

#include "cbmloc/architectures.hpp"
#include "cbmloc/metrics.hpp"
#include "cbmloc/rng.hpp"

namespace cbmloc {

CBModel::CBModel(Network g, Network f, bool residual) : g_(std::move(g)), f_(std::move(f)), residual_(residual) {
  const int expected = g_.output_dim() + (residual_ ? g_.input_dim() : 0);
  if (f_.input_dim() != expected) throw std::invalid_argument("label predictor input width does not match g");
  const auto& layers = f_.config().layers;
  if (layers.size() != 1 || layers[0].kind != LayerKind::kDense || layers[0].activation != Activation::kIdentity)
    throw std::invalid_argument("label predictor must be a single linear layer");
}

Matrix CBModel::residual_proj() const {
  if (!residual_) throw std::logic_error("model has no residual connection");
  const Matrix& w = f_.params()[0].weight;
  return w.rightCols(g_.input_dim());
}

void CBModel::set_residual_proj(const Matrix& proj) {
  if (!residual_) throw std::logic_error("model has no residual connection");
  Matrix& w = f_.params()[0].weight;
  if (proj.rows() != w.rows() || proj.cols() != g_.input_dim()) throw std::invalid_argument("residual_proj shape");
  w.rightCols(g_.input_dim()) = proj;
}

Matrix CBModel::f_input(const Matrix& concepts, const Matrix& x) const {
  if (!residual_) return concepts;
  Matrix in(concepts.rows() + x.rows(), concepts.cols());
  in.topRows(concepts.rows()) = concepts;
  in.bottomRows(x.rows()) = x;
  return in;
}

Matrix CBModel::predict_concepts(const Matrix& x) const { return predict_batched(g_, x); }

Matrix CBModel::label_logits(const Matrix& x) const { return predict_batched(f_, f_input(predict_concepts(x), x)); }

std::vector<int> CBModel::predict_label(const Matrix& x) const {
  const Matrix logits = label_logits(x);
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Eigen::Index arg = 0;
    logits.col(c).maxCoeff(&arg);
    out[static_cast<std::size_t>(c)] = static_cast<int>(arg);
  }
  return out;
}

CBModel fit_label_predictor(Network g, const Dataset& ds, const TrainConfig& tc, bool residual,
                            std::vector<EpochStats>* history) {
  if (ds.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  const int in = g.output_dim() + (residual ? g.input_dim() : 0);
  Network f(make_linear_config(in, ds.num_classes, derive_seed(tc.seed, 0xF)));
  CBModel model(std::move(g), std::move(f), residual);
  TrainingData data;
  const Matrix x = ds.inputs();
  data.inputs = model.f_input(model.predict_concepts(x), x);
  for (const auto& s : ds.samples) data.labels.push_back(s.label);
  auto h = train(model.f(), data, tc, Head::kLabel);
  if (history) *history = std::move(h);
  return model;
}

CBModel train_cbm(const Dataset& ds, const NetworkConfig& g_config, const TrainConfig& tc, bool residual,
                  CBMTrainResult* result, const TrainConfig* label_tc, const EpochCallback& on_concept_epoch) {
  if (g_config.output_dim != ds.k) throw std::invalid_argument("g output width must equal the number of concepts");
  Network g(g_config);
  auto concept_history = train(g, ds, tc, Head::kConcepts, on_concept_epoch);
  std::vector<EpochStats> label_history;
  CBModel model = fit_label_predictor(std::move(g), ds, label_tc ? *label_tc : tc, residual, &label_history);
  if (result) {
    result->concept_history = std::move(concept_history);
    result->label_history = std::move(label_history);
  }
  return model;
}

Evaluation evaluate(const CBModel& model, const Dataset& ds) {
  Evaluation ev;
  ev.per_concept_accuracy.assign(static_cast<std::size_t>(ds.k), 0.0);
  if (ds.empty()) return ev;
  if (model.num_concepts() != ds.k) throw std::invalid_argument("model and dataset disagree on k");
  const Matrix x = ds.inputs();
  const Matrix c = model.predict_concepts(x);
  const auto labels = model.predict_label(x);
  std::size_t total_hit = 0;
  std::size_t task_hit = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.k; ++j) {
      const bool hit = concept_decision(c(j, static_cast<Eigen::Index>(i))) == ds.samples[i].concepts[j];
      ev.per_concept_accuracy[static_cast<std::size_t>(j)] += hit;
      total_hit += hit;
    }
    task_hit += labels[i] == ds.samples[i].label;
  }
  const auto n = static_cast<double>(ds.size());
  for (double& a : ev.per_concept_accuracy) a /= n;
  ev.concept_accuracy = static_cast<double>(total_hit) / (n * ds.k);
  ev.task_accuracy = static_cast<double>(task_hit) / n;
  return ev;
}

}  // namespace cbmloc
