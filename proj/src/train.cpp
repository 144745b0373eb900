#include "cbmloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace cbmloc {

void validate(const TrainConfig& tc) {
  if (tc.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(tc.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (tc.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (tc.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (tc.adversarial) {
    if (tc.adversarial->pgd_steps < 0) throw std::invalid_argument("adversarial pgd_steps must be >= 0");
    if (!(tc.adversarial->step_size > 0.0)) throw std::invalid_argument("adversarial step_size must be > 0");
  }
}

TrainingData training_data(const Dataset& ds) {
  TrainingData d;
  d.inputs = ds.inputs();
  d.concept_targets.resize(ds.k, static_cast<Eigen::Index>(ds.size()));
  d.labels.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.k; ++j) d.concept_targets(j, static_cast<Eigen::Index>(i)) = ds.samples[i].concepts[j];
    d.labels.push_back(ds.samples[i].label);
  }
  return d;
}

double concept_accuracy(const Matrix& outputs, const Matrix& targets) {
  if (outputs.size() == 0) return 0.0;
  std::size_t hit = 0;
  for (Eigen::Index c = 0; c < outputs.cols(); ++c)
    for (Eigen::Index r = 0; r < outputs.rows(); ++r) hit += (outputs(r, c) > 0.5) == (targets(r, c) > 0.5);
  return static_cast<double>(hit) / static_cast<double>(outputs.size());
}

double label_accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.cols() == 0) return 0.0;
  std::size_t hit = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Eigen::Index arg = 0;
    logits.col(c).maxCoeff(&arg);
    hit += arg == labels[static_cast<std::size_t>(c)];
  }
  return static_cast<double>(hit) / static_cast<double>(logits.cols());
}

Matrix predict_batched(const Network& net, const Matrix& inputs, int chunk) {
  Matrix out(net.output_dim(), inputs.cols());
  for (Eigen::Index c = 0; c < inputs.cols(); c += chunk) {
    const Eigen::Index w = std::min<Eigen::Index>(chunk, inputs.cols() - c);
    out.middleCols(c, w) = net.forward(inputs.middleCols(c, w));
  }
  return out;
}

double l2_norm(const Network& net) {
  double s = 0.0;
  for (const auto& p : net.params()) s += p.weight.squaredNorm() + p.bias.squaredNorm();
  return std::sqrt(s);
}

namespace {

// Mean loss over the batch (and over concepts for BCE) and its gradient w.r.t. the outputs.
double batch_loss(const Matrix& out, const TrainingData& data, const std::vector<std::size_t>& rows, Head head,
                  Matrix& grad) {
  grad.resize(out.rows(), out.cols());
  double total = 0.0;
  Objective obj;
  obj.kind = head == Head::kConcepts ? LossKind::kBinaryCrossEntropy : LossKind::kSoftmaxCrossEntropy;
  double inv = 1.0 / static_cast<double>(rows.size());
  if (head == Head::kConcepts) inv /= static_cast<double>(out.rows());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(rows[b]);
    if (head == Head::kConcepts)
      obj.target = data.concept_targets.col(col);
    else
      obj.label = data.labels[rows[b]];
    const LossValue lv = evaluate_objective(obj, out.col(static_cast<Eigen::Index>(b)));
    total += lv.loss;
    grad.col(static_cast<Eigen::Index>(b)) = lv.grad_output * inv;
  }
  return total * inv;
}

void accumulate(std::vector<LayerParams>& into, const std::vector<LayerParams>& g, double scale) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    into[i].weight += scale * g[i].weight;
    into[i].bias += scale * g[i].bias;
  }
}

}  // namespace

std::vector<EpochStats> train(Network& net, const TrainingData& data, const TrainConfig& tc, Head head,
                              const EpochCallback& on_epoch) {
  validate(tc);
  const auto n = static_cast<std::size_t>(data.inputs.cols());
  if (n == 0) throw std::invalid_argument("cannot train on an empty dataset");
  if (data.inputs.rows() != net.input_dim()) throw std::invalid_argument("training inputs do not match network");
  if (head == Head::kConcepts && data.concept_targets.rows() != net.output_dim())
    throw std::invalid_argument("concept head width != number of concepts");

  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStats> history;
  ForwardCache cache;
  std::vector<LayerParams> grads;
  std::vector<LayerParams> adv_grads;
  Matrix grad_out;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(tc.batch_size));
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      Matrix x(data.inputs.rows(), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t b = 0; b < rows.size(); ++b)
        x.col(static_cast<Eigen::Index>(b)) = data.inputs.col(static_cast<Eigen::Index>(rows[b]));

      const Matrix out = net.forward(x, cache);
      double loss = batch_loss(out, data, rows, head, grad_out);
      net.backward(cache, grad_out, grads, nullptr);

      if (tc.adversarial && tc.adversarial->loss_weight != 0.0) {
        const AdversarialConfig& adv = *tc.adversarial;
        Matrix xa = x;
        for (int step = 0; step < adv.pgd_steps; ++step) {
          const Matrix o = net.forward(xa, cache);
          batch_loss(o, data, rows, head, grad_out);
          const Matrix gx = net.input_gradient(cache, grad_out);
          xa = (xa.array() + adv.step_size * gx.array().sign()).cwiseMax(0.0).cwiseMin(1.0).matrix();
        }
        const Matrix oa = net.forward(xa, cache);
        loss += adv.loss_weight * batch_loss(oa, data, rows, head, grad_out);
        net.backward(cache, grad_out, adv_grads, nullptr);
        accumulate(grads, adv_grads, adv.loss_weight);
      }

      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                 " (lr=" + std::to_string(tc.learning_rate) + ")");
      epoch_loss += loss * static_cast<double>(rows.size());

      auto& params = net.params();
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].weight.size() == 0) continue;
        params[i].weight -= tc.learning_rate * (grads[i].weight + tc.weight_decay * params[i].weight);
        params[i].bias -= tc.learning_rate * (grads[i].bias + tc.weight_decay * params[i].bias);
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.loss = epoch_loss / static_cast<double>(n);
    st.concept_accuracy = std::numeric_limits<double>::quiet_NaN();
    st.task_accuracy = std::numeric_limits<double>::quiet_NaN();
    const Matrix all = predict_batched(net, data.inputs);
    if (head == Head::kConcepts)
      st.concept_accuracy = concept_accuracy(all, data.concept_targets);
    else
      st.task_accuracy = label_accuracy(all, data.labels);
    history.push_back(st);
    if (on_epoch && !on_epoch(net, st)) break;
  }
  return history;
}

std::vector<EpochStats> train(Network& net, const Dataset& ds, const TrainConfig& tc, Head head,
                              const EpochCallback& on_epoch) {
  if (ds.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  return train(net, training_data(ds), tc, head, on_epoch);
}

}  // namespace cbmloc
