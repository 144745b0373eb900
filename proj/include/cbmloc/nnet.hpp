#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cbmloc {

// Batches are column-major: one column per sample, rows in (channel, row, col) order.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LayerKind { kDense, kConv, kPool, kActivation, kFlatten };
enum class Activation { kRelu, kSigmoid, kIdentity };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  [[nodiscard]] int size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

/// One layer of a feedforward stack.
///
/// Dense and conv layers carry their own activation. Conv layers use "same"
/// padding (kernel / 2) so the output side is ceil(side / stride). Pool layers
/// are unpadded max pools. Flatten only changes the logical shape.
struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int width = 0;  // units (dense) or output channels (conv)
  int kernel = 0;
  int stride = 1;
  Activation activation = Activation::kIdentity;

  static LayerSpec dense(int units, Activation act) { return {LayerKind::kDense, units, 0, 1, act}; }
  static LayerSpec conv(int channels, int kernel, int stride, Activation act) {
    return {LayerKind::kConv, channels, kernel, stride, act};
  }
  static LayerSpec pool(int kernel, int stride) { return {LayerKind::kPool, 0, kernel, stride, Activation::kIdentity}; }
  static LayerSpec activation_layer(Activation act) { return {LayerKind::kActivation, 0, 0, 1, act}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten, 0, 0, 1, Activation::kIdentity}; }

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkConfig {
  Shape input;
  std::vector<LayerSpec> layers;
  int output_dim = 0;
  std::uint64_t init_seed = 0;

  bool operator==(const NetworkConfig&) const = default;
};

/// Shapes after each layer (index 0 is the input). Throws std::invalid_argument
/// when the stack is inconsistent or the final size differs from output_dim.
std::vector<Shape> infer_shapes(const NetworkConfig& cfg);

/// Number of trainable scalars implied by the config.
std::size_t count_parameters(const NetworkConfig& cfg);

struct LayerParams {
  Matrix weight;  // dense: out x in; conv: out_channels x (in_channels * k * k)
  Vector bias;
};

struct ForwardCache {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> pre;          // pre-activation for dense/conv/activation layers
  std::vector<Matrix> cols;         // im2col buffers for conv layers
  std::vector<std::vector<int>> argmax;  // pool winners
  Matrix output;
};

class Network {
 public:
  Network() = default;
  /// Glorot-uniform weights, zero biases, deterministic in cfg.init_seed.
  explicit Network(NetworkConfig cfg);

  [[nodiscard]] const NetworkConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<Shape>& shapes() const { return shapes_; }
  [[nodiscard]] int input_dim() const { return cfg_.input.size(); }
  [[nodiscard]] int output_dim() const { return cfg_.output_dim; }

  [[nodiscard]] std::vector<LayerParams>& params() { return params_; }
  [[nodiscard]] const std::vector<LayerParams>& params() const { return params_; }
  [[nodiscard]] std::size_t parameter_count() const;

  /// Parameters flattened in layer order (weight column-major, then bias).
  [[nodiscard]] std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  [[nodiscard]] Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, ForwardCache& cache) const;

  /// Backpropagates grad_out (dLoss/dOutput, one column per sample). Parameter
  /// gradients are summed over the batch and written into `grads` (resized as
  /// needed); the input gradient is written when `grad_input` is non-null.
  void backward(const ForwardCache& cache, const Matrix& grad_out, std::vector<LayerParams>& grads,
                Matrix* grad_input) const;

  /// Input gradient only; skips parameter-gradient GEMMs.
  [[nodiscard]] Matrix input_gradient(const ForwardCache& cache, const Matrix& grad_out) const;

  /// FNV-1a over the raw parameter bytes.
  [[nodiscard]] std::uint64_t checksum() const;

 private:
  void backward_impl(const ForwardCache& cache, const Matrix& grad_out, std::vector<LayerParams>* grads,
                     Matrix* grad_input) const;

  NetworkConfig cfg_;
  std::vector<Shape> shapes_;
  std::vector<LayerParams> params_;
};

std::vector<LayerParams> zeros_like(const std::vector<LayerParams>& params);

// ---------------------------------------------------------------------------
// Objectives

enum class LossKind {
  kBinaryCrossEntropy,   // sigmoid head against per-concept targets in [0,1]
  kSoftmaxCrossEntropy,  // logits against a class index
  kSquaredError,         // 0.5 * ||out - target||^2 (test objective)
  kConceptDistortion,    // |out_j - reference_j|, maximised by attackers
  kPenalizedDistortion,  // |out_j - reference_j| - lambda * ||x' - x||^2 over free coordinates
};

inline constexpr double kLogClamp = 1e-12;

/// Per-sample objective description. Fields irrelevant to `kind` are ignored.
struct Objective {
  LossKind kind = LossKind::kBinaryCrossEntropy;
  Vector target;            // BCE / squared-error target
  int label = 0;            // softmax class
  int concept_index = 0;    // distortion output
  double reference = 0.0;   // g(x)_j of the unperturbed input
  Vector reference_input;   // penalised variant: x
  std::vector<std::uint8_t> free_mask;  // penalised variant: 1 where a coordinate may move
  double penalty_lambda = 0.0;
};

struct LossValue {
  double loss = 0.0;
  Vector grad_output;  // dLoss/dOutput
};

/// Loss and its output gradient for one sample. For sigmoid heads under BCE the
/// gradient is w.r.t. the *output*; the sigmoid layer's backward multiplies in
/// sigma'(z) computed stably from z.
LossValue evaluate_objective(const Objective& obj, const Vector& output, const Vector* input = nullptr);

struct GradientSet {
  double loss = 0.0;
  std::vector<LayerParams> params;
  Vector input;
};

/// Single-sample forward + backward for `obj`. The penalty term of
/// kPenalizedDistortion only touches the input gradient.
GradientSet backward(const Network& net, const Vector& x, const Objective& obj);

struct Activations {
  std::vector<Vector> layers;  // output of every layer
  Vector output;
};

Activations forward(const Network& net, const Vector& x);

double sigmoid(double z);

}  // namespace cbmloc
