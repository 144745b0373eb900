#include "cbmloc/nnet.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <stdexcept>

namespace cbmloc {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv: return "conv";
    case LayerKind::kPool: return "pool";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kFlatten: return "flatten";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "dense") return LayerKind::kDense;
  if (s == "conv") return LayerKind::kConv;
  if (s == "pool") return LayerKind::kPool;
  if (s == "activation") return LayerKind::kActivation;
  if (s == "flatten") return LayerKind::kFlatten;
  throw std::invalid_argument("unknown layer kind: " + s);
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + s);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void apply_activation(Activation act, const Matrix& z, Matrix& out) {
  switch (act) {
    case Activation::kRelu: out = z.cwiseMax(0.0); break;
    case Activation::kSigmoid: out = z.unaryExpr([](double v) { return sigmoid(v); }); break;
    case Activation::kIdentity: out = z; break;
  }
}

// grad *= act'(z). sigma'(z) is evaluated as sigma(z) * sigma(-z) so it stays
// non-zero when sigma(z) rounds to 1.
void activation_backward(Activation act, const Matrix& z, Matrix& grad) {
  switch (act) {
    case Activation::kRelu:
      grad = grad.cwiseProduct(z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
      break;
    case Activation::kSigmoid:
      grad = grad.cwiseProduct(z.unaryExpr([](double v) { return sigmoid(v) * sigmoid(-v); }));
      break;
    case Activation::kIdentity: break;
  }
}

int conv_out(int side, int kernel, int stride) { return (side + 2 * (kernel / 2) - kernel) / stride + 1; }

// Rows: sample-major patches (b * P + p); columns: (c, ky, kx).
void im2col(const Matrix& x, const Shape& in, int kernel, int stride, const Shape& out, Matrix& cols) {
  const int batch = static_cast<int>(x.cols());
  const int positions = out.height * out.width;
  const int pad = kernel / 2;
  cols.setZero(static_cast<Eigen::Index>(batch) * positions, in.channels * kernel * kernel);
  const int plane = in.height * in.width;
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* col = cols.col((c * kernel + ky) * kernel + kx).data();
        for (int b = 0; b < batch; ++b) {
          const double* src = x.col(b).data() + static_cast<std::ptrdiff_t>(c) * plane;
          double* dst = col + static_cast<std::ptrdiff_t>(b) * positions;
          for (int oy = 0; oy < out.height; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int ox = 0; ox < out.width; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= in.width) continue;
              dst[oy * out.width + ox] = src[iy * in.width + ix];
            }
          }
        }
      }
    }
  }
}

void col2im(const Matrix& dcols, const Shape& in, int kernel, int stride, const Shape& out, int batch, Matrix& dx) {
  const int positions = out.height * out.width;
  const int pad = kernel / 2;
  const int plane = in.height * in.width;
  dx.setZero(in.size(), batch);
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* col = dcols.col((c * kernel + ky) * kernel + kx).data();
        for (int b = 0; b < batch; ++b) {
          double* dst = dx.col(b).data() + static_cast<std::ptrdiff_t>(c) * plane;
          const double* src = col + static_cast<std::ptrdiff_t>(b) * positions;
          for (int oy = 0; oy < out.height; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int ox = 0; ox < out.width; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= in.width) continue;
              dst[iy * in.width + ix] += src[oy * out.width + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::vector<Shape> infer_shapes(const NetworkConfig& cfg) {
  if (cfg.input.size() <= 0) throw std::invalid_argument("input shape must be non-empty");
  std::vector<Shape> shapes{cfg.input};
  Shape s = cfg.input;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& l = cfg.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::kDense:
        if (l.width < 1) throw std::invalid_argument(where + ": width must be >= 1");
        s = Shape{l.width, 1, 1};
        break;
      case LayerKind::kConv:
        if (l.width < 1) throw std::invalid_argument(where + ": channels must be >= 1");
        if (l.kernel < 1 || l.kernel % 2 == 0) throw std::invalid_argument(where + ": kernel must be odd");
        if (l.stride < 1) throw std::invalid_argument(where + ": stride must be >= 1");
        s = Shape{l.width, conv_out(s.height, l.kernel, l.stride), conv_out(s.width, l.kernel, l.stride)};
        break;
      case LayerKind::kPool:
        if (l.kernel < 1 || l.stride < 1) throw std::invalid_argument(where + ": bad pool geometry");
        if (s.height < l.kernel || s.width < l.kernel) throw std::invalid_argument(where + ": pool larger than input");
        s = Shape{s.channels, (s.height - l.kernel) / l.stride + 1, (s.width - l.kernel) / l.stride + 1};
        break;
      case LayerKind::kActivation: break;
      case LayerKind::kFlatten: s = Shape{s.size(), 1, 1}; break;
    }
    shapes.push_back(s);
  }
  if (s.size() != cfg.output_dim)
    throw std::invalid_argument("network output size " + std::to_string(s.size()) + " != output_dim " +
                                std::to_string(cfg.output_dim));
  return shapes;
}

std::size_t count_parameters(const NetworkConfig& cfg) {
  const auto shapes = infer_shapes(cfg);
  std::size_t total = 0;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& l = cfg.layers[i];
    if (l.kind == LayerKind::kDense)
      total += static_cast<std::size_t>(l.width) * shapes[i].size() + l.width;
    else if (l.kind == LayerKind::kConv)
      total += static_cast<std::size_t>(l.width) * shapes[i].channels * l.kernel * l.kernel + l.width;
  }
  return total;
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)), shapes_(infer_shapes(cfg_)) {
  std::mt19937_64 rng(cfg_.init_seed);
  params_.resize(cfg_.layers.size());
  for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
    const LayerSpec& l = cfg_.layers[i];
    int fan_in = 0;
    int fan_out = 0;
    int cols = 0;
    if (l.kind == LayerKind::kDense) {
      cols = shapes_[i].size();
      fan_in = cols;
      fan_out = l.width;
    } else if (l.kind == LayerKind::kConv) {
      cols = shapes_[i].channels * l.kernel * l.kernel;
      fan_in = cols;
      fan_out = l.width * l.kernel * l.kernel;
    } else {
      continue;
    }
    // Glorot uniform, scaled by the ReLU gain sqrt(2) so deep stacks do not start on a plateau.
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    if (l.activation == Activation::kRelu) a *= std::sqrt(2.0);
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix w(l.width, cols);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, j) = dist(rng);
    params_[i].weight = std::move(w);
    params_[i].bias = Vector::Zero(l.width);
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.weight.size() + p.bias.size());
  return n;
}

std::vector<double> Network::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : params_) {
    flat.insert(flat.end(), p.weight.data(), p.weight.data() + p.weight.size());
    flat.insert(flat.end(), p.bias.data(), p.bias.data() + p.bias.size());
  }
  return flat;
}

void Network::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("parameter blob length mismatch");
  std::size_t off = 0;
  for (auto& p : params_) {
    std::copy_n(flat.data() + off, p.weight.size(), p.weight.data());
    off += static_cast<std::size_t>(p.weight.size());
    std::copy_n(flat.data() + off, p.bias.size(), p.bias.data());
    off += static_cast<std::size_t>(p.bias.size());
  }
}

std::uint64_t Network::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : flat_parameters()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

Matrix Network::forward(const Matrix& x) const {
  ForwardCache cache;
  return forward(x, cache);
}

Matrix Network::forward(const Matrix& x, ForwardCache& cache) const {
  if (x.rows() != input_dim())
    throw std::invalid_argument("input dimension " + std::to_string(x.rows()) + " != " + std::to_string(input_dim()));
  const std::size_t n = cfg_.layers.size();
  const int batch = static_cast<int>(x.cols());
  cache.inputs.resize(n);
  cache.pre.resize(n);
  cache.cols.resize(n);
  cache.argmax.resize(n);
  Matrix cur = x;
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& l = cfg_.layers[i];
    const Shape& in = shapes_[i];
    const Shape& out = shapes_[i + 1];
    cache.inputs[i] = cur;
    switch (l.kind) {
      case LayerKind::kDense: {
        cache.pre[i].noalias() = params_[i].weight * cur;
        cache.pre[i].colwise() += params_[i].bias;
        apply_activation(l.activation, cache.pre[i], cur);
        break;
      }
      case LayerKind::kConv: {
        im2col(cur, in, l.kernel, l.stride, out, cache.cols[i]);
        const Matrix prod = cache.cols[i] * params_[i].weight.transpose();  // (B*P) x Cout
        const int positions = out.height * out.width;
        Matrix& z = cache.pre[i];
        z.resize(out.size(), batch);
        for (int b = 0; b < batch; ++b)
          for (int c = 0; c < out.channels; ++c)
            z.col(b).segment(static_cast<Eigen::Index>(c) * positions, positions) =
                prod.col(c).segment(static_cast<Eigen::Index>(b) * positions, positions).array() +
                params_[i].bias(c);
        apply_activation(l.activation, z, cur);
        break;
      }
      case LayerKind::kPool: {
        Matrix y(out.size(), batch);
        auto& arg = cache.argmax[i];
        arg.assign(static_cast<std::size_t>(out.size()) * batch, 0);
        for (int b = 0; b < batch; ++b) {
          const double* src = cur.col(b).data();
          for (int c = 0; c < out.channels; ++c)
            for (int oy = 0; oy < out.height; ++oy)
              for (int ox = 0; ox < out.width; ++ox) {
                int best = -1;
                double bv = -std::numeric_limits<double>::infinity();
                for (int ky = 0; ky < l.kernel; ++ky)
                  for (int kx = 0; kx < l.kernel; ++kx) {
                    const int idx = (c * in.height + oy * l.stride + ky) * in.width + ox * l.stride + kx;
                    if (src[idx] > bv) {
                      bv = src[idx];
                      best = idx;
                    }
                  }
                const int o = (c * out.height + oy) * out.width + ox;
                y(o, b) = bv;
                arg[static_cast<std::size_t>(b) * out.size() + o] = best;
              }
        }
        cur = std::move(y);
        break;
      }
      case LayerKind::kActivation:
        cache.pre[i] = cur;
        apply_activation(l.activation, cache.pre[i], cur);
        break;
      case LayerKind::kFlatten: break;
    }
  }
  cache.output = cur;
  return cur;
}

void Network::backward(const ForwardCache& cache, const Matrix& grad_out, std::vector<LayerParams>& grads,
                       Matrix* grad_input) const {
  backward_impl(cache, grad_out, &grads, grad_input);
}

Matrix Network::input_gradient(const ForwardCache& cache, const Matrix& grad_out) const {
  Matrix gx;
  backward_impl(cache, grad_out, nullptr, &gx);
  return gx;
}

void Network::backward_impl(const ForwardCache& cache, const Matrix& grad_out, std::vector<LayerParams>* grads,
                            Matrix* grad_input) const {
  const std::size_t n = cfg_.layers.size();
  if (cache.inputs.size() != n) throw std::logic_error("backward without matching forward cache");
  const int batch = static_cast<int>(grad_out.cols());
  if (grads) {
    grads->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      (*grads)[i].weight.setZero(params_[i].weight.rows(), params_[i].weight.cols());
      (*grads)[i].bias.setZero(params_[i].bias.size());
    }
  }
  Matrix g = grad_out;
  for (std::size_t ii = n; ii-- > 0;) {
    const LayerSpec& l = cfg_.layers[ii];
    const Shape& in = shapes_[ii];
    const Shape& out = shapes_[ii + 1];
    const bool need_dx = ii > 0 || grad_input != nullptr;
    switch (l.kind) {
      case LayerKind::kDense: {
        activation_backward(l.activation, cache.pre[ii], g);
        if (grads) {
          (*grads)[ii].weight.noalias() = g * cache.inputs[ii].transpose();
          (*grads)[ii].bias = g.rowwise().sum();
        }
        if (need_dx) g = params_[ii].weight.transpose() * g;
        break;
      }
      case LayerKind::kConv: {
        activation_backward(l.activation, cache.pre[ii], g);
        const int positions = out.height * out.width;
        Matrix dz(static_cast<Eigen::Index>(batch) * positions, out.channels);
        for (int b = 0; b < batch; ++b)
          for (int c = 0; c < out.channels; ++c)
            dz.col(c).segment(static_cast<Eigen::Index>(b) * positions, positions) =
                g.col(b).segment(static_cast<Eigen::Index>(c) * positions, positions);
        if (grads) {
          (*grads)[ii].weight.noalias() = dz.transpose() * cache.cols[ii];
          (*grads)[ii].bias = dz.colwise().sum().transpose();
        }
        if (need_dx) {
          const Matrix dcols = dz * params_[ii].weight;
          col2im(dcols, in, l.kernel, l.stride, out, batch, g);
        }
        break;
      }
      case LayerKind::kPool: {
        Matrix dx = Matrix::Zero(in.size(), batch);
        const auto& arg = cache.argmax[ii];
        for (int b = 0; b < batch; ++b)
          for (int o = 0; o < out.size(); ++o)
            dx(arg[static_cast<std::size_t>(b) * out.size() + o], b) += g(o, b);
        g = std::move(dx);
        break;
      }
      case LayerKind::kActivation: activation_backward(l.activation, cache.pre[ii], g); break;
      case LayerKind::kFlatten: break;
    }
  }
  if (grad_input) *grad_input = std::move(g);
}

std::vector<LayerParams> zeros_like(const std::vector<LayerParams>& params) {
  std::vector<LayerParams> z(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    z[i].weight.setZero(params[i].weight.rows(), params[i].weight.cols());
    z[i].bias.setZero(params[i].bias.size());
  }
  return z;
}

LossValue evaluate_objective(const Objective& obj, const Vector& output, const Vector* input) {
  LossValue lv;
  lv.grad_output = Vector::Zero(output.size());
  switch (obj.kind) {
    case LossKind::kBinaryCrossEntropy: {
      if (obj.target.size() != output.size()) throw std::invalid_argument("BCE target size mismatch");
      for (Eigen::Index r = 0; r < output.size(); ++r) {
        const double p = output(r);
        const double t = obj.target(r);
        const double lp = std::max(p, kLogClamp);
        const double lq = std::max(1.0 - p, kLogClamp);
        lv.loss -= t * std::log(lp) + (1.0 - t) * std::log(lq);
        double g = 0.0;
        if (p > kLogClamp) g -= t / p;
        if (1.0 - p > kLogClamp) g += (1.0 - t) / (1.0 - p);
        lv.grad_output(r) = g;
      }
      break;
    }
    case LossKind::kSoftmaxCrossEntropy: {
      if (obj.label < 0 || obj.label >= output.size()) throw std::invalid_argument("softmax label out of range");
      const double mx = output.maxCoeff();
      const Vector e = (output.array() - mx).exp();
      const double z = e.sum();
      lv.loss = -(output(obj.label) - mx - std::log(z));
      lv.grad_output = e / z;
      lv.grad_output(obj.label) -= 1.0;
      break;
    }
    case LossKind::kSquaredError: {
      if (obj.target.size() != output.size()) throw std::invalid_argument("target size mismatch");
      const Vector d = output - obj.target;
      lv.loss = 0.5 * d.squaredNorm();
      lv.grad_output = d;
      break;
    }
    case LossKind::kConceptDistortion:
    case LossKind::kPenalizedDistortion: {
      const int j = obj.concept_index;
      if (j < 0 || j >= output.size()) throw std::invalid_argument("concept index out of range");
      const double d = output(j) - obj.reference;
      lv.loss = std::abs(d);
      // At d == 0 the subgradient points toward the farther end of [0, 1].
      double dir = d > 0 ? 1.0 : (d < 0 ? -1.0 : (obj.reference >= 0.5 ? -1.0 : 1.0));
      lv.grad_output(j) = dir;
      if (obj.kind == LossKind::kPenalizedDistortion) {
        if (!input) throw std::invalid_argument("penalised distortion needs the perturbed input");
        double dist2 = 0.0;
        for (Eigen::Index a = 0; a < input->size(); ++a)
          if (obj.free_mask.empty() || obj.free_mask[a]) dist2 += std::pow((*input)(a) - obj.reference_input(a), 2);
        lv.loss -= obj.penalty_lambda * dist2;
      }
      break;
    }
  }
  if (!std::isfinite(lv.loss)) throw std::runtime_error("non-finite loss");
  return lv;
}

GradientSet backward(const Network& net, const Vector& x, const Objective& obj) {
  ForwardCache cache;
  const Matrix out = net.forward(x, cache);
  const LossValue lv = evaluate_objective(obj, out.col(0), &x);
  GradientSet gs;
  gs.loss = lv.loss;
  Matrix gx;
  net.backward(cache, lv.grad_output, gs.params, &gx);
  gs.input = gx.col(0);
  if (obj.kind == LossKind::kPenalizedDistortion) {
    for (Eigen::Index a = 0; a < x.size(); ++a)
      if (obj.free_mask.empty() || obj.free_mask[a])
        gs.input(a) -= 2.0 * obj.penalty_lambda * (x(a) - obj.reference_input(a));
  }
  for (const auto& p : gs.params)
    if (!p.weight.allFinite() || !p.bias.allFinite()) throw std::runtime_error("non-finite gradient");
  if (!gs.input.allFinite()) throw std::runtime_error("non-finite input gradient");
  return gs;
}

Activations forward(const Network& net, const Vector& x) {
  ForwardCache cache;
  Matrix out = net.forward(x, cache);
  Activations acts;
  for (std::size_t i = 1; i < cache.inputs.size(); ++i) acts.layers.emplace_back(cache.inputs[i].col(0));
  acts.layers.emplace_back(out.col(0));
  acts.output = out.col(0);
  return acts;
}

}  // namespace cbmloc
