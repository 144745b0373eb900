#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cbmloc/nnet.hpp"

namespace gradcheck {

using namespace cbmloc;

inline double rel_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

// Random small stack that mixes every layer kind. Conv/pool only appear while
// the spatial side allows them.
inline NetworkConfig random_config(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const Activation acts[] = {Activation::kRelu, Activation::kSigmoid, Activation::kIdentity};
  NetworkConfig cfg;
  cfg.init_seed = seed;
  int side = pick(4, 7);
  int channels = pick(1, 2);
  cfg.input = {channels, side, side};
  const int convs = pick(1, 2);
  for (int c = 0; c < convs; ++c) {
    const int kernel = pick(0, 1) ? 3 : 1;
    const int stride = side >= 4 ? pick(1, 2) : 1;
    cfg.layers.push_back(LayerSpec::conv(pick(1, 3), kernel, stride, acts[pick(0, 2)]));
    side = (side + stride - 1) / stride;
    if (pick(0, 1) && side >= 2) {
      cfg.layers.push_back(LayerSpec::pool(2, 2));
      side /= 2;
    }
  }
  cfg.layers.push_back(LayerSpec::activation_layer(acts[pick(0, 2)]));
  cfg.layers.push_back(LayerSpec::flatten());
  const int dense = pick(1, 2);
  for (int d = 0; d < dense; ++d) cfg.layers.push_back(LayerSpec::dense(pick(2, 6), acts[pick(0, 2)]));
  cfg.output_dim = pick(1, 4);
  cfg.layers.push_back(LayerSpec::dense(cfg.output_dim, Activation::kSigmoid));
  return cfg;
}

// Zero biases can park ReLU inputs exactly on the kink (dead units feeding
// zeros forward); random biases move the check to a generic point.
inline Network random_network(std::uint64_t seed) {
  Network net(random_config(seed));
  std::mt19937_64 rng(seed ^ 0xb1a5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : net.params())
    for (Eigen::Index r = 0; r < p.bias.size(); ++r) p.bias[r] = u(rng);
  return net;
}

inline Vector random_input(int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Vector x(m);
  for (int a = 0; a < m; ++a) x[a] = u(rng);
  return x;
}

inline double loss_at(const Network& net, const Vector& x, const Objective& obj) {
  return evaluate_objective(obj, forward(net, x).output, &x).loss;
}

struct Result {
  double max_param_error = 0.0;
  double max_input_error = 0.0;
  std::size_t checked = 0;
};

// Central differences over every parameter and input coordinate.
inline Result check(Network net, const Vector& x, const Objective& obj, double h = 1e-5) {
  const GradientSet g = backward(net, x, obj);
  Result r;
  std::vector<double> flat = net.flat_parameters();
  std::vector<double> analytic;
  for (const auto& p : g.params) {
    analytic.insert(analytic.end(), p.weight.data(), p.weight.data() + p.weight.size());
    analytic.insert(analytic.end(), p.bias.data(), p.bias.data() + p.bias.size());
  }
  for (std::size_t t = 0; t < flat.size(); ++t) {
    const double keep = flat[t];
    flat[t] = keep + h;
    net.set_flat_parameters(flat);
    const double up = loss_at(net, x, obj);
    flat[t] = keep - h;
    net.set_flat_parameters(flat);
    const double down = loss_at(net, x, obj);
    flat[t] = keep;
    r.max_param_error = std::max(r.max_param_error, rel_error(analytic[t], (up - down) / (2 * h)));
    ++r.checked;
  }
  net.set_flat_parameters(flat);
  Vector xp = x;
  for (int a = 0; a < x.size(); ++a) {
    xp[a] = x[a] + h;
    const double up = loss_at(net, xp, obj);
    xp[a] = x[a] - h;
    const double down = loss_at(net, xp, obj);
    xp[a] = x[a];
    r.max_input_error = std::max(r.max_input_error, rel_error(g.input[a], (up - down) / (2 * h)));
    ++r.checked;
  }
  return r;
}

}  // namespace gradcheck
