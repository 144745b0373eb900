#include "cbmloc/architectures.hpp"

#include <stdexcept>

namespace cbmloc {

std::string to_string(DepthVariant v) {
  switch (v) {
    case DepthVariant::kGrow:
      return "grow";
    case DepthVariant::kFixedParams:
      return "fixed_params";
    case DepthVariant::kFixedReceptiveField:
      return "fixed_receptive_field";
  }
  throw std::invalid_argument("unknown depth variant");
}

DepthVariant depth_variant_from_string(const std::string& s) {
  if (s == "grow") return DepthVariant::kGrow;
  if (s == "fixed_params") return DepthVariant::kFixedParams;
  if (s == "fixed_receptive_field" || s == "fixed_rf") return DepthVariant::kFixedReceptiveField;
  throw std::invalid_argument("unknown depth variant: " + s);
}

namespace {

void check_depth(int depth) {
  if (depth < 3 || depth > 7) throw std::invalid_argument("depth must lie in [3, 7]");
}

// Dense width appended by the grow variant at each depth.
constexpr int kGrowWidth[] = {64, 128, 256, 384, 512};

}  // namespace

// grow:        conv 16, 32, 64 trunk, then depth-3 dense layers sharing one width (128 at depth 4 .. 512 at 7).
// fixed_params: conv 64 and two pools, then dense layers; the conv->dense block holds
//               nearly all parameters, so counts stay within a few percent.
// fixed_rf:    conv 16 (stride 2), conv 32, then depth-2 convs of 32, with two
//               2x2 pools; total downsampling is 8 at every depth.
std::vector<int> depth_sweep_widths(DepthVariant variant, int depth) {
  check_depth(depth);
  switch (variant) {
    case DepthVariant::kGrow: {
      std::vector<int> w{16, 32, 64};
      for (int d = 4; d <= depth; ++d) w.push_back(kGrowWidth[depth - 3]);
      return w;
    }
    case DepthVariant::kFixedParams: {
      static const std::vector<int> full{64, 64, 64, 32, 28, 24, 20};
      if (depth == 3) return {64, 64, 32};
      return {full.begin(), full.begin() + depth};
    }
    case DepthVariant::kFixedReceptiveField: {
      std::vector<int> w{16, 32};
      for (int d = 3; d <= depth; ++d) w.push_back(32);
      return w;
    }
  }
  throw std::invalid_argument("unknown depth variant");
}

NetworkConfig make_depth_sweep_config(DepthVariant variant, int depth, int image_side, int outputs,
                                      std::uint64_t seed) {
  if (image_side < 16 || image_side % 8 != 0) throw std::invalid_argument("image_side must be a multiple of 8, >= 16");
  if (outputs < 1) throw std::invalid_argument("outputs must be >= 1");
  const std::vector<int> w = depth_sweep_widths(variant, depth);
  NetworkConfig cfg;
  cfg.input = {1, image_side, image_side};
  cfg.output_dim = outputs;
  cfg.init_seed = seed;
  auto& L = cfg.layers;
  const auto relu = Activation::kRelu;
  switch (variant) {
    case DepthVariant::kGrow:
      L.push_back(LayerSpec::conv(w[0], 5, 2, relu));
      L.push_back(LayerSpec::pool(2, 2));
      L.push_back(LayerSpec::conv(w[1], 3, 1, relu));
      L.push_back(LayerSpec::pool(2, 2));
      L.push_back(LayerSpec::conv(w[2], 3, 1, relu));
      L.push_back(LayerSpec::pool(2, 2));
      L.push_back(LayerSpec::flatten());
      for (std::size_t i = 3; i < w.size(); ++i) L.push_back(LayerSpec::dense(w[i], relu));
      break;
    case DepthVariant::kFixedParams:
      L.push_back(LayerSpec::conv(w[0], 5, 2, relu));
      L.push_back(LayerSpec::pool(2, 2));
      L.push_back(LayerSpec::pool(2, 2));
      L.push_back(LayerSpec::flatten());
      for (std::size_t i = 1; i < w.size(); ++i) L.push_back(LayerSpec::dense(w[i], relu));
      break;
    case DepthVariant::kFixedReceptiveField:
      L.push_back(LayerSpec::conv(w[0], 5, 2, relu));
      L.push_back(LayerSpec::pool(2, 2));
      L.push_back(LayerSpec::conv(w[1], 3, 1, relu));
      L.push_back(LayerSpec::pool(2, 2));
      for (std::size_t i = 2; i < w.size(); ++i) L.push_back(LayerSpec::conv(w[i], 3, 1, relu));
      L.push_back(LayerSpec::flatten());
      break;
  }
  L.push_back(LayerSpec::dense(outputs, Activation::kSigmoid));
  return cfg;
}

NetworkConfig make_mlp_config(int depth, int width, int input_dim, int outputs, std::uint64_t seed) {
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (width < 1 || input_dim < 1 || outputs < 1) throw std::invalid_argument("widths must be >= 1");
  NetworkConfig cfg;
  cfg.input = {1, 1, input_dim};
  cfg.output_dim = outputs;
  cfg.init_seed = seed;
  for (int d = 0; d < depth; ++d) cfg.layers.push_back(LayerSpec::dense(width, Activation::kRelu));
  cfg.layers.push_back(LayerSpec::dense(outputs, Activation::kSigmoid));
  return cfg;
}

NetworkConfig make_linear_config(int inputs, int outputs, std::uint64_t seed) {
  if (inputs < 1 || outputs < 1) throw std::invalid_argument("widths must be >= 1");
  NetworkConfig cfg;
  cfg.input = {1, 1, inputs};
  cfg.output_dim = outputs;
  cfg.init_seed = seed;
  cfg.layers.push_back(LayerSpec::dense(outputs, Activation::kIdentity));
  return cfg;
}

int total_downsampling(const NetworkConfig& cfg) {
  int total = 1;
  for (const auto& l : cfg.layers) {
    if (l.kind == LayerKind::kFlatten || l.kind == LayerKind::kDense) break;
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kPool) total *= l.stride;
  }
  return total;
}

int receptive_field(const NetworkConfig& cfg) {
  int rf = 1;
  int jump = 1;
  for (const auto& l : cfg.layers) {
    if (l.kind == LayerKind::kFlatten || l.kind == LayerKind::kDense) break;
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kPool) {
      rf += (l.kernel - 1) * jump;
      jump *= l.stride;
    }
  }
  return rf;
}

}  // namespace cbmloc
