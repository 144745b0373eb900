#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbmloc/nnet.hpp"

namespace cbmloc {

enum class DepthVariant { kGrow, kFixedParams, kFixedReceptiveField };

std::string to_string(DepthVariant v);
DepthVariant depth_variant_from_string(const std::string& s);

/// Hidden widths used by a depth-sweep variant (depth 3..7).
std::vector<int> depth_sweep_widths(DepthVariant variant, int depth);

/// Concept predictor for a square grayscale image with `outputs` sigmoid heads.
NetworkConfig make_depth_sweep_config(DepthVariant variant, int depth, int image_side, int outputs,
                                      std::uint64_t seed);

/// MLP on flattened pixels: `depth` hidden ReLU layers of `width` units.
NetworkConfig make_mlp_config(int depth, int width, int input_dim, int outputs, std::uint64_t seed);

/// Linear map (identity activation) from `inputs` to `outputs`.
NetworkConfig make_linear_config(int inputs, int outputs, std::uint64_t seed);

/// Total spatial downsampling of the convolutional trunk (product of strides).
int total_downsampling(const NetworkConfig& cfg);

/// Receptive field side of one unit after the last spatial layer.
int receptive_field(const NetworkConfig& cfg);

}  // namespace cbmloc
