#include <doctest.h>

#include <cmath>

#include "cbmloc/architectures.hpp"

using namespace cbmloc;

namespace {

int hidden_units(const NetworkConfig& cfg) {
  int n = 0;
  for (std::size_t i = 0; i + 1 < cfg.layers.size(); ++i)
    if (cfg.layers[i].kind == LayerKind::kDense) n += cfg.layers[i].width;
  return n;
}

}  // namespace

TEST_CASE("fixed_params widths") {
  CHECK(depth_sweep_widths(DepthVariant::kFixedParams, 3) == std::vector<int>{64, 64, 32});
  CHECK(depth_sweep_widths(DepthVariant::kFixedParams, 7) == std::vector<int>{64, 64, 64, 32, 28, 24, 20});
}

TEST_CASE("fixed_params parameter counts agree within 5%") {
  const double base = static_cast<double>(count_parameters(make_depth_sweep_config(DepthVariant::kFixedParams, 3, 64, 4, 0)));
  for (int d = 4; d <= 7; ++d) {
    const double n = static_cast<double>(count_parameters(make_depth_sweep_config(DepthVariant::kFixedParams, d, 64, 4, 0)));
    CAPTURE(d);
    CHECK(std::abs(n - base) / base <= 0.05);
  }
}

TEST_CASE("grow widths increase with depth") {
  CHECK(depth_sweep_widths(DepthVariant::kGrow, 3).back() == 64);
  CHECK(depth_sweep_widths(DepthVariant::kGrow, 7).back() == 512);
  std::size_t prev = 0;
  for (int d = 3; d <= 7; ++d) {
    const auto w = depth_sweep_widths(DepthVariant::kGrow, d);
    CHECK(w.size() == static_cast<std::size_t>(d));
    const std::size_t n = count_parameters(make_depth_sweep_config(DepthVariant::kGrow, d, 64, 4, 0));
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("fixed receptive field keeps downsampling at 8") {
  for (int d = 3; d <= 7; ++d) {
    const NetworkConfig cfg = make_depth_sweep_config(DepthVariant::kFixedReceptiveField, d, 64, 4, 0);
    CHECK(total_downsampling(cfg) == 8);
    CHECK(depth_sweep_widths(DepthVariant::kFixedReceptiveField, d).size() == static_cast<std::size_t>(d));
  }
  CHECK(total_downsampling(make_depth_sweep_config(DepthVariant::kGrow, 5, 64, 4, 0)) == 16);
}

TEST_CASE("depth limits and names") {
  CHECK_THROWS_AS(depth_sweep_widths(DepthVariant::kGrow, 2), std::invalid_argument);
  CHECK_THROWS_AS(depth_sweep_widths(DepthVariant::kGrow, 8), std::invalid_argument);
  for (auto v : {DepthVariant::kGrow, DepthVariant::kFixedParams, DepthVariant::kFixedReceptiveField})
    CHECK(depth_variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(depth_variant_from_string("wide"), std::invalid_argument);
}

TEST_CASE("mlp configs") {
  const NetworkConfig a = make_mlp_config(1, 5, 64 * 64, 4, 0);
  CHECK(hidden_units(a) == 5);
  CHECK(a.layers.size() == 2);
  const NetworkConfig b = make_mlp_config(3, 15, 64 * 64, 4, 0);
  CHECK(hidden_units(b) == 45);
  for (int d = 1; d <= 3; ++d)
    for (int w = 5; w <= 15; w += 5) CHECK(hidden_units(make_mlp_config(d, w, 16, 2, 0)) == d * w);
  CHECK(b.layers.back().activation == Activation::kSigmoid);
}
