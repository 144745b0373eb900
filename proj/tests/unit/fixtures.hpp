#pragma once

#include <cstdint>
#include <vector>

#include "cbmloc/nnet.hpp"
#include "cbmloc/synthgen.hpp"

namespace fixtures {

using namespace cbmloc;

// Two-pixel dataset: concept 0 lives on pixel 0, concept 1 on pixel 1.
inline Dataset two_pixel(const std::vector<std::vector<float>>& pixels,
                         const std::vector<std::vector<std::uint8_t>>& concepts) {
  Dataset ds;
  ds.m = 2;
  ds.k = 2;
  ds.image_side = 1;
  ds.num_objects = 1;
  ds.num_classes = 2;
  ds.locality.k = 2;
  ds.locality.regions = {{0}, {1}};
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    Sample s;
    s.pixels = pixels[i];
    s.concepts = concepts[i];
    ds.samples.push_back(s);
    ds.locality.region_of.push_back(0);
    ds.locality.region_of.push_back(1);
  }
  ds.feature_means = compute_feature_means(ds.samples, ds.m);
  ds.validate();
  return ds;
}

// Linear map out = W x + b on a 2-pixel input.
inline Network linear(const Matrix& w, const Vector& b, Activation act = Activation::kIdentity) {
  NetworkConfig cfg;
  cfg.input = {1, 1, static_cast<int>(w.cols())};
  cfg.output_dim = static_cast<int>(w.rows());
  cfg.layers.push_back(LayerSpec::dense(static_cast<int>(w.rows()), act));
  Network net(cfg);
  net.params()[0].weight = w;
  net.params()[0].bias = b;
  return net;
}

inline SynthConfig small_synth(int objects, int samples, std::uint64_t seed = 0) {
  SynthConfig c;
  c.num_objects = objects;
  c.samples = samples;
  c.image_side = 16;
  c.background = 0.5;
  c.seed = seed;
  return c;
}

}  // namespace fixtures
