#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbmloc/nnet.hpp"

namespace cbmloc {

/// Synthetic shapes dataset: `num_objects` cells on a grid, each holding a
/// filled square or an upward triangle. Concept 2*l is "is square" at cell l,
/// concept 2*l+1 is "is triangle". The task label is the number of squares
/// (num_objects + 1 classes).
struct SynthConfig {
  int num_objects = 2;  // 1, 2, 4 or 8
  int image_side = 64;
  int samples = 256;
  double shape_fill = 1.0;
  double background = 0.0;
  std::uint64_t seed = 0;
};

struct Sample {
  std::vector<float> pixels;
  std::vector<std::uint8_t> concepts;
  int label = 0;

  bool operator==(const Sample&) const = default;
};

/// Per (sample, concept) feature index sets, stored as a pool of distinct
/// sorted regions plus a sample-major lookup table.
struct LocalityMap {
  int k = 0;
  std::vector<std::vector<std::uint32_t>> regions;
  std::vector<std::uint32_t> region_of;  // size n * k

  [[nodiscard]] std::size_t sample_count() const { return k == 0 ? 0 : region_of.size() / k; }
  [[nodiscard]] const std::vector<std::uint32_t>& region(std::size_t sample, int concept_index) const {
    return regions[region_of[sample * k + concept_index]];
  }
  [[nodiscard]] std::uint32_t region_id(std::size_t sample, int concept_index) const {
    return region_of[sample * k + concept_index];
  }
  /// Keeps only the listed samples, in order.
  [[nodiscard]] LocalityMap select(std::span<const std::size_t> rows) const;

  bool operator==(const LocalityMap&) const = default;
};

struct Dataset {
  int m = 0;
  int k = 0;
  int image_side = 0;
  int num_objects = 0;
  int num_classes = 2;
  std::vector<Sample> samples;
  LocalityMap locality;
  std::vector<double> feature_means;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] bool empty() const { return samples.empty(); }

  /// Pixels of the listed samples as network input columns.
  [[nodiscard]] Matrix inputs(std::span<const std::size_t> rows) const;
  [[nodiscard]] Matrix inputs() const;
  [[nodiscard]] Vector input(std::size_t row) const;

  /// Throws std::invalid_argument if the sizes disagree.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct GridLayout {
  int rows = 1;
  int cols = 1;
};

GridLayout grid_for(int num_objects);

void validate(const SynthConfig& cfg);

Dataset generate_dataset(const SynthConfig& cfg);

/// Per-pixel mean over the dataset's samples.
std::vector<double> compute_feature_means(const std::vector<Sample>& samples, int m);

/// Keeps samples whose concept vector belongs to a uniformly drawn
/// ceil(fraction * #distinct) subset of the distinct concept vectors.
Dataset subsample_concept_combinations(const Dataset& ds, double fraction, std::uint64_t seed);

/// Distinct concept vectors present, in lexicographic order.
std::vector<std::vector<std::uint8_t>> distinct_combinations(const Dataset& ds);

/// Adds N(0, sigma^2) per pixel and clamps to [0, 1]; labels and regions stay.
Dataset add_gaussian_noise(const Dataset& ds, double sigma, std::uint64_t seed);

/// Replaces each region by itself unioned with the pixels within
/// radius_fraction * image_side (Euclidean, pixel coordinates) of its centroid.
LocalityMap dilate_regions(const LocalityMap& map, double radius_fraction, int image_side);

/// Binary PGM (P5, maxval 255) of one sample.
std::string to_pgm(const Dataset& ds, std::size_t sample);

}  // namespace cbmloc
