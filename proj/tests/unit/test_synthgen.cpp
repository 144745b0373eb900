#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cbmloc/synthgen.hpp"
#include "fixtures.hpp"

using namespace cbmloc;

TEST_CASE("sizes follow the object count") {
  SynthConfig c;
  c.num_objects = 2;
  c.samples = 256;
  Dataset ds = generate_dataset(c);
  CHECK(ds.k == 4);
  CHECK(ds.size() == 256);
  CHECK(ds.m == 64 * 64);
  c.num_objects = 4;
  c.samples = 1024;
  ds = generate_dataset(c);
  CHECK(ds.k == 8);
  CHECK(ds.size() == 1024);
  CHECK(ds.num_classes == 5);
}

TEST_CASE("single object gives a one-hot concept pair") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SynthConfig c = fixtures::small_synth(1, 1, seed);
    const Dataset ds = generate_dataset(c);
    const auto& cv = ds.samples[0].concepts;
    CHECK(((cv[0] == 1 && cv[1] == 0) || (cv[0] == 0 && cv[1] == 1)));
  }
}

TEST_CASE("invalid configs are rejected") {
  SynthConfig c = fixtures::small_synth(8, 10);
  c.image_side = 18;  // not divisible by 4 columns
  CHECK_THROWS_AS(generate_dataset(c), std::invalid_argument);
  c = fixtures::small_synth(3, 10);
  CHECK_THROWS_AS(generate_dataset(c), std::invalid_argument);
  c = fixtures::small_synth(2, 10);
  c.background = c.shape_fill;
  CHECK_THROWS_AS(generate_dataset(c), std::invalid_argument);
}

TEST_CASE("deterministic, disjoint regions, labels count squares") {
  for (int objects : {1, 2, 4, 8}) {
    CAPTURE(objects);
    const SynthConfig c = fixtures::small_synth(objects, 64, 5);
    const Dataset a = generate_dataset(c);
    CHECK(a == generate_dataset(c));
    a.validate();
    for (std::size_t i = 0; i < a.size(); ++i) {
      int squares = 0;
      for (int l = 0; l < objects; ++l) squares += a.samples[i].concepts[2 * l];
      CHECK(a.samples[i].label == squares);
      for (int j = 0; j < a.k; ++j)
        for (int j2 = 0; j2 < a.k; ++j2) {
          if (j / 2 == j2 / 2) continue;
          const auto& r1 = a.locality.region(i, j);
          const auto& r2 = a.locality.region(i, j2);
          std::vector<std::uint32_t> both;
          std::set_intersection(r1.begin(), r1.end(), r2.begin(), r2.end(), std::back_inserter(both));
          CHECK(both.empty());
        }
    }
  }
}

TEST_CASE("concepts are recoverable from region pixels alone") {
  const SynthConfig c = fixtures::small_synth(4, 40, 2);
  const Dataset ds = generate_dataset(c);
  // A square fills its box; a triangle leaves the top corners at background.
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (int l = 0; l < 4; ++l) {
      const auto& region = ds.locality.region(i, 2 * l);
      int lit = 0;
      for (auto a : region) lit += ds.samples[i].pixels[a] == static_cast<float>(c.shape_fill);
      const bool full = lit == static_cast<int>(region.size());
      CHECK(ds.samples[i].concepts[2 * l] == (full ? 1 : 0));
      // Scrambling everything outside the region leaves this decision unchanged.
      Sample s = ds.samples[i];
      for (int a = 0; a < ds.m; ++a)
        if (!std::binary_search(region.begin(), region.end(), static_cast<std::uint32_t>(a))) s.pixels[a] = 0.123f;
      int lit2 = 0;
      for (auto a : region) lit2 += s.pixels[a] == static_cast<float>(c.shape_fill);
      CHECK(lit2 == lit);
    }
}

TEST_CASE("subsample_concept_combinations") {
  const Dataset ds = generate_dataset(fixtures::small_synth(2, 64, 1));
  CHECK(distinct_combinations(ds).size() == 4);
  CHECK(subsample_concept_combinations(ds, 1.0, 3) == ds);
  const Dataset half = subsample_concept_combinations(ds, 0.5, 3);
  const auto kept = distinct_combinations(half);
  CHECK(kept.size() == 2);
  for (const auto& s : half.samples) {
    CHECK(std::find(kept.begin(), kept.end(), s.concepts) != kept.end());
    CHECK(s.label == s.concepts[0] + s.concepts[2]);
  }
  half.validate();

  const Dataset eight = generate_dataset(fixtures::small_synth(4, 200, 1));
  CHECK(distinct_combinations(eight).size() == 16);
  const Dataset quarter = subsample_concept_combinations(eight, 0.25, 9);
  CHECK(distinct_combinations(quarter).size() == 4);
  CHECK_THROWS_AS(subsample_concept_combinations(ds, 0.0, 1), std::invalid_argument);
}

TEST_CASE("gaussian noise") {
  const Dataset ds = generate_dataset(fixtures::small_synth(2, 80, 4));
  const Dataset same = add_gaussian_noise(ds, 0.0, 1);
  CHECK(same.samples == ds.samples);

  const Dataset noisy = add_gaussian_noise(ds, 0.1, 1);
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(noisy.samples[i].concepts == ds.samples[i].concepts);
    CHECK(noisy.samples[i].label == ds.samples[i].label);
    for (int a = 0; a < ds.m; ++a) {
      const double v = noisy.samples[i].pixels[a];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      if (v > 0.0 && v < 1.0 && ds.samples[i].pixels[a] == 0.5f) {
        const double d = v - ds.samples[i].pixels[a];
        sum += d;
        sum2 += d * d;
        ++n;
      }
    }
  }
  REQUIRE(n >= 10000);
  const double mean = sum / n;
  CHECK(std::sqrt(sum2 / n - mean * mean) == doctest::Approx(0.1).epsilon(0.1));
  CHECK(noisy.locality == ds.locality);
}

TEST_CASE("dilate_regions") {
  SynthConfig c = fixtures::small_synth(2, 4, 0);
  c.image_side = 64;
  const Dataset ds = generate_dataset(c);
  CHECK(dilate_regions(ds.locality, 0.0, 64) == ds.locality);
  const LocalityMap all = dilate_regions(ds.locality, 2.0, 64);
  for (const auto& r : all.regions) CHECK(r.size() == static_cast<std::size_t>(ds.m));

  const LocalityMap d = dilate_regions(ds.locality, 0.1, 64);
  for (std::size_t id = 0; id < ds.locality.regions.size(); ++id) {
    const auto& orig = ds.locality.regions[id];
    const auto& grown = d.regions[id];
    CHECK(std::includes(grown.begin(), grown.end(), orig.begin(), orig.end()));
    double cx = 0, cy = 0;
    for (auto a : orig) {
      cx += a % 64 + 0.5;
      cy += a / 64 + 0.5;
    }
    cx /= orig.size();
    cy /= orig.size();
    for (int a = 0; a < ds.m; ++a) {
      const double dist = std::hypot(a % 64 + 0.5 - cx, a / 64 + 0.5 - cy);
      if (dist <= 6.4) CHECK(std::binary_search(grown.begin(), grown.end(), static_cast<std::uint32_t>(a)));
    }
  }
}

TEST_CASE("feature means of constant data") {
  const Dataset ds = fixtures::two_pixel({{0.5f, 0.5f}, {0.5f, 0.5f}}, {{0, 1}, {1, 0}});
  CHECK(ds.feature_means == std::vector<double>{0.5, 0.5});
}

TEST_CASE("pgm export") {
  const Dataset ds = generate_dataset(fixtures::small_synth(1, 1, 0));
  const std::string pgm = to_pgm(ds, 0);
  CHECK(pgm.rfind("P5\n16 16\n255\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n16 16\n255\n").size() + 256);
}
