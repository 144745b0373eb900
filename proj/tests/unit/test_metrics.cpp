#include <doctest.h>

#include <cmath>

#include "cbmloc/architectures.hpp"
#include "cbmloc/metrics.hpp"
#include "cbmloc/train.hpp"
#include "fixtures.hpp"

using namespace cbmloc;

namespace {

// g(x) = (x_b, x_a): each concept reads the other concept's pixel.
Network swapped() {
  Matrix w(2, 2);
  w << 0, 1, 1, 0;
  return fixtures::linear(w, Vector::Zero(2));
}

Network identity() { return fixtures::linear(Matrix::Identity(2, 2), Vector::Zero(2)); }

Dataset toy() { return fixtures::two_pixel({{0.4f, 0.3f}, {0.9f, 0.7f}}, {{1, 0}, {1, 0}}); }

double px(float v) { return static_cast<double>(v); }

PGDConfig pgd(int steps = 100) {
  PGDConfig p;
  p.steps = steps;
  p.seed = 11;
  return p;
}

struct Trained {
  Dataset ds;
  Network g;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r{generate_dataset(fixtures::small_synth(2, 32, 3)), {}};
    r.g = Network(make_mlp_config(1, 8, r.ds.m, r.ds.k, 1));
    TrainConfig tc;
    tc.epochs = 20;
    tc.learning_rate = 0.05;
    tc.batch_size = 8;
    train(r.g, r.ds, tc, Head::kConcepts);
    return r;
  }();
  return t;
}

}  // namespace

TEST_CASE("leakage closed form: out-of-region pixel drives the concept") {
  const Dataset ds = toy();
  const MetricReport r = locality_leakage(swapped(), ds, ds.locality, pgd());
  CHECK(r.metric_name == "leakage");
  const double c0 = ((1.0 - px(0.3f)) + px(0.7f)) / 2.0;
  const double c1 = ((1.0 - px(0.4f)) + px(0.9f)) / 2.0;
  CHECK(std::abs(r.per_concept[0] - c0) <= 1e-12);
  CHECK(std::abs(r.per_concept[1] - c1) <= 1e-12);
  CHECK(std::abs(r.mean - (c0 + c1) / 2.0) <= 1e-12);
  CHECK(r.total_excluded() == 0);
  CHECK(r.records.size() == 4);
}

TEST_CASE("leakage of a single sample at x_b = 0.3 is 0.7") {
  const Dataset ds = fixtures::two_pixel({{0.5f, 0.3f}}, {{1, 0}});
  const MetricReport r = locality_leakage(swapped(), ds, ds.locality, pgd());
  CHECK(std::abs(r.per_concept[0] - (1.0 - px(0.3f))) <= 1e-12);
  CHECK(r.per_concept[0] == doctest::Approx(0.7).epsilon(1e-7));
}

TEST_CASE("leakage is zero for local and for constant predictors") {
  const Dataset ds = toy();
  CHECK(locality_leakage(identity(), ds, ds.locality, pgd()).mean == 0.0);
  const Network logistic = fixtures::linear(Matrix::Identity(2, 2) * 3.0, Vector::Zero(2), Activation::kSigmoid);
  CHECK(locality_leakage(logistic, ds, ds.locality, pgd()).mean == 0.0);
  const Network constant = fixtures::linear(Matrix::Zero(2, 2), Vector::Constant(2, 0.3));
  CHECK(locality_leakage(constant, ds, ds.locality, pgd()).mean == 0.0);
}

TEST_CASE("zero steps from x gives zero leakage") {
  const auto& t = trained();
  PGDConfig p = pgd(0);
  p.restarts = 1;
  p.max_samples = 8;
  CHECK(locality_leakage(t.g, t.ds, t.ds.locality, p).mean == 0.0);
}

TEST_CASE("PGD never moves in-region pixels and stays in the unit box") {
  const auto& t = trained();
  PGDConfig p = pgd(15);
  p.max_samples = 4;
  std::size_t iterates = 0;
  bool pinned = true;
  bool boxed = true;
  const auto r = locality_leakage(t.g, t.ds, t.ds.locality, p,
                                  [&](std::size_t i, int j, int, int, const Vector& x) {
                                    ++iterates;
                                    const Vector x0 = t.ds.input(i);
                                    for (auto a : t.ds.locality.region(i, j)) pinned = pinned && x[a] == x0[a];
                                    boxed = boxed && x.minCoeff() >= 0.0 && x.maxCoeff() <= 1.0;
                                  });
  CHECK(iterates >= static_cast<std::size_t>(4 * t.ds.k * p.restarts * p.steps));
  CHECK(pinned);
  CHECK(boxed);
  for (double v : r.per_concept) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("leakage is non-decreasing in steps") {
  const auto& t = trained();
  double prev = -1.0;
  for (int steps : {0, 2, 5, 10, 20}) {
    PGDConfig p = pgd(steps);
    p.max_samples = 6;
    const double v = locality_leakage(t.g, t.ds, t.ds.locality, p).mean;
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("distortion shrinks as the distance penalty grows") {
  const auto& t = trained();
  double prev = 2.0;
  for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
    PGDConfig p = pgd(20);
    p.max_samples = 6;
    p.penalty_lambda = lambda;
    const double v = locality_leakage(t.g, t.ds, t.ds.locality, p).mean;
    CAPTURE(lambda);
    CHECK(v <= prev + 0.05);
    prev = v;
  }
}

TEST_CASE("intervention closed form") {
  const Dataset ds = fixtures::two_pixel({{0, 0}, {0, 0}}, {{1, 0}, {1, 0}});
  Matrix probs(2, 2);
  probs << 0.2, 0.9, 0.5, 0.5;
  const MetricReport r = locality_intervention(probs, ds);
  CHECK(r.metric_name == "intervention");
  REQUIRE(r.records.size() == 4);
  CHECK(std::abs(r.per_concept[0] - 0.7) <= 1e-12);
  CHECK(r.per_concept[1] == 0.0);
  CHECK(std::abs(r.mean - 0.35) <= 1e-12);
  for (const auto& rec : r.records)
    if (rec.concept_index == 0) CHECK(rec.witness == static_cast<std::int64_t>(1 - rec.sample));
}

TEST_CASE("intervention excludes pairs without a same-valued partner") {
  const Dataset ds = fixtures::two_pixel({{0, 0}, {0, 0}, {0, 0}}, {{1, 0}, {1, 0}, {0, 0}});
  Matrix probs(2, 3);
  probs << 0.2, 0.9, 0.4, 0.1, 0.3, 0.6;
  const MetricReport r = locality_intervention(probs, ds);
  CHECK(r.n_excluded[0] == 1);
  CHECK(r.n_excluded[1] == 0);
  CHECK(std::abs(r.per_concept[1] - (0.5 + 0.3 + 0.5) / 3.0) <= 1e-12);
  const Network constant = fixtures::linear(Matrix::Zero(2, 2), Vector::Constant(2, 0.3));
  CHECK(locality_intervention(constant, ds).mean == 0.0);
}

TEST_CASE("capped intervention scans a subsample") {
  const auto& t = trained();
  InterventionOptions opt;
  opt.candidate_cap = 3;
  const double capped = locality_intervention(t.g, t.ds, opt).mean;
  const double exact = locality_intervention(t.g, t.ds).mean;
  CHECK(capped <= exact + 1e-12);
  CHECK(capped >= 0.0);
}

TEST_CASE("apply_mask") {
  Vector x(3);
  x << 0.2, 0.4, 0.6;
  const std::vector<double> means{0.5, 0.5, 0.5};
  const Vector z = apply_mask(x, {0, 2}, {MaskKind::kZero, 0.0}, means);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.4);
  CHECK(z[2] == 0.0);
  CHECK(apply_mask(x, {1}, {MaskKind::kMean, 0.0}, means)[1] == 0.5);
  CHECK(apply_mask(x, {1}, {MaskKind::kConstant, 0.4}, means) == x);
  CHECK_THROWS_AS(apply_mask(x, {1}, {MaskKind::kConstant, 1.5}, means), std::invalid_argument);
  CHECK(mask_kind_from_string(to_string(MaskKind::kMean)) == MaskKind::kMean);
}

TEST_CASE("masking closed forms") {
  const Dataset ds = toy();
  const MaskingPair sw = locality_masking(swapped(), ds, ds.locality, {MaskKind::kZero, 0.0});
  CHECK(sw.relevant.mean == 0.0);
  CHECK(std::abs(sw.irrelevant.per_concept[0] - (px(0.3f) + px(0.7f)) / 2.0) <= 1e-12);
  CHECK(std::abs(sw.irrelevant.per_concept[1] - (px(0.4f) + px(0.9f)) / 2.0) <= 1e-12);

  const MaskingPair id = locality_masking(identity(), ds, ds.locality, {MaskKind::kZero, 0.0});
  CHECK(id.irrelevant.mean == 0.0);
  CHECK(std::abs(id.relevant.per_concept[0] - (px(0.4f) + px(0.9f)) / 2.0) <= 1e-12);
  CHECK(std::abs(id.relevant.per_concept[1] - (px(0.3f) + px(0.7f)) / 2.0) <= 1e-12);

  const MaskingPair mean = locality_masking(identity(), ds, ds.locality, {MaskKind::kMean, 0.0});
  const double m0 = ds.feature_means[0];
  CHECK(std::abs(mean.relevant.per_concept[0] - (std::abs(m0 - px(0.4f)) + std::abs(m0 - px(0.9f))) / 2.0) <= 1e-12);

  const MaskingPair eta = locality_masking(swapped(), ds, ds.locality, {MaskKind::kConstant, 0.5});
  CHECK(std::abs(eta.irrelevant.per_concept[0] - (std::abs(0.5 - px(0.3f)) + std::abs(0.5 - px(0.7f))) / 2.0) <= 1e-12);

  CHECK(relevant_masking(swapped(), ds, ds.locality, {}).mean == sw.relevant.mean);
  CHECK(irrelevant_masking(swapped(), ds, ds.locality, {}).mean == sw.irrelevant.mean);
}

TEST_CASE("concepts at one location are never in each other's disjoint set") {
  const Dataset ds = generate_dataset(fixtures::small_synth(1, 6, 0));
  const Network g(make_mlp_config(1, 3, ds.m, ds.k, 0));
  const MetricReport r = irrelevant_masking(g, ds, ds.locality, {});
  for (int j = 0; j < ds.k; ++j) {
    CHECK(r.n_samples[j] == 0);
    CHECK(r.n_excluded[j] == ds.size());
  }
}

TEST_CASE("confidence sweep with a no-op mask changes nothing") {
  const Dataset ds = fixtures::two_pixel({{0.9f, 0.9f}, {0.9f, 0.9f}}, {{1, 1}, {1, 1}});
  const Network g = fixtures::linear(Matrix::Identity(2, 2) * 10.0, Vector::Constant(2, -2.0), Activation::kSigmoid);
  const auto rows = masked_confidence_sweep(g, ds, ds.locality, {0.0}, 0.75, {MaskKind::kConstant, px(0.9f)});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].confident == 4);
  CHECK(rows[0].changed == 0);
  CHECK(rows[0].change_rate == 0.0);
}
