#include <doctest.h>

#include <cmath>

#include "cbmloc/nnet.hpp"
#include "fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace cbmloc;

namespace {

NetworkConfig mlp(int in, int hidden, int out, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.input = {1, 1, in};
  cfg.output_dim = out;
  cfg.init_seed = seed;
  cfg.layers = {LayerSpec::dense(hidden, Activation::kRelu), LayerSpec::dense(hidden, Activation::kSigmoid),
                LayerSpec::dense(out, Activation::kSigmoid)};
  return cfg;
}

}  // namespace

TEST_CASE("init is deterministic and Glorot bounded, with ReLU gain") {
  const NetworkConfig cfg = mlp(4, 3, 2, 17);
  const Network a(cfg), b(cfg);
  CHECK(a.flat_parameters() == b.flat_parameters());
  CHECK(a.params()[0].weight.size() == 12);
  CHECK(a.params()[0].bias.size() == 3);
  const double bound = std::sqrt(6.0 / (4 + 3));
  CHECK(a.params()[0].weight.cwiseAbs().maxCoeff() < std::sqrt(2.0) * bound);
  CHECK(a.params()[0].weight.cwiseAbs().maxCoeff() > bound);
  CHECK(a.params()[1].weight.cwiseAbs().maxCoeff() < std::sqrt(6.0 / (3 + 3)));
  CHECK(a.params()[0].bias.isZero());
  CHECK(a.parameter_count() == count_parameters(cfg));
  NetworkConfig other = cfg;
  other.init_seed = 18;
  CHECK(Network(other).flat_parameters() != a.flat_parameters());
}

TEST_CASE("inconsistent stacks are rejected") {
  NetworkConfig cfg = mlp(4, 3, 2, 0);
  cfg.output_dim = 5;
  CHECK_THROWS_AS(Network{cfg}, std::invalid_argument);
  NetworkConfig even;
  even.input = {1, 6, 6};
  even.output_dim = 1;
  even.layers = {LayerSpec::conv(2, 4, 1, Activation::kRelu), LayerSpec::flatten(),
                 LayerSpec::dense(1, Activation::kSigmoid)};
  CHECK_THROWS_AS(Network{even}, std::invalid_argument);
  const Network net(mlp(4, 3, 2, 0));
  CHECK_THROWS(forward(net, Vector::Zero(5)));
}

TEST_CASE("forward closed forms") {
  Network zero(mlp(4, 3, 2, 1));
  for (auto& p : zero.params()) {
    p.weight.setZero();
    p.bias.setZero();
  }
  const Vector out = forward(zero, Vector::Random(4)).output;
  CHECK(out[0] == 0.5);
  CHECK(out[1] == 0.5);

  const Network id = fixtures::linear(Matrix::Constant(1, 1, 1.0), Vector::Zero(1));
  CHECK(forward(id, Vector::Constant(1, 2.0)).output[0] == 2.0);

  const Network net(mlp(4, 3, 2, 9));
  const Vector x = gradcheck::random_input(4, 3);
  CHECK(forward(net, x).output == forward(net, x).output);
  const Matrix batch = net.forward(Matrix::Random(4, 5).cwiseAbs());
  CHECK((batch.array() > 0.0).all());
  CHECK((batch.array() < 1.0).all());
}

TEST_CASE("gradients match central differences for every layer kind") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    const Network net = gradcheck::random_network(seed);
    const NetworkConfig& cfg = net.config();
    const Vector x = gradcheck::random_input(cfg.input.size(), seed + 100);
    Objective bce;
    bce.target = Vector::Zero(cfg.output_dim);
    for (int j = 0; j < cfg.output_dim; j += 2) bce.target[j] = 1.0;
    const auto r = gradcheck::check(net, x, bce);
    CHECK(r.max_param_error <= 1e-4);
    CHECK(r.max_input_error <= 1e-4);
  }
}

TEST_CASE("softmax, squared error and distortion gradients") {
  const Network net(mlp(5, 4, 3, 2));
  const Vector x = gradcheck::random_input(5, 7);
  Objective ce;
  ce.kind = LossKind::kSoftmaxCrossEntropy;
  ce.label = 2;
  Objective se;
  se.kind = LossKind::kSquaredError;
  se.target = Vector::Constant(3, 0.25);
  Objective dist;
  dist.kind = LossKind::kConceptDistortion;
  dist.concept_index = 1;
  dist.reference = 0.1;
  Objective pen = dist;
  pen.kind = LossKind::kPenalizedDistortion;
  pen.reference_input = x.array() * 0.5;
  pen.free_mask = {1, 1, 0, 1, 0};
  pen.penalty_lambda = 0.7;
  for (const Objective* o : {&ce, &se, &dist, &pen}) {
    const auto r = gradcheck::check(net, x, *o);
    CHECK(r.max_param_error <= 1e-4);
    CHECK(r.max_input_error <= 1e-4);
  }
}

TEST_CASE("input gradient of a frozen logistic model") {
  Matrix w(1, 3);
  w << 0.5, -1.5, 2.0;
  const Network g = fixtures::linear(w, Vector::Zero(1), Activation::kSigmoid);
  Vector x(3);
  x << 0.2, 0.7, 0.4;
  Objective o;
  o.kind = LossKind::kConceptDistortion;
  o.reference = 0.0;  // d > 0, so dLoss/dout = 1
  const GradientSet gs = backward(g, x, o);
  const double z = w.row(0).dot(x);
  const double s = sigmoid(z) * (1 - sigmoid(z));
  for (int a = 0; a < 3; ++a) CHECK(gs.input[a] == doctest::Approx(s * w(0, a)).epsilon(1e-12));
}

TEST_CASE("squared error at its minimum gives zero gradient") {
  const Network g = fixtures::linear(Matrix::Constant(2, 2, 0.3), Vector::Zero(2));
  const Vector x = Vector::Constant(2, 0.5);
  Objective se;
  se.kind = LossKind::kSquaredError;
  se.target = forward(g, x).output;
  const GradientSet gs = backward(g, x, se);
  CHECK(gs.loss == 0.0);
  CHECK(gs.params[0].weight.isZero());
  CHECK(gs.input.isZero());
}

TEST_CASE("BCE stays finite on saturated outputs") {
  Objective bce;
  bce.target = Vector::Ones(1);
  Vector out(1);
  out << 0.0;
  const LossValue lv = evaluate_objective(bce, out);
  CHECK(std::isfinite(lv.loss));
  CHECK(lv.loss == doctest::Approx(-std::log(kLogClamp)));
}
