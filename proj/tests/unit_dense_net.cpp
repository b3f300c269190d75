#include <doctest.h>

#include <cmath>
#include <vector>

#include "driftforge/dense_net.hpp"
#include "driftforge/errors.hpp"

using namespace driftforge;
using doctest::Approx;

namespace {

double weighted_sum(const DenseNet& net, std::span<const double> x,
                    const std::vector<double>& coeff, ForwardTrace* tr) {
  const std::vector<double> y = forward(net, x, tr);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += coeff[i] * y[i];
  return acc;
}

}  // namespace

TEST_CASE("forward of a hand-filled layer") {
  Rng rng = make_rng(1);
  DenseNet net = make_net({{2, 2, Activation::identity}}, rng);
  net.params = {1.0, 2.0, 3.0, 4.0, 0.5, -1.0};
  const std::vector<double> y = forward(net, std::vector<double>{1.0, -1.0});
  REQUIRE(y.size() == 2);
  CHECK(y[0] == Approx(-0.5).epsilon(1e-15));
  CHECK(y[1] == Approx(-2.0).epsilon(1e-15));

  net.layers[0].act = Activation::relu;
  const std::vector<double> yr = forward(net, std::vector<double>{1.0, -1.0});
  CHECK(yr[0] == 0.0);
  CHECK(yr[1] == 0.0);

  net.layers[0].act = Activation::sigmoid;
  const std::vector<double> ys = forward(net, std::vector<double>{1.0, -1.0});
  CHECK(ys[0] == Approx(1.0 / (1.0 + std::exp(0.5))).epsilon(1e-15));
  CHECK(ys[1] == Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-15));
}

TEST_CASE("construction guards") {
  Rng rng = make_rng(1);
  CHECK_THROWS_AS(make_net({}, rng), ValidationError);
  CHECK_THROWS_AS(make_net({{2, 0, Activation::relu}}, rng), ValidationError);
  CHECK_THROWS_AS(
      make_net({{2, 3, Activation::relu}, {4, 1, Activation::identity}}, rng),
      ValidationError);
}

TEST_CASE("initialization bounds, zero biases and determinism") {
  Rng a = make_rng(5), b = make_rng(5);
  const std::vector<LayerSpec> spec = {{100, 50, Activation::relu},
                                       {50, 20, Activation::identity}};
  DenseNet na = make_net(spec, a);
  DenseNet nb = make_net(spec, b);
  CHECK(na.params == nb.params);
  CHECK(na.param_count() == 100u * 50 + 50 + 50u * 20 + 20);
  CHECK(na.offsets == std::vector<std::size_t>({0, 100u * 50 + 50}));

  const double relu_limit = std::sqrt(6.0 / 100.0);
  double max_abs = 0.0;
  for (std::size_t k = 0; k < 100u * 50; ++k)
    max_abs = std::max(max_abs, std::abs(na.params[k]));
  CHECK(max_abs <= relu_limit);
  CHECK(max_abs > 0.5 * relu_limit);
  for (std::size_t k = 100u * 50; k < 100u * 50 + 50; ++k)
    CHECK(na.params[k] == 0.0);

  const double glorot_limit = std::sqrt(6.0 / 70.0);
  for (std::size_t k = na.offsets[1]; k < na.offsets[1] + 50u * 20; ++k)
    CHECK(std::abs(na.params[k]) <= glorot_limit);
}

TEST_CASE("zero_layer wipes exactly one layer") {
  Rng rng = make_rng(6);
  DenseNet net = make_net(
      {{3, 4, Activation::relu}, {4, 2, Activation::identity}}, rng);
  const std::vector<double> before = net.params;
  zero_layer(net, 1);
  for (std::size_t k = 0; k < net.offsets[1]; ++k)
    CHECK(net.params[k] == before[k]);
  for (std::size_t k = net.offsets[1]; k < net.param_count(); ++k)
    CHECK(net.params[k] == 0.0);
  const std::vector<double> y = forward(net, std::vector<double>{0.3, -1.0, 2.0});
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK_THROWS_AS(zero_layer(net, 2), ValidationError);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng = make_rng(12);
  DenseNet net = make_net({{3, 5, Activation::relu},
                           {5, 4, Activation::sigmoid},
                           {4, 2, Activation::identity}},
                          rng);
  const std::vector<double> x = {0.37, -0.81, 1.42};
  const std::vector<double> coeff = {0.7, -1.3};

  ForwardTrace tr;
  weighted_sum(net, x, coeff, &tr);
  std::vector<double> grad(net.param_count(), 0.0);
  const std::vector<double> gin = backward(net, tr, coeff, grad);

  const double h = 1e-6;
  for (std::size_t k = 0; k < net.param_count(); k += 7) {
    DenseNet plus = net, minus = net;
    plus.params[k] += h;
    minus.params[k] -= h;
    const double fd = (weighted_sum(plus, x, coeff, nullptr) -
                       weighted_sum(minus, x, coeff, nullptr)) /
                      (2.0 * h);
    CHECK(grad[k] == Approx(fd).epsilon(1e-5).scale(1.0));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (weighted_sum(net, xp, coeff, nullptr) -
                       weighted_sum(net, xm, coeff, nullptr)) /
                      (2.0 * h);
    CHECK(gin[i] == Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("backward accumulates into the gradient buffer") {
  Rng rng = make_rng(13);
  DenseNet net = make_net({{2, 3, Activation::sigmoid},
                           {3, 1, Activation::identity}},
                          rng);
  ForwardTrace tr;
  forward(net, std::vector<double>{0.2, -0.4}, &tr);
  std::vector<double> once(net.param_count(), 0.0);
  std::vector<double> twice(net.param_count(), 0.0);
  const std::vector<double> upstream = {1.0};
  backward(net, tr, upstream, once);
  backward(net, tr, upstream, twice);
  backward(net, tr, upstream, twice);
  for (std::size_t k = 0; k < net.param_count(); ++k)
    CHECK(twice[k] == Approx(2.0 * once[k]).epsilon(1e-12));
}

TEST_CASE("shape guards on forward and backward") {
  Rng rng = make_rng(14);
  DenseNet net = make_net({{2, 2, Activation::identity}}, rng);
  CHECK_THROWS_AS(forward(net, std::vector<double>{1.0}), ValidationError);
  ForwardTrace tr;
  forward(net, std::vector<double>{1.0, 2.0}, &tr);
  std::vector<double> grad(net.param_count(), 0.0);
  CHECK_THROWS_AS(backward(net, tr, std::vector<double>{1.0}, grad),
                  ValidationError);
  std::vector<double> bad_grad(3, 0.0);
  CHECK_THROWS_AS(backward(net, tr, std::vector<double>{1.0, 1.0}, bad_grad),
                  ValidationError);
  ForwardTrace empty;
  CHECK_THROWS_AS(backward(net, empty, std::vector<double>{1.0, 1.0}, grad),
                  ValidationError);
}

TEST_CASE("first adam step moves by lr in the gradient sign direction") {
  std::vector<double> params = {1.0, -2.0, 0.25};
  const std::vector<double> grads = {0.8, -3.0, 1e-3};
  AdamState st = make_adam(params.size(), 0.01);
  adam_step(params, grads, st);
  CHECK(st.t == 1);
  CHECK(params[0] == Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(params[1] == Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(params[2] == Approx(0.25 - 0.01).epsilon(1e-4));

  std::vector<double> small = {0.0};
  AdamState st2 = make_adam(2, 0.01);
  CHECK_THROWS_AS(adam_step(small, std::vector<double>{1.0}, st2),
                  ValidationError);
}

TEST_CASE("binary cross-entropy values, clamp and slope") {
  CHECK(bce(1.0, 0.5) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce(0.0, 0.5) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce(1.0, 1.0) == Approx(1e-7).epsilon(1e-3));
  CHECK(bce(1.0, 0.0) == Approx(-std::log(1e-7)).epsilon(1e-9));
  CHECK(bce(0.0, 1.0) == Approx(-std::log(1e-7)).epsilon(1e-9));
  CHECK(bce_grad(1.0, 0.5) == Approx(-2.0).epsilon(1e-12));
  CHECK(bce_grad(0.0, 0.5) == Approx(2.0).epsilon(1e-12));
  const double h = 1e-6;
  for (double y : {0.0, 1.0})
    for (double p : {0.2, 0.5, 0.9})
      CHECK(bce_grad(y, p) ==
            Approx((bce(y, p + h) - bce(y, p - h)) / (2.0 * h)).epsilon(1e-4));
}
