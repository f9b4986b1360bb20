#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nnem/localnet.hpp"

using namespace nnem;
using Catch::Approx;

namespace {

double fd_spatial(const LocalNet& net, Vec2 x, Vec2 dir, double step) {
  return (net.forward_with_spatial_grad(x + dir * step).value -
          net.forward_with_spatial_grad(x - dir * step).value) /
         (2.0 * step);
}

double relative_gap(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

}  // namespace

TEST_CASE("parameter counts match the flat layout", "[localnet]") {
  NetConfig cfg;  // 2 -> 16 -> 16 -> 1
  CHECK(cfg.param_count() == 2 * 16 + 16 + 16 * 16 + 16 + 16 * 1 + 1);
  CHECK(cfg.param_count() == 337);
  NetConfig small{1, 3, Activation::sine};
  CHECK(small.param_count() == 2 * 3 + 3 + 3 * 1 + 1);
}

TEST_CASE("initialization is deterministic and zero-bias", "[localnet]") {
  NetConfig cfg;
  const auto a = init_params(cfg, 42);
  const auto b = init_params(cfg, 42);
  const auto c = init_params(cfg, 43);
  CHECK(a == b);
  CHECK(a != c);
  // Biases of the first layer live right after the 2x16 weight block.
  for (int i = 0; i < 16; ++i) CHECK(a[2 * 16 + i] == 0.0);
  const double bound = std::sqrt(6.0 / (2 + 16));
  for (int i = 0; i < 2 * 16; ++i) {
    CHECK(a[i] >= -bound);
    CHECK(a[i] < bound);
  }
}

TEST_CASE("zero parameters give the zero function", "[localnet]") {
  NetConfig cfg;
  LocalNet net(cfg, std::vector<double>(cfg.param_count(), 0.0));
  for (Vec2 x : {Vec2{0, 0}, Vec2{0.3, 0.7}, Vec2{-1, 2}}) {
    const EvalResult r = net.forward_with_spatial_grad(x);
    CHECK(r.value == 0.0);
    CHECK(r.grad.x == 0.0);
    CHECK(r.grad.y == 0.0);
  }
}

TEST_CASE("single-unit sine network is analytic", "[localnet]") {
  // One hidden unit: w = (1,0), b = 0, output weight 1, output bias 0
  // gives value sin(x1) and gradient (cos(x1), 0).
  NetConfig cfg{1, 1, Activation::sine};
  std::vector<double> theta = {1.0, 0.0, 0.0, 1.0, 0.0};
  LocalNet net(cfg, theta);
  for (double x1 : {0.0, 0.4, 1.3, -0.9}) {
    const EvalResult r = net.forward_with_spatial_grad({x1, 5.0});
    CHECK(r.value == Approx(std::sin(x1)).epsilon(1e-15).margin(1e-15));
    CHECK(r.grad.x == Approx(std::cos(x1)).epsilon(1e-15));
    CHECK(r.grad.y == Approx(0.0).margin(1e-15));
  }
}

TEST_CASE("spatial gradients match central differences for every activation", "[localnet]") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double step = 1e-5;
  for (Activation act : {Activation::sine, Activation::tanh, Activation::identity}) {
    for (int trial = 0; trial < 100; ++trial) {
      NetConfig cfg{2, 5, act};
      const LocalNet net = LocalNet::initialized(cfg, rng());
      const Vec2 x{u(rng), u(rng)};
      const EvalResult r = net.forward_with_spatial_grad(x);
      const double fx = fd_spatial(net, x, {1, 0}, step);
      const double fy = fd_spatial(net, x, {0, 1}, step);
      CHECK(relative_gap(r.grad.x, fx) < 1e-6);
      CHECK(relative_gap(r.grad.y, fy) < 1e-6);
    }
  }
}

TEST_CASE("backprop_theta with a zero-initialized output layer", "[localnet]") {
  NetConfig cfg{2, 4, Activation::sine};
  std::vector<double> theta = init_params(cfg, 7);
  // Zero the output layer (last 4 weights + 1 bias).
  for (int i = 0; i < 5; ++i) theta[theta.size() - 1 - i] = 0.0;
  LocalNet net(cfg, theta);
  std::vector<double> grad(theta.size(), 0.0);
  net.backprop_theta({0.3, 0.4}, 1.0, {0.0, 0.0}, grad);
  // Value seed with zero output weights: gradient lives only in the output
  // layer (hidden activations reach it, nothing propagates further back).
  const size_t output_offset = theta.size() - 5;
  for (size_t p = 0; p < output_offset; ++p) CHECK(grad[p] == 0.0);
  double out_norm = 0.0;
  for (size_t p = output_offset; p < theta.size(); ++p) out_norm += std::abs(grad[p]);
  CHECK(out_norm > 0.0);
}

TEST_CASE("backprop_theta matches finite differences of the seeded functional", "[localnet]") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double step = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    NetConfig cfg{2, 4, trial % 2 ? Activation::sine : Activation::tanh};
    std::vector<double> theta = init_params(cfg, rng());
    const Vec2 x{u(rng), u(rng)};
    const double sv = u(rng);
    const Vec2 sg{u(rng), u(rng)};
    LocalNet net(cfg, theta);
    std::vector<double> grad(theta.size(), 0.0);
    net.backprop_theta(x, sv, sg, grad);
    // Probe a random subset of parameters with central differences.
    std::uniform_int_distribution<size_t> pick(0, theta.size() - 1);
    for (int probe = 0; probe < 10; ++probe) {
      const size_t p = pick(rng);
      auto eval = [&](double delta) {
        std::vector<double> th = theta;
        th[p] += delta;
        const EvalResult r = LocalNet(cfg, th).forward_with_spatial_grad(x);
        return sv * r.value + sg.x * r.grad.x + sg.y * r.grad.y;
      };
      const double fd = (eval(step) - eval(-step)) / (2.0 * step);
      CHECK(relative_gap(grad[p], fd) < 1e-6);
      ++checked;
    }
  }
  CHECK(checked == 1000);
}

TEST_CASE("backprop_theta is linear in the seeds", "[localnet]") {
  NetConfig cfg{2, 6, Activation::sine};
  const LocalNet net = LocalNet::initialized(cfg, 5);
  const Vec2 x{0.25, -0.4};
  const double a1 = 0.7, a2 = -1.3;
  const Vec2 g1{0.2, -0.5}, g2{1.1, 0.3};
  std::vector<double> combined(net.param_count(), 0.0);
  net.backprop_theta(x, a1 + a2, g1 + g2, combined);
  std::vector<double> sum(net.param_count(), 0.0);
  net.backprop_theta(x, a1, g1, sum);
  net.backprop_theta(x, a2, g2, sum);  // accumulates
  for (int p = 0; p < net.param_count(); ++p)
    CHECK(combined[p] == Approx(sum[p]).epsilon(1e-12).margin(1e-12));
}

TEST_CASE("evaluation is bit-deterministic", "[localnet]") {
  NetConfig cfg;
  const LocalNet net = LocalNet::initialized(cfg, 77);
  const EvalResult a = net.forward_with_spatial_grad({0.123, 0.456});
  const EvalResult b = net.forward_with_spatial_grad({0.123, 0.456});
  CHECK(a.value == b.value);
  CHECK(a.grad.x == b.grad.x);
  CHECK(a.grad.y == b.grad.y);
  std::vector<double> g1(net.param_count(), 0.0), g2(net.param_count(), 0.0);
  net.backprop_theta({0.123, 0.456}, 0.5, {1.0, -1.0}, g1);
  net.backprop_theta({0.123, 0.456}, 0.5, {1.0, -1.0}, g2);
  CHECK(g1 == g2);
}

TEST_CASE("config validation", "[localnet]") {
  CHECK_THROWS_AS((NetConfig{0, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((NetConfig{1, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS(LocalNet(NetConfig{}, std::vector<double>(3, 0.0)), std::invalid_argument);
}
