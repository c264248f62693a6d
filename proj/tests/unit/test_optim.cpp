#include <doctest.h>

#include <cmath>

#include "mesoforge/optim.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace mesoforge;
namespace o = oracle;

namespace {

ParamStore two_params(Rng& rng) {
  ParamStore p;
  p.add("w", o::random_tensor(Shape{1, 1, 2, 3}, rng), true);
  p.add("stat", o::random_tensor(Shape{1, 1, 1, 3}, rng), false);
  return p;
}

Gradients filled(const ParamStore& p, Rng& rng, double scale) {
  Gradients g(p);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (float& v : g[i].data()) v = static_cast<float>(scale * rng.uniform(-1.0, 1.0));
  }
  return g;
}

}  // namespace

TEST_CASE("ADAM matches the scalar oracle over ten steps") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    INFO("seed " << seed);
    CHECK(suites::adam_oracle_error(seed) < 1e-6);
  }
}

TEST_CASE("learning-rate staircase") {
  const LrSchedule s;
  CHECK(lr_at(s, 0) == 1e-3);
  CHECK(lr_at(s, 999) == 1e-3);
  CHECK(lr_at(s, 1000) == 1e-4);
  CHECK(lr_at(s, 1999) == 1e-4);
  CHECK(lr_at(s, 2000) == 1e-5);
  CHECK(lr_at(s, 3000) == 1e-6);
  CHECK(lr_at(s, 50000) == 1e-6);  // floor
  CHECK_THROWS_AS(lr_at(s, -1), std::invalid_argument);
  for (std::int64_t t = 0; t < 6000; t += 250) CHECK(lr_at(s, t + 250) <= lr_at(s, t));
}

TEST_CASE("first ADAM step moves every weight by about the learning rate") {
  Rng rng(1);
  ParamStore p = two_params(rng);
  const ParamStore before = p;
  AdamState state(p);
  adam_step(p, filled(p, rng, 1.0), state, AdamConfig{});
  CHECK(state.t == 1);
  for (std::size_t k = 0; k < p.value(0).size(); ++k) {
    CHECK(std::abs(p.value(0)[k] - before.value(0)[k]) == doctest::Approx(1e-3).epsilon(1e-3));
  }
}

TEST_CASE("ADAM updates are invariant to rescaling the gradient") {
  Rng rng(2);
  const ParamStore start = two_params(rng);
  std::vector<Gradients> grads;
  for (int t = 0; t < 5; ++t) grads.push_back(filled(start, rng, 1.0));
  auto run = [&](float scale) {
    ParamStore p = start;
    AdamState state(p);
    for (Gradients g : grads) {
      for (std::size_t i = 0; i < g.size(); ++i)
        for (float& v : g[i].data()) v *= scale;
      adam_step(p, g, state, AdamConfig{});
    }
    return p;
  };
  const ParamStore a = run(1.0f);
  const ParamStore b = run(64.0f);
  for (std::size_t k = 0; k < a.value(0).size(); ++k) {
    CHECK(a.value(0)[k] == doctest::Approx(b.value(0)[k]).epsilon(1e-5));
  }
}

TEST_CASE("non-trainable parameters never change") {
  Rng rng(3);
  ParamStore p = two_params(rng);
  const ParamStore before = p;
  AdamState state(p);
  for (int t = 0; t < 4; ++t) adam_step(p, filled(p, rng, 10.0), state, AdamConfig{});
  CHECK(p.value(1).data()[0] == before.value(1).data()[0]);
  for (std::size_t k = 0; k < p.value(1).size(); ++k) CHECK(p.value(1)[k] == before.value(1)[k]);
}

TEST_CASE("a non-finite gradient aborts the step before any change") {
  Rng rng(4);
  ParamStore p = two_params(rng);
  const ParamStore before = p;
  AdamState state(p);
  Gradients g = filled(p, rng, 1.0);
  g[0][3] = NAN;
  CHECK_THROWS_AS(adam_step(p, g, state, AdamConfig{}), NumericalError);
  CHECK(state.t == 0);
  for (std::size_t k = 0; k < p.value(0).size(); ++k) CHECK(p.value(0)[k] == before.value(0)[k]);
}

TEST_CASE("ADAM configuration and shape errors") {
  AdamConfig bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AdamConfig{};
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(AdamConfig{}.validate());

  Rng rng(5);
  ParamStore p = two_params(rng);
  ParamStore other;
  other.add("w", Tensor(Shape{1, 1, 3, 2}), true);
  other.add("stat", Tensor(Shape{1, 1, 1, 3}), false);
  AdamState state(p);
  CHECK_THROWS_AS(adam_step(p, Gradients(other), state, AdamConfig{}), ShapeError);
}

TEST_CASE("MSE loss is the batch mean of half squared errors") {
  const std::vector<float> a{0.2f, 0.9f, 0.5f, 0.0f};
  const std::vector<float> y{0.0f, 1.0f, 1.0f, 0.0f};
  const LossResult r = mse_loss(a, y);
  double expected = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    expected += 0.5 * (double(a[i]) - y[i]) * (double(a[i]) - y[i]);
  }
  CHECK(r.loss == doctest::Approx(expected / 4.0).epsilon(1e-12));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(r.grad[i] == doctest::Approx((double(a[i]) - y[i]) / 4.0).epsilon(1e-6));
  }
  CHECK(mse_loss(y, y).loss == 0.0);
  CHECK_THROWS_AS(mse_loss({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(mse_loss(a, std::vector<float>{1.0f}), ShapeError);
}
