#include <doctest.h>

#include <cmath>

#include "mesoforge/ops.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace mesoforge;
namespace o = oracle;

namespace {

ops::ConvSpec same_conv(int out, int k, int dilation = 1) {
  ops::ConvSpec s;
  s.out_channels = out;
  s.kernel = {k, k};
  s.dilation = {dilation, dilation};
  return s;
}

Tensor identity_1x1(int channels) {
  Tensor w(Shape{channels, channels, 1, 1});
  for (int c = 0; c < channels; ++c) w.at(c, c, 0, 0) = 1.0f;
  return w;
}

}  // namespace

TEST_CASE("tensor layout and shape") {
  Tensor t(Shape{2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK(t.offset(1, 2, 3, 4) == 119);
  CHECK(t.offset(0, 1, 0, 0) == 20);
  CHECK_THROWS_AS(Tensor(Shape{0, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("conv2d shapes and identity") {
  Rng rng(1);
  const Tensor x = o::random_tensor(Shape{1, 3, 256, 256}, rng);
  const Tensor w = o::random_tensor(Shape{8, 3, 3, 3}, rng);
  CHECK(ops::conv2d(x, w, std::vector<float>(8), same_conv(8, 3)).shape() ==
        Shape{1, 8, 256, 256});

  const Tensor small = o::random_tensor(Shape{2, 4, 5, 6}, rng);
  ops::ConvSpec id = same_conv(4, 1);
  CHECK(ops::conv2d(small, identity_1x1(4), std::vector<float>(4), id) == small);
  const Tensor g = o::random_tensor(small.shape(), rng);
  CHECK(ops::conv2d_backward(small, identity_1x1(4), g, id).grad_x == g);

  ops::ConvSpec s = same_conv(4, 3, 3);
  CHECK(s.effective_kernel() == ops::Extent2{7, 7});
}

TEST_CASE("conv2d rejects mismatched shapes with the offending dimension") {
  Rng rng(2);
  const Tensor x = o::random_tensor(Shape{1, 3, 8, 8}, rng);
  const Tensor w = o::random_tensor(Shape{4, 2, 3, 3}, rng);
  try {
    ops::conv2d(x, w, std::vector<float>(4), same_conv(4, 3));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("channel") != std::string::npos);
  }
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (int d : {1, 2, 3}) {
      CHECK(suites::conv_oracle_error(seed, d) < 1e-5);
      CHECK(suites::conv_direct_oracle_error(seed, d) < 1e-5);
    }
  }
  // The documented example: (2,3,7,7), 4x3x3x3 kernel, dilation 2, Same.
  Rng rng(3);
  const Tensor x = o::random_tensor(Shape{2, 3, 7, 7}, rng);
  const Tensor w = o::random_tensor(Shape{4, 3, 3, 3}, rng);
  const std::vector<float> b{0.1f, -0.2f, 0.3f, 0.0f};
  const Tensor got = ops::conv2d(x, w, b, same_conv(4, 3, 2));
  const Tensor want = o::conv2d(x, w, b, 1, 1, 2, 2, true);
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got[k] - want[k]) < 1e-5);
}

TEST_CASE("conv2d stride and valid padding match the oracle") {
  Rng rng(4);
  const Tensor x = o::random_tensor(Shape{1, 2, 9, 10}, rng);
  const Tensor w = o::random_tensor(Shape{3, 2, 3, 3}, rng);
  const std::vector<float> b(3, 0.5f);
  for (const bool same : {true, false}) {
    ops::ConvSpec s = same_conv(3, 3, 2);
    s.stride = {2, 2};
    s.padding = same ? ops::Padding::Same : ops::Padding::Valid;
    const Tensor got = ops::conv2d(x, w, b, s);
    const Tensor want = o::conv2d(x, w, b, 2, 2, 2, 2, same);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got[k] - want[k]) < 1e-5);
  }
}

TEST_CASE("conv2d is linear in its input for zero bias") {
  Rng rng(5);
  const Tensor x = o::random_tensor(Shape{2, 3, 8, 8}, rng);
  const Tensor y = o::random_tensor(Shape{2, 3, 8, 8}, rng);
  const Tensor w = o::random_tensor(Shape{4, 3, 3, 3}, rng);
  const std::vector<float> zero(4);
  const float a = 0.7f;
  const float b = -1.3f;
  Tensor mix(x.shape());
  for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = a * x[k] + b * y[k];
  const ops::ConvSpec s = same_conv(4, 3, 2);
  const Tensor lhs = ops::conv2d(mix, w, zero, s);
  const Tensor cx = ops::conv2d(x, w, zero, s);
  const Tensor cy = ops::conv2d(y, w, zero, s);
  for (std::size_t k = 0; k < lhs.size(); ++k) {
    CHECK(std::abs(lhs[k] - (a * cx[k] + b * cy[k])) < 1e-5);
  }
}

TEST_CASE("conv2d backward of zero cotangent is zero") {
  Rng rng(6);
  const Tensor x = o::random_tensor(Shape{1, 3, 6, 6}, rng);
  const Tensor w = o::random_tensor(Shape{2, 3, 3, 3}, rng);
  const ops::ConvGrads g = ops::conv2d_backward(x, w, Tensor(Shape{1, 2, 6, 6}), same_conv(2, 3));
  for (float v : g.grad_x.data()) CHECK(v == 0.0f);
  for (float v : g.grad_weights.data()) CHECK(v == 0.0f);
  for (float v : g.grad_bias) CHECK(v == 0.0f);
}

TEST_CASE("maxpool2d") {
  Tensor c(Shape{1, 2, 8, 8}, 0.25f);
  const ops::PoolResult r = ops::maxpool2d(c, {});
  CHECK(r.out.shape() == Shape{1, 2, 4, 4});
  for (float v : r.out.data()) CHECK(v == 0.25f);
  // Ties route to the first element in row-major order.
  for (std::size_t k = 0; k < r.out.size(); ++k) {
    const int row = static_cast<int>((k % 16) / 4);
    const int col = static_cast<int>(k % 4);
    const int ch = static_cast<int>(k / 16);
    CHECK(r.argmax[k] == c.offset(0, ch, 2 * row, 2 * col));
  }

  ops::PoolSpec four;
  four.window = {4, 4};
  CHECK(ops::maxpool2d(Tensor(Shape{1, 16, 32, 32}), four).out.shape() == Shape{1, 16, 8, 8});
  CHECK_THROWS_AS(ops::maxpool2d(Tensor(Shape{1, 1, 7, 8}), ops::PoolSpec{}), ShapeError);

  for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(suites::pool_oracle_error(seed) == 0.0);
}

TEST_CASE("batchnorm") {
  SUBCASE("constant input normalizes to about zero") {
    Tensor x(Shape{4, 3, 5, 5}, 2.5f);
    ops::BatchNormState s(3);
    const Tensor y = ops::batchnorm(x, s, Mode::Train);
    for (float v : y.data()) CHECK(std::abs(v) <= 1e-3);
    CHECK(y.all_finite());
  }
  SUBCASE("train output has zero mean and unit variance per channel") {
    Rng rng(7);
    const Tensor x = o::random_tensor(Shape{4, 3, 5, 5}, rng, -3.0, 5.0);
    ops::BatchNormState s(3);
    s.epsilon = 0.0f;
    const Tensor y = ops::batchnorm(x, s, Mode::Train);
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      double sq = 0.0;
      for (int n = 0; n < 4; ++n)
        for (int h = 0; h < 5; ++h)
          for (int w = 0; w < 5; ++w) {
            sum += y.at(n, c, h, w);
            sq += y.at(n, c, h, w) * y.at(n, c, h, w);
          }
      const double mean = sum / 100.0;
      CHECK(std::abs(mean) < 1e-4);
      CHECK(std::abs(sq / 100.0 - mean * mean - 1.0) < 1e-4);
    }
    for (float v : s.running_var) CHECK(v >= 0.0f);
  }
  SUBCASE("matches the naive oracle, including running statistics") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CHECK(suites::batchnorm_oracle_error(seed) < 1e-5);
    }
  }
  SUBCASE("train mode needs two values per channel") {
    ops::BatchNormState s(2);
    CHECK_THROWS(ops::batchnorm(Tensor(Shape{1, 2, 1, 1}), s, Mode::Train));
  }
}

TEST_CASE("dense") {
  Rng rng(8);
  const Tensor x = o::random_tensor(Shape{3, 5, 1, 1}, rng);
  Tensor eye(Shape{1, 1, 5, 5});
  for (int i = 0; i < 5; ++i) eye[static_cast<std::size_t>(i) * 5 + i] = 1.0f;
  const Tensor y = ops::dense(x, eye, std::vector<float>(5));
  CHECK(y.shape() == Shape{3, 5, 1, 1});
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(y[k] == x[k]);

  const Tensor w = o::random_tensor(Shape{1, 1, 5, 2}, rng);
  const std::vector<float> b{0.5f, -0.5f};
  const Tensor got = ops::dense(x, w, b);
  const Tensor want = o::dense(x, w, b);
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got[k] - want[k]) < 1e-6);
  CHECK_THROWS_AS(ops::dense(o::random_tensor(Shape{1, 4, 1, 1}, rng), w, b), ShapeError);
}

TEST_CASE("activations") {
  const Tensor x(Shape{1, 1, 1, 3}, std::vector<float>{-1.0f, 2.0f, 0.0f});
  const Tensor r = ops::relu(x);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 2.0f);
  const Tensor g = ops::relu_backward(x, Tensor(x.shape(), 1.0f));
  CHECK(g[2] == 0.0f);  // subgradient at exactly zero
  CHECK(ops::leaky_relu(Tensor(Shape{}, -2.0f), 0.1f)[0] == doctest::Approx(-0.2f));
  CHECK(ops::leaky_relu_backward(Tensor(Shape{}, -2.0f), Tensor(Shape{}, 1.0f), 0.1f)[0] ==
        doctest::Approx(0.1f));
  CHECK(ops::sigmoid(Tensor(Shape{}, 0.0f))[0] == 0.5f);
  const Tensor big(Shape{1, 1, 1, 2}, std::vector<float>{100.0f, -100.0f});
  const Tensor s = ops::sigmoid(big);
  CHECK(s[0] < 1.0f);
  CHECK(s[1] > 0.0f);
}

TEST_CASE("dropout") {
  Rng rng(9);
  const Tensor x = o::random_tensor(Shape{2, 3, 4, 4}, rng);
  Rng a(11);
  CHECK(ops::dropout(x, 0.0f, Mode::Train, a).out == x);
  CHECK(ops::dropout(x, 0.7f, Mode::Infer, a).out == x);
  Rng r1(12);
  Rng r2(12);
  const ops::DropoutResult d1 = ops::dropout(x, 0.5f, Mode::Train, r1);
  const ops::DropoutResult d2 = ops::dropout(x, 0.5f, Mode::Train, r2);
  CHECK(d1.mask == d2.mask);
  CHECK(d1.out == d2.out);
  for (std::size_t k = 0; k < x.size(); ++k) {
    CHECK((d1.mask[k] == 0.0f || d1.mask[k] == 2.0f));
    CHECK(d1.out[k] == x[k] * d1.mask[k]);
  }
  CHECK_THROWS(ops::dropout(x, 1.0f, Mode::Train, a));
}

TEST_CASE("channel concat and split") {
  Rng rng(10);
  std::vector<Tensor> parts;
  for (int c : {1, 4, 4, 1}) parts.push_back(o::random_tensor(Shape{2, c, 3, 3}, rng));
  const Tensor cat = ops::channel_concat(parts);
  CHECK(cat.shape().c == 10);
  const std::vector<int> widths{1, 4, 4, 1};
  const std::vector<Tensor> back = ops::channel_split(cat, widths);
  for (std::size_t i = 0; i < parts.size(); ++i) CHECK(back[i] == parts[i]);
  const std::vector<Tensor> one{parts[1]};
  CHECK(ops::channel_concat(one) == parts[1]);
  const std::vector<Tensor> bad{parts[0], o::random_tensor(Shape{2, 1, 4, 3}, rng)};
  CHECK_THROWS_AS(ops::channel_concat(bad), ShapeError);
}

TEST_CASE("every primitive's backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const suites::GradCheck& g : suites::primitive_gradient_checks(seed)) {
      INFO(g.name << " seed " << seed);
      CHECK(g.max_rel_error < 1e-2);
    }
  }
}

TEST_CASE("forward and backward are bit-exactly reproducible") {
  Rng rng(13);
  const Tensor x = o::random_tensor(Shape{2, 3, 9, 9}, rng);
  const Tensor w = o::random_tensor(Shape{4, 3, 3, 3}, rng);
  const std::vector<float> b(4, 0.1f);
  const ops::ConvSpec s = same_conv(4, 3, 3);
  const Tensor y1 = ops::conv2d(x, w, b, s);
  const Tensor y2 = ops::conv2d(x, w, b, s);
  CHECK(y1 == y2);
  const ops::ConvGrads g1 = ops::conv2d_backward(x, w, y1, s);
  const ops::ConvGrads g2 = ops::conv2d_backward(x, w, y2, s);
  CHECK(g1.grad_x == g2.grad_x);
  CHECK(g1.grad_weights == g2.grad_weights);
  CHECK(g1.grad_bias == g2.grad_bias);
}
