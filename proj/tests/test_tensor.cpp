#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "skullstrip/tensor.hpp"

using namespace skullstrip;

namespace {

std::vector<float> random_values(size_t n, uint32_t seed, float lo = -1.0f,
                                 float hi = 1.0f) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> uni(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = uni(rng);
  return v;
}

// central finite differences through an arbitrary scalar-producing closure
template <typename Fn>
float finite_difference(DiffTensor& leaf, size_t index, Fn&& forward,
                        float h = 1e-3f) {
  const float saved = leaf.value()[index];
  leaf.value()[index] = saved + h;
  const float up = forward();
  leaf.value()[index] = saved - h;
  const float down = forward();
  leaf.value()[index] = saved;
  return (up - down) / (2.0f * h);
}

}  // namespace

TEST_CASE("conv2d of all-ones 3x3 with a 3x3 ones kernel sums to 9") {
  DiffTensor in = DiffTensor::from({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  DiffTensor k = DiffTensor::from({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  DiffTensor b = DiffTensor::zeros({1});
  DiffTensor out = conv2d(in, k, b, 0);
  REQUIRE(out.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(out.value()[0] == 9.0f);
}

TEST_CASE("a centered delta kernel with padding 1 is the identity") {
  DiffTensor in = DiffTensor::from({1, 1, 4, 4}, random_values(16, 3));
  std::vector<float> kv(9, 0.0f);
  kv[4] = 1.0f;
  DiffTensor k = DiffTensor::from({1, 1, 3, 3}, kv);
  DiffTensor out = conv2d(in, k, DiffTensor::zeros({1}), 1);
  CHECK(out.value() == in.value());
}

TEST_CASE("conv2d matches the nested-loop oracle bitwise") {
  const auto iv = random_values(1 * 2 * 5 * 5, 11);
  const auto kv = random_values(3 * 2 * 3 * 3, 12);
  const auto bv = random_values(3, 13);
  DiffTensor in = DiffTensor::from({1, 2, 5, 5}, iv);
  DiffTensor k = DiffTensor::from({3, 2, 3, 3}, kv);
  DiffTensor b = DiffTensor::from({3}, bv);
  for (int padding : {0, 1}) {
    DiffTensor out = conv2d(in, k, b, padding);
    const auto ref = oracle::conv2d_loop(iv, 1, 2, 5, 5, kv, 3, 3, 3, bv, padding, 1);
    REQUIRE(out.value() == ref);
  }
}

TEST_CASE("conv2d matches the oracle exactly on integer inputs") {
  auto iv = random_values(2 * 3 * 6 * 6, 21);
  auto kv = random_values(4 * 3 * 3 * 3, 22);
  for (auto& v : iv) v = std::round(4.0f * v);
  for (auto& v : kv) v = std::round(4.0f * v);
  const std::vector<float> bv(4, 1.0f);
  DiffTensor out = conv2d(DiffTensor::from({2, 3, 6, 6}, iv),
                          DiffTensor::from({4, 3, 3, 3}, kv),
                          DiffTensor::from({4}, bv), 1);
  CHECK(out.value() == oracle::conv2d_loop(iv, 2, 3, 6, 6, kv, 4, 3, 3, bv, 1, 1));
}

TEST_CASE("conv2d gradients agree with finite differences") {
  DiffTensor in = DiffTensor::from({1, 2, 5, 5}, random_values(50, 31), true);
  DiffTensor k = DiffTensor::from({3, 2, 3, 3}, random_values(54, 32), true);
  DiffTensor b = DiffTensor::from({3}, random_values(3, 33), true);
  auto forward = [&]() { return sum(conv2d(in, k, b, 1)).value()[0]; };

  DiffTensor loss = sum(conv2d(in, k, b, 1));
  backward(loss);
  std::mt19937 rng(34);
  auto check_leaf = [&](DiffTensor& leaf, int samples) {
    for (int s = 0; s < samples; ++s) {
      const size_t i = rng() % leaf.numel();
      const float fd = finite_difference(leaf, i, forward);
      REQUIRE(leaf.grad()[i] == Catch::Approx(fd).epsilon(1e-2).margin(1e-3));
    }
  };
  check_leaf(in, 10);
  check_leaf(k, 10);
  check_leaf(b, 3);
}

TEST_CASE("relu clamps negatives and routes gradient through positives") {
  DiffTensor x = DiffTensor::from({3}, {-1.0f, 0.0f, 2.0f}, true);
  DiffTensor y = relu(x);
  CHECK(y.value() == std::vector<float>{0.0f, 0.0f, 2.0f});
  backward(sum(y));
  CHECK(x.grad() == std::vector<float>{0.0f, 0.0f, 1.0f});
}

TEST_CASE("max_pool2d picks window maxima and routes gradient to them") {
  DiffTensor x = DiffTensor::from({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}, true);
  DiffTensor y = max_pool2d(x);
  REQUIRE(y.value() == std::vector<float>{4.0f});
  backward(sum(y));
  CHECK(x.grad() == std::vector<float>{0.0f, 0.0f, 0.0f, 1.0f});
}

TEST_CASE("max_pool2d ties go to the first window position") {
  DiffTensor x = DiffTensor::from({1, 1, 2, 2}, {5.0f, 5.0f, 5.0f, 5.0f}, true);
  backward(sum(max_pool2d(x)));
  CHECK(x.grad() == std::vector<float>{1.0f, 0.0f, 0.0f, 0.0f});
}

TEST_CASE("upsample2x repeats pixels and sums gradients per block") {
  DiffTensor x = DiffTensor::from({1, 1, 1, 2}, {1.0f, 2.0f}, true);
  DiffTensor y = upsample2x(x);
  CHECK(y.value() == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2});
  backward(sum(y));
  CHECK(x.grad() == std::vector<float>{4.0f, 4.0f});
}

TEST_CASE("concat_channels stacks and splits gradients") {
  DiffTensor a = DiffTensor::from({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  DiffTensor b = DiffTensor::from({1, 2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12}, true);
  DiffTensor y = concat_channels(a, b);
  REQUIRE(y.shape() == std::vector<int>{1, 3, 2, 2});
  CHECK(y.value() == std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  backward(sum(y));
  CHECK(a.grad() == std::vector<float>(4, 1.0f));
  CHECK(b.grad() == std::vector<float>(8, 1.0f));
}

TEST_CASE("sigmoid of zero is one half") {
  DiffTensor x = DiffTensor::from({1}, {0.0f});
  CHECK(sigmoid(x).value()[0] == 0.5f);
}

TEST_CASE("bce of uniform half predictions is ln 2") {
  DiffTensor p = DiffTensor::from({8}, std::vector<float>(8, 0.5f));
  DiffTensor t = DiffTensor::from({8}, {1, 0, 1, 1, 0, 0, 1, 0});
  CHECK(bce_loss(p, t).value()[0] == Catch::Approx(std::log(2.0)).margin(1e-6));
}

TEST_CASE("bce of a perfect prediction is at the clamp floor") {
  DiffTensor p = DiffTensor::from({4}, {1, 0, 1, 0});
  DiffTensor t = DiffTensor::from({4}, {1, 0, 1, 0});
  CHECK(bce_loss(p, t).value()[0] <= 1.1e-7f);
  CHECK(bce_loss(p, t).value()[0] >= 0.0f);
}

TEST_CASE("bce single-term evaluation") {
  DiffTensor p = DiffTensor::from({1}, {0.9f});
  DiffTensor t = DiffTensor::from({1}, {1.0f});
  CHECK(bce_loss(p, t).value()[0] == Catch::Approx(0.105361).margin(1e-5));
}

TEST_CASE("bce is non-negative on random inputs") {
  std::mt19937 rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    auto pv = random_values(16, rng(), 0.0f, 1.0f);
    std::vector<float> tv(16);
    for (auto& v : tv) v = static_cast<float>(rng() % 2);
    CHECK(bce_loss(DiffTensor::from({16}, pv), DiffTensor::from({16}, tv)).value()[0] >=
          0.0f);
  }
}

TEST_CASE("bce gradient matches finite differences") {
  DiffTensor p = DiffTensor::from({6}, random_values(6, 61, 0.1f, 0.9f), true);
  DiffTensor t = DiffTensor::from({6}, {1, 0, 0, 1, 1, 0});
  DiffTensor loss = bce_loss(p, t);
  backward(loss);
  for (size_t i = 0; i < 6; ++i) {
    const float fd =
        finite_difference(p, i, [&]() { return bce_loss(p, t).value()[0]; });
    REQUIRE(p.grad()[i] == Catch::Approx(fd).epsilon(5e-3).margin(1e-3));
  }
}

TEST_CASE("backward of a linear sum gives unit gradients") {
  DiffTensor x = DiffTensor::from({3}, {1.0f, 2.0f, 3.0f}, true);
  backward(sum(x));
  CHECK(x.grad() == std::vector<float>{1.0f, 1.0f, 1.0f});
}

TEST_CASE("backward of sum of squares gives 2x") {
  DiffTensor x = DiffTensor::from({2}, {1.0f, 2.0f}, true);
  backward(sum(mul(x, x)));
  CHECK(x.grad() == std::vector<float>{2.0f, 4.0f});
}

TEST_CASE("backward rejects non-scalar losses") {
  DiffTensor x = DiffTensor::from({2}, {1.0f, 2.0f}, true);
  CHECK_THROWS_AS(backward(mul(x, x)), NonScalarLoss);
}

TEST_CASE("backward accumulates across calls and resets with zero_grad") {
  DiffTensor x = DiffTensor::from({2}, {1.0f, 1.0f}, true);
  DiffTensor loss = sum(x);
  backward(loss);
  backward(loss);
  CHECK(x.grad() == std::vector<float>{2.0f, 2.0f});
  x.zero_grad();
  DiffTensor loss2 = sum(x);
  backward(loss2);
  CHECK(x.grad() == std::vector<float>{1.0f, 1.0f});
}

TEST_CASE("gradients are deterministic across reset and re-evaluation") {
  const auto values = random_values(12, 71);
  auto run = [&]() {
    DiffTensor x = DiffTensor::from({1, 1, 2, 6}, values, true);
    DiffTensor k = DiffTensor::from({1, 1, 2, 2}, {0.5f, -0.5f, 1.0f, 0.25f}, true);
    backward(sum(relu(conv2d(x, k, DiffTensor::zeros({1}, true), 1))));
    return x.grad();
  };
  CHECK(run() == run());
}

TEST_CASE("no-grad mode records no graph") {
  DiffTensor x = DiffTensor::from({2}, {1.0f, 2.0f}, true);
  NoGradGuard guard;
  DiffTensor y = sum(x);
  CHECK_FALSE(y.tracked());
}

TEST_CASE("adam leaves parameters alone for zero gradients") {
  DiffTensor p = DiffTensor::from({2}, {1.5f, -0.5f}, true);
  std::vector<DiffTensor> params{p};
  AdamState state;
  adam_step(params, state, 0.001, 0.9, 0.999, 1e-8, 1);
  CHECK(p.value() == std::vector<float>{1.5f, -0.5f});
}

TEST_CASE("adam first step follows the closed form") {
  DiffTensor p = DiffTensor::from({1}, {1.0f}, true);
  p.grad()[0] = 1.0f;
  std::vector<DiffTensor> params{p};
  AdamState state;
  adam_step(params, state, 0.001, 0.9, 0.999, 1e-8, 1);
  // mhat = g, vhat = g^2, update = lr * 1/(1 + eps)
  CHECK(p.value()[0] == Catch::Approx(1.0 - 0.001 / (1.0 + 1e-8)).margin(1e-6));
}

TEST_CASE("constant gradient keeps per-step movement near lr") {
  DiffTensor p = DiffTensor::from({1}, {1.0f}, true);
  std::vector<DiffTensor> params{p};
  AdamState state;
  float prev = 1.0f;
  for (int t = 1; t <= 2; ++t) {
    p.grad()[0] = 1.0f;
    adam_step(params, state, 0.001, 0.9, 0.999, 1e-8, t);
    const float step = prev - p.value()[0];
    CHECK(step >= 0.0009f);
    CHECK(step <= 0.001f + 1e-7f);
    prev = p.value()[0];
  }
}

TEST_CASE("adam with zero learning rate changes nothing") {
  DiffTensor p = DiffTensor::from({3}, {1.0f, 2.0f, 3.0f}, true);
  p.grad() = {0.3f, -0.7f, 1.1f};
  std::vector<DiffTensor> params{p};
  AdamState state;
  adam_step(params, state, 0.0, 0.9, 0.999, 1e-8, 1);
  CHECK(p.value() == std::vector<float>{1.0f, 2.0f, 3.0f});
}

TEST_CASE("adam requires gradients") {
  DiffTensor p = DiffTensor::from({2}, {1.0f, 2.0f});  // untracked
  std::vector<DiffTensor> params{p};
  AdamState state;
  CHECK_THROWS_AS(adam_step(params, state, 0.001), MissingGradient);
}
