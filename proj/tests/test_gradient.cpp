#include <gtest/gtest.h>

#include <cstdio>

#include "chopnet/network.hpp"
#include "chopnet/rng.hpp"
#include "test_support.hpp"

namespace chopnet {
namespace {

constexpr double kStep = 1e-5;
constexpr double kErrorFloor = 1e-4;

Architecture small_arch() {
  Architecture a;
  a.input_size = 16;
  a.input_channels = 3;
  a.num_classes = 4;
  return a;
}

Tensor<double> random_batch(std::size_t n, const Architecture& a, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t({n, 3, static_cast<std::size_t>(a.input_size), static_cast<std::size_t>(a.input_size)});
  for (auto& v : t.values()) v = rng.uniform(-0.5, 0.5);
  return t;
}

class GradientCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientCheck, EveryParameterMatchesCentralDifferences) {
  const std::uint64_t seed = GetParam();
  const Architecture arch = small_arch();
  NetworkParams<double> params = init_params<double>(arch, seed);
  // Non-zero biases so bias gradients are exercised off the origin.
  Rng rng(seed ^ 0xB1A5);
  for (auto* b : {&params.layers.conv1_b, &params.layers.conv2_b, &params.layers.fc1_b, &params.layers.fc2_b}) {
    for (auto& v : b->values()) v = rng.uniform(-0.05, 0.05);
  }
  const Tensor<double> batch = random_batch(2, arch, seed + 17);
  const std::vector<int> labels = {static_cast<int>(seed % 4), static_cast<int>((seed + 1) % 4)};

  const auto stats = testing::gradient_check(params, batch, labels, kStep, kErrorFloor);
  RecordProperty("max_rel_error", std::to_string(stats.max_rel_error));
  std::printf("seed %llu: checked %zu, kinks %zu, max rel error %.3g at %s\n",
              static_cast<unsigned long long>(seed), stats.checked, stats.skipped_kinks, stats.max_rel_error,
              stats.worst.c_str());
  EXPECT_LT(stats.max_rel_error, 1e-5) << "worst entry " << stats.worst;
  EXPECT_EQ(stats.checked + stats.skipped_kinks, arch.parameter_count());
  EXPECT_LT(stats.skipped_kinks, arch.parameter_count() / 1000) << "too many kinks to be a meaningful check";
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Values(1u, 2u, 3u, 4u, 5u));

TEST(GradientCheckOracle, DetectsACorruptedGradient) {
  // The harness itself must be able to fail: a deliberately wrong analytic
  // gradient (scaled by 1.001) has to exceed the tolerance.
  const Architecture arch = small_arch();
  const NetworkParams<double> params = init_params<double>(arch, 9);
  const Tensor<double> batch = random_batch(1, arch, 10);
  const std::vector<int> labels = {2};
  auto g = compute_gradients(params, batch, labels);
  std::size_t k = 0;
  for (std::size_t i = 0; i < g.grads.fc2_w.size(); ++i) {
    if (std::abs(g.grads.fc2_w[i]) > std::abs(g.grads.fc2_w[k])) k = i;
  }
  ASSERT_GT(std::abs(g.grads.fc2_w[k]), 1e-3);
  const double h = kStep;
  NetworkParams<double> work = params;
  double& w = work.layers.fc2_w[k];
  const double saved = w;
  w = saved + h;
  const double lp = loss(forward(work, batch).probs, labels);
  w = saved - h;
  const double lm = loss(forward(work, batch).probs, labels);
  const double numeric = (lp - lm) / (2 * h);
  const double wrong = g.grads.fc2_w[k] * 1.001;
  EXPECT_GT(std::abs(wrong - numeric) / std::max({std::abs(wrong), std::abs(numeric), kErrorFloor}), 1e-5);
  EXPECT_NEAR(g.grads.fc2_w[k], numeric, 1e-8);
}

}  // namespace
}  // namespace chopnet
