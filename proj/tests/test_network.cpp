#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "chopnet/network.hpp"
#include "chopnet/rng.hpp"
#include "expect_error.hpp"

namespace chopnet {
namespace {

using testing::expect_error;

template <typename T>
Tensor<T> random_batch(std::size_t n, const Architecture& a, std::uint64_t seed) {
  Rng rng(seed);
  const auto s = static_cast<std::size_t>(a.input_size);
  Tensor<T> t({n, static_cast<std::size_t>(a.input_channels), s, s});
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-0.5, 0.5));
  return t;
}

template <typename T>
Tensor<T> take_rows(const Tensor<T>& batch, const std::vector<std::size_t>& rows) {
  const std::size_t per = batch.size() / batch.dim(0);
  auto shape = batch.shape();
  shape[0] = rows.size();
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(batch.data() + rows[i] * per, per, out.data() + i * per);
  }
  return out;
}

Architecture small() {
  Architecture a;
  a.input_size = 16;
  return a;
}

TEST(Architecture, FeatureMapSizes) {
  const Architecture a;
  EXPECT_EQ(a.conv1_out(), 52);
  EXPECT_EQ(a.pool1_out(), 26);
  EXPECT_EQ(a.conv2_out(), 22);
  EXPECT_EQ(a.pool2_out(), 11);
  EXPECT_EQ(a.fc1_inputs(), 6050);
}

TEST(Architecture, ParameterCount) {
  EXPECT_EQ(Architecture{}.parameter_count(), 3054074u);
  const std::size_t hand = 20 * (3 * 25) + 20 + 50 * (20 * 25) + 50 + 6050 * 500 + 500 + 500 * 4 + 4;
  EXPECT_EQ(hand, 3054074u);
  const auto p = init_params<float>(Architecture{}, 1);
  std::size_t total = 0;
  for (const auto* t : p.layers.all()) total += t->size();
  EXPECT_EQ(total, 3054074u);
}

TEST(Architecture, ClassicTwentyEightGreyscaleIsValid) {
  Architecture a;
  a.input_size = 28;
  a.input_channels = 1;
  a.num_classes = 10;
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.fc1_inputs(), 800);
  const auto p = init_params<float>(a, 1);
  const auto out = forward(p, random_batch<float>(2, a, 3));
  EXPECT_EQ(out.probs.dim(1), 10u);
}

TEST(Architecture, TooSmallInputRejected) {
  Architecture a;
  a.input_size = 12;
  expect_error(ErrorCode::InvalidArchitecture, [&] { a.validate(); });
  expect_error(ErrorCode::InvalidArchitecture, [&] { init_params<float>(a, 0); });
  a.input_size = 16;
  a.num_classes = 0;
  expect_error(ErrorCode::InvalidArchitecture, [&] { a.validate(); });
}

TEST(InitParams, DeterministicGlorotZeroBias) {
  const Architecture a;
  const auto p = init_params<float>(a, 7);
  EXPECT_EQ(p, init_params<float>(a, 7));
  EXPECT_NE(p.layers.fc2_w, init_params<float>(a, 8).layers.fc2_w);
  const double k2 = 25.0;
  const double limits[] = {std::sqrt(6.0 / (3 * k2 + 20 * k2)), std::sqrt(6.0 / (20 * k2 + 50 * k2)),
                           std::sqrt(6.0 / (6050 + 500)), std::sqrt(6.0 / (500 + 4))};
  const Tensor<float>* weights[] = {&p.layers.conv1_w, &p.layers.conv2_w, &p.layers.fc1_w, &p.layers.fc2_w};
  for (int i = 0; i < 4; ++i) {
    float lo = 0, hi = 0;
    for (float v : weights[i]->values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_LE(hi, limits[i]);
    EXPECT_GE(lo, -limits[i]);
    EXPECT_GT(hi, 0.9 * limits[i]) << "layer " << i << " does not span its range";
  }
  for (const Tensor<float>* b : {&p.layers.conv1_b, &p.layers.conv2_b, &p.layers.fc1_b, &p.layers.fc2_b}) {
    for (float v : b->values()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Forward, SoftmaxRowsSumToOne) {
  const Architecture a;
  const auto p = init_params<float>(a, 3);
  const auto out = forward(p, random_batch<float>(5, a, 4));
  ASSERT_EQ(out.probs.shape(), (std::vector<std::size_t>{5, 4}));
  for (std::size_t n = 0; n < 5; ++n) {
    double sum = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      const float v = out.probs[n * 4 + c];
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Forward, ZeroParamsGiveUniformProbs) {
  const Architecture a;
  const auto p = zero_params<float>(a);
  const auto out = forward(p, random_batch<float>(3, a, 5));
  for (float v : out.probs.values()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Forward, BatchPermutationPermutesOutputs) {
  const Architecture a = small();
  const auto p = init_params<double>(a, 11);
  const auto batch = random_batch<double>(4, a, 12);
  const auto out = forward(p, batch);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  const auto permuted = forward(p, take_rows(batch, perm));
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(permuted.probs[i * 4 + c], out.probs[perm[i] * 4 + c]);
}

TEST(Forward, OutputIndependentOfBatchComposition) {
  const Architecture a;
  const auto p = init_params<float>(a, 13);
  const auto batch = random_batch<float>(6, a, 14);
  const auto all = forward(p, batch);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto one = forward(p, take_rows(batch, {i}));
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(one.probs[c], all.probs[i * 4 + c]) << "sample " << i;
  }
}

TEST(Forward, ClassPermutationPermutesProbs) {
  const Architecture a = small();
  auto p = init_params<double>(a, 15);
  const auto batch = random_batch<double>(3, a, 16);
  const auto out = forward(p, batch);
  const std::vector<std::size_t> perm = {3, 1, 0, 2};  // new class k is old class perm[k]
  auto q = p;
  const std::size_t hidden = Architecture::kFc1Units;
  for (std::size_t k = 0; k < 4; ++k) {
    std::copy_n(p.layers.fc2_w.data() + perm[k] * hidden, hidden, q.layers.fc2_w.data() + k * hidden);
    q.layers.fc2_b[k] = p.layers.fc2_b[perm[k]];
  }
  const auto out_q = forward(q, batch);
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out_q.probs[n * 4 + k], out.probs[n * 4 + perm[k]], 1e-15);
    const int old_best = argmax<double>(out.probs.values().subspan(n * 4, 4));
    const int new_best = argmax<double>(out_q.probs.values().subspan(n * 4, 4));
    EXPECT_EQ(perm[static_cast<std::size_t>(new_best)], static_cast<std::size_t>(old_best));
  }
}

TEST(Forward, ShapeAndFiniteness) {
  const Architecture a;
  const auto p = init_params<float>(a, 1);
  expect_error(ErrorCode::ShapeMismatch, [&] { forward(p, Tensor<float>({1, 3, 28, 28})); });
  expect_error(ErrorCode::ShapeMismatch, [&] { forward(p, Tensor<float>({0, 3, 56, 56})); });
  auto bad = random_batch<float>(1, a, 2);
  bad[17] = std::nanf("");
  expect_error(ErrorCode::NonFinite, [&] { forward(p, bad); });
  auto broken = p;
  broken.layers.fc1_w = Tensor<float>({3});
  expect_error(ErrorCode::ShapeMismatch, [&] { forward(broken, random_batch<float>(1, a, 2)); });
}

TEST(Loss, Anchors) {
  const Tensor<double> uniform({3, 4}, 0.25);
  const std::vector<int> labels3 = {0, 3, 2};
  EXPECT_NEAR(loss(uniform, labels3), std::log(4.0), 1e-12);
  EXPECT_NEAR(loss(uniform, labels3), 1.386294, 1e-6);

  Tensor<double> onehot({2, 4}, 0.0);
  onehot[1] = 1.0;
  onehot[4 + 2] = 1.0;
  const std::vector<int> correct = {1, 2};
  EXPECT_EQ(loss(onehot, correct), 0.0);

  Tensor<double> mixed({2, 4}, 0.0);
  mixed[0] = 0.5;
  mixed[1] = 0.5;
  mixed[4] = 0.25;
  mixed[5] = 0.75;
  const std::vector<int> first = {0, 0};
  EXPECT_NEAR(loss(mixed, first), (std::log(2.0) + std::log(4.0)) / 2, 1e-12);
  EXPECT_NEAR(loss(mixed, first), 1.039721, 1e-6);
}

TEST(Loss, ZeroInitNetworkGivesLnFour) {
  const Architecture a;
  const auto p = zero_params<float>(a);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto out = forward(p, random_batch<float>(4, a, seed));
    const std::vector<int> labels = {0, 1, 2, static_cast<int>(seed)};
    EXPECT_NEAR(loss(out.probs, labels), std::log(4.0), 1e-6);
  }
}

TEST(Loss, Errors) {
  const Tensor<float> probs({2, 4}, 0.25f);
  const std::vector<int> bad = {0, 4};
  expect_error(ErrorCode::LabelOutOfRange, [&] { loss(probs, bad); });
  const std::vector<int> neg = {-1, 0};
  expect_error(ErrorCode::LabelOutOfRange, [&] { loss(probs, neg); });
  const std::vector<int> short_labels = {0};
  expect_error(ErrorCode::ShapeMismatch, [&] { loss(probs, short_labels); });
}

TEST(Backward, DuplicatedSampleMatchesSingle) {
  const Architecture a = small();
  const auto p = init_params<double>(a, 21);
  const auto one = random_batch<double>(1, a, 22);
  const auto two = take_rows(one, {0, 0});
  const std::vector<int> l1 = {2};
  const std::vector<int> l2 = {2, 2};
  const auto g1 = backward(p, one, l1);
  const auto g2 = backward(p, two, l2);
  const auto t1 = g1.all();
  const auto t2 = g2.all();
  for (std::size_t t = 0; t < t1.size(); ++t)
    for (std::size_t i = 0; i < t1[t]->size(); ++i) ASSERT_NEAR((*t2[t])[i], (*t1[t])[i], 1e-14);
}

TEST(Backward, ShapesAndFiniteness) {
  const Architecture a;
  const auto p = init_params<float>(a, 23);
  const std::vector<int> labels = {0, 1, 2};
  const auto r = compute_gradients(p, random_batch<float>(3, a, 24), labels);
  const auto g = r.grads.all();
  const auto w = p.layers.all();
  for (std::size_t t = 0; t < g.size(); ++t) {
    EXPECT_EQ(g[t]->shape(), w[t]->shape()) << Layers<float>::kNames[t];
    EXPECT_TRUE(g[t]->all_finite());
  }
  EXPECT_NEAR(r.loss, loss(forward(p, random_batch<float>(3, a, 24)).probs, labels), 1e-6);
  const std::vector<int> bad = {0, 1, 9};
  expect_error(ErrorCode::LabelOutOfRange, [&] { backward(p, random_batch<float>(3, a, 24), bad); });
}

TEST(Argmax, LowestIndexWinsTies) {
  const std::vector<float> row = {0.1f, 0.4f, 0.4f, 0.1f};
  EXPECT_EQ(argmax<float>(row), 1);
  const std::vector<float> flat(4, 0.25f);
  EXPECT_EQ(argmax<float>(flat), 0);
}

}  // namespace
}  // namespace chopnet
