#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chopnet/tensor.hpp"

namespace chopnet {

/// LeNet as shipped with Caffe/DIGITS: conv(20,5x5) -> maxpool 2 -> conv(50,5x5)
/// -> maxpool 2 -> fc 500 + ReLU -> fc num_classes -> softmax. No padding,
/// stride 1 convolutions. Only the input geometry and class count vary.
struct Architecture {
  static constexpr int kConv1Filters = 20;
  static constexpr int kConv2Filters = 50;
  static constexpr int kKernel = 5;
  static constexpr int kPool = 2;
  static constexpr int kFc1Units = 500;

  int input_size = 56;
  int input_channels = 3;
  int num_classes = 4;

  int conv1_out() const noexcept { return input_size - kKernel + 1; }
  int pool1_out() const noexcept { return conv1_out() / kPool; }
  int conv2_out() const noexcept { return pool1_out() - kKernel + 1; }
  int pool2_out() const noexcept { return conv2_out() / kPool; }
  int fc1_inputs() const noexcept { return kConv2Filters * pool2_out() * pool2_out(); }

  /// Throws InvalidArchitecture if any derived extent is not positive.
  void validate() const;
  std::size_t parameter_count() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// One weight and one bias tensor per learnable layer, in checkpoint order.
/// Weight layouts: conv [filters, in_channels, k, k], fc [outputs, inputs].
template <typename T>
struct Layers {
  Tensor<T> conv1_w, conv1_b;
  Tensor<T> conv2_w, conv2_b;
  Tensor<T> fc1_w, fc1_b;
  Tensor<T> fc2_w, fc2_b;

  static constexpr std::array<const char*, 8> kNames = {"conv1.w", "conv1.b", "conv2.w", "conv2.b",
                                                       "fc1.w",   "fc1.b",   "fc2.w",   "fc2.b"};

  std::array<Tensor<T>*, 8> all() noexcept {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
  }
  std::array<const Tensor<T>*, 8> all() const noexcept {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
  }

  /// Zero-filled tensors shaped for `arch`.
  static Layers zeros(const Architecture& arch);

  friend bool operator==(const Layers&, const Layers&) = default;
};

template <typename T>
using Gradients = Layers<T>;

template <typename T>
struct NetworkParams {
  Architecture arch;
  std::vector<std::string> class_names;
  Layers<T> layers;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

std::vector<std::string> default_class_names(int num_classes);

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
template <typename T>
NetworkParams<T> init_params(const Architecture& arch, std::uint64_t seed,
                             std::vector<std::string> class_names = {});

/// Every parameter zero; the network then emits uniform probabilities.
template <typename T>
NetworkParams<T> zero_params(const Architecture& arch, std::vector<std::string> class_names = {});

template <typename To, typename From>
NetworkParams<To> convert_params(const NetworkParams<From>& params);

/// Throws ShapeMismatch unless every tensor matches `params.arch`.
template <typename T>
void check_param_shapes(const NetworkParams<T>& params);

/// Intermediate activations kept for backpropagation. Pooling argmax
/// indices and ReLU masks also describe which linear piece of the network
/// an input falls on.
template <typename T>
struct ForwardCache {
  std::size_t batch = 0;
  AlignedVector<T> cols1;  // N x (C*k*k) x conv1_out^2
  AlignedVector<T> conv1;  // N x 20 x conv1_out^2
  AlignedVector<T> pool1;  // N x 20 x pool1_out^2
  std::vector<std::int32_t> pool1_arg;
  AlignedVector<T> cols2;  // N x (20*k*k) x conv2_out^2
  AlignedVector<T> conv2;  // N x 50 x conv2_out^2
  AlignedVector<T> pool2;  // N x fc1_inputs
  std::vector<std::int32_t> pool2_arg;
  AlignedVector<T> fc1_pre;  // N x 500
  AlignedVector<T> fc1_act;  // N x 500
  Tensor<T> logits;         // N x classes
  Tensor<T> probs;          // N x classes
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  Tensor<T> probs;
};

/// Per-sample results are independent of batch size and position: every
/// sample goes through identically shaped kernels.
template <typename T>
ForwardCache<T> forward_cached(const NetworkParams<T>& params, const Tensor<T>& batch);

template <typename T>
ForwardResult<T> forward(const NetworkParams<T>& params, const Tensor<T>& batch);

/// Mean over the batch of -ln(probability of the true class).
template <typename T>
T loss(const Tensor<T>& probs, std::span<const int> labels);

template <typename T>
struct GradientResult {
  T loss = T(0);
  Tensor<T> probs;
  Gradients<T> grads;
};

template <typename T>
GradientResult<T> compute_gradients(const NetworkParams<T>& params, const Tensor<T>& batch,
                                    std::span<const int> labels);

/// Gradients of the mean cross-entropy loss with respect to every parameter.
template <typename T>
Gradients<T> backward(const NetworkParams<T>& params, const Tensor<T>& batch, std::span<const int> labels);

/// Index of the largest entry of `row`; ties go to the lowest index.
template <typename T>
int argmax(std::span<const T> row) {
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

// Checkpoint: little-endian "CHOP", version 1, architecture header with class
// names, then each tensor as rank, dims and raw float32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const NetworkParams<float>& params);
NetworkParams<float> parse_checkpoint(std::span<const std::uint8_t> bytes,
                                      const std::optional<Architecture>& expected = std::nullopt);
void save_checkpoint(const NetworkParams<float>& params, const std::filesystem::path& path);
NetworkParams<float> load_checkpoint(const std::filesystem::path& path,
                                     const std::optional<Architecture>& expected = std::nullopt);

}  // namespace chopnet
