#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chopnet/dataset.hpp"
#include "chopnet/image.hpp"
#include "chopnet/network.hpp"

namespace chopnet {

enum class Solver { Sgd };
enum class LrPolicy { StepDown };

/// Solver settings. Defaults are the DIGITS image-classification defaults
/// used for the moss experiment; momentum, weight decay and batch size are
/// the stock Caffe LeNet solver values.
struct TrainingConfig {
  int epochs = 30;
  int batch_size = 64;
  Solver solver = Solver::Sgd;
  double base_lr = 0.01;
  LrPolicy lr_policy = LrPolicy::StepDown;
  double step_size_percent = 33.0;
  double gamma = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  int snapshot_interval_epochs = 1;
  int validation_interval_epochs = 1;

  /// Throws InvalidConfig on any out-of-range field.
  void validate() const;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

/// Field names accepted by set_config_value, in declaration order.
std::span<const std::string_view> config_keys();

/// Assigns one field from its textual form; throws InvalidConfig naming the key.
void set_config_value(TrainingConfig& config, std::string_view key, std::string_view value);

/// Flat "key = value" text; '#' comments; string values may be quoted.
TrainingConfig parse_config(std::string_view text, TrainingConfig base = {});
TrainingConfig read_config(const std::filesystem::path& path, TrainingConfig base = {});
std::string format_config(const TrainingConfig& config);

/// Epochs per learning-rate step: ceil(epochs * step_size_percent / 100), at least 1.
int lr_step_epochs(const TrainingConfig& config);

/// base_lr * gamma^k with k = epoch / lr_step_epochs(config).
double lr_at(const TrainingConfig& config, int epoch);

/// (pixel - channel_mean) / 255 per channel, laid out N x 3 x S x S.
Tensor<float> preprocess(std::span<const ImageBuffer> tiles, const std::array<double, 3>& channel_means);
Tensor<float> preprocess(std::span<const ImageBuffer* const> tiles, const std::array<double, 3>& channel_means);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  double lr = 0.0;
};

using MetricsHistory = std::vector<EpochMetrics>;

/// CSV with header epoch,train_loss,val_loss,val_accuracy,lr. Epochs without
/// validation leave the two val columns empty.
std::string format_metrics_csv(const MetricsHistory& history);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Mean loss and top-1 accuracy; identical for any batch size.
EvalResult evaluate(const NetworkParams<float>& params, const LabeledTiles& tiles,
                    const std::array<double, 3>& channel_means, int batch_size = 64);

EvalResult evaluate_split(const NetworkParams<float>& params, const DatasetManifest& manifest,
                          const TileStore& store, Split which, int batch_size = 64);

struct TrainOptions {
  /// When set, epoch_{N}.ckpt files are written here per the snapshot interval.
  std::optional<std::filesystem::path> snapshot_dir;
  /// Starting point instead of seeded initialization.
  std::optional<NetworkParams<float>> initial_params;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  NetworkParams<float> params;
  MetricsHistory history;
  std::vector<std::filesystem::path> snapshots;
  std::size_t updates = 0;
};

/// Minibatch SGD with momentum and step-down learning rate. Deterministic
/// for fixed inputs and seed; all work runs on the calling thread.
TrainResult train(const LabeledTiles& train_set, const LabeledTiles& val_set,
                  const std::array<double, 3>& channel_means, const TrainingConfig& config,
                  const Architecture& arch, std::vector<std::string> class_names,
                  const TrainOptions& options = {});

TrainResult train(const DatasetManifest& manifest, const TileStore& store, const TrainingConfig& config,
                  const Architecture& arch, const TrainOptions& options = {});

}  // namespace chopnet
