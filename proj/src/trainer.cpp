#include "chopnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "chopnet/error.hpp"
#include "chopnet/rng.hpp"

namespace chopnet {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 0x5348554646000000ULL;

void preprocess_into(const ImageBuffer& tile, const std::array<double, 3>& means, float* dst) {
  const std::size_t plane = static_cast<std::size_t>(tile.width()) * static_cast<std::size_t>(tile.height());
  const auto src = tile.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      dst[c * plane + p] = static_cast<float>((static_cast<double>(src[p * 3 + c]) - means[c]) / 255.0);
    }
  }
}

template <typename Get>
Tensor<float> preprocess_impl(std::size_t n, Get&& get, const std::array<double, 3>& means) {
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "cannot preprocess an empty batch");
  const ImageBuffer& first = get(0);
  const int size = first.width();
  if (first.height() != size) throw Error(ErrorCode::ShapeMismatch, "tiles must be square");
  const std::size_t s = static_cast<std::size_t>(size);
  Tensor<float> out({n, 3, s, s});
  for (std::size_t i = 0; i < n; ++i) {
    const ImageBuffer& tile = get(i);
    if (tile.width() != size || tile.height() != size) {
      throw Error(ErrorCode::ShapeMismatch, "tile " + std::to_string(i) + " is " + std::to_string(tile.width()) +
                                                "x" + std::to_string(tile.height()) + ", expected " +
                                                std::to_string(size) + "x" + std::to_string(size));
    }
    preprocess_into(tile, means, out.data() + i * 3 * s * s);
  }
  return out;
}

void require_labels(const LabeledTiles& set, int num_classes, const char* what) {
  if (set.tiles.size() != set.labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": tile and label counts differ");
  }
  for (const int label : set.labels) {
    if (label < 0 || label >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, std::string(what) + ": label " + std::to_string(label) +
                                                  " outside the class table");
    }
  }
}

std::string snapshot_name(int epoch) { return "epoch_" + std::to_string(epoch) + ".ckpt"; }

}  // namespace

Tensor<float> preprocess(std::span<const ImageBuffer> tiles, const std::array<double, 3>& channel_means) {
  return preprocess_impl(tiles.size(), [&](std::size_t i) -> const ImageBuffer& { return tiles[i]; }, channel_means);
}

Tensor<float> preprocess(std::span<const ImageBuffer* const> tiles, const std::array<double, 3>& channel_means) {
  return preprocess_impl(tiles.size(), [&](std::size_t i) -> const ImageBuffer& { return *tiles[i]; }, channel_means);
}

std::string format_metrics_csv(const MetricsHistory& history) {
  std::string out = "epoch,train_loss,val_loss,val_accuracy,lr\n";
  char buf[64];
  for (const auto& m : history) {
    out += std::to_string(m.epoch);
    std::snprintf(buf, sizeof buf, ",%.9g", m.train_loss);
    out += buf;
    if (m.val_loss) {
      std::snprintf(buf, sizeof buf, ",%.9g", *m.val_loss);
      out += buf;
    } else {
      out += ',';
    }
    if (m.val_accuracy) {
      std::snprintf(buf, sizeof buf, ",%.9g", *m.val_accuracy);
      out += buf;
    } else {
      out += ',';
    }
    std::snprintf(buf, sizeof buf, ",%.9g\n", m.lr);
    out += buf;
  }
  return out;
}

EvalResult evaluate(const NetworkParams<float>& params, const LabeledTiles& tiles,
                    const std::array<double, 3>& channel_means, int batch_size) {
  if (tiles.size() == 0) throw Error(ErrorCode::EmptyDataset, "nothing to evaluate");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
  require_labels(tiles, params.arch.num_classes, "evaluation set");

  const std::size_t classes = static_cast<std::size_t>(params.arch.num_classes);
  const std::size_t step = static_cast<std::size_t>(batch_size);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<const ImageBuffer*> batch;
  for (std::size_t start = 0; start < tiles.size(); start += step) {
    const std::size_t end = std::min(tiles.size(), start + step);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&tiles.tiles[i]);
    const ForwardResult<float> out = forward(params, preprocess(std::span<const ImageBuffer* const>(batch), channel_means));
    for (std::size_t i = start; i < end; ++i) {
      const std::span<const float> row(out.probs.data() + (i - start) * classes, classes);
      const int label = tiles.labels[i];
      const float p = std::max(row[static_cast<std::size_t>(label)], std::numeric_limits<float>::min());
      loss_sum -= std::log(static_cast<double>(p));
      if (argmax(row) == label) ++correct;
    }
  }
  const double n = static_cast<double>(tiles.size());
  return {loss_sum / n, static_cast<double>(correct) / n, tiles.size()};
}

EvalResult evaluate_split(const NetworkParams<float>& params, const DatasetManifest& manifest,
                          const TileStore& store, Split which, int batch_size) {
  const LabeledTiles tiles = load_split(manifest, store, which);
  if (tiles.size() == 0) {
    throw Error(ErrorCode::EmptyDataset, "split '" + std::string(to_string(which)) + "' is empty");
  }
  return evaluate(params, tiles, manifest.channel_means, batch_size);
}

TrainResult train(const LabeledTiles& train_set, const LabeledTiles& val_set,
                  const std::array<double, 3>& channel_means, const TrainingConfig& config,
                  const Architecture& arch, std::vector<std::string> class_names, const TrainOptions& options) {
  config.validate();
  arch.validate();
  if (train_set.size() == 0) throw Error(ErrorCode::EmptyDataset, "train split is empty");
  require_labels(train_set, arch.num_classes, "train split");
  require_labels(val_set, arch.num_classes, "validation split");

  TrainResult result;
  if (options.initial_params) {
    result.params = *options.initial_params;
    if (!(result.params.arch == arch)) throw Error(ErrorCode::ArchMismatch, "initial parameters use another architecture");
    check_param_shapes(result.params);
  } else {
    result.params = init_params<float>(arch, derive_seed(config.seed, kInitStream), std::move(class_names));
  }
  if (options.snapshot_dir) std::filesystem::create_directories(*options.snapshot_dir);

  NetworkParams<float>& params = result.params;
  Layers<float> velocity = Layers<float>::zeros(arch);
  const auto momentum = static_cast<float>(config.momentum);
  const auto decay = static_cast<float>(config.weight_decay);

  std::vector<std::size_t> order(train_set.size());
  std::vector<const ImageBuffer*> batch;
  std::vector<int> labels;
  const std::size_t step = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr_value = lr_at(config, epoch);
    const auto lr = static_cast<float>(lr_value);

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(config.seed, kShuffleStream + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += step) {
      const std::size_t end = std::min(order.size(), start + step);
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&train_set.tiles[order[i]]);
        labels.push_back(train_set.labels[order[i]]);
      }
      const auto where = "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1);
      GradientResult<float> g;
      try {
        g = compute_gradients(params, preprocess(std::span<const ImageBuffer* const>(batch), channel_means), labels);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFinite) throw;
        throw Error(ErrorCode::NonFiniteLoss, where + ": " + e.detail());
      }
      if (!std::isfinite(g.loss)) throw Error(ErrorCode::NonFiniteLoss, where + ": loss is not finite");

      const auto w = params.layers.all();
      const auto v = velocity.all();
      const auto d = g.grads.all();
      for (std::size_t t = 0; t < w.size(); ++t) {
        float* wp = w[t]->data();
        float* vp = v[t]->data();
        const float* gp = d[t]->data();
        for (std::size_t k = 0, n = w[t]->size(); k < n; ++k) {
          vp[k] = momentum * vp[k] + gp[k] + decay * wp[k];
          wp[k] -= lr * vp[k];
        }
      }
      loss_sum += static_cast<double>(g.loss);
      ++batches;
      ++result.updates;
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = loss_sum / static_cast<double>(batches);
    m.lr = lr_value;
    const bool last = epoch + 1 == config.epochs;
    if (val_set.size() > 0 && ((epoch + 1) % config.validation_interval_epochs == 0 || last)) {
      const EvalResult ev = evaluate(params, val_set, channel_means, config.batch_size);
      m.val_loss = ev.loss;
      m.val_accuracy = ev.accuracy;
    }
    if (options.snapshot_dir && (epoch + 1) % config.snapshot_interval_epochs == 0) {
      const auto path = *options.snapshot_dir / snapshot_name(epoch + 1);
      save_checkpoint(params, path);
      result.snapshots.push_back(path);
    }
    result.history.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }
  return result;
}

TrainResult train(const DatasetManifest& manifest, const TileStore& store, const TrainingConfig& config,
                  const Architecture& arch, const TrainOptions& options) {
  if (arch.num_classes != static_cast<int>(manifest.classes.size())) {
    throw Error(ErrorCode::ArchMismatch, "architecture has " + std::to_string(arch.num_classes) +
                                             " classes but the manifest has " +
                                             std::to_string(manifest.classes.size()));
  }
  if (arch.input_size != manifest.tile_size) {
    throw Error(ErrorCode::ArchMismatch, "architecture input size " + std::to_string(arch.input_size) +
                                             " differs from manifest tile size " +
                                             std::to_string(manifest.tile_size));
  }
  const LabeledTiles train_set = load_split(manifest, store, Split::Train);
  const LabeledTiles val_set = load_split(manifest, store, Split::Val);
  if (train_set.size() == 0) throw Error(ErrorCode::EmptyDataset, "manifest has no train split");
  if (val_set.size() == 0) throw Error(ErrorCode::EmptyDataset, "manifest has no validation split");
  std::vector<std::string> names;
  for (const auto& c : manifest.classes) names.push_back(c.name);
  return train(train_set, val_set, manifest.channel_means, config, arch, std::move(names), options);
}

}  // namespace chopnet
