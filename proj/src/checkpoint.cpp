#include <bit>
#include <algorithm>
#include <cstring>
#include <string>

#include "chopnet/error.hpp"
#include "chopnet/image.hpp"
#include "chopnet/network.hpp"

namespace chopnet {

namespace {

constexpr char kMagic[4] = {'C', 'H', 'O', 'P'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::TruncatedFile, std::string("checkpoint ends inside ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const NetworkParams<float>& params) {
  check_param_shapes(params);
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.arch.input_size));
  w.u32(static_cast<std::uint32_t>(params.arch.input_channels));
  w.u32(static_cast<std::uint32_t>(params.arch.num_classes));
  for (const auto& name : params.class_names) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
  }
  for (const Tensor<float>* t : params.layers.all()) {
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (const std::size_t d : t->shape()) w.u32(static_cast<std::uint32_t>(d));
    for (const float v : t->values()) w.f32(v);
  }
  return w.take();
}

NetworkParams<float> parse_checkpoint(std::span<const std::uint8_t> bytes, const std::optional<Architecture>& expected) {
  // A short file whose leading bytes already disagree is not ours at all.
  if (std::memcmp(bytes.data(), kMagic, std::min<std::size_t>(bytes.size(), 4)) != 0) {
    throw Error(ErrorCode::BadMagic, "not a chopnet checkpoint (magic bytes differ)");
  }
  Reader r(bytes);
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "checkpoint version " + std::to_string(version) +
                                                   " (supported: " + std::to_string(kCheckpointVersion) + ")");
  }
  Architecture arch;
  arch.input_size = static_cast<int>(r.u32("header"));
  arch.input_channels = static_cast<int>(r.u32("header"));
  arch.num_classes = static_cast<int>(r.u32("header"));
  if (arch.input_size > 1 << 16 || arch.input_channels > 1 << 16 || arch.num_classes > 1 << 16) {
    throw Error(ErrorCode::CorruptCheckpoint, "implausible architecture header");
  }
  try {
    arch.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptCheckpoint, e.detail());
  }

  std::vector<std::string> names;
  for (int i = 0; i < arch.num_classes; ++i) {
    const std::uint32_t len = r.u32("class names");
    const auto text = r.take(len, "class names");
    names.emplace_back(reinterpret_cast<const char*>(text.data()), text.size());
  }

  NetworkParams<float> params = zero_params<float>(arch, std::move(names));
  const auto tensors = params.layers.all();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor<float>& t = *tensors[i];
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank != t.rank()) {
      throw Error(ErrorCode::ArchMismatch, std::string("tensor ") + Layers<float>::kNames[i] +
                                               " rank disagrees with the header architecture");
    }
    for (std::size_t d = 0; d < rank; ++d) {
      if (r.u32("tensor dims") != t.dim(d)) {
        throw Error(ErrorCode::ArchMismatch, std::string("tensor ") + Layers<float>::kNames[i] +
                                                 " shape disagrees with the header architecture");
      }
    }
    const auto raw = r.take(t.size() * 4, "tensor data");
    for (std::size_t k = 0; k < t.size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[k * 4 + static_cast<std::size_t>(b)]) << (8 * b);
      t[k] = std::bit_cast<float>(bits);
    }
    if (!t.all_finite()) {
      throw Error(ErrorCode::CorruptCheckpoint, std::string("tensor ") + Layers<float>::kNames[i] + " holds NaN or Inf");
    }
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, std::to_string(r.remaining()) + " trailing bytes after the last tensor");
  }
  if (expected && !(*expected == arch)) {
    throw Error(ErrorCode::ArchMismatch,
                "checkpoint is " + std::to_string(arch.input_size) + "x" + std::to_string(arch.input_size) + "x" +
                    std::to_string(arch.input_channels) + " with " + std::to_string(arch.num_classes) +
                    " classes; expected " + std::to_string(expected->input_size) + "x" +
                    std::to_string(expected->input_size) + "x" + std::to_string(expected->input_channels) + " with " +
                    std::to_string(expected->num_classes) + " classes");
  }
  return params;
}

void save_checkpoint(const NetworkParams<float>& params, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(params));
}

NetworkParams<float> load_checkpoint(const std::filesystem::path& path, const std::optional<Architecture>& expected) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_checkpoint(bytes, expected);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

}  // namespace chopnet
