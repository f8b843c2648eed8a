#include "chopnet/network.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "chopnet/error.hpp"
#include "chopnet/rng.hpp"

namespace chopnet {

namespace {

template <typename T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatrixR<T>>;
template <typename T>
using ConstMapR = Eigen::Map<const MatrixR<T>>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using ConstMapV = Eigen::Map<const Vector<T>>;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

struct Geometry {
  std::size_t channels, in, k, f1, o1, p1, q1, f2, o2, p2, q2, kk1, kk2, fc_in, hidden, classes;

  explicit Geometry(const Architecture& a)
      : channels(sz(a.input_channels)),
        in(sz(a.input_size)),
        k(sz(Architecture::kKernel)),
        f1(sz(Architecture::kConv1Filters)),
        o1(sz(a.conv1_out())),
        p1(o1 * o1),
        q1(sz(a.pool1_out())),
        f2(sz(Architecture::kConv2Filters)),
        o2(sz(a.conv2_out())),
        p2(o2 * o2),
        q2(sz(a.pool2_out())),
        kk1(channels * k * k),
        kk2(f1 * k * k),
        fc_in(sz(a.fc1_inputs())),
        hidden(sz(Architecture::kFc1Units)),
        classes(sz(a.num_classes)) {}
};

// col[(c*k + ky)*k + kx][oy*out + ox] = in[c][oy + ky][ox + kx]
template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t size, std::size_t k, std::size_t out, T* col) {
  const std::size_t plane = out * out;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < out; ++oy) {
          const T* src = in + c * size * size + (oy + ky) * size + kx;
          std::copy(src, src + out, dst + oy * out);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t size, std::size_t k, std::size_t out, T* in) {
  const std::size_t plane = out * out;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < out; ++oy) {
          T* dst = in + c * size * size + (oy + ky) * size + kx;
          const T* row = src + oy * out;
          for (std::size_t ox = 0; ox < out; ++ox) dst[ox] += row[ox];
        }
      }
    }
  }
}

// Non-overlapping max pooling; the first maximum in scan order wins. `arg`
// receives the within-sample offset of each winner in the input map.
template <typename T>
void max_pool(const T* in, std::size_t channels, std::size_t size, std::size_t pooled, T* out,
              std::int32_t* arg) {
  const std::size_t p = sz(Architecture::kPool);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = in + c * size * size;
    for (std::size_t py = 0; py < pooled; ++py) {
      for (std::size_t px = 0; px < pooled; ++px) {
        std::size_t best = (py * p) * size + px * p;
        for (std::size_t dy = 0; dy < p; ++dy) {
          for (std::size_t dx = 0; dx < p; ++dx) {
            const std::size_t at = (py * p + dy) * size + px * p + dx;
            if (plane[at] > plane[best]) best = at;
          }
        }
        const std::size_t o = (c * pooled + py) * pooled + px;
        out[o] = plane[best];
        arg[o] = static_cast<std::int32_t>(c * size * size + best);
      }
    }
  }
}

template <typename T>
Tensor<T> make(std::initializer_list<int> dims) {
  std::vector<std::size_t> shape;
  for (const int d : dims) shape.push_back(sz(d));
  return Tensor<T>(std::move(shape));
}

void check_batch_shape(const Architecture& arch, const std::vector<std::size_t>& shape) {
  const bool ok = shape.size() == 4 && shape[0] >= 1 && shape[1] == sz(arch.input_channels) &&
                  shape[2] == sz(arch.input_size) && shape[3] == sz(arch.input_size);
  if (!ok) {
    throw Error(ErrorCode::ShapeMismatch, "batch must be N x " + std::to_string(arch.input_channels) + " x " +
                                              std::to_string(arch.input_size) + " x " +
                                              std::to_string(arch.input_size));
  }
}

}  // namespace

void Architecture::validate() const {
  if (input_channels < 1 || num_classes < 1 || input_size < 1 || conv1_out() < 1 || pool1_out() < 1 ||
      conv2_out() < 1 || pool2_out() < 1) {
    throw Error(ErrorCode::InvalidArchitecture,
                "input " + std::to_string(input_size) + "x" + std::to_string(input_size) + "x" +
                    std::to_string(input_channels) + " with " + std::to_string(num_classes) +
                    " classes leaves a non-positive layer extent (input size must be at least 16)");
  }
}

std::size_t Architecture::parameter_count() const {
  validate();
  const std::size_t k2 = sz(kKernel * kKernel);
  return sz(kConv1Filters) * sz(input_channels) * k2 + sz(kConv1Filters) +
         sz(kConv2Filters) * sz(kConv1Filters) * k2 + sz(kConv2Filters) +
         sz(fc1_inputs()) * sz(kFc1Units) + sz(kFc1Units) + sz(kFc1Units) * sz(num_classes) + sz(num_classes);
}

template <typename T>
Layers<T> Layers<T>::zeros(const Architecture& arch) {
  arch.validate();
  constexpr int k = Architecture::kKernel;
  Layers<T> l;
  l.conv1_w = make<T>({Architecture::kConv1Filters, arch.input_channels, k, k});
  l.conv1_b = make<T>({Architecture::kConv1Filters});
  l.conv2_w = make<T>({Architecture::kConv2Filters, Architecture::kConv1Filters, k, k});
  l.conv2_b = make<T>({Architecture::kConv2Filters});
  l.fc1_w = make<T>({Architecture::kFc1Units, arch.fc1_inputs()});
  l.fc1_b = make<T>({Architecture::kFc1Units});
  l.fc2_w = make<T>({arch.num_classes, Architecture::kFc1Units});
  l.fc2_b = make<T>({arch.num_classes});
  return l;
}

std::vector<std::string> default_class_names(int num_classes) {
  if (num_classes == 4) return {"POL", "TRA", "HYP", "NOM"};
  std::vector<std::string> names;
  for (int i = 0; i < num_classes; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

template <typename T>
NetworkParams<T> zero_params(const Architecture& arch, std::vector<std::string> class_names) {
  arch.validate();
  if (class_names.empty()) class_names = default_class_names(arch.num_classes);
  if (class_names.size() != sz(arch.num_classes)) {
    throw Error(ErrorCode::InvalidArchitecture, "class name table does not match num_classes");
  }
  return {arch, std::move(class_names), Layers<T>::zeros(arch)};
}

template <typename T>
NetworkParams<T> init_params(const Architecture& arch, std::uint64_t seed, std::vector<std::string> class_names) {
  NetworkParams<T> p = zero_params<T>(arch, std::move(class_names));
  Rng rng(seed);
  const auto glorot = [&rng](Tensor<T>& w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  };
  const double k2 = Architecture::kKernel * Architecture::kKernel;
  glorot(p.layers.conv1_w, arch.input_channels * k2, Architecture::kConv1Filters * k2);
  glorot(p.layers.conv2_w, Architecture::kConv1Filters * k2, Architecture::kConv2Filters * k2);
  glorot(p.layers.fc1_w, arch.fc1_inputs(), Architecture::kFc1Units);
  glorot(p.layers.fc2_w, Architecture::kFc1Units, arch.num_classes);
  return p;
}

template <typename To, typename From>
NetworkParams<To> convert_params(const NetworkParams<From>& params) {
  NetworkParams<To> out = zero_params<To>(params.arch, params.class_names);
  const auto src = params.layers.all();
  const auto dst = out.layers.all();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::transform(src[i]->values().begin(), src[i]->values().end(), dst[i]->values().begin(),
                   [](From v) { return static_cast<To>(v); });
  }
  return out;
}

template <typename T>
void check_param_shapes(const NetworkParams<T>& params) {
  const Layers<T> expected = Layers<T>::zeros(params.arch);
  const auto have = params.layers.all();
  const auto want = expected.all();
  for (std::size_t i = 0; i < have.size(); ++i) {
    if (have[i]->shape() != want[i]->shape()) {
      throw Error(ErrorCode::ShapeMismatch, std::string("parameter ") + Layers<T>::kNames[i] +
                                                " does not match the architecture");
    }
  }
  if (params.class_names.size() != sz(params.arch.num_classes)) {
    throw Error(ErrorCode::ShapeMismatch, "class name table does not match num_classes");
  }
}

template <typename T>
ForwardCache<T> forward_cached(const NetworkParams<T>& params, const Tensor<T>& batch) {
  check_param_shapes(params);
  check_batch_shape(params.arch, batch.shape());
  batch.require_finite("input batch");

  const Geometry g(params.arch);
  const std::size_t n_batch = batch.dim(0);
  const Layers<T>& L = params.layers;

  ForwardCache<T> c;
  c.batch = n_batch;
  c.cols1.resize(n_batch * g.kk1 * g.p1);
  c.conv1.resize(n_batch * g.f1 * g.p1);
  c.pool1.resize(n_batch * g.f1 * g.q1 * g.q1);
  c.pool1_arg.resize(c.pool1.size());
  c.cols2.resize(n_batch * g.kk2 * g.p2);
  c.conv2.resize(n_batch * g.f2 * g.p2);
  c.pool2.resize(n_batch * g.fc_in);
  c.pool2_arg.resize(c.pool2.size());
  c.fc1_pre.resize(n_batch * g.hidden);
  c.fc1_act.resize(n_batch * g.hidden);
  c.logits = make<T>({static_cast<int>(n_batch), params.arch.num_classes});
  c.probs = c.logits;

  const ConstMapR<T> w1(L.conv1_w.data(), g.f1, g.kk1);
  const ConstMapR<T> w2(L.conv2_w.data(), g.f2, g.kk2);
  const ConstMapR<T> wf1(L.fc1_w.data(), g.hidden, g.fc_in);
  const ConstMapR<T> wf2(L.fc2_w.data(), g.classes, g.hidden);
  const ConstMapV<T> bf1(L.fc1_b.data(), g.hidden);
  const ConstMapV<T> bf2(L.fc2_b.data(), g.classes);

  // Aligned scratch so the matrix-vector kernels see identical operand
  // alignment for every sample regardless of its position in the batch.
  Vector<T> x(g.fc_in), h(g.hidden), z(g.hidden), logits(g.classes);

  const std::size_t in_plane = g.channels * g.in * g.in;
  for (std::size_t n = 0; n < n_batch; ++n) {
    T* col1 = c.cols1.data() + n * g.kk1 * g.p1;
    im2col(batch.data() + n * in_plane, g.channels, g.in, g.k, g.o1, col1);
    MapR<T> out1(c.conv1.data() + n * g.f1 * g.p1, g.f1, g.p1);
    out1.noalias() = w1 * ConstMapR<T>(col1, g.kk1, g.p1);
    for (std::size_t f = 0; f < g.f1; ++f) out1.row(f).array() += L.conv1_b[f];
    T* pooled1 = c.pool1.data() + n * g.f1 * g.q1 * g.q1;
    max_pool(out1.data(), g.f1, g.o1, g.q1, pooled1, c.pool1_arg.data() + n * g.f1 * g.q1 * g.q1);

    T* col2 = c.cols2.data() + n * g.kk2 * g.p2;
    im2col(pooled1, g.f1, g.q1, g.k, g.o2, col2);
    MapR<T> out2(c.conv2.data() + n * g.f2 * g.p2, g.f2, g.p2);
    out2.noalias() = w2 * ConstMapR<T>(col2, g.kk2, g.p2);
    for (std::size_t f = 0; f < g.f2; ++f) out2.row(f).array() += L.conv2_b[f];
    T* pooled2 = c.pool2.data() + n * g.fc_in;
    max_pool(out2.data(), g.f2, g.o2, g.q2, pooled2, c.pool2_arg.data() + n * g.fc_in);

    std::copy(pooled2, pooled2 + g.fc_in, x.data());
    z.noalias() = wf1 * x;
    z += bf1;
    h = z.cwiseMax(T(0));
    std::copy(z.data(), z.data() + g.hidden, c.fc1_pre.data() + n * g.hidden);
    std::copy(h.data(), h.data() + g.hidden, c.fc1_act.data() + n * g.hidden);
    logits.noalias() = wf2 * h;
    logits += bf2;
    std::copy(logits.data(), logits.data() + g.classes, c.logits.data() + n * g.classes);
  }
  c.logits.require_finite("logits");

  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* zrow = c.logits.data() + n * g.classes;
    T* prow = c.probs.data() + n * g.classes;
    const T zmax = *std::max_element(zrow, zrow + g.classes);
    T total = 0;
    for (std::size_t j = 0; j < g.classes; ++j) {
      prow[j] = std::exp(zrow[j] - zmax);
      total += prow[j];
    }
    for (std::size_t j = 0; j < g.classes; ++j) prow[j] /= total;
  }
  return c;
}

template <typename T>
ForwardResult<T> forward(const NetworkParams<T>& params, const Tensor<T>& batch) {
  ForwardCache<T> c = forward_cached(params, batch);
  return {std::move(c.logits), std::move(c.probs)};
}

template <typename T>
T loss(const Tensor<T>& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size() || labels.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "probabilities and labels disagree on batch size");
  }
  const std::size_t classes = probs.dim(1);
  double total = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int label = labels[n];
    if (label < 0 || sz(label) >= classes) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    const T p = std::max(probs[n * classes + sz(label)], std::numeric_limits<T>::min());
    total -= std::log(static_cast<double>(p));
  }
  return static_cast<T>(total / static_cast<double>(labels.size()));
}

template <typename T>
GradientResult<T> compute_gradients(const NetworkParams<T>& params, const Tensor<T>& batch,
                                    std::span<const int> labels) {
  ForwardCache<T> c = forward_cached(params, batch);
  GradientResult<T> r;
  r.loss = loss(c.probs, labels);

  const Geometry g(params.arch);
  const std::size_t n_batch = c.batch;
  const Layers<T>& L = params.layers;
  Gradients<T> grads = Layers<T>::zeros(params.arch);

  MatrixR<T> dlogits = ConstMapR<T>(c.probs.data(), n_batch, g.classes);
  for (std::size_t n = 0; n < n_batch; ++n) dlogits(static_cast<Eigen::Index>(n), labels[n]) -= T(1);
  dlogits /= static_cast<T>(n_batch);

  const ConstMapR<T> act(c.fc1_act.data(), n_batch, g.hidden);
  const ConstMapR<T> pre(c.fc1_pre.data(), n_batch, g.hidden);
  const ConstMapR<T> feat(c.pool2.data(), n_batch, g.fc_in);

  MapR<T>(grads.fc2_w.data(), g.classes, g.hidden).noalias() = dlogits.transpose() * act;
  MapR<T>(grads.fc2_b.data(), 1, g.classes) = dlogits.colwise().sum();

  MatrixR<T> dpre = dlogits * ConstMapR<T>(L.fc2_w.data(), g.classes, g.hidden);
  dpre = dpre.cwiseProduct((pre.array() > T(0)).template cast<T>().matrix());

  MapR<T>(grads.fc1_w.data(), g.hidden, g.fc_in).noalias() = dpre.transpose() * feat;
  MapR<T>(grads.fc1_b.data(), 1, g.hidden) = dpre.colwise().sum();

  const MatrixR<T> dfeat = dpre * ConstMapR<T>(L.fc1_w.data(), g.hidden, g.fc_in);

  AlignedVector<T> dconv2(c.conv2.size(), T(0));
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t i = 0; i < g.fc_in; ++i) {
      dconv2[n * g.f2 * g.p2 + sz(c.pool2_arg[n * g.fc_in + i])] += dfeat(static_cast<Eigen::Index>(n),
                                                                            static_cast<Eigen::Index>(i));
    }
  }

  MapR<T> gw2(grads.conv2_w.data(), g.f2, g.kk2);
  MapR<T> gw1(grads.conv1_w.data(), g.f1, g.kk1);
  const ConstMapR<T> w2(L.conv2_w.data(), g.f2, g.kk2);
  const std::size_t q1_plane = g.f1 * g.q1 * g.q1;
  AlignedVector<T> dpool1(n_batch * q1_plane, T(0));
  MatrixR<T> dcol(g.kk2, g.p2);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const ConstMapR<T> dout(dconv2.data() + n * g.f2 * g.p2, g.f2, g.p2);
    const ConstMapR<T> col(c.cols2.data() + n * g.kk2 * g.p2, g.kk2, g.p2);
    gw2.noalias() += dout * col.transpose();
    for (std::size_t f = 0; f < g.f2; ++f) grads.conv2_b[f] += dout.row(static_cast<Eigen::Index>(f)).sum();
    dcol.noalias() = w2.transpose() * dout;
    col2im_add(dcol.data(), g.f1, g.q1, g.k, g.o2, dpool1.data() + n * q1_plane);
  }

  AlignedVector<T> dconv1(c.conv1.size(), T(0));
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t i = 0; i < q1_plane; ++i) {
      dconv1[n * g.f1 * g.p1 + sz(c.pool1_arg[n * q1_plane + i])] += dpool1[n * q1_plane + i];
    }
  }
  for (std::size_t n = 0; n < n_batch; ++n) {
    const ConstMapR<T> dout(dconv1.data() + n * g.f1 * g.p1, g.f1, g.p1);
    const ConstMapR<T> col(c.cols1.data() + n * g.kk1 * g.p1, g.kk1, g.p1);
    gw1.noalias() += dout * col.transpose();
    for (std::size_t f = 0; f < g.f1; ++f) grads.conv1_b[f] += dout.row(static_cast<Eigen::Index>(f)).sum();
  }

  for (std::size_t i = 0; i < 8; ++i) grads.all()[i]->require_finite(std::string("gradient ") + Layers<T>::kNames[i]);
  r.probs = std::move(c.probs);
  r.grads = std::move(grads);
  return r;
}

template <typename T>
Gradients<T> backward(const NetworkParams<T>& params, const Tensor<T>& batch, std::span<const int> labels) {
  return compute_gradients(params, batch, labels).grads;
}

#define CHOPNET_INSTANTIATE(T)                                                                             \
  template struct Layers<T>;                                                                               \
  template NetworkParams<T> init_params<T>(const Architecture&, std::uint64_t, std::vector<std::string>); \
  template NetworkParams<T> zero_params<T>(const Architecture&, std::vector<std::string>);                \
  template void check_param_shapes<T>(const NetworkParams<T>&);                                            \
  template ForwardCache<T> forward_cached<T>(const NetworkParams<T>&, const Tensor<T>&);                   \
  template ForwardResult<T> forward<T>(const NetworkParams<T>&, const Tensor<T>&);                         \
  template T loss<T>(const Tensor<T>&, std::span<const int>);                                              \
  template GradientResult<T> compute_gradients<T>(const NetworkParams<T>&, const Tensor<T>&,               \
                                                  std::span<const int>);                                   \
  template Gradients<T> backward<T>(const NetworkParams<T>&, const Tensor<T>&, std::span<const int>);

CHOPNET_INSTANTIATE(float)
CHOPNET_INSTANTIATE(double)
#undef CHOPNET_INSTANTIATE

template NetworkParams<double> convert_params<double, float>(const NetworkParams<float>&);
template NetworkParams<float> convert_params<float, double>(const NetworkParams<double>&);
template NetworkParams<float> convert_params<float, float>(const NetworkParams<float>&);
template NetworkParams<double> convert_params<double, double>(const NetworkParams<double>&);

}  // namespace chopnet
