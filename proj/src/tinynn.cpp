#include "hrac/tinynn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hrac::nn {

namespace {

thread_local ReluPatternRecorder* g_recorder = nullptr;

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::Identity: break;
    case Activation::Relu:
      if (g_recorder) g_recorder->record(z);
      z = z.cwiseMax(0.0);
      break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
  }
}

// Derivative expressed through the activated output. ReLU uses 0 at the kink.
void scale_by_activation_grad(Activation act, const Matrix& out, Matrix& g) {
  switch (act) {
    case Activation::Identity: break;
    case Activation::Relu: g = (out.array() > 0.0).select(g, 0.0); break;
    case Activation::Tanh: g = (g.array() * (1.0 - out.array().square())).matrix(); break;
  }
}

// Locates a flat parameter index: (layer, offset within layer, is_bias).
struct ParamLoc {
  std::size_t layer;
  std::size_t offset;
  bool bias;
};

template <class Layers>
ParamLoc locate(const Layers& layers, std::size_t i) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto nw = static_cast<std::size_t>(layers[l].w.size());
    const auto nb = static_cast<std::size_t>(layers[l].b.size());
    if (i < nw) return {l, i, false};
    i -= nw;
    if (i < nb) return {l, i, true};
    i -= nb;
  }
  throw std::out_of_range("parameter index out of range");
}

}  // namespace

void Gradients::set_zero() {
  for (auto& m : dw) m.setZero();
  for (auto& v : db) v.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (std::size_t l = 0; l < dw.size(); ++l) {
    dw[l] += other.dw[l];
    db[l] += other.db[l];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (std::size_t l = 0; l < dw.size(); ++l) {
    dw[l] *= s;
    db[l] *= s;
  }
  return *this;
}

bool Gradients::all_finite() const {
  for (std::size_t l = 0; l < dw.size(); ++l) {
    if (!dw[l].allFinite() || !db[l].allFinite()) return false;
  }
  return true;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (std::size_t l = 0; l < dw.size(); ++l) s += dw[l].squaredNorm() + db[l].squaredNorm();
  return s;
}

DenseNet::DenseNet(const std::vector<int>& sizes, const std::vector<Activation>& activations, Rng& rng) {
  if (sizes.size() < 2 || activations.size() + 1 != sizes.size()) {
    throw std::invalid_argument("DenseNet needs sizes.size() == activations.size() + 1 >= 2");
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(double(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer{Matrix(out, in), Vector(out), activations[l]};
    // Row-major fill so the draw order matches the checkpoint layout.
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.w(r, c) = u(rng);
    }
    for (int r = 0; r < out; ++r) layer.b(r) = u(rng);
    layers_.push_back(std::move(layer));
  }
}

std::vector<int> DenseNet::sizes() const {
  std::vector<int> s{input_size()};
  for (const auto& l : layers_) s.push_back(static_cast<int>(l.w.rows()));
  return s;
}

Vector DenseNet::forward(const Vector& x) const {
  Matrix m = x;
  return forward(m).col(0);
}

Matrix DenseNet::forward(const Matrix& x) const {
  if (x.rows() != input_size()) throw std::invalid_argument("DenseNet::forward: input size mismatch");
  Matrix a = x;
  for (const auto& layer : layers_) {
    Matrix z = layer.w * a;
    z.colwise() += layer.b;
    apply_activation(layer.act, z);
    a = std::move(z);
  }
  return a;
}

Matrix DenseNet::forward(const Matrix& x, ForwardCache& cache) const {
  if (x.rows() != input_size()) throw std::invalid_argument("DenseNet::forward: input size mismatch");
  cache.inputs.resize(layers_.size());
  cache.outputs.resize(layers_.size());
  const Matrix* a = &x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cache.inputs[l] = *a;
    Matrix z = layers_[l].w * (*a);
    z.colwise() += layers_[l].b;
    apply_activation(layers_[l].act, z);
    cache.outputs[l] = std::move(z);
    a = &cache.outputs[l];
  }
  return cache.outputs.back();
}

Matrix DenseNet::backward(const ForwardCache& cache, const Matrix& upstream, Gradients* grads) const {
  if (cache.outputs.size() != layers_.size()) throw std::logic_error("backward without matching forward");
  Matrix g = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    scale_by_activation_grad(layers_[l].act, cache.outputs[l], g);
    if (grads) {
      grads->dw[l].noalias() += g * cache.inputs[l].transpose();
      grads->db[l] += g.rowwise().sum();
    }
    g = layers_[l].w.transpose() * g;
  }
  return g;
}

Gradients DenseNet::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.dw.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
    g.db.push_back(Vector::Zero(l.b.size()));
  }
  return g;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

double DenseNet::parameter(std::size_t i) const {
  return const_cast<DenseNet*>(this)->parameter(i);
}

double& DenseNet::parameter(std::size_t i) {
  const auto loc = locate(layers_, i);
  auto& layer = layers_[loc.layer];
  if (loc.bias) return layer.b(static_cast<Eigen::Index>(loc.offset));
  const auto cols = static_cast<std::size_t>(layer.w.cols());
  return layer.w(static_cast<Eigen::Index>(loc.offset / cols), static_cast<Eigen::Index>(loc.offset % cols));
}

double gradient_entry(const Gradients& g, std::size_t i) {
  for (std::size_t l = 0; l < g.dw.size(); ++l) {
    const auto nw = static_cast<std::size_t>(g.dw[l].size());
    if (i < nw) {
      const auto cols = static_cast<std::size_t>(g.dw[l].cols());
      return g.dw[l](static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols));
    }
    i -= nw;
    const auto nb = static_cast<std::size_t>(g.db[l].size());
    if (i < nb) return g.db[l](static_cast<Eigen::Index>(i));
    i -= nb;
  }
  throw std::out_of_range("gradient index out of range");
}

bool DenseNet::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

bool operator==(const DenseNet& a, const DenseNet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const auto& x = a.layers_[l];
    const auto& y = b.layers_[l];
    if (x.act != y.act || x.w.rows() != y.w.rows() || x.w.cols() != y.w.cols()) return false;
    if (x.w != y.w || x.b != y.b) return false;
  }
  return true;
}

AdamState::AdamState(const DenseNet& net, AdamOptions options)
    : opts(options), m(net.zero_gradients()), v(net.zero_gradients()) {}

void adam_step(DenseNet& net, const Gradients& grads, AdamState& state) {
  auto& layers = net.layers();
  if (state.m.dw.size() != layers.size()) throw std::invalid_argument("Adam state does not match network");
  ++state.step;
  const auto& o = state.opts;
  const double c1 = 1.0 - std::pow(o.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, double(state.step));
  const double b1 = o.beta1, b2 = o.beta2, step_size = o.lr / c1, inv_c2 = 1.0 / c2, eps = o.eps;
  // Single fused pass per tensor.
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    double* p = param.data();
    double* pm = m.data();
    double* pv = v.data();
    const double* pg = g.data();
    const Eigen::Index n = param.size();
#pragma omp simd
    for (Eigen::Index i = 0; i < n; ++i) {
      const double gi = pg[i];
      const double mi = b1 * pm[i] + (1.0 - b1) * gi;
      const double vi = b2 * pv[i] + (1.0 - b2) * gi * gi;
      pm[i] = mi;
      pv[i] = vi;
      p[i] -= step_size * mi / (std::sqrt(vi * inv_c2) + eps);
    }
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].w, grads.dw[l], state.m.dw[l], state.v.dw[l]);
    update(layers[l].b, grads.db[l], state.m.db[l], state.v.db[l]);
  }
}

void soft_update(DenseNet& target, const DenseNet& online, double tau) {
  auto& t = target.layers();
  const auto& o = online.layers();
  if (t.size() != o.size()) throw std::invalid_argument("soft_update: shape mismatch");
  for (std::size_t l = 0; l < t.size(); ++l) {
    t[l].w = tau * o[l].w + (1.0 - tau) * t[l].w;
    t[l].b = tau * o[l].b + (1.0 - tau) * t[l].b;
  }
}

double mse(const Matrix& pred, const Matrix& target, Matrix* grad) {
  const Matrix diff = pred - target;
  const double n = double(diff.size());
  if (grad) *grad = (2.0 / n) * diff;
  return diff.squaredNorm() / n;
}

namespace {

constexpr char kMagic[6] = {'H', 'R', 'A', 'C', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated network checkpoint");
  return v;
}

}  // namespace

void save(const DenseNet& net, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.cols()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.rows()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(l.act));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) put<double>(out, l.w(r, c));
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) put<double>(out, l.b(r));
  }
}

DenseNet load(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("not a network checkpoint");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  const auto n_layers = get<std::uint32_t>(in);
  DenseNet net;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto cols = get<std::uint32_t>(in);
    const auto rows = get<std::uint32_t>(in);
    const auto act = get<std::uint8_t>(in);
    if (act > 2) throw std::runtime_error("bad activation code in checkpoint");
    if (!net.layers().empty() && net.layers().back().w.rows() != cols) {
      throw std::runtime_error("checkpoint layer shapes do not chain");
    }
    Layer layer{Matrix(rows, cols), Vector(rows), static_cast<Activation>(act)};
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) layer.w(r, c) = get<double>(in);
    }
    for (std::uint32_t r = 0; r < rows; ++r) layer.b(r) = get<double>(in);
    net.layers().push_back(std::move(layer));
  }
  return net;
}

void save(const DenseNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save(net, out);
}

DenseNet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load(in);
}

ReluPatternRecorder::ReluPatternRecorder() : previous_(g_recorder) { g_recorder = this; }
ReluPatternRecorder::~ReluPatternRecorder() { g_recorder = previous_; }
ReluPatternRecorder* ReluPatternRecorder::active() { return g_recorder; }

void ReluPatternRecorder::record(const Matrix& pre_activation) {
  for (Eigen::Index i = 0; i < pre_activation.size(); ++i) bits_.push_back(pre_activation.data()[i] > 0.0);
}

// Central differences carry roughly 1e-11 of roundoff at h = 1e-5; a floor well
// above that keeps exactly-zero gradients from reading as large relative errors.
constexpr double kGradientFloor = 1e-6;

GradientCheckResult check_gradients(const DenseNet& net, const Gradients& analytic, const LossFn& loss,
                                    const std::vector<std::size_t>& indices, double h) {
  GradientCheckResult res;
  DenseNet probe = net;
  for (std::size_t idx : indices) {
    double& p = probe.parameter(idx);
    const double saved = p;
    ReluPatternRecorder rec;
    p = saved + h;
    const double plus = loss(probe);
    const auto pattern_plus = rec.pattern();
    rec.clear();
    p = saved - h;
    const double minus = loss(probe);
    const bool kink = rec.pattern() != pattern_plus;
    p = saved;
    if (kink) {
      ++res.kinks;
      continue;
    }
    const double fd = (plus - minus) / (2.0 * h);
    const double a = gradient_entry(analytic, idx);
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), kGradientFloor});
    ++res.checked;
    if (rel > res.max_relative_error) {
      res.max_relative_error = rel;
      res.worst_index = idx;
    }
  }
  return res;
}

}  // namespace hrac::nn
