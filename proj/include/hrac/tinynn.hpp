#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "hrac/gridworld.hpp"

namespace hrac::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { Identity = 0, Relu = 1, Tanh = 2 };

struct Layer {
  Matrix w;  // out x in
  Vector b;
  Activation act = Activation::Identity;
};

/// Parameter-shaped tensors, one weight/bias pair per layer.
struct Gradients {
  std::vector<Matrix> dw;
  std::vector<Vector> db;

  void set_zero();
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
  bool all_finite() const;
  double squared_norm() const;
};

/// Activations kept by a batched forward pass for the matching backward pass.
/// inputs[l] feeds layer l; outputs[l] is its activated result.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

/// Fully connected chain. Batches are column-major: one sample per column.
class DenseNet {
 public:
  DenseNet() = default;
  /// sizes has one more entry than activations. Weights and biases are drawn
  /// uniformly from +-1/sqrt(fan_in).
  DenseNet(const std::vector<int>& sizes, const std::vector<Activation>& activations, Rng& rng);

  int input_size() const { return static_cast<int>(layers_.front().w.cols()); }
  int output_size() const { return static_cast<int>(layers_.back().w.rows()); }
  std::vector<int> sizes() const;

  Vector forward(const Vector& x) const;
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, ForwardCache& cache) const;

  /// Reverse pass for upstream = dLoss/dOutput. Accumulates parameter gradients
  /// into `grads` (when non-null) and returns dLoss/dInput.
  Matrix backward(const ForwardCache& cache, const Matrix& upstream, Gradients* grads) const;

  Gradients zero_gradients() const;

  std::size_t parameter_count() const;
  double parameter(std::size_t i) const;
  double& parameter(std::size_t i);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  bool all_finite() const;

  friend bool operator==(const DenseNet& a, const DenseNet& b);

 private:
  std::vector<Layer> layers_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions opts;
  std::int64_t step = 0;
  Gradients m;
  Gradients v;

  AdamState() = default;
  AdamState(const DenseNet& net, AdamOptions options);
};

/// Bias-corrected Adam update (descent on grads).
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state);

/// target <- tau * online + (1 - tau) * target, parameter-wise.
void soft_update(DenseNet& target, const DenseNet& online, double tau);

/// Mean squared error over all entries; returns the loss and writes dLoss/dPred.
double mse(const Matrix& pred, const Matrix& target, Matrix* grad);

// Checkpoint: "HRACNN" magic, u32 version, u32 layer count, then per layer
// u32 in, u32 out, u8 activation, weights row-major, biases; all little-endian f64.
void save(const DenseNet& net, std::ostream& out);
DenseNet load(std::istream& in);
void save(const DenseNet& net, const std::filesystem::path& path);
DenseNet load(const std::filesystem::path& path);

/// Records the sign pattern of every ReLU pre-activation computed by
/// DenseNet::forward on this thread while alive.
class ReluPatternRecorder {
 public:
  ReluPatternRecorder();
  ~ReluPatternRecorder();
  ReluPatternRecorder(const ReluPatternRecorder&) = delete;
  ReluPatternRecorder& operator=(const ReluPatternRecorder&) = delete;

  const std::vector<bool>& pattern() const { return bits_; }
  void clear() { bits_.clear(); }
  void record(const Matrix& pre_activation);

  static ReluPatternRecorder* active();

 private:
  std::vector<bool> bits_;
  ReluPatternRecorder* previous_;
};

struct GradientCheckResult {
  std::size_t checked = 0;
  /// Parameters skipped because the +-h evaluations straddle a ReLU kink.
  std::size_t kinks = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

using LossFn = std::function<double(const DenseNet&)>;

/// Central differences for the listed parameter indices, compared against
/// `analytic` with |a - fd| / max(|a|, |fd|, 1e-6).
GradientCheckResult check_gradients(const DenseNet& net, const Gradients& analytic, const LossFn& loss,
                                    const std::vector<std::size_t>& indices, double h = 1e-5);

/// Flattened value of a parameter-shaped gradient, same ordering as DenseNet::parameter.
double gradient_entry(const Gradients& g, std::size_t i);

}  // namespace hrac::nn
