#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hfz {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Discrete distribution over N classes.
using Posterior = Eigen::VectorXd;

/// Floor added inside the log of cross_entropy.
inline constexpr double kLossEpsilon = 1e-12;

// ---------------------------------------------------------------------------
// Activations and losses
// ---------------------------------------------------------------------------

/// Softmax of a logit vector (any shape is read as a flat vector).
/// Uses max-subtraction so logits of any finite magnitude are safe.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) {
    throw std::invalid_argument("softmax: empty logit vector");
  }
  const Scalar peak = logits.maxCoeff();
  Vector<Scalar> shifted = (logits.reshaped().array() - peak).exp().matrix();
  return shifted / shifted.sum();
}

/// -log(pred[label] + 1e-12), clamped at zero.
template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& pred, Index label) {
  using Scalar = typename Derived::Scalar;
  if (label < 0 || label >= pred.size()) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(pred.size()) + " classes");
  }
  const Scalar loss = -std::log(pred.reshaped()(label) + Scalar(kLossEpsilon));
  return loss > Scalar(0) ? loss : Scalar(0);
}

/// Gradient of cross_entropy(softmax(z), label) with respect to z: pred - onehot(label).
template <typename Derived>
Vector<typename Derived::Scalar> softmax_cross_entropy_grad(const Eigen::MatrixBase<Derived>& pred,
                                                            Index label) {
  if (label < 0 || label >= pred.size()) {
    throw std::invalid_argument("softmax_cross_entropy_grad: label out of range");
  }
  Vector<typename Derived::Scalar> grad = pred.reshaped();
  grad(label) -= 1;
  return grad;
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

template <typename Derived>
Matrix<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// Masks the upstream gradient by the sign of the rectifier's input.
template <typename DerivedIn, typename DerivedUp>
Matrix<typename DerivedIn::Scalar> relu_backward(const Eigen::MatrixBase<DerivedIn>& pre,
                                                 const Eigen::MatrixBase<DerivedUp>& upstream) {
  using Scalar = typename DerivedIn::Scalar;
  return (pre.array() > Scalar(0)).select(upstream.array(), Scalar(0)).matrix();
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weights;  // [in, out]
  RowVector<Scalar> bias;  // [out]

  Index inputs() const { return weights.rows(); }
  Index outputs() const { return weights.cols(); }
};

template <typename Scalar>
struct DenseGradients {
  Matrix<Scalar> weights;
  RowVector<Scalar> bias;
  Matrix<Scalar> input;
};

/// y = x W + b for a batch x of shape [batch, in].
template <typename DerivedX, typename DerivedW, typename DerivedB>
Matrix<typename DerivedX::Scalar> dense_forward(const Eigen::MatrixBase<DerivedX>& input,
                                                const Eigen::MatrixBase<DerivedW>& weights,
                                                const Eigen::MatrixBase<DerivedB>& bias) {
  if (input.cols() != weights.rows() || bias.size() != weights.cols()) {
    throw std::invalid_argument("dense_forward: shape mismatch (input " +
                                std::to_string(input.cols()) + ", weights " +
                                std::to_string(weights.rows()) + "x" +
                                std::to_string(weights.cols()) + ", bias " +
                                std::to_string(bias.size()) + ")");
  }
  Matrix<typename DerivedX::Scalar> out = input * weights;
  out.rowwise() += bias.reshaped().transpose();
  return out;
}

template <typename Scalar, typename DerivedX>
Matrix<Scalar> dense_forward(const DenseLayer<Scalar>& layer, const Eigen::MatrixBase<DerivedX>& input) {
  return dense_forward(input, layer.weights, layer.bias);
}

template <typename DerivedX, typename DerivedW, typename DerivedU>
DenseGradients<typename DerivedX::Scalar> dense_backward(const Eigen::MatrixBase<DerivedX>& input,
                                                         const Eigen::MatrixBase<DerivedW>& weights,
                                                         const Eigen::MatrixBase<DerivedU>& upstream) {
  if (upstream.rows() != input.rows() || upstream.cols() != weights.cols() ||
      input.cols() != weights.rows()) {
    throw std::invalid_argument("dense_backward: shape mismatch");
  }
  DenseGradients<typename DerivedX::Scalar> g;
  g.weights = input.transpose() * upstream;
  g.bias = upstream.colwise().sum();
  g.input = upstream * weights.transpose();
  return g;
}

template <typename Scalar, typename DerivedX, typename DerivedU>
DenseGradients<Scalar> dense_backward(const DenseLayer<Scalar>& layer,
                                      const Eigen::MatrixBase<DerivedX>& input,
                                      const Eigen::MatrixBase<DerivedU>& upstream) {
  return dense_backward(input, layer.weights, upstream);
}

// ---------------------------------------------------------------------------
// Named parameter storage
// ---------------------------------------------------------------------------

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<Index> shape;
  Eigen::VectorXd data;

  Tensor() = default;
  explicit Tensor(std::vector<Index> dims);

  Index size() const { return data.size(); }
  /// Product of all but the last dimension; 1 for rank-1 tensors.
  Index leading() const;
  Index trailing() const { return shape.empty() ? 0 : shape.back(); }

  friend bool operator==(const Tensor& a, const Tensor& b);
};

/// Ordered collection of named tensors: every trainable weight of one model.
class ModelParams {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    friend bool operator==(const Entry& a, const Entry& b) {
      return a.name == b.name && a.tensor == b.tensor;
    }
  };

  using MatrixMap = Eigen::Map<RowMajorMatrix<double>>;
  using ConstMatrixMap = Eigen::Map<const RowMajorMatrix<double>>;

  /// Appends a zero tensor. Names must be unique.
  Tensor& add(std::string name, std::vector<Index> shape);
  Tensor& add(std::string name, Tensor tensor);

  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  /// Row-major [leading, trailing] view of a tensor.
  MatrixMap matrix(std::string_view name);
  ConstMatrixMap matrix(std::string_view name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  Index total_size() const;

  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

  ModelParams zeros_like() const;
  bool same_layout(const ModelParams& other) const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;
  std::uint64_t step_count = 0;

  static AdamState zeros_like(const ModelParams& params);
};

struct AdamUpdate {
  ModelParams params;
  AdamState state;
};

/// One bias-corrected Adam update. Pure: inputs are not modified.
AdamUpdate adam_step(const ModelParams& params, const ModelParams& grads, const AdamState& state,
                     const AdamConfig& config);

/// In-place form used by the training loops. Same arithmetic as adam_step.
void adam_step_inplace(ModelParams& params, const ModelParams& grads, AdamState& state,
                       const AdamConfig& config);

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

using LossFunction = std::function<double(const Eigen::VectorXd&)>;

inline constexpr double kDefaultFiniteDiffStep = 1e-5;

/// Largest per-coordinate relative error between `analytic` and central
/// differences of `loss` at `params`. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
double finite_diff_check(const LossFunction& loss, const Eigen::VectorXd& analytic,
                         const Eigen::VectorXd& params, double h = kDefaultFiniteDiffStep);

/// Overload over named parameters; `loss` sees the perturbed parameter set.
double finite_diff_check(const std::function<double(const ModelParams&)>& loss,
                         const ModelParams& analytic, const ModelParams& params,
                         double h = kDefaultFiniteDiffStep);

/// Throws std::invalid_argument unless `p` is a distribution within `tolerance`.
void require_distribution(const Eigen::Ref<const Eigen::VectorXd>& p, std::string_view what,
                          double tolerance = 1e-9);

}  // namespace hfz
