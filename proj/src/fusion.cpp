#include "hfz/fusion.hpp"

#include "hfz/random.hpp"

#include <cmath>

namespace hfz {
namespace {

constexpr const char* kLayers[3] = {"dense1", "dense2", "output"};

std::string weight_name(int layer) { return std::string(kLayers[layer]) + ".weight"; }
std::string bias_name(int layer) { return std::string(kLayers[layer]) + ".bias"; }

void check_same_length(const Posterior& p1, const Posterior& p2, Index n, const char* who) {
  if (p1.size() != n || p2.size() != n) {
    throw std::invalid_argument(std::string(who) + ": posterior lengths " +
                                std::to_string(p1.size()) + " and " + std::to_string(p2.size()) +
                                " do not match " + std::to_string(n) + " classes");
  }
}

struct HeadActivations {
  RowVector<double> input;
  Matrix<double> pre1, act1, pre2, act2;
  Posterior probs;
};

HeadActivations head_forward(const ModelParams& params, const Posterior& p1, const Posterior& p2) {
  const Index n = fusion_classes(params);
  check_same_length(p1, p2, n, "neural_fuse_forward");
  HeadActivations a;
  a.input.resize(2 * n);
  a.input << p1.transpose(), p2.transpose();
  a.pre1 = dense_forward(a.input, params.matrix(weight_name(0)), params.matrix(bias_name(0)));
  a.act1 = relu(a.pre1);
  a.pre2 = dense_forward(a.act1, params.matrix(weight_name(1)), params.matrix(bias_name(1)));
  a.act2 = relu(a.pre2);
  a.probs = softmax(dense_forward(a.act2, params.matrix(weight_name(2)), params.matrix(bias_name(2))));
  return a;
}

}  // namespace

ClassPrior uniform_prior(Index classes) {
  if (classes <= 0) throw std::invalid_argument("uniform_prior: class count must be positive");
  return ClassPrior::Constant(classes, 1.0 / static_cast<double>(classes));
}

Posterior bayes_fuse(const Posterior& p1, const Posterior& p2, const ClassPrior& prior) {
  check_same_length(p1, p2, prior.size(), "bayes_fuse");
  require_distribution(p1, "bayes_fuse p1");
  require_distribution(p2, "bayes_fuse p2");
  if (prior.size() == 0 || !prior.allFinite() || (prior.array() <= 0.0).any()) {
    throw std::invalid_argument("bayes_fuse: prior entries must be strictly positive");
  }
  if (std::abs(prior.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("bayes_fuse: prior must sum to 1");
  }
  const Eigen::ArrayXd log_joint = p1.array().max(kFusionFloor).log() +
                                   p2.array().max(kFusionFloor).log() - prior.array().log();
  return softmax(log_joint.matrix());
}

Index map_class(const Posterior& p) {
  require_distribution(p, "map_class");
  Index best = 0;
  for (Index j = 1; j < p.size(); ++j) {
    if (p(j) > p(best)) best = j;
  }
  return best;
}

ModelParams init_fusion_params(Index classes, std::uint64_t seed, Index width) {
  if (classes <= 0 || width <= 0) {
    throw std::invalid_argument("init_fusion_params: sizes must be positive");
  }
  Rng rng(seed);
  ModelParams params;
  const Index fan_in[3] = {2 * classes, width, width};
  const Index fan_out[3] = {width, width, classes};
  for (int layer = 0; layer < 3; ++layer) {
    Tensor& w = params.add(weight_name(layer), {fan_in[layer], fan_out[layer]});
    const double limit = std::sqrt(1.0 / static_cast<double>(fan_in[layer]));
    for (Index i = 0; i < w.size(); ++i) w.data(i) = rng.uniform(-limit, limit);
    params.add(bias_name(layer), {fan_out[layer]});
  }
  return params;
}

Index fusion_classes(const ModelParams& params) {
  const Tensor& first = params.at(weight_name(0));
  const Tensor& last = params.at(weight_name(2));
  const Tensor& hidden = params.at(weight_name(1));
  if (first.shape.size() != 2 || last.shape.size() != 2 || hidden.shape.size() != 2 ||
      first.shape[0] != 2 * last.shape[1] || first.shape[1] != hidden.shape[0] ||
      hidden.shape[1] != last.shape[0] || params.at(bias_name(0)).size() != first.shape[1] ||
      params.at(bias_name(1)).size() != hidden.shape[1] ||
      params.at(bias_name(2)).size() != last.shape[1]) {
    throw std::invalid_argument("fusion head parameters have inconsistent shapes");
  }
  return last.shape[1];
}

Posterior neural_fuse_forward(const Posterior& p1, const Posterior& p2, const ModelParams& params) {
  return head_forward(params, p1, p2).probs;
}

LossAndGradients fusion_gradients(const ModelParams& params, std::span<const FusionExample> batch) {
  if (batch.empty()) throw std::invalid_argument("fusion_gradients: empty batch");
  const Index n = fusion_classes(params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  LossAndGradients out{0.0, params.zeros_like()};
  for (const auto& item : batch) {
    if (item.label < 0 || item.label >= n) {
      throw std::invalid_argument("fusion_gradients: label out of range");
    }
    const HeadActivations a = head_forward(params, item.tactile, item.kinesthetic);
    out.loss += scale * cross_entropy(a.probs, item.label);

    const Matrix<double> dlogits = scale * softmax_cross_entropy_grad(a.probs, item.label).transpose();
    const auto g3 = dense_backward(a.act2, params.matrix(weight_name(2)), dlogits);
    const Matrix<double> dpre2 = relu_backward(a.pre2, g3.input);
    const auto g2 = dense_backward(a.act1, params.matrix(weight_name(1)), dpre2);
    const Matrix<double> dpre1 = relu_backward(a.pre1, g2.input);
    const auto g1 = dense_backward(a.input, params.matrix(weight_name(0)), dpre1);

    out.gradients.matrix(weight_name(0)) += g1.weights;
    out.gradients.matrix(bias_name(0)) += g1.bias;
    out.gradients.matrix(weight_name(1)) += g2.weights;
    out.gradients.matrix(bias_name(1)) += g2.bias;
    out.gradients.matrix(weight_name(2)) += g3.weights;
    out.gradients.matrix(bias_name(2)) += g3.bias;
  }
  return out;
}

}  // namespace hfz
