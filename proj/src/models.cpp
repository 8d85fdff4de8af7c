#include "hfz/models.hpp"

#include "hfz/random.hpp"

#include <cmath>

namespace hfz {
namespace {

constexpr const char* kConvInput = "convlstm.input_kernel";
constexpr const char* kConvHidden = "convlstm.hidden_kernel";
constexpr const char* kConvBias = "convlstm.bias";
constexpr const char* kHeadWeight = "head.weight";
constexpr const char* kHeadBias = "head.bias";

std::string lstm_name(int layer, const char* what) {
  return "lstm" + std::to_string(layer) + "." + what;
}

void fill_uniform(Tensor& t, double fan_in, Rng& rng) {
  const double limit = std::sqrt(1.0 / fan_in);
  for (Index i = 0; i < t.size(); ++i) t.data(i) = rng.uniform(-limit, limit);
}

void set_forget_bias(Tensor& bias, Index units) {
  bias.data.segment(units, units).setConstant(1.0);
}

void require_positive(Index value, const char* what) {
  if (value <= 0) throw std::invalid_argument(std::string(what) + " must be positive");
}

void validate(const TactileModelSpec& spec) {
  require_positive(spec.height, "tactile height");
  require_positive(spec.width, "tactile width");
  require_positive(spec.filters, "ConvLSTM filters");
  require_positive(spec.classes, "class count");
  if (spec.kernel_height <= 0 || spec.kernel_width <= 0 || spec.kernel_height % 2 == 0 ||
      spec.kernel_width % 2 == 0) {
    throw std::invalid_argument("ConvLSTM kernel dimensions must be odd and positive");
  }
}

void validate(const KinestheticModelSpec& spec) {
  require_positive(spec.hidden1, "lstm1 hidden size");
  require_positive(spec.hidden2, "lstm2 hidden size");
  require_positive(spec.classes, "class count");
}

void expect_shape(const ModelParams& params, const std::string& name,
                  const std::vector<Index>& shape) {
  const Tensor& t = params.at(name);
  if (t.shape != shape) {
    throw std::invalid_argument("parameter '" + name + "' has the wrong shape for this model");
  }
}

void check_params(const TactileModelSpec& spec, const ModelParams& params) {
  const Index kh = spec.kernel_height, kw = spec.kernel_width, f = spec.filters;
  expect_shape(params, kConvInput, {kh, kw, 1, 4 * f});
  expect_shape(params, kConvHidden, {kh, kw, f, 4 * f});
  expect_shape(params, kConvBias, {4 * f});
  expect_shape(params, kHeadWeight, {spec.height * spec.width * f, spec.classes});
  expect_shape(params, kHeadBias, {spec.classes});
}

void check_params(const KinestheticModelSpec& spec, const ModelParams& params) {
  const Index h1 = spec.hidden1, h2 = spec.hidden2;
  expect_shape(params, lstm_name(1, "input_weight"), {kJointCount, 4 * h1});
  expect_shape(params, lstm_name(1, "hidden_weight"), {h1, 4 * h1});
  expect_shape(params, lstm_name(1, "bias"), {4 * h1});
  expect_shape(params, lstm_name(2, "input_weight"), {h1, 4 * h2});
  expect_shape(params, lstm_name(2, "hidden_weight"), {h2, 4 * h2});
  expect_shape(params, lstm_name(2, "bias"), {4 * h2});
  expect_shape(params, kHeadWeight, {h2, spec.classes});
  expect_shape(params, kHeadBias, {spec.classes});
}

void check_sequence(const TactileModelSpec& spec, const TactileSequence& seq) {
  if (seq.height != spec.height || seq.width != spec.width ||
      seq.frames.cols() != spec.height * spec.width) {
    throw std::invalid_argument("tactile sequence is " + std::to_string(seq.height) + "x" +
                                std::to_string(seq.width) + ", model expects " +
                                std::to_string(spec.height) + "x" + std::to_string(spec.width));
  }
  if (seq.steps() < 1) throw std::invalid_argument("tactile sequence has no frames");
}

void check_sequence(const KinestheticSequence& seq) {
  if (seq.samples.cols() != kJointCount) {
    throw std::invalid_argument("kinesthetic sequence must have 4 channels, got " +
                                std::to_string(seq.samples.cols()));
  }
  if (seq.steps() < 1) throw std::invalid_argument("kinesthetic sequence has no samples");
}

Sequence<double> tactile_steps(const TactileSequence& seq) {
  Sequence<double> steps;
  steps.reserve(seq.steps());
  for (Index t = 0; t < seq.steps(); ++t) steps.emplace_back(seq.frames.row(t).transpose());
  return steps;
}

Sequence<double> kinesthetic_steps(const KinestheticSequence& seq) {
  Sequence<double> steps;
  steps.reserve(seq.steps());
  for (Index t = 0; t < seq.steps(); ++t) steps.emplace_back(seq.samples.row(t));
  return steps;
}

// [H*W, F] map -> [1, H*W*F] row in (y, x, f) order.
RowVector<double> flatten_map(const Matrix<double>& map) {
  return map.reshaped<Eigen::RowMajor>().transpose();
}

Matrix<double> unflatten_map(const RowVector<double>& flat, Index rows, Index cols) {
  return flat.reshaped<Eigen::RowMajor>(rows, cols);
}

void store_lstm(ModelParams& out, int layer, const LstmCellParams<double>& cell) {
  out.matrix(lstm_name(layer, "input_weight")) = cell.input_weights;
  out.matrix(lstm_name(layer, "hidden_weight")) = cell.hidden_weights;
  out.matrix(lstm_name(layer, "bias")) = cell.bias;
}

template <typename Seq>
void check_batch(std::span<const LabeledSequence<Seq>> batch, Index classes) {
  if (batch.empty()) throw std::invalid_argument("model_gradients: empty batch");
  for (const auto& item : batch) {
    if (item.sequence == nullptr) throw std::invalid_argument("model_gradients: null sequence");
    if (item.label < 0 || item.label >= classes) {
      throw std::invalid_argument("model_gradients: label " + std::to_string(item.label) +
                                  " out of range");
    }
  }
}

}  // namespace

ModelParams init_tactile_params(const TactileModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  const Index kh = spec.kernel_height, kw = spec.kernel_width, f = spec.filters;
  const double gate_fan_in = static_cast<double>(kh * kw * (1 + f));
  ModelParams params;
  fill_uniform(params.add(kConvInput, {kh, kw, 1, 4 * f}), gate_fan_in, rng);
  fill_uniform(params.add(kConvHidden, {kh, kw, f, 4 * f}), gate_fan_in, rng);
  set_forget_bias(params.add(kConvBias, {4 * f}), f);
  const Index flat = spec.height * spec.width * f;
  fill_uniform(params.add(kHeadWeight, {flat, spec.classes}), static_cast<double>(flat), rng);
  params.add(kHeadBias, {spec.classes});
  return params;
}

ModelParams init_kinesthetic_params(const KinestheticModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  ModelParams params;
  const Index inputs[2] = {kJointCount, spec.hidden1};
  const Index hidden[2] = {spec.hidden1, spec.hidden2};
  for (int layer = 1; layer <= 2; ++layer) {
    const Index in = inputs[layer - 1], h = hidden[layer - 1];
    const double fan_in = static_cast<double>(in + h);
    fill_uniform(params.add(lstm_name(layer, "input_weight"), {in, 4 * h}), fan_in, rng);
    fill_uniform(params.add(lstm_name(layer, "hidden_weight"), {h, 4 * h}), fan_in, rng);
    set_forget_bias(params.add(lstm_name(layer, "bias"), {4 * h}), h);
  }
  fill_uniform(params.add(kHeadWeight, {spec.hidden2, spec.classes}),
               static_cast<double>(spec.hidden2), rng);
  params.add(kHeadBias, {spec.classes});
  return params;
}

ModelParams init_classifier_params(const ClassifierSpec& spec, std::uint64_t seed) {
  return std::visit(
      [&](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, TactileModelSpec>) {
          return init_tactile_params(s, seed);
        } else {
          return init_kinesthetic_params(s, seed);
        }
      },
      spec);
}

TactileModelSpec tactile_spec_from(const ModelParams& params, Index height, Index width) {
  const Tensor& kernel = params.at(kConvInput);
  const Tensor& head = params.at(kHeadWeight);
  if (kernel.shape.size() != 4 || head.shape.size() != 2) {
    throw std::invalid_argument("parameter set is not a tactile model");
  }
  TactileModelSpec spec;
  spec.kernel_height = kernel.shape[0];
  spec.kernel_width = kernel.shape[1];
  spec.filters = kernel.shape[3] / 4;
  spec.height = height;
  spec.width = width;
  spec.classes = head.shape[1];
  check_params(spec, params);
  return spec;
}

KinestheticModelSpec kinesthetic_spec_from(const ModelParams& params) {
  const Tensor& w1 = params.at(lstm_name(1, "hidden_weight"));
  const Tensor& w2 = params.at(lstm_name(2, "hidden_weight"));
  const Tensor& head = params.at(kHeadWeight);
  if (w1.shape.size() != 2 || w2.shape.size() != 2 || head.shape.size() != 2) {
    throw std::invalid_argument("parameter set is not a kinesthetic model");
  }
  KinestheticModelSpec spec{w1.shape[0], w2.shape[0], head.shape[1]};
  check_params(spec, params);
  return spec;
}

ConvLstmCellParams<double> tactile_cell(const TactileModelSpec& spec, const ModelParams& params) {
  check_params(spec, params);
  auto cell = ConvLstmCellParams<double>::zeros(spec.kernel_height, spec.kernel_width, 1,
                                                spec.filters);
  cell.input_kernels = params.matrix(kConvInput);
  cell.hidden_kernels = params.matrix(kConvHidden);
  cell.bias = params.matrix(kConvBias);
  return cell;
}

LstmCellParams<double> kinesthetic_cell(const ModelParams& params, int layer) {
  LstmCellParams<double> cell;
  cell.input_weights = params.matrix(lstm_name(layer, "input_weight"));
  cell.hidden_weights = params.matrix(lstm_name(layer, "hidden_weight"));
  cell.bias = params.matrix(lstm_name(layer, "bias"));
  cell.validate();
  return cell;
}

Posterior tactile_forward(const TactileModelSpec& spec, const TactileSequence& seq,
                          const ModelParams& params) {
  validate(spec);
  check_sequence(spec, seq);
  const ConvLstmCell<double> cell{tactile_cell(spec, params), spec.height, spec.width};
  const auto result = unroll(cell, tactile_steps(seq),
                             RecurrentState<double>::zeros(cell.rows(), cell.units()));
  const Matrix<double> logits =
      dense_forward(flatten_map(result.final_state.hidden), params.matrix(kHeadWeight),
                    params.matrix(kHeadBias));
  return softmax(logits);
}

Posterior kinesthetic_forward(const KinestheticModelSpec& spec, const KinestheticSequence& seq,
                              const ModelParams& params) {
  validate(spec);
  check_sequence(seq);
  check_params(spec, params);
  const LstmCell<double> first{kinesthetic_cell(params, 1)};
  const LstmCell<double> second{kinesthetic_cell(params, 2)};
  const auto lower =
      unroll(first, kinesthetic_steps(seq), RecurrentState<double>::zeros(1, spec.hidden1));
  const auto upper =
      unroll(second, lower.hidden_states, RecurrentState<double>::zeros(1, spec.hidden2));
  const Matrix<double> logits = dense_forward(upper.final_state.hidden,
                                              params.matrix(kHeadWeight), params.matrix(kHeadBias));
  return softmax(logits);
}

LossAndGradients model_gradients(const TactileModelSpec& spec, const ModelParams& params,
                                 std::span<const LabeledSequence<TactileSequence>> batch) {
  validate(spec);
  check_batch(batch, spec.classes);
  const ConvLstmCell<double> cell{tactile_cell(spec, params), spec.height, spec.width};
  const auto head_w = params.matrix(kHeadWeight);
  const auto head_b = params.matrix(kHeadBias);
  const double scale = 1.0 / static_cast<double>(batch.size());

  LossAndGradients out{0.0, params.zeros_like()};
  auto& grads = out.gradients;
  ConvLstmCellParams<double> cell_grads =
      ConvLstmCellParams<double>::zeros(spec.kernel_height, spec.kernel_width, 1, spec.filters);

  for (const auto& item : batch) {
    check_sequence(spec, *item.sequence);
    const Sequence<double> steps = tactile_steps(*item.sequence);
    const auto tr = trace(cell, steps, RecurrentState<double>::zeros(cell.rows(), cell.units()));
    const RowVector<double> features = flatten_map(tr.final_state().hidden);
    const Posterior probs = softmax(dense_forward(features, head_w, head_b));
    out.loss += scale * cross_entropy(probs, item.label);

    const Matrix<double> dlogits = scale * softmax_cross_entropy_grad(probs, item.label).transpose();
    const auto head = dense_backward(features, head_w, dlogits);
    grads.matrix(kHeadWeight) += head.weights;
    grads.matrix(kHeadBias) += head.bias;

    std::vector<Matrix<double>> upstream(steps.size(),
                                         Matrix<double>::Zero(cell.rows(), cell.units()));
    upstream.back() = unflatten_map(head.input, cell.rows(), cell.units());
    const auto bptt = backpropagate(cell, steps, tr, upstream);
    cell_grads.input_kernels += bptt.params.input_kernels;
    cell_grads.hidden_kernels += bptt.params.hidden_kernels;
    cell_grads.bias += bptt.params.bias;
  }
  grads.matrix(kConvInput) = cell_grads.input_kernels;
  grads.matrix(kConvHidden) = cell_grads.hidden_kernels;
  grads.matrix(kConvBias) = cell_grads.bias;
  return out;
}

LossAndGradients model_gradients(const KinestheticModelSpec& spec, const ModelParams& params,
                                 std::span<const LabeledSequence<KinestheticSequence>> batch) {
  validate(spec);
  check_batch(batch, spec.classes);
  check_params(spec, params);
  const LstmCell<double> first{kinesthetic_cell(params, 1)};
  const LstmCell<double> second{kinesthetic_cell(params, 2)};
  const auto head_w = params.matrix(kHeadWeight);
  const auto head_b = params.matrix(kHeadBias);
  const double scale = 1.0 / static_cast<double>(batch.size());

  LossAndGradients out{0.0, params.zeros_like()};
  auto& grads = out.gradients;
  auto first_grads = LstmCellParams<double>::zeros(kJointCount, spec.hidden1);
  auto second_grads = LstmCellParams<double>::zeros(spec.hidden1, spec.hidden2);

  for (const auto& item : batch) {
    check_sequence(*item.sequence);
    const Sequence<double> steps = kinesthetic_steps(*item.sequence);
    const auto lower = trace(first, steps, RecurrentState<double>::zeros(1, spec.hidden1));
    Sequence<double> middle;
    middle.reserve(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) middle.push_back(lower.hidden(t));
    const auto upper = trace(second, middle, RecurrentState<double>::zeros(1, spec.hidden2));
    const Matrix<double>& features = upper.final_state().hidden;
    const Posterior probs = softmax(dense_forward(features, head_w, head_b));
    out.loss += scale * cross_entropy(probs, item.label);

    const Matrix<double> dlogits = scale * softmax_cross_entropy_grad(probs, item.label).transpose();
    const auto head = dense_backward(features, head_w, dlogits);
    grads.matrix(kHeadWeight) += head.weights;
    grads.matrix(kHeadBias) += head.bias;

    std::vector<Matrix<double>> upstream(steps.size(), Matrix<double>::Zero(1, spec.hidden2));
    upstream.back() = head.input;
    const auto top = backpropagate(second, middle, upper, upstream);
    const auto bottom = backpropagate(first, steps, lower, top.inputs);
    second_grads.input_weights += top.params.input_weights;
    second_grads.hidden_weights += top.params.hidden_weights;
    second_grads.bias += top.params.bias;
    first_grads.input_weights += bottom.params.input_weights;
    first_grads.hidden_weights += bottom.params.hidden_weights;
    first_grads.bias += bottom.params.bias;
  }
  store_lstm(grads, 1, first_grads);
  store_lstm(grads, 2, second_grads);
  return out;
}

}  // namespace hfz
