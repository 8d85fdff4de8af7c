#pragma once

// LSTM and ConvLSTM cells (no peepholes), sequence unrolling and exact
// backpropagation through time.
//
// Layout conventions:
//  * Gate pre-activations are [rows, 4 * units] with column blocks in the
//    order (input i, forget f, candidate g, output o).
//  * An LSTM state is a [1, hidden] row; a ConvLSTM state is a
//    [height * width, filters] matrix with pixel index y * width + x.
//  * Convolution kernels are stored as [kh * kw * channels, 4 * filters];
//    row (a * kw + b) * channels + c is tap (a, b) of channel c, which is the
//    row-major flattening of a [kh, kw, channels, 4 * filters] tensor.

#include "hfz/numerics.hpp"

#include <string>
#include <vector>

namespace hfz {

template <typename Scalar>
struct RecurrentState {
  Matrix<Scalar> hidden;
  Matrix<Scalar> cell;

  static RecurrentState zeros(Index rows, Index units) {
    return {Matrix<Scalar>::Zero(rows, units), Matrix<Scalar>::Zero(rows, units)};
  }
};

template <typename Scalar>
using Sequence = std::vector<Matrix<Scalar>>;

// ---------------------------------------------------------------------------
// Parameters and cell kinds
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LstmCellParams {
  Matrix<Scalar> input_weights;   // [in, 4H]
  Matrix<Scalar> hidden_weights;  // [H, 4H]
  RowVector<Scalar> bias;         // [4H]

  Index inputs() const { return input_weights.rows(); }
  Index hidden() const { return hidden_weights.rows(); }

  static LstmCellParams zeros(Index inputs, Index hidden) {
    return {Matrix<Scalar>::Zero(inputs, 4 * hidden), Matrix<Scalar>::Zero(hidden, 4 * hidden),
            RowVector<Scalar>::Zero(4 * hidden)};
  }

  void validate() const {
    const Index h = hidden();
    if (h <= 0 || hidden_weights.cols() != 4 * h || input_weights.cols() != 4 * h ||
        bias.size() != 4 * h || inputs() <= 0) {
      throw std::invalid_argument("LstmCellParams: inconsistent weight shapes");
    }
  }
};

template <typename Scalar>
struct ConvLstmCellParams {
  Index kernel_height = 3;
  Index kernel_width = 3;
  Index in_channels = 1;
  Index filters = 1;
  Matrix<Scalar> input_kernels;   // [kh * kw * in_channels, 4F]
  Matrix<Scalar> hidden_kernels;  // [kh * kw * filters, 4F]
  RowVector<Scalar> bias;         // [4F]

  static ConvLstmCellParams zeros(Index kh, Index kw, Index in_channels, Index filters) {
    ConvLstmCellParams p;
    p.kernel_height = kh;
    p.kernel_width = kw;
    p.in_channels = in_channels;
    p.filters = filters;
    p.input_kernels = Matrix<Scalar>::Zero(kh * kw * in_channels, 4 * filters);
    p.hidden_kernels = Matrix<Scalar>::Zero(kh * kw * filters, 4 * filters);
    p.bias = RowVector<Scalar>::Zero(4 * filters);
    return p;
  }

  void validate() const {
    if (kernel_height <= 0 || kernel_width <= 0 || kernel_height % 2 == 0 || kernel_width % 2 == 0) {
      throw std::invalid_argument("ConvLstmCellParams: kernel dimensions must be odd and positive");
    }
    const Index taps = kernel_height * kernel_width;
    if (filters <= 0 || in_channels <= 0 || input_kernels.rows() != taps * in_channels ||
        input_kernels.cols() != 4 * filters || hidden_kernels.rows() != taps * filters ||
        hidden_kernels.cols() != 4 * filters || bias.size() != 4 * filters) {
      throw std::invalid_argument("ConvLstmCellParams: inconsistent kernel shapes");
    }
  }
};

template <typename Scalar>
struct LstmCell {
  using Params = LstmCellParams<Scalar>;
  Params params;

  Index rows() const { return 1; }
  Index units() const { return params.hidden(); }
};

template <typename Scalar>
struct ConvLstmCell {
  using Params = ConvLstmCellParams<Scalar>;
  Params params;
  Index height = 1;
  Index width = 1;

  Index rows() const { return height * width; }
  Index units() const { return params.filters; }
};

// ---------------------------------------------------------------------------
// Convolution helpers ("same" zero padding, stride 1)
// ---------------------------------------------------------------------------

/// Patch matrix [H * W, kh * kw * C]: column (a * kw + b) * C + c holds
/// channel c of the pixel at offset (a - kh/2, b - kw/2), zero outside.
template <typename Derived>
Matrix<typename Derived::Scalar> im2col(const Eigen::MatrixBase<Derived>& map, Index height,
                                        Index width, Index kh, Index kw) {
  using Scalar = typename Derived::Scalar;
  const Index channels = map.cols();
  Matrix<Scalar> patches = Matrix<Scalar>::Zero(height * width, kh * kw * channels);
  const Index ry = kh / 2;
  const Index rx = kw / 2;
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const Index row = y * width + x;
      for (Index a = 0; a < kh; ++a) {
        const Index sy = y + a - ry;
        if (sy < 0 || sy >= height) continue;
        for (Index b = 0; b < kw; ++b) {
          const Index sx = x + b - rx;
          if (sx < 0 || sx >= width) continue;
          patches.block(row, (a * kw + b) * channels, 1, channels) = map.row(sy * width + sx);
        }
      }
    }
  }
  return patches;
}

/// Adjoint of im2col: scatter-adds patch gradients back onto the map.
template <typename Derived>
Matrix<typename Derived::Scalar> col2im(const Eigen::MatrixBase<Derived>& patches, Index height,
                                        Index width, Index kh, Index kw, Index channels) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> map = Matrix<Scalar>::Zero(height * width, channels);
  const Index ry = kh / 2;
  const Index rx = kw / 2;
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const Index row = y * width + x;
      for (Index a = 0; a < kh; ++a) {
        const Index sy = y + a - ry;
        if (sy < 0 || sy >= height) continue;
        for (Index b = 0; b < kw; ++b) {
          const Index sx = x + b - rx;
          if (sx < 0 || sx >= width) continue;
          map.row(sy * width + sx) += patches.block(row, (a * kw + b) * channels, 1, channels);
        }
      }
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Gate algebra shared by both cells
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
struct GateCache {
  Matrix<Scalar> input, forget, candidate, output, cell_tanh;
};

template <typename Scalar>
RecurrentState<Scalar> apply_gates(const Matrix<Scalar>& preact, const Matrix<Scalar>& cell_prev,
                                   GateCache<Scalar>* cache) {
  const Index units = preact.cols() / 4;
  GateCache<Scalar> local;
  GateCache<Scalar>& g = cache ? *cache : local;
  g.input = sigmoid(preact.leftCols(units).array()).matrix();
  g.forget = sigmoid(preact.middleCols(units, units).array()).matrix();
  g.candidate = preact.middleCols(2 * units, units).array().tanh().matrix();
  g.output = sigmoid(preact.rightCols(units).array()).matrix();

  RecurrentState<Scalar> next;
  next.cell = (g.forget.array() * cell_prev.array() + g.input.array() * g.candidate.array()).matrix();
  g.cell_tanh = next.cell.array().tanh().matrix();
  next.hidden = (g.output.array() * g.cell_tanh.array()).matrix();
  return next;
}

/// Returns dL/d(preact); writes dL/d(cell_prev) into `dcell_prev`.
template <typename Scalar>
Matrix<Scalar> gates_backward(const GateCache<Scalar>& g, const Matrix<Scalar>& cell_prev,
                              const Matrix<Scalar>& dhidden, const Matrix<Scalar>& dcell,
                              Matrix<Scalar>& dcell_prev) {
  const Index rows = dhidden.rows();
  const Index units = dhidden.cols();
  const auto one = Scalar(1);
  Matrix<Scalar> dpre(rows, 4 * units);

  const auto dout = dhidden.array() * g.cell_tanh.array();
  const Matrix<Scalar> dc =
      (dcell.array() + dhidden.array() * g.output.array() * (one - g.cell_tanh.array().square())).matrix();

  dpre.leftCols(units) =
      (dc.array() * g.candidate.array() * g.input.array() * (one - g.input.array())).matrix();
  dpre.middleCols(units, units) =
      (dc.array() * cell_prev.array() * g.forget.array() * (one - g.forget.array())).matrix();
  dpre.middleCols(2 * units, units) =
      (dc.array() * g.input.array() * (one - g.candidate.array().square())).matrix();
  dpre.rightCols(units) = (dout * g.output.array() * (one - g.output.array())).matrix();

  dcell_prev = (dc.array() * g.forget.array()).matrix();
  return dpre;
}

template <typename Scalar>
void check_state(const RecurrentState<Scalar>& s, Index rows, Index units, const char* who) {
  if (s.hidden.rows() != rows || s.hidden.cols() != units || s.cell.rows() != rows ||
      s.cell.cols() != units) {
    throw std::invalid_argument(std::string(who) + ": state must be " + std::to_string(rows) + "x" +
                                std::to_string(units));
  }
}

// Cell-specific affine / convolutional maps.

template <typename Scalar>
Matrix<Scalar> preactivation(const LstmCell<Scalar>& cell, const Matrix<Scalar>& x,
                             const Matrix<Scalar>& hidden) {
  const auto& p = cell.params;
  Matrix<Scalar> z = x * p.input_weights + hidden * p.hidden_weights;
  z.rowwise() += p.bias;
  return z;
}

template <typename Scalar>
Matrix<Scalar> preactivation(const ConvLstmCell<Scalar>& cell, const Matrix<Scalar>& x,
                             const Matrix<Scalar>& hidden) {
  const auto& p = cell.params;
  Matrix<Scalar> z =
      im2col(x, cell.height, cell.width, p.kernel_height, p.kernel_width) * p.input_kernels;
  z.noalias() +=
      im2col(hidden, cell.height, cell.width, p.kernel_height, p.kernel_width) * p.hidden_kernels;
  z.rowwise() += p.bias;
  return z;
}

template <typename Scalar>
void check_input(const LstmCell<Scalar>& cell, const Matrix<Scalar>& x) {
  if (x.rows() != 1 || x.cols() != cell.params.inputs()) {
    throw std::invalid_argument("lstm_cell_step: input must be 1x" +
                                std::to_string(cell.params.inputs()) + ", got " +
                                std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

template <typename Scalar>
void check_input(const ConvLstmCell<Scalar>& cell, const Matrix<Scalar>& x) {
  if (cell.height <= 0 || cell.width <= 0 || x.rows() != cell.rows() ||
      x.cols() != cell.params.in_channels) {
    throw std::invalid_argument("convlstm_cell_step: input must be (" +
                                std::to_string(cell.height) + "*" + std::to_string(cell.width) +
                                ")x" + std::to_string(cell.params.in_channels) + ", got " +
                                std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

template <typename Scalar>
void validate_cell(const LstmCell<Scalar>& cell) {
  cell.params.validate();
}

template <typename Scalar>
void validate_cell(const ConvLstmCell<Scalar>& cell) {
  cell.params.validate();
}

/// Accumulates parameter gradients and returns (dx, dhidden_prev).
template <typename Scalar>
void preactivation_backward(const LstmCell<Scalar>& cell, const Matrix<Scalar>& x,
                            const Matrix<Scalar>& hidden_prev, const Matrix<Scalar>& dpre,
                            LstmCellParams<Scalar>& grads, Matrix<Scalar>& dx,
                            Matrix<Scalar>& dhidden_prev) {
  const auto& p = cell.params;
  grads.input_weights.noalias() += x.transpose() * dpre;
  grads.hidden_weights.noalias() += hidden_prev.transpose() * dpre;
  grads.bias += dpre.colwise().sum();
  dx.noalias() = dpre * p.input_weights.transpose();
  dhidden_prev.noalias() = dpre * p.hidden_weights.transpose();
}

template <typename Scalar>
void preactivation_backward(const ConvLstmCell<Scalar>& cell, const Matrix<Scalar>& x,
                            const Matrix<Scalar>& hidden_prev, const Matrix<Scalar>& dpre,
                            ConvLstmCellParams<Scalar>& grads, Matrix<Scalar>& dx,
                            Matrix<Scalar>& dhidden_prev) {
  const auto& p = cell.params;
  const Index kh = p.kernel_height;
  const Index kw = p.kernel_width;
  const Matrix<Scalar> x_patches = im2col(x, cell.height, cell.width, kh, kw);
  const Matrix<Scalar> h_patches = im2col(hidden_prev, cell.height, cell.width, kh, kw);
  grads.input_kernels.noalias() += x_patches.transpose() * dpre;
  grads.hidden_kernels.noalias() += h_patches.transpose() * dpre;
  grads.bias += dpre.colwise().sum();
  const Matrix<Scalar> dx_patches = dpre * p.input_kernels.transpose();
  const Matrix<Scalar> dh_patches = dpre * p.hidden_kernels.transpose();
  dx = col2im(dx_patches, cell.height, cell.width, kh, kw, p.in_channels);
  dhidden_prev = col2im(dh_patches, cell.height, cell.width, kh, kw, p.filters);
}

template <typename Scalar>
LstmCellParams<Scalar> zero_grads(const LstmCell<Scalar>& cell) {
  return LstmCellParams<Scalar>::zeros(cell.params.inputs(), cell.params.hidden());
}

template <typename Scalar>
ConvLstmCellParams<Scalar> zero_grads(const ConvLstmCell<Scalar>& cell) {
  const auto& p = cell.params;
  return ConvLstmCellParams<Scalar>::zeros(p.kernel_height, p.kernel_width, p.in_channels,
                                           p.filters);
}

template <typename Cell>
auto cell_step(const Cell& cell, const auto& x, const auto& state, auto* cache) {
  check_input(cell, x);
  check_state(state, cell.rows(), cell.units(), "cell_step");
  return apply_gates(preactivation(cell, x, state.hidden), state.cell, cache);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// One LSTM step on a [1, in] input row.
template <typename Scalar>
RecurrentState<Scalar> lstm_cell_step(const Matrix<Scalar>& x, const RecurrentState<Scalar>& state,
                                      const LstmCellParams<Scalar>& params) {
  params.validate();
  const LstmCell<Scalar> cell{params};
  return detail::cell_step(cell, x, state, static_cast<detail::GateCache<Scalar>*>(nullptr));
}

/// One ConvLSTM step on a [height * width, in_channels] input map.
template <typename Scalar>
RecurrentState<Scalar> convlstm_cell_step(const Matrix<Scalar>& x, Index height, Index width,
                                          const RecurrentState<Scalar>& state,
                                          const ConvLstmCellParams<Scalar>& params) {
  params.validate();
  const ConvLstmCell<Scalar> cell{params, height, width};
  return detail::cell_step(cell, x, state, static_cast<detail::GateCache<Scalar>*>(nullptr));
}

template <typename Scalar>
struct UnrollResult {
  std::vector<Matrix<Scalar>> hidden_states;  // one per step
  RecurrentState<Scalar> final_state;
};

/// Applies the cell over every step of `sequence`, starting from `initial`.
template <typename Cell, typename Scalar>
UnrollResult<Scalar> unroll(const Cell& cell, const Sequence<Scalar>& sequence,
                            const RecurrentState<Scalar>& initial) {
  if (sequence.empty()) {
    throw std::invalid_argument("unroll: sequence must have at least one step");
  }
  detail::validate_cell(cell);
  UnrollResult<Scalar> out;
  out.hidden_states.reserve(sequence.size());
  RecurrentState<Scalar> state = initial;
  for (const auto& x : sequence) {
    state = detail::cell_step(cell, x, state, static_cast<detail::GateCache<Scalar>*>(nullptr));
    out.hidden_states.push_back(state.hidden);
  }
  out.final_state = std::move(state);
  return out;
}

template <typename Scalar>
struct RecurrentTrace {
  std::vector<RecurrentState<Scalar>> states;  // states[t] enters step t; states.back() is final
  std::vector<detail::GateCache<Scalar>> gates;

  const RecurrentState<Scalar>& final_state() const { return states.back(); }
  const Matrix<Scalar>& hidden(std::size_t step) const { return states[step + 1].hidden; }
  std::size_t steps() const { return gates.size(); }
};

/// Forward pass that keeps everything the backward pass needs.
template <typename Cell, typename Scalar>
RecurrentTrace<Scalar> trace(const Cell& cell, const Sequence<Scalar>& sequence,
                             const RecurrentState<Scalar>& initial) {
  if (sequence.empty()) {
    throw std::invalid_argument("unroll: sequence must have at least one step");
  }
  detail::validate_cell(cell);
  RecurrentTrace<Scalar> tr;
  tr.states.reserve(sequence.size() + 1);
  tr.gates.resize(sequence.size());
  tr.states.push_back(initial);
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    tr.states.push_back(detail::cell_step(cell, sequence[t], tr.states[t], &tr.gates[t]));
  }
  return tr;
}

template <typename Params, typename Scalar>
struct BpttResult {
  Params params;                       // same layout as the cell parameters
  std::vector<Matrix<Scalar>> inputs;  // dL/dx_t per step
  RecurrentState<Scalar> initial;      // dL/d(initial state)
};

/// Reverse pass over a recorded trace given dL/dh_t for every step t.
template <typename Cell, typename Scalar>
BpttResult<typename Cell::Params, Scalar> backpropagate(
    const Cell& cell, const Sequence<Scalar>& sequence, const RecurrentTrace<Scalar>& tr,
    const std::vector<Matrix<Scalar>>& upstream_hidden) {
  const std::size_t steps = sequence.size();
  if (steps == 0 || tr.steps() != steps) {
    throw std::invalid_argument("bptt_gradients: trace does not match sequence");
  }
  if (upstream_hidden.size() != steps) {
    throw std::invalid_argument("bptt_gradients: expected one upstream gradient per step");
  }
  const Index rows = cell.rows();
  const Index units = cell.units();
  for (const auto& g : upstream_hidden) {
    if (g.rows() != rows || g.cols() != units) {
      throw std::invalid_argument("bptt_gradients: upstream gradient must be " +
                                  std::to_string(rows) + "x" + std::to_string(units));
    }
  }

  BpttResult<typename Cell::Params, Scalar> out{detail::zero_grads(cell), {}, {}};
  out.inputs.resize(steps);
  Matrix<Scalar> dhidden = Matrix<Scalar>::Zero(rows, units);
  Matrix<Scalar> dcell = Matrix<Scalar>::Zero(rows, units);
  Matrix<Scalar> dcell_prev;
  Matrix<Scalar> dhidden_prev;
  for (std::size_t t = steps; t-- > 0;) {
    dhidden += upstream_hidden[t];
    const Matrix<Scalar> dpre =
        detail::gates_backward(tr.gates[t], tr.states[t].cell, dhidden, dcell, dcell_prev);
    detail::preactivation_backward(cell, sequence[t], tr.states[t].hidden, dpre, out.params,
                                   out.inputs[t], dhidden_prev);
    dhidden = dhidden_prev;
    dcell = dcell_prev;
  }
  out.initial.hidden = std::move(dhidden);
  out.initial.cell = std::move(dcell);
  return out;
}

/// Exact reverse-mode gradients of the unrolled computation given dL/dh_t
/// for every step t (zero matrices where a step has no direct loss).
template <typename Cell, typename Scalar>
BpttResult<typename Cell::Params, Scalar> bptt_gradients(
    const Cell& cell, const Sequence<Scalar>& sequence, const RecurrentState<Scalar>& initial,
    const std::vector<Matrix<Scalar>>& upstream_hidden) {
  if (upstream_hidden.size() != sequence.size()) {
    throw std::invalid_argument("bptt_gradients: expected one upstream gradient per step");
  }
  return backpropagate(cell, sequence, trace(cell, sequence, initial), upstream_hidden);
}

}  // namespace hfz
