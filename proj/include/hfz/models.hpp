#pragma once

#include "hfz/numerics.hpp"
#include "hfz/recurrent.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace hfz {

/// Pressure-image sequence: row t holds frame t flattened row-major
/// (pixel y * width + x).
struct TactileSequence {
  Index height = 0;
  Index width = 0;
  Eigen::MatrixXd frames;  // [T, height * width]

  Index steps() const { return frames.rows(); }
};

/// Joint-angle sequence, columns (theta_al, theta_ar, theta_2l, theta_2r).
struct KinestheticSequence {
  Eigen::MatrixXd samples;  // [K, 4]

  Index steps() const { return samples.rows(); }
};

inline constexpr Index kJointCount = 4;

/// One ConvLSTM layer over the pressure images, then dense(N) + softmax on
/// the flattened final hidden map.
struct TactileModelSpec {
  Index height = 28;
  Index width = 50;
  Index filters = 8;
  Index kernel_height = 3;
  Index kernel_width = 3;
  Index classes = 36;
};

/// Two stacked LSTMs over the joint angles, then dense(N) + softmax on the
/// final hidden vector of the second LSTM.
struct KinestheticModelSpec {
  Index hidden1 = 32;
  Index hidden2 = 32;
  Index classes = 36;
};

using ClassifierSpec = std::variant<TactileModelSpec, KinestheticModelSpec>;

template <typename Seq>
struct LabeledSequence {
  const Seq* sequence = nullptr;
  Index label = 0;
};

struct LossAndGradients {
  double loss = 0.0;
  ModelParams gradients;
};

// Parameter construction. Weights are uniform in +-sqrt(1/fan_in), biases
// zero except the LSTM forget-gate block, which starts at +1.
ModelParams init_tactile_params(const TactileModelSpec& spec, std::uint64_t seed);
ModelParams init_kinesthetic_params(const KinestheticModelSpec& spec, std::uint64_t seed);
ModelParams init_classifier_params(const ClassifierSpec& spec, std::uint64_t seed);

/// Recovers the architecture from a parameter set (grid size is not stored
/// in the weights and must be supplied).
TactileModelSpec tactile_spec_from(const ModelParams& params, Index height, Index width);
KinestheticModelSpec kinesthetic_spec_from(const ModelParams& params);

ConvLstmCellParams<double> tactile_cell(const TactileModelSpec& spec, const ModelParams& params);
LstmCellParams<double> kinesthetic_cell(const ModelParams& params, int layer);

Posterior tactile_forward(const TactileModelSpec& spec, const TactileSequence& seq,
                          const ModelParams& params);
Posterior kinesthetic_forward(const KinestheticModelSpec& spec, const KinestheticSequence& seq,
                              const ModelParams& params);

/// Mean cross-entropy over the batch and its gradient.
LossAndGradients model_gradients(const TactileModelSpec& spec, const ModelParams& params,
                                 std::span<const LabeledSequence<TactileSequence>> batch);
LossAndGradients model_gradients(const KinestheticModelSpec& spec, const ModelParams& params,
                                 std::span<const LabeledSequence<KinestheticSequence>> batch);

// ---------------------------------------------------------------------------
// Checkpoints: "HFZ1", then per entry: u64 name length, UTF-8 name, u64 rank,
// rank x u64 dims, prod(dims) x f64 values; all little-endian.
// ---------------------------------------------------------------------------

std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace hfz
