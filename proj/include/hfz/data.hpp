#pragma once

#include "hfz/models.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hfz {

/// One squeeze-and-release grasp: both modalities come from the same trial.
struct Grasp {
  std::string grasp_id;
  Index label = 0;
  TactileSequence tactile;          // raw sensor counts, [T, 28 * 50] for the published data
  KinestheticSequence kinesthetic;  // joint angles in degrees, [K, 4]
};

/// Min-max statistics computed on the training portion of a split.
struct NormalizationStats {
  double tactile_min = 0.0;
  double tactile_max = 1.0;
  Eigen::Vector4d joint_min = Eigen::Vector4d::Zero();
  Eigen::Vector4d joint_max = Eigen::Vector4d::Ones();
  std::vector<std::string> warnings;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Grasp> grasps;
  Index tactile_height = 28;
  Index tactile_width = 50;
  Index tactile_frames = 21;
  Index kinesthetic_samples = 41;
  std::optional<NormalizationStats> normalization;

  Index classes() const { return static_cast<Index>(class_names.size()); }
  /// Dataset indices of every grasp of class `label`, in dataset order.
  std::vector<Index> indices_of_class(Index label) const;
};

// ---------------------------------------------------------------------------
// Canonical on-disk format
//
//   manifest.json      {"format": "hfz-grasp-dataset", "version": 1,
//                       "tactile_height", "tactile_width", "tactile_frames",
//                       "kinesthetic_samples", "class_names": [...],
//                       "grasps": [{"grasp_id", "label" (class name),
//                                   "tactile_file", "kinesthetic_file"}]}
//   kinesthetic CSV    header theta_al,theta_ar,theta_2l,theta_2r then K rows
//   tactile CSV        T * height rows of width values, frames stacked
//
// File paths in the manifest are relative to the manifest's directory.
// ---------------------------------------------------------------------------

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kKinestheticHeader = "theta_al,theta_ar,theta_2l,theta_2r";

/// Accepts a manifest path or a directory containing manifest.json.
Dataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const Dataset& ds, const std::filesystem::path& directory);

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path, bool skip_header);
std::string format_double(double value);

/// Converts an upstream export laid out as <root>/<class>/<grasp>/{tactile,kinesthetic}.csv
/// (or <root>/<class>/<grasp>_tactile.csv + <grasp>_kinesthetic.csv) into the
/// canonical format. Tactile files may hold one flattened frame per row or
/// frames stacked as height-row blocks; kinesthetic files may be K x 4 or 4 x K.
Dataset convert_upstream(const std::filesystem::path& root, Index height = 28, Index width = 50);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class Protocol { Bayesian, Neural };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

/// Per-class sample counts. `train` is the whole training portion (15 in the
/// published protocol); the neural protocol carves `fusion` of those out for
/// the fusion head. Validation is round(val_fraction * base-train).
struct SplitCounts {
  Index train = 15;
  Index fusion = 5;
  Index test = 45;
  double val_fraction = 0.2;

  Index base_train(Protocol p) const { return p == Protocol::Neural ? train - fusion : train; }
  Index val(Protocol p) const;
  Index fit(Protocol p) const { return base_train(p) - val(p); }
};

struct ClassSplit {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> fusion_train;
  std::vector<Index> test;
};

struct SplitPlan {
  Protocol protocol = Protocol::Bayesian;
  std::uint64_t seed = 0;
  std::vector<ClassSplit> per_class;

  std::vector<Index> train() const;
  std::vector<Index> val() const;
  std::vector<Index> fusion_train() const;
  std::vector<Index> test() const;
  /// Every index whose data may inform normalization (train + val + fusion_train).
  std::vector<Index> training_portion() const;
};

/// Seeded per-class sampling without replacement. For a given seed the test
/// set is the same under both protocols.
SplitPlan make_split(const Dataset& ds, Protocol protocol, std::uint64_t seed,
                     const SplitCounts& counts = {});

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

inline constexpr double kNormalizedClampLow = -0.5;
inline constexpr double kNormalizedClampHigh = 1.5;

NormalizationStats compute_normalization(const Dataset& ds, const std::vector<Index>& indices);
Grasp apply_normalization(const NormalizationStats& stats, const Grasp& grasp);

/// Tactile: global min-max; kinesthetic: per-joint min-max. Statistics come
/// from plan.training_portion() only; all values are clamped to [-0.5, 1.5].
Dataset normalize(const Dataset& ds, const SplitPlan& plan);

// ---------------------------------------------------------------------------
// Synthetic squeeze-and-release generator
// ---------------------------------------------------------------------------

/// Latent object properties driving both modalities.
struct ObjectProfile {
  double stiffness = 0.5;  // (0, 1]: 1 is rigid
  double size = 0.5;       // (0, 1]: relative width between the fingers
  int inclusions = 0;      // hard spots visible in the pressure image
};

struct SyntheticConfig {
  Index classes = 6;
  Index grasps_per_class = 60;
  Index tactile_frames = 21;
  Index kinesthetic_samples = 41;
  Index height = 28;
  Index width = 50;
  double noise = 1.0;
  std::uint64_t seed = 0;
  /// Optional explicit class profiles; drawn from `seed` when empty.
  std::vector<ObjectProfile> profiles;
};

Dataset gen_synthetic(const SyntheticConfig& config);

/// Profiles gen_synthetic would draw for `config` when none are given.
std::vector<ObjectProfile> synthetic_profiles(const SyntheticConfig& config);

}  // namespace hfz
