#pragma once

#include "hfz/data.hpp"
#include "hfz/training.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hfz {

/// counts(t, e): number of items of target class t estimated as class e.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  Index classes() const { return counts.rows(); }
  std::int64_t total() const { return counts.sum(); }
  /// Each row divided by its count; rows without items stay zero.
  Eigen::MatrixXd row_normalized() const;
};

ConfusionMatrix confusion_matrix(std::span<const Index> predictions, std::span<const Index> labels,
                                 Index classes);

/// trace / total.
double recognition_rate(const ConfusionMatrix& cm);

enum class ClassifierKind { Tactile = 0, Kinesthetic = 1, NeuralFusion = 2, BayesianFusion = 3 };
inline constexpr std::size_t kClassifierCount = 4;
inline constexpr std::array<ClassifierKind, kClassifierCount> kAllClassifiers = {
    ClassifierKind::Tactile, ClassifierKind::Kinesthetic, ClassifierKind::NeuralFusion,
    ClassifierKind::BayesianFusion};
std::string to_string(ClassifierKind k);

struct ExperimentConfig {
  TactileModelSpec tactile;        // height/width/classes are taken from the dataset
  KinestheticModelSpec kinesthetic;  // classes is taken from the dataset
  TrainSchedule tactile_schedule = TrainSchedule::tactile_preset();
  TrainSchedule kinesthetic_schedule = TrainSchedule::kinesthetic_preset();
  TrainSchedule fusion_schedule = TrainSchedule::fusion_preset();
  SplitCounts counts;
  Index fusion_width = kFusionWidth;
  int parallel = 1;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::array<double, kClassifierCount> rates{};
  std::array<ConfusionMatrix, kClassifierCount> confusion;
  std::vector<std::string> test_grasps;  // shared by all four classifiers
};

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Quartiles by the median-exclusive method.
SummaryStats summarize(std::vector<double> values);

struct ExperimentReport {
  std::vector<std::string> class_names;
  std::vector<RunResult> runs;
  std::array<SummaryStats, kClassifierCount> summary;
  std::array<Eigen::MatrixXd, kClassifierCount> mean_confusion;  // mean of row-normalized CMs
};

/// One repetition: both protocols on the split drawn from `seed`; all four
/// classifiers are scored on the same test grasps.
RunResult run_once(const Dataset& raw, const ExperimentConfig& config, std::uint64_t seed);

/// Run r uses seed base_seed + r. Runs may execute on `config.parallel`
/// threads; results are merged by run index.
ExperimentReport run_experiment(const Dataset& raw, const ExperimentConfig& config, int n_runs,
                                std::uint64_t base_seed);

ExperimentReport assemble_report(std::vector<std::string> class_names, std::vector<RunResult> runs);

// Text output ---------------------------------------------------------------

std::string rates_csv(const ExperimentReport& report);
std::string summary_csv(const ExperimentReport& report);
std::string confusion_csv(const Eigen::MatrixXd& cm, const std::vector<std::string>& class_names);
std::string report_text(const ExperimentReport& report);

/// Writes rates.csv, summary.csv, confusion_<classifier>.csv and report.txt.
void write_report(const ExperimentReport& report, const std::filesystem::path& directory);

}  // namespace hfz
