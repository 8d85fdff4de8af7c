#include "hfz/eval.hpp"

#include "hfz/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace hfz {

Eigen::MatrixXd ConfusionMatrix::row_normalized() const {
  Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(counts.rows(), counts.cols());
  for (Index r = 0; r < counts.rows(); ++r) {
    const std::int64_t row_total = counts.row(r).sum();
    if (row_total > 0) {
      rates.row(r) = counts.row(r).cast<double>() / static_cast<double>(row_total);
    }
  }
  return rates;
}

ConfusionMatrix confusion_matrix(std::span<const Index> predictions, std::span<const Index> labels,
                                 Index classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("confusion_matrix: " + std::to_string(predictions.size()) +
                                " predictions but " + std::to_string(labels.size()) + " labels");
  }
  if (classes <= 0) throw std::invalid_argument("confusion_matrix: class count must be positive");
  ConfusionMatrix cm;
  cm.counts.setZero(classes, classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index t = labels[i], e = predictions[i];
    if (t < 0 || t >= classes || e < 0 || e >= classes) {
      throw std::invalid_argument("confusion_matrix: class index out of range at item " +
                                  std::to_string(i));
    }
    cm.counts(t, e) += 1;
  }
  return cm;
}

double recognition_rate(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (cm.counts.size() == 0 || total <= 0) {
    throw std::invalid_argument("recognition_rate: empty confusion matrix");
  }
  return static_cast<double>(cm.counts.trace()) / static_cast<double>(total);
}

std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Tactile:
      return "tactile";
    case ClassifierKind::Kinesthetic:
      return "kinesthetic";
    case ClassifierKind::NeuralFusion:
      return "neural_fusion";
    case ClassifierKind::BayesianFusion:
      return "bayesian_fusion";
  }
  return "unknown";
}

namespace {

double median_of(const std::vector<double>& sorted, std::size_t begin, std::size_t end) {
  const std::size_t n = end - begin;
  const std::size_t mid = begin + n / 2;
  return n % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

}  // namespace

SummaryStats summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  SummaryStats s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  s.min = values.front();
  s.max = values.back();
  s.median = median_of(values, 0, n);
  if (n == 1) {
    s.q1 = s.q3 = values.front();
  } else {
    s.q1 = median_of(values, 0, n / 2);
    s.q3 = median_of(values, (n + 1) / 2, n);
  }
  return s;
}

RunResult run_once(const Dataset& raw, const ExperimentConfig& config, std::uint64_t seed) {
  const Index classes = raw.classes();
  TactileModelSpec tactile = config.tactile;
  tactile.height = raw.tactile_height;
  tactile.width = raw.tactile_width;
  tactile.classes = classes;
  KinestheticModelSpec kinesthetic = config.kinesthetic;
  kinesthetic.classes = classes;
  auto seeded = [seed](TrainSchedule s) {
    s.shuffle_seed = seed;
    return s;
  };
  const ClassPrior prior = uniform_prior(classes);

  RunResult result;
  result.seed = seed;
  std::array<std::vector<Index>, kClassifierCount> predictions;
  std::vector<Index> labels;

  // Bayesian protocol: unimodal classifiers and their product fusion.
  const SplitPlan bayes_plan = make_split(raw, Protocol::Bayesian, seed, config.counts);
  const Dataset bayes_data = normalize(raw, bayes_plan);
  const TrainedModel tac = train_classifier(tactile, bayes_data, bayes_plan,
                                            seeded(config.tactile_schedule), seed);
  const TrainedModel kin = train_classifier(kinesthetic, bayes_data, bayes_plan,
                                            seeded(config.kinesthetic_schedule), seed);
  const std::vector<Index> test = bayes_plan.test();
  for (Index i : test) {
    const Grasp& g = bayes_data.grasps[static_cast<std::size_t>(i)];
    const Posterior pt = tactile_forward(tactile, g.tactile, tac.params);
    const Posterior pk = kinesthetic_forward(kinesthetic, g.kinesthetic, kin.params);
    predictions[0].push_back(map_class(pt));
    predictions[1].push_back(map_class(pk));
    predictions[3].push_back(map_class(bayes_fuse(pt, pk, prior)));
    labels.push_back(g.label);
    result.test_grasps.push_back(g.grasp_id);
  }

  // Neural protocol: base models on fewer examples, fusion head on the rest.
  const SplitPlan neural_plan = make_split(raw, Protocol::Neural, seed, config.counts);
  const Dataset neural_data = normalize(raw, neural_plan);
  const TrainedModel tac_n = train_classifier(tactile, neural_data, neural_plan,
                                              seeded(config.tactile_schedule), seed);
  const TrainedModel kin_n = train_classifier(kinesthetic, neural_data, neural_plan,
                                              seeded(config.kinesthetic_schedule), seed);
  std::vector<Posterior> fuse_tac, fuse_kin;
  std::vector<Index> fuse_labels;
  for (Index i : neural_plan.fusion_train()) {
    const Grasp& g = neural_data.grasps[static_cast<std::size_t>(i)];
    fuse_tac.push_back(tactile_forward(tactile, g.tactile, tac_n.params));
    fuse_kin.push_back(kinesthetic_forward(kinesthetic, g.kinesthetic, kin_n.params));
    fuse_labels.push_back(g.label);
  }
  const TrainedModel head = train_fusion_head(fuse_tac, fuse_kin, fuse_labels,
                                              seeded(config.fusion_schedule), seed,
                                              config.fusion_width);
  const std::vector<Index> neural_test = neural_plan.test();
  if (neural_test != test) {
    throw std::logic_error("run_once: protocols drew different test sets");
  }
  for (std::size_t k = 0; k < neural_test.size(); ++k) {
    const Grasp& g = neural_data.grasps[static_cast<std::size_t>(neural_test[k])];
    if (g.grasp_id != result.test_grasps[k]) {
      throw std::logic_error("run_once: tactile/kinesthetic pairing broken");
    }
    const Posterior pt = tactile_forward(tactile, g.tactile, tac_n.params);
    const Posterior pk = kinesthetic_forward(kinesthetic, g.kinesthetic, kin_n.params);
    predictions[2].push_back(map_class(neural_fuse_forward(pt, pk, head.params)));
  }

  for (std::size_t c = 0; c < kClassifierCount; ++c) {
    result.confusion[c] = confusion_matrix(predictions[c], labels, classes);
    result.rates[c] = recognition_rate(result.confusion[c]);
  }
  return result;
}

ExperimentReport assemble_report(std::vector<std::string> class_names, std::vector<RunResult> runs) {
  if (runs.empty()) throw std::invalid_argument("assemble_report: no runs");
  ExperimentReport report;
  report.class_names = std::move(class_names);
  const Index n = static_cast<Index>(report.class_names.size());
  for (std::size_t c = 0; c < kClassifierCount; ++c) {
    std::vector<double> rates;
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, n);
    for (const auto& run : runs) {
      rates.push_back(run.rates[c]);
      mean += run.confusion[c].row_normalized();
    }
    report.summary[c] = summarize(rates);
    report.mean_confusion[c] = mean / static_cast<double>(runs.size());
  }
  report.runs = std::move(runs);
  return report;
}

ExperimentReport run_experiment(const Dataset& raw, const ExperimentConfig& config, int n_runs,
                                std::uint64_t base_seed) {
  if (n_runs < 1) throw std::invalid_argument("run_experiment: need at least one run");
  std::vector<RunResult> runs(static_cast<std::size_t>(n_runs));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_runs));
  std::atomic<int> next{0};

  auto worker = [&] {
    for (int r = next++; r < n_runs; r = next++) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
      try {
        runs[static_cast<std::size_t>(r)] = run_once(raw, config, seed);
      } catch (const TrainingError& e) {
        errors[static_cast<std::size_t>(r)] = std::make_exception_ptr(
            TrainingError("run " + std::to_string(r) + ": " + e.what(), e.epoch(), e.batch()));
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(r)] =
            std::make_exception_ptr(std::runtime_error("run " + std::to_string(r) + ": " + e.what()));
      }
    }
  };

  const int threads = std::clamp(config.parallel, 1, n_runs);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return assemble_report(raw.class_names, std::move(runs));
}

}  // namespace hfz
