#pragma once

#include "hfz/data.hpp"
#include "hfz/fusion.hpp"
#include "hfz/models.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hfz {

struct TrainSchedule {
  int epochs = 30;
  double learning_rate = 1e-4;
  Index batch_size = 8;
  std::uint64_t shuffle_seed = 0;

  static TrainSchedule tactile_preset() { return {30, 1e-4, 8, 0}; }
  static TrainSchedule kinesthetic_preset() { return {700, 1e-5, 8, 0}; }
  static TrainSchedule fusion_preset() { return {200, 1e-4, 8, 0}; }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// "epoch,train_loss,val_loss,val_acc" plus one row per epoch.
  std::string to_csv() const;
};

struct TrainedModel {
  ModelParams params;
  TrainHistory history;
  int selected_epoch = 0;  // 0 means the initialization was returned
};

/// Trains on plan.train(), selects on plan.val() (best accuracy, ties to the
/// later epoch). When the plan has no validation items the training items
/// are used for selection. `ds` should already be normalized.
TrainedModel train_classifier(const ClassifierSpec& spec, const Dataset& ds, const SplitPlan& plan,
                              const TrainSchedule& schedule, std::uint64_t init_seed);

/// Same loop over explicit index lists.
TrainedModel train_classifier(const ClassifierSpec& spec, const Dataset& ds,
                              const std::vector<Index>& train_indices,
                              const std::vector<Index>& val_indices, const TrainSchedule& schedule,
                              std::uint64_t init_seed);

/// Trains the fusion head on posterior pairs from frozen base models.
TrainedModel train_fusion_head(const std::vector<Posterior>& tactile,
                               const std::vector<Posterior>& kinesthetic,
                               const std::vector<Index>& labels, const TrainSchedule& schedule,
                               std::uint64_t init_seed, Index width = kFusionWidth);

/// Posterior of a trained classifier on one grasp.
Posterior classify(const ClassifierSpec& spec, const ModelParams& params, const Grasp& grasp);

}  // namespace hfz
