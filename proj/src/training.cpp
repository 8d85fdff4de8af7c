#include "hfz/training.hpp"

#include "hfz/errors.hpp"
#include "hfz/random.hpp"

#include <cmath>
#include <type_traits>

namespace hfz {
namespace {

void validate(const TrainSchedule& s) {
  if (s.epochs < 0 || !(s.learning_rate >= 0.0) || !std::isfinite(s.learning_rate) ||
      s.batch_size < 1) {
    throw std::invalid_argument(
        "TrainSchedule: epochs must be >= 0, learning rate finite and >= 0, batch size >= 1");
  }
}

template <typename Item, typename GradFn, typename PredictFn>
TrainedModel fit(ModelParams params, const std::vector<Item>& train, const std::vector<Item>& val,
                 const TrainSchedule& schedule, GradFn&& gradients, PredictFn&& predict) {
  validate(schedule);
  if (train.empty()) throw std::invalid_argument("training set is empty");

  const std::vector<Item>& select_on = val.empty() ? train : val;
  TrainedModel out{params, {}, 0};
  if (schedule.epochs == 0) return out;

  AdamConfig adam;
  adam.learning_rate = schedule.learning_rate;
  AdamState state = AdamState::zeros_like(params);
  Rng shuffler(schedule.shuffle_seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_accuracy = -1.0;
  std::vector<Item> batch;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    shuffler.shuffle(order);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(schedule.batch_size), ++batch_index) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
      LossAndGradients step = gradients(params, std::span<const Item>(batch));
      if (!std::isfinite(step.loss) || !step.gradients.flatten().allFinite()) {
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(batch_index + 1),
                            epoch, batch_index + 1);
      }
      loss_sum += step.loss * static_cast<double>(stop - start);
      adam_step_inplace(params, step.gradients, state, adam);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    double val_loss = 0.0;
    std::size_t correct = 0;
    for (const Item& item : select_on) {
      const Posterior p = predict(params, item);
      val_loss += cross_entropy(p, item.label);
      if (map_class(p) == item.label) ++correct;
    }
    record.val_loss = val_loss / static_cast<double>(select_on.size());
    record.val_accuracy = static_cast<double>(correct) / static_cast<double>(select_on.size());
    out.history.epochs.push_back(record);

    if (record.val_accuracy >= best_accuracy) {
      best_accuracy = record.val_accuracy;
      out.params = params;
      out.selected_epoch = epoch;
    }
  }
  return out;
}

template <typename Seq>
std::vector<LabeledSequence<Seq>> labeled(const Dataset& ds, const std::vector<Index>& indices,
                                          const Seq Grasp::*member) {
  std::vector<LabeledSequence<Seq>> out;
  out.reserve(indices.size());
  for (Index i : indices) {
    const Grasp& g = ds.grasps.at(static_cast<std::size_t>(i));
    if (g.label < 0 || g.label >= ds.classes()) {
      throw std::invalid_argument("grasp " + g.grasp_id + " has an invalid label");
    }
    out.push_back({&(g.*member), g.label});
  }
  return out;
}

}  // namespace

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& r : epochs) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
           format_double(r.val_loss) + "," + format_double(r.val_accuracy) + "\n";
  }
  return out;
}

TrainedModel train_classifier(const ClassifierSpec& spec, const Dataset& ds, const SplitPlan& plan,
                              const TrainSchedule& schedule, std::uint64_t init_seed) {
  if (static_cast<Index>(plan.per_class.size()) != ds.classes()) {
    throw std::invalid_argument("train_classifier: split plan does not match dataset");
  }
  return train_classifier(spec, ds, plan.train(), plan.val(), schedule, init_seed);
}

TrainedModel train_classifier(const ClassifierSpec& spec, const Dataset& ds,
                              const std::vector<Index>& train_indices,
                              const std::vector<Index>& val_indices, const TrainSchedule& schedule,
                              std::uint64_t init_seed) {
  validate(schedule);
  return std::visit(
      [&](const auto& s) -> TrainedModel {
        using Spec = std::decay_t<decltype(s)>;
        if (s.classes != ds.classes()) {
          throw std::invalid_argument("train_classifier: model has " + std::to_string(s.classes) +
                                      " outputs, dataset has " + std::to_string(ds.classes()) +
                                      " classes");
        }
        if constexpr (std::is_same_v<Spec, TactileModelSpec>) {
          using Item = LabeledSequence<TactileSequence>;
          return fit(
              init_tactile_params(s, init_seed), labeled(ds, train_indices, &Grasp::tactile),
              labeled(ds, val_indices, &Grasp::tactile), schedule,
              [&](const ModelParams& p, std::span<const Item> batch) {
                return model_gradients(s, p, batch);
              },
              [&](const ModelParams& p, const Item& item) {
                return tactile_forward(s, *item.sequence, p);
              });
        } else {
          using Item = LabeledSequence<KinestheticSequence>;
          return fit(
              init_kinesthetic_params(s, init_seed),
              labeled(ds, train_indices, &Grasp::kinesthetic),
              labeled(ds, val_indices, &Grasp::kinesthetic), schedule,
              [&](const ModelParams& p, std::span<const Item> batch) {
                return model_gradients(s, p, batch);
              },
              [&](const ModelParams& p, const Item& item) {
                return kinesthetic_forward(s, *item.sequence, p);
              });
        }
      },
      spec);
}

TrainedModel train_fusion_head(const std::vector<Posterior>& tactile,
                               const std::vector<Posterior>& kinesthetic,
                               const std::vector<Index>& labels, const TrainSchedule& schedule,
                               std::uint64_t init_seed, Index width) {
  if (tactile.size() != kinesthetic.size() || tactile.size() != labels.size()) {
    throw std::invalid_argument("train_fusion_head: posterior and label lists differ in length");
  }
  if (tactile.empty()) throw std::invalid_argument("train_fusion_head: empty training set");
  const Index classes = tactile.front().size();
  std::vector<FusionExample> items;
  items.reserve(tactile.size());
  for (std::size_t i = 0; i < tactile.size(); ++i) {
    if (tactile[i].size() != classes || kinesthetic[i].size() != classes) {
      throw std::invalid_argument("train_fusion_head: posteriors must all have the same length");
    }
    items.push_back({tactile[i], kinesthetic[i], labels[i]});
  }
  return fit(
      init_fusion_params(classes, init_seed, width), items, std::vector<FusionExample>{}, schedule,
      [](const ModelParams& p, std::span<const FusionExample> batch) {
        return fusion_gradients(p, batch);
      },
      [](const ModelParams& p, const FusionExample& item) {
        return neural_fuse_forward(item.tactile, item.kinesthetic, p);
      });
}

Posterior classify(const ClassifierSpec& spec, const ModelParams& params, const Grasp& grasp) {
  return std::visit(
      [&](const auto& s) -> Posterior {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, TactileModelSpec>) {
          return tactile_forward(s, grasp.tactile, params);
        } else {
          return kinesthetic_forward(s, grasp.kinesthetic, params);
        }
      },
      spec);
}

}  // namespace hfz
