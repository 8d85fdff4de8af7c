#pragma once

#include "hfz/models.hpp"
#include "hfz/numerics.hpp"

#include <cstdint>
#include <span>

namespace hfz {

/// Prior class probabilities; entries must be strictly positive.
using ClassPrior = Eigen::VectorXd;

/// Floor applied to each classifier posterior before taking logs.
inline constexpr double kFusionFloor = 1e-12;

ClassPrior uniform_prior(Index classes);

/// Conditionally independent fusion of two posteriors:
/// fused[j] proportional to p1[j] * p2[j] / prior[j], accumulated in log
/// space and normalized.
Posterior bayes_fuse(const Posterior& p1, const Posterior& p2, const ClassPrior& prior);

/// MAP class; ties go to the lowest index.
Index map_class(const Posterior& p);

// ---------------------------------------------------------------------------
// Learned fusion head: concat(p_tactile, p_kinesthetic) -> dense(64) -> relu
// -> dense(64) -> relu -> dense(N) -> softmax.
// ---------------------------------------------------------------------------

inline constexpr Index kFusionWidth = 64;

ModelParams init_fusion_params(Index classes, std::uint64_t seed, Index width = kFusionWidth);

/// Class count a fusion parameter set was built for.
Index fusion_classes(const ModelParams& params);

Posterior neural_fuse_forward(const Posterior& p1, const Posterior& p2, const ModelParams& params);

struct FusionExample {
  Posterior tactile;
  Posterior kinesthetic;
  Index label = 0;
};

/// Mean cross-entropy of the fusion head over the batch and its gradient.
LossAndGradients fusion_gradients(const ModelParams& params, std::span<const FusionExample> batch);

}  // namespace hfz
