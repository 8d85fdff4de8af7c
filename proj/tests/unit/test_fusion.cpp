#include "hfz/fusion.hpp"
#include "hfz/random.hpp"
#include "oracle/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace hfz;

namespace {

Posterior random_posterior(Index n, Rng& rng) {
  Posterior p(n);
  for (Index j = 0; j < n; ++j) p(j) = -std::log(1.0 - rng.uniform());
  return p / p.sum();
}

ModelParams scrambled(ModelParams p, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd v(p.total_size());
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.normal(0.0, 0.5);
  p.assign(v);
  return p;
}

}  // namespace

TEST_CASE("bayes fuse identities") {
  Rng rng(1);
  for (Index n : {2, 5, 36}) {
    const Posterior q = random_posterior(n, rng);
    const ClassPrior uniform = uniform_prior(n);
    CHECK((bayes_fuse(uniform, q, uniform) - q).cwiseAbs().maxCoeff() < 1e-12);
    const ClassPrior prior = random_posterior(n, rng);
    CHECK((bayes_fuse(prior, q, prior) - q).cwiseAbs().maxCoeff() < 1e-12);
    const Posterior r = random_posterior(n, rng);
    CHECK((bayes_fuse(q, r, prior) - bayes_fuse(r, q, prior)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bayes fuse reference value") {
  const Eigen::Vector2d p(0.8, 0.2);
  const Posterior f = bayes_fuse(p, p, uniform_prior(2));
  CHECK(std::abs(f(0) - 0.9411764705882353) < 1e-15);
  CHECK(std::abs(f(1) - 0.058823529411764705) < 1e-15);
}

TEST_CASE("bayes fuse matches the direct product") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + Index(rng.below(10));
    const Posterior a = random_posterior(n, rng), b = random_posterior(n, rng);
    const ClassPrior prior = random_posterior(n, rng);
    const oracle::Vec ref = oracle::bayes_direct(oracle::to_vec(a), oracle::to_vec(b), oracle::to_vec(prior));
    const Posterior f = bayes_fuse(a, b, prior);
    for (Index j = 0; j < n; ++j) CHECK(std::abs(f(j) - ref[std::size_t(j)]) < 1e-12);
  }
}

TEST_CASE("bayes fuse survives zero probabilities") {
  const Posterior f = bayes_fuse(Eigen::Vector3d(0.0, 0.5, 0.5), Eigen::Vector3d(0.5, 0.0, 0.5), uniform_prior(3));
  CHECK(std::isfinite(f.sum()));
  CHECK(f(2) > 0.999);
  CHECK(std::abs(f.sum() - 1.0) < 1e-12);
  // Both classifiers certain of different classes: a tie on the floor.
  const Posterior g = bayes_fuse(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.0, 1.0), uniform_prior(2));
  CHECK(std::abs(g(0) - 0.5) < 1e-12);
}

TEST_CASE("bayes fuse argument checks") {
  const Eigen::Vector2d p(0.5, 0.5);
  CHECK_THROWS_AS(bayes_fuse(p, Eigen::Vector3d(0.2, 0.3, 0.5), uniform_prior(2)), std::invalid_argument);
  CHECK_THROWS_AS(bayes_fuse(p, p, uniform_prior(3)), std::invalid_argument);
  CHECK_THROWS_AS(bayes_fuse(p, p, Eigen::Vector2d(1.0, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(bayes_fuse(p, p, Eigen::Vector2d(0.4, 0.4)), std::invalid_argument);
  CHECK_THROWS_AS(bayes_fuse(Eigen::Vector2d(0.7, 0.7), p, uniform_prior(2)), std::invalid_argument);
  CHECK_THROWS_AS(uniform_prior(0), std::invalid_argument);
}

TEST_CASE("map class") {
  CHECK(map_class(Eigen::Vector3d(0.2, 0.5, 0.3)) == 1);
  CHECK(map_class(Eigen::Vector2d(0.5, 0.5)) == 0);
  CHECK(map_class(Eigen::Vector3d(0.1, 0.45, 0.45)) == 1);
  CHECK(map_class(bayes_fuse(Eigen::Vector2d(0.6, 0.4), Eigen::Vector2d(0.3, 0.7), uniform_prior(2))) == 1);
  CHECK_THROWS_AS(map_class(Posterior()), std::invalid_argument);
}

TEST_CASE("neural fusion head") {
  const ModelParams init = init_fusion_params(4, 9);
  CHECK(fusion_classes(init) == 4);
  CHECK(init.at("dense1.weight").shape == std::vector<Index>{8, 64});
  CHECK(init.at("dense2.weight").shape == std::vector<Index>{64, 64});
  CHECK(init.at("output.weight").shape == std::vector<Index>{64, 4});

  Rng rng(9);
  const Posterior a = random_posterior(4, rng), b = random_posterior(4, rng);
  const Posterior flat = neural_fuse_forward(a, b, init.zeros_like());
  CHECK((flat.array() - 0.25).abs().maxCoeff() < 1e-15);

  const ModelParams p = scrambled(init, 9);
  oracle::Vec v = oracle::to_vec(a);
  for (double x : oracle::to_vec(b)) v.push_back(x);
  auto layer = [&](const oracle::Vec& x, const char* name) {
    const std::string n(name);
    return oracle::dense(x, oracle::to_vec(p.at(n + ".weight").data), oracle::to_vec(p.at(n + ".bias").data));
  };
  const oracle::Vec ref =
      oracle::softmax(layer(oracle::relu(layer(oracle::relu(layer(v, "dense1")), "dense2")), "output"));
  const Posterior out = neural_fuse_forward(a, b, p);
  for (Index j = 0; j < 4; ++j) CHECK(std::abs(out(j) - ref[std::size_t(j)]) < 1e-10);

  CHECK_THROWS_AS(neural_fuse_forward(a, random_posterior(3, rng), p), std::invalid_argument);
  CHECK_THROWS_AS(neural_fuse_forward(random_posterior(5, rng), random_posterior(5, rng), p),
                  std::invalid_argument);
}

TEST_CASE("fusion head gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ModelParams p = scrambled(init_fusion_params(3, seed, 8), seed);
    Rng rng(seed);
    std::vector<FusionExample> batch;
    for (Index k = 0; k < 4; ++k) batch.push_back({random_posterior(3, rng), random_posterior(3, rng), k % 3});
    const LossAndGradients lg = fusion_gradients(p, batch);
    auto loss = [&](const ModelParams& q) { return fusion_gradients(q, batch).loss; };
    CHECK(finite_diff_check(loss, lg.gradients, p) < 1e-4);
  }
  CHECK_THROWS_AS(fusion_gradients(init_fusion_params(3, 1), std::span<const FusionExample>{}),
                  std::invalid_argument);
}
