#include "hfz/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace hfz {

Tensor::Tensor(std::vector<Index> dims) : shape(std::move(dims)) {
  if (shape.empty()) {
    throw std::invalid_argument("Tensor: rank must be at least 1");
  }
  Index count = 1;
  for (Index d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("Tensor: dimensions must be positive");
    }
    count *= d;
  }
  data = Eigen::VectorXd::Zero(count);
}

Index Tensor::leading() const {
  Index count = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) count *= shape[i];
  return count;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape || a.data.size() != b.data.size()) return false;
  return std::equal(a.data.data(), a.data.data() + a.data.size(), b.data.data());
}

Tensor& ModelParams::add(std::string name, std::vector<Index> shape) {
  return add(std::move(name), Tensor(std::move(shape)));
}

Tensor& ModelParams::add(std::string name, Tensor tensor) {
  if (contains(name)) {
    throw std::invalid_argument("ModelParams: duplicate parameter '" + name + "'");
  }
  Index expected = 1;
  for (Index d : tensor.shape) expected *= d;
  if (tensor.shape.empty() || expected != tensor.data.size()) {
    throw std::invalid_argument("ModelParams: tensor '" + name + "' shape does not match data");
  }
  entries_.push_back({std::move(name), std::move(tensor)});
  return entries_.back().tensor;
}

bool ModelParams::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

Tensor& ModelParams::at(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::invalid_argument("ModelParams: no parameter named '" + std::string(name) + "'");
}

const Tensor& ModelParams::at(std::string_view name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

ModelParams::MatrixMap ModelParams::matrix(std::string_view name) {
  Tensor& t = at(name);
  return MatrixMap(t.data.data(), t.leading(), t.trailing());
}

ModelParams::ConstMatrixMap ModelParams::matrix(std::string_view name) const {
  const Tensor& t = at(name);
  return ConstMatrixMap(t.data.data(), t.leading(), t.trailing());
}

Index ModelParams::total_size() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::VectorXd flat(total_size());
  Index offset = 0;
  for (const auto& e : entries_) {
    flat.segment(offset, e.tensor.size()) = e.tensor.data;
    offset += e.tensor.size();
  }
  return flat;
}

void ModelParams::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != total_size()) {
    throw std::invalid_argument("ModelParams::assign: expected " + std::to_string(total_size()) +
                                " values, got " + std::to_string(flat.size()));
  }
  Index offset = 0;
  for (auto& e : entries_) {
    e.tensor.data = flat.segment(offset, e.tensor.size());
    offset += e.tensor.size();
  }
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.shape);
  return out;
}

bool ModelParams::same_layout(const ModelParams& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].tensor.shape != other.entries_[i].tensor.shape) {
      return false;
    }
  }
  return true;
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState state;
  for (const auto& e : params.entries()) {
    state.first_moment.push_back(Eigen::VectorXd::Zero(e.tensor.size()));
    state.second_moment.push_back(Eigen::VectorXd::Zero(e.tensor.size()));
  }
  return state;
}

void adam_step_inplace(ModelParams& params, const ModelParams& grads, AdamState& state,
                       const AdamConfig& config) {
  if (!params.same_layout(grads)) {
    throw std::invalid_argument("adam_step: gradient layout does not match parameters");
  }
  const auto& entries = params.entries();
  if (state.first_moment.size() != entries.size() || state.second_moment.size() != entries.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (state.first_moment[i].size() != entries[i].tensor.size() ||
        state.second_moment[i].size() != entries[i].tensor.size()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for '" + entries[i].name + "'");
    }
  }
  if (!(config.learning_rate >= 0.0) || !(config.epsilon > 0.0) || config.beta1 < 0.0 ||
      config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0) {
    throw std::invalid_argument("adam_step: invalid hyperparameters");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  auto& mutable_entries = params.entries();
  for (std::size_t i = 0; i < mutable_entries.size(); ++i) {
    const Eigen::VectorXd& g = grads.entries()[i].tensor.data;
    Eigen::VectorXd& m = state.first_moment[i];
    Eigen::VectorXd& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
    const Eigen::ArrayXd m_hat = m.array() / correction1;
    const Eigen::ArrayXd v_hat = v.array() / correction2;
    mutable_entries[i].tensor.data.array() -=
        config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
  }
}

AdamUpdate adam_step(const ModelParams& params, const ModelParams& grads, const AdamState& state,
                     const AdamConfig& config) {
  AdamUpdate update{params, state};
  adam_step_inplace(update.params, grads, update.state, config);
  return update;
}

double finite_diff_check(const LossFunction& loss, const Eigen::VectorXd& analytic,
                         const Eigen::VectorXd& params, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("finite_diff_check: step must be positive");
  }
  if (analytic.size() != params.size()) {
    throw std::invalid_argument("finite_diff_check: gradient and parameter sizes differ");
  }
  Eigen::VectorXd probe = params;
  double worst = 0.0;
  for (Index i = 0; i < params.size(); ++i) {
    const double original = probe(i);
    probe(i) = original + h;
    const double up = loss(probe);
    probe(i) = original - h;
    const double down = loss(probe);
    probe(i) = original;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(i);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

double finite_diff_check(const std::function<double(const ModelParams&)>& loss,
                         const ModelParams& analytic, const ModelParams& params, double h) {
  if (!params.same_layout(analytic)) {
    throw std::invalid_argument("finite_diff_check: gradient layout does not match parameters");
  }
  ModelParams scratch = params;
  return finite_diff_check(
      [&](const Eigen::VectorXd& flat) {
        scratch.assign(flat);
        return loss(scratch);
      },
      analytic.flatten(), params.flatten(), h);
}

void require_distribution(const Eigen::Ref<const Eigen::VectorXd>& p, std::string_view what,
                          double tolerance) {
  if (p.size() == 0) {
    throw std::invalid_argument(std::string(what) + ": empty distribution");
  }
  if (!p.allFinite() || (p.array() < 0.0).any()) {
    throw std::invalid_argument(std::string(what) + ": entries must be finite and non-negative");
  }
  if (std::abs(p.sum() - 1.0) > tolerance) {
    throw std::invalid_argument(std::string(what) + ": entries must sum to 1");
  }
}

}  // namespace hfz
