#include "ratfm/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "ratfm/random.hpp"

namespace ratfm {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::update(std::size_t index, std::span<const double> grad, double correction1, double correction2) {
  auto data = params_[index].mutable_data();
  auto& m = m_[index];
  auto& v = v_[index];
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < data.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    data[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

void Adam::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    update(i, params_[i].grad(), c1, c2);
    params_[i].clear_grad();
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("adam: gradient count does not match parameter count");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params_[i].shape()) {
      throw ShapeError("adam: gradient shape " + to_string(grads[i].shape()) + " does not match parameter " +
                       to_string(params_[i].shape()));
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    update(i, grads[i].data(), c1, c2);
    params_[i].clear_grad();
  }
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed, bool requires_grad) {
  if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("xavier_uniform: fans must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(seed);
  std::vector<double> values(element_count(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

}  // namespace ratfm
