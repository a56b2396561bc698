#pragma once

#include <cstdint>
#include <vector>

#include "ratfm/tensor.hpp"

namespace ratfm {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments start at zero; step() consumes and clears the
/// parameter gradients.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  /// Uses each parameter's accumulated gradient. Parameters without a gradient are skipped.
  void step();
  /// Explicit-gradient form; grads[i] must match params[i] in shape.
  void step(const std::vector<Tensor>& grads);

  std::int64_t step_count() const { return step_; }
  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  void update(std::size_t index, std::span<const double> grad, double correction1, double correction2);

  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
};

/// Glorot-uniform samples in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
                      bool requires_grad = true);

}  // namespace ratfm
