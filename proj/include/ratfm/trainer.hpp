#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "ratfm/config.hpp"
#include "ratfm/datagen.hpp"
#include "ratfm/model.hpp"
#include "ratfm/optim.hpp"

namespace ratfm {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network road input: the raster, optionally multiplied by the training weight map, divided
/// by its maximum and rounded to storage precision.
Tensor prepare_road_input(const Dataset& data, RoadWeighting weighting);

/// Flow units seen by the network: coarse inputs are divided by `input`, fine targets by
/// `target`, and predictions are multiplied back by `target`.
struct FlowScaling {
  double input = 1.0;
  double target = 1.0;
};

/// input: largest coarse value over the training split. target: mean fine value over the
/// training split, so normalized targets average 1.
FlowScaling flow_scaling(const Dataset& data);

/// Fine-map predictions in original units for the given samples, evaluated in batches.
std::vector<Tensor> predict(RatfmModel& model, const Tensor& road_input, FlowScaling scaling, const Dataset& data,
                            std::span<const std::size_t> indices, bool clamp_nonneg = false,
                            std::size_t batch_size = 16);

std::vector<std::size_t> indices_of(SampleRange r);

struct TrainResult {
  std::vector<double> losses;    // one per Adam step
  std::vector<double> val_mape;  // one per epoch
  std::vector<double> learning_rates;  // per epoch, after any decay
  double best_val_mape = 0.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

class Trainer {
 public:
  Trainer(const Dataset& data, const RunConfig& config);

  /// One Adam step on the given samples. Throws NumericError on a non-finite loss.
  double step(std::span<const std::size_t> indices);

  /// Citywide MAPE of eval-mode predictions for the given samples.
  double evaluate_mape(std::span<const std::size_t> indices);

  /// Full schedule: shuffled epochs, per-epoch validation on storage-rounded weights,
  /// plateau decay, and retention of the best validation snapshot.
  TrainResult fit();

  RatfmModel& model() { return model_; }
  RatfmModel& best_model() { return best_; }
  const Tensor& road_input() const { return road_input_; }
  FlowScaling scaling() const { return scaling_; }
  Adam& optimizer() { return optimizer_; }
  const std::vector<std::size_t>& validation_indices() const { return val_indices_; }

 private:
  const Dataset& data_;
  RunConfig config_;
  RatfmModel model_;
  RatfmModel best_;
  Tensor road_input_;
  FlowScaling scaling_;
  Adam optimizer_;
  std::vector<std::size_t> val_indices_;
};

}  // namespace ratfm
