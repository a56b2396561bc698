#include "ratfm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ratfm/metrics.hpp"
#include "ratfm/tensor_io.hpp"

namespace ratfm {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566;

Tensor stack_scaled(const Dataset& data, std::span<const std::size_t> indices, bool fine, double inv_scale) {
  const Shape& one = fine ? data.samples.front().fine.shape() : data.samples.front().coarse.shape();
  const std::size_t per = element_count(one);
  std::vector<double> values(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = data.samples.at(indices[b]);
    const auto src = fine ? s.fine.data() : s.coarse.data();
    for (std::size_t i = 0; i < per; ++i) values[b * per + i] = src[i] * inv_scale;
  }
  return Tensor::from({indices.size(), one[0], one[1], one[2]}, std::move(values));
}

std::vector<ExternalVector> externals_of(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<ExternalVector> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.samples.at(i).external);
  return out;
}

std::vector<std::size_t> shuffled(std::vector<std::size_t> v, std::uint64_t seed, std::uint64_t pass) {
  Rng rng(seed, stream_id({kShuffleTag, pass}));
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return v;
}

RatfmModel snapshot_of(const RatfmModel& model) {
  RatfmModel copy = build_variant(model.config());
  copy_state(model, copy);
  round_state_to_storage(copy);
  return copy;
}

}  // namespace

std::vector<std::size_t> indices_of(SampleRange r) {
  std::vector<std::size_t> out(r.size());
  std::iota(out.begin(), out.end(), r.begin);
  return out;
}

Tensor prepare_road_input(const Dataset& data, RoadWeighting weighting) {
  Tensor map = data.road;
  if (weighting == RoadWeighting::weighted) {
    const auto history = data.coarse_maps(data.train);
    map = weighted_road_map(data.road, build_weight_map(history, data.config.fine_h(), data.config.fine_w()));
  }
  const auto v = map.data();
  const double peak = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  std::vector<double> scaled(v.begin(), v.end());
  if (peak > 0.0) {
    for (double& e : scaled) e /= peak;
  }
  return round_to_storage(Tensor::from(map.shape(), std::move(scaled)));
}

FlowScaling flow_scaling(const Dataset& data) {
  double peak = 0.0, total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = data.train.begin; i < data.train.end; ++i) {
    for (double v : data.samples[i].coarse.data()) peak = std::max(peak, v);
    for (double v : data.samples[i].fine.data()) total += v;
    count += data.samples[i].fine.size();
  }
  const double mean = count > 0 ? total / static_cast<double>(count) : 0.0;
  return {peak > 0.0 ? peak : 1.0, mean > 0.0 ? mean : 1.0};
}

std::vector<Tensor> predict(RatfmModel& model, const Tensor& road_input, FlowScaling scaling, const Dataset& data,
                            std::span<const std::size_t> indices, bool clamp_nonneg, std::size_t batch_size) {
  std::vector<Tensor> out;
  out.reserve(indices.size());
  NoGradScope no_grad;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const Tensor x = stack_scaled(data, chunk, false, 1.0 / scaling.input);
    const auto ext = externals_of(data, chunk);
    const Tensor y = model.forward(x, ext, road_input, Mode::eval);
    const std::size_t per = y.size() / chunk.size();
    const Shape one{y.dim(1), y.dim(2), y.dim(3)};
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      std::vector<double> v(y.data().begin() + b * per, y.data().begin() + (b + 1) * per);
      for (double& e : v) {
        e *= scaling.target;
        if (clamp_nonneg) e = std::max(e, 0.0);
      }
      out.push_back(Tensor::from(one, std::move(v)));
    }
  }
  return out;
}

Trainer::Trainer(const Dataset& data, const RunConfig& config)
    : data_(data),
      config_(config),
      model_(build_variant(config.model)),
      road_input_(prepare_road_input(data, config.road_weighting)),
      scaling_(flow_scaling(data)),
      optimizer_(model_.parameter_tensors(), AdamConfig{config.learning_rate}) {
  config_.validate();
  if (data.config.coarse_h != config.model.coarse_h || data.config.coarse_w != config.model.coarse_w ||
      data.config.scale != config.model.scale) {
    throw std::invalid_argument("dataset grid does not match the model configuration");
  }
  val_indices_ = indices_of(data.val);
  if (config.val_samples > 0 && config.val_samples < val_indices_.size()) {
    std::vector<std::size_t> picked;
    const double stride = static_cast<double>(val_indices_.size()) / static_cast<double>(config.val_samples);
    for (std::size_t i = 0; i < config.val_samples; ++i) {
      picked.push_back(val_indices_[static_cast<std::size_t>(std::floor(i * stride))]);
    }
    val_indices_ = std::move(picked);
  }
  best_ = snapshot_of(model_);
}

double Trainer::step(std::span<const std::size_t> indices) {
  const Tensor x = stack_scaled(data_, indices, false, 1.0 / scaling_.input);
  const Tensor y = stack_scaled(data_, indices, true, 1.0 / scaling_.target);
  const auto ext = externals_of(data_, indices);
  Tape tape;
  TapeScope scope(tape);
  const Tensor loss = mape_loss(model_.forward(x, ext, road_input_, Mode::train), y, config_.loss_epsilon);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite training loss at step " + std::to_string(optimizer_.step_count() + 1));
  }
  tape.backward(loss);
  optimizer_.step();
  return value;
}

double Trainer::evaluate_mape(std::span<const std::size_t> indices) {
  const auto preds = predict(model_, road_input_, scaling_, data_, indices);
  std::vector<Tensor> truth;
  for (std::size_t i : indices) truth.push_back(data_.samples.at(i).fine);
  return mape_citywide(preds, truth);
}

TrainResult Trainer::fit() {
  TrainResult r;
  r.best_val_mape = std::numeric_limits<double>::infinity();
  const std::vector<std::size_t> train = indices_of(data_.train);
  const std::size_t n = train.size();
  const std::size_t per_epoch =
      config_.steps_per_epoch > 0 ? config_.steps_per_epoch : (n + config_.batch_size - 1) / config_.batch_size;
  std::vector<Tensor> val_truth;
  for (std::size_t i : val_indices_) val_truth.push_back(data_.samples[i].fine);

  std::uint64_t pass = 0;
  std::vector<std::size_t> order = shuffled(train, config_.seed, pass);
  std::size_t cursor = 0;
  std::size_t stale = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < config_.epochs && !done; ++epoch) {
    for (std::size_t s = 0; s < per_epoch; ++s) {
      std::vector<std::size_t> batch;
      while (batch.size() < config_.batch_size) {
        if (cursor == order.size()) {
          order = shuffled(train, config_.seed, ++pass);
          cursor = 0;
          if (config_.steps_per_epoch == 0 && !batch.empty()) break;
        }
        batch.push_back(order[cursor++]);
      }
      if (batch.empty()) break;
      r.losses.push_back(step(batch));
      ++r.steps;
      if (config_.max_steps > 0 && r.steps >= config_.max_steps) {
        done = true;
        break;
      }
    }
    RatfmModel snapshot = snapshot_of(model_);
    const double v = mape_citywide(predict(snapshot, road_input_, scaling_, data_, val_indices_), val_truth);
    if (!std::isfinite(v)) throw NumericError("non-finite validation MAPE after epoch " + std::to_string(epoch + 1));
    r.val_mape.push_back(v);
    if (v < r.best_val_mape) {
      r.best_val_mape = v;
      r.best_epoch = epoch + 1;
      best_ = std::move(snapshot);
      stale = 0;
    } else if (++stale >= config_.lr_patience) {
      optimizer_.set_learning_rate(optimizer_.learning_rate() * config_.lr_decay);
      stale = 0;
    }
    r.learning_rates.push_back(optimizer_.learning_rate());
  }
  return r;
}

}  // namespace ratfm
