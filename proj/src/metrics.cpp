#include "ratfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ratfm {

namespace {

struct Checked {
  std::size_t cells = 0;
  std::size_t channels = 0;
};

Checked check_pairs(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask) {
  if (preds.empty()) throw std::invalid_argument("metrics: empty input");
  if (preds.size() != truths.size()) throw std::invalid_argument("metrics: prediction/truth count mismatch");
  const Shape& shape = truths.front().shape();
  if (shape.size() != 3) throw ShapeError("metrics: expected [H,W,C] maps, got " + to_string(shape));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].shape() != shape || truths[i].shape() != shape) {
      throw ShapeError("metrics: sample " + std::to_string(i) + " shape mismatch");
    }
  }
  const Checked c{shape[0] * shape[1], shape[2]};
  if (!mask.empty() && mask.size() != c.cells) throw ShapeError("metrics: mask size does not match the grid");
  return c;
}

template <typename F>
void for_each_entry(const Checked& c, const CellMask& mask, const Tensor& p, const Tensor& t, F&& f) {
  const auto pd = p.data();
  const auto td = t.data();
  for (std::size_t cell = 0; cell < c.cells; ++cell) {
    if (!mask.empty() && !mask[cell]) continue;
    for (std::size_t k = 0; k < c.channels; ++k) f(pd[cell * c.channels + k], td[cell * c.channels + k]);
  }
}

std::size_t active_cells(const Checked& c, const CellMask& mask) {
  if (mask.empty()) return c.cells;
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

}  // namespace

double rmse(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask) {
  const Checked c = check_pairs(preds, truths, mask);
  double sq = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for_each_entry(c, mask, preds[i], truths[i], [&](double p, double t) { sq += (p - t) * (p - t); });
  }
  const double n = static_cast<double>(preds.size() * active_cells(c, mask) * c.channels);
  if (n == 0.0) throw UndefinedResultError("rmse: mask selects no cells");
  return std::sqrt(sq / n);
}

double mae(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask) {
  const Checked c = check_pairs(preds, truths, mask);
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for_each_entry(c, mask, preds[i], truths[i], [&](double p, double t) { abs_sum += std::abs(p - t); });
  }
  const double n = static_cast<double>(preds.size() * active_cells(c, mask) * c.channels);
  if (n == 0.0) throw UndefinedResultError("mae: mask selects no cells");
  return abs_sum / n;
}

double mape_citywide(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask) {
  const Checked c = check_pairs(preds, truths, mask);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double num = 0.0, den = 0.0;
    for_each_entry(c, mask, preds[i], truths[i], [&](double p, double t) {
      num += std::abs(p - t);
      den += std::abs(t);
    });
    if (den == 0.0) continue;
    total += num / den;
    ++counted;
  }
  if (counted == 0) throw UndefinedResultError("mape: every sample has zero ground-truth flow");
  return total / static_cast<double>(counted);
}

CellMask heavy_region_mask(std::span<const Tensor> train_fine, double fraction) {
  if (train_fine.empty()) throw std::invalid_argument("heavy_region_mask: empty history");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("heavy_region_mask: fraction must be in (0, 1]");
  const Shape& shape = train_fine.front().shape();
  if (shape.size() != 3) throw ShapeError("heavy_region_mask: expected [H,W,C] maps");
  const std::size_t cells = shape[0] * shape[1], channels = shape[2];
  std::vector<double> total(cells, 0.0);
  for (const Tensor& m : train_fine) {
    if (m.shape() != shape) throw ShapeError("heavy_region_mask: inconsistent shapes");
    const auto d = m.data();
    for (std::size_t i = 0; i < cells; ++i) {
      for (std::size_t k = 0; k < channels; ++k) total[i] += d[i * channels + k];
    }
  }
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return total[a] > total[b]; });
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(cells) - 1e-9));
  CellMask mask(cells, 0);
  for (std::size_t i = 0; i < keep; ++i) mask[order[i]] = 1;
  return mask;
}

std::string to_string(TimeSlice s) {
  switch (s) {
    case TimeSlice::all: return "all";
    case TimeSlice::weekday: return "weekday";
    case TimeSlice::weekend: return "weekend";
    case TimeSlice::day: return "day";
    case TimeSlice::night: return "night";
    case TimeSlice::rush: return "rush";
  }
  return "?";
}

bool in_slice(const Timestamp& t, TimeSlice slice, int intervals_per_day) {
  const int minute = static_cast<int>(t.interval) * (1440 / intervals_per_day);
  const bool day = minute >= 360 && minute < 1080;
  switch (slice) {
    case TimeSlice::all: return true;
    case TimeSlice::weekday: return t.weekday();
    case TimeSlice::weekend: return !t.weekday();
    case TimeSlice::day: return day;
    case TimeSlice::night: return !day;
    case TimeSlice::rush: return (minute >= 450 && minute < 570) || (minute >= 1050 && minute < 1170);
  }
  return false;
}

std::vector<std::size_t> time_slice(std::span<const Timestamp> times, TimeSlice slice, int intervals_per_day) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (in_slice(times[i], slice, intervals_per_day)) out.push_back(i);
  }
  return out;
}

Tensor ha_baseline(std::span<const Tensor> train_fine) {
  if (train_fine.empty()) throw std::invalid_argument("ha_baseline: empty history");
  const Shape& shape = train_fine.front().shape();
  std::vector<double> mean(element_count(shape), 0.0);
  for (const Tensor& m : train_fine) {
    if (m.shape() != shape) throw ShapeError("ha_baseline: inconsistent shapes");
    const auto d = m.data();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d[i];
  }
  for (double& v : mean) v /= static_cast<double>(train_fine.size());
  return Tensor::from(shape, std::move(mean));
}

Metrics compute_metrics(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask) {
  Metrics m;
  m.samples = preds.size();
  m.rmse = rmse(preds, truths, mask);
  m.mae = mae(preds, truths, mask);
  m.mape = mape_citywide(preds, truths, mask);
  return m;
}

KeyValues EvalReport::to_keyvalues() const {
  KeyValues kv;
  auto put = [&kv](const std::string& prefix, const Metrics& m) {
    kv.set(prefix + ".samples", m.samples);
    if (m.samples == 0) return;
    kv.set(prefix + ".rmse", m.rmse);
    kv.set(prefix + ".mae", m.mae);
    kv.set(prefix + ".mape", m.mape);
  };
  put("all", overall);
  for (const auto& [name, m] : slices) put(name, m);
  return kv;
}

EvalReport evaluate(std::span<const Tensor> preds, std::span<const Tensor> truths, std::span<const Timestamp> times,
                    const CellMask& heavy, int intervals_per_day) {
  if (times.size() != preds.size()) throw std::invalid_argument("evaluate: timestamp count mismatch");
  EvalReport r;
  r.overall = compute_metrics(preds, truths);
  r.slices["heavy"] = compute_metrics(preds, truths, heavy);
  for (TimeSlice s : kReportSlices) {
    std::vector<Tensor> p, t;
    for (std::size_t i : time_slice(times, s, intervals_per_day)) {
      p.push_back(preds[i]);
      t.push_back(truths[i]);
    }
    r.slices[to_string(s)] = p.empty() ? Metrics{} : compute_metrics(p, t);
  }
  return r;
}

}  // namespace ratfm
