#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratfm/datagen.hpp"
#include "ratfm/keyvalue.hpp"
#include "ratfm/tensor.hpp"

namespace ratfm {

class UndefinedResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spatial [H*W] mask in row-major order, applied to every channel. Empty means all cells.
using CellMask = std::vector<std::uint8_t>;

/// Root mean squared error over every scalar entry of every sample (masked cells only).
double rmse(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask = {});
double mae(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask = {});

/// Mean over samples of sum|pred - truth| / sum|truth|. Samples whose masked truth sums to
/// zero are skipped; throws UndefinedResultError when every sample is skipped.
double mape_citywide(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask = {});

/// Top ceil(fraction * H * W) cells by mean total flow; ties go to the lower row-major index.
CellMask heavy_region_mask(std::span<const Tensor> train_fine, double fraction = 0.2);

enum class TimeSlice { all, weekday, weekend, day, night, rush };
inline constexpr TimeSlice kReportSlices[] = {TimeSlice::weekday, TimeSlice::weekend, TimeSlice::day,
                                              TimeSlice::night, TimeSlice::rush};
std::string to_string(TimeSlice s);

/// Day is [06:00, 18:00) by interval start; rush is [07:30, 09:30) and [17:30, 19:30).
bool in_slice(const Timestamp& t, TimeSlice slice, int intervals_per_day);
std::vector<std::size_t> time_slice(std::span<const Timestamp> times, TimeSlice slice, int intervals_per_day);

/// Elementwise mean of the training fine maps.
Tensor ha_baseline(std::span<const Tensor> train_fine);

struct Metrics {
  std::size_t samples = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;
};

Metrics compute_metrics(std::span<const Tensor> preds, std::span<const Tensor> truths, const CellMask& mask = {});

struct EvalReport {
  Metrics overall;
  std::map<std::string, Metrics> slices;  // heavy plus the five time slices

  KeyValues to_keyvalues() const;
};

EvalReport evaluate(std::span<const Tensor> preds, std::span<const Tensor> truths, std::span<const Timestamp> times,
                    const CellMask& heavy, int intervals_per_day);

}  // namespace ratfm
