#pragma once

#include <array>
#include <cstddef>

namespace ratfm {

inline constexpr int kWeatherCodes = 14;
inline constexpr std::size_t kExternalFeatures = 5;

/// Digitized meteorological and time factors for one interval.
struct ExternalVector {
  int weather = 0;           // ordinal code in [0, 13]
  double temperature = 0.0;  // min-max scaled to [0, 1]
  double windspeed = 0.0;    // min-max scaled to [0, 1]
  int day_of_week = 0;       // 0 = Monday ... 6 = Sunday
  int time_of_day = 0;       // interval index within the day

  bool weekday() const { return day_of_week < 5; }
};

/// Throws std::out_of_range when a field leaves its declared range.
void validate(const ExternalVector& e, int intervals_per_day);

/// Network input: every ordinal divided by its largest value, so all five entries lie in [0, 1].
std::array<double, kExternalFeatures> encode(const ExternalVector& e, int intervals_per_day);

/// Raw row layout used on disk: weather, temperature, windspeed, day_of_week, time_of_day.
std::array<double, kExternalFeatures> to_row(const ExternalVector& e);
ExternalVector from_row(const double* row);

}  // namespace ratfm
