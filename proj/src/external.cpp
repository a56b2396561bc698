#include "ratfm/external.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ratfm {

void validate(const ExternalVector& e, int intervals_per_day) {
  auto fail = [](const std::string& what) { throw std::out_of_range("external factor out of range: " + what); };
  if (e.weather < 0 || e.weather >= kWeatherCodes) fail("weather " + std::to_string(e.weather));
  if (!(e.temperature >= 0.0 && e.temperature <= 1.0)) fail("temperature");
  if (!(e.windspeed >= 0.0 && e.windspeed <= 1.0)) fail("windspeed");
  if (e.day_of_week < 0 || e.day_of_week > 6) fail("day_of_week " + std::to_string(e.day_of_week));
  if (e.time_of_day < 0 || e.time_of_day >= intervals_per_day) fail("time_of_day " + std::to_string(e.time_of_day));
}

std::array<double, kExternalFeatures> encode(const ExternalVector& e, int intervals_per_day) {
  validate(e, intervals_per_day);
  const double tod_span = intervals_per_day > 1 ? static_cast<double>(intervals_per_day - 1) : 1.0;
  return {static_cast<double>(e.weather) / (kWeatherCodes - 1), e.temperature, e.windspeed,
          static_cast<double>(e.day_of_week) / 6.0, static_cast<double>(e.time_of_day) / tod_span};
}

std::array<double, kExternalFeatures> to_row(const ExternalVector& e) {
  return {static_cast<double>(e.weather), e.temperature, e.windspeed, static_cast<double>(e.day_of_week),
          static_cast<double>(e.time_of_day)};
}

ExternalVector from_row(const double* row) {
  ExternalVector e;
  e.weather = static_cast<int>(std::lround(row[0]));
  e.temperature = row[1];
  e.windspeed = row[2];
  e.day_of_week = static_cast<int>(std::lround(row[3]));
  e.time_of_day = static_cast<int>(std::lround(row[4]));
  return e;
}

}  // namespace ratfm
