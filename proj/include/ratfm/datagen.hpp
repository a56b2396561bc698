#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ratfm/external.hpp"
#include "ratfm/tensor.hpp"

namespace ratfm {

enum class RoadClass { arterial, secondary };
enum class DirectionClass { horizontal, vertical, forward_diagonal, backward_diagonal };

/// Straight road between two fine-grid cells. Lines run through cell centres.
struct RoadSegment {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  double width = 1.0;  // in fine cells
  RoadClass road_class = RoadClass::arterial;
  DirectionClass direction = DirectionClass::horizontal;
  double base_rate = 1.0;  // vehicles per fully covered cell per interval at profile 1

  double intensity() const { return road_class == RoadClass::arterial ? 1.0 : 0.5; }
};

struct RoadGeometry {
  std::size_t fine_h = 0;
  std::size_t fine_w = 0;
  std::vector<RoadSegment> segments;
};

/// Arterials span the city; secondaries are shorter. Directions cycle through the four
/// classes over the combined segment list. With `suburban_artifact` an extra arterial
/// with a very low base rate runs along the bottom of the city.
RoadGeometry gen_road_geometry(std::uint64_t seed, std::size_t fine_h, std::size_t fine_w, std::size_t n_arterial,
                               std::size_t n_secondary, bool suburban_artifact = false);

/// [2H,2W,1] raster: each pixel holds the largest intensity of the segments whose
/// centre line lies within width/2 of the pixel centre.
Tensor rasterize_roads(const RoadGeometry& g, std::size_t fine_h, std::size_t fine_w);

struct Timestamp {
  std::size_t day = 0;
  std::size_t interval = 0;
  int day_of_week = 0;  // 0 = Monday

  bool weekday() const { return day_of_week < 5; }
};

struct FlowOptions {
  int intervals_per_day = 96;
  double noise = 1.0;       // 0 gives the noise-free mean flow
  double background = 1.0;  // off-road rate at profile 1
};

/// Relative traffic level at `hour` in [0, 24).
double diurnal_profile(RoadClass road_class, double hour, bool weekday);

/// Weather codes from this value up are treated as precipitation.
inline constexpr int kPrecipitationCode = 9;

/// Fine [H,W,2] inflow/outflow counts. Deterministic in (geometry, timestamp, seed, weather).
Tensor simulate_fine_flow(const RoadGeometry& g, const Timestamp& t, std::uint64_t seed, const FlowOptions& options = {},
                          int weather = 0);

/// Per-channel sums over N x N blocks: [H,W,C] -> [H/N,W/N,C].
Tensor aggregate_coarse(const Tensor& fine, std::size_t n);

std::vector<ExternalVector> gen_external_series(std::uint64_t seed, std::size_t days, int intervals_per_day,
                                                int start_weekday = 0);

struct DatasetConfig {
  std::size_t coarse_h = 8;
  std::size_t coarse_w = 8;
  std::size_t scale = 4;
  std::size_t days = 28;
  std::size_t train_days = 21;
  std::size_t val_days = 3;
  std::size_t test_days = 4;
  int intervals_per_day = 96;
  int start_weekday = 0;
  std::size_t n_arterial = 6;
  std::size_t n_secondary = 8;
  bool suburban_artifact = true;
  double noise = 1.0;
  std::uint64_t seed = 1;

  std::size_t fine_h() const { return coarse_h * scale; }
  std::size_t fine_w() const { return coarse_w * scale; }
  int interval_minutes() const { return 1440 / intervals_per_day; }
  void validate() const;
};

struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct Sample {
  Timestamp time;
  Tensor fine;    // [H,W,2]
  Tensor coarse;  // [H/N,W/N,2]
  ExternalVector external;
};

struct Dataset {
  DatasetConfig config;
  Tensor road;  // [2H,2W,1]
  std::vector<Sample> samples;
  SampleRange train, val, test;

  std::vector<Tensor> coarse_maps(SampleRange r) const;
  std::vector<Tensor> fine_maps(SampleRange r) const;
};

Timestamp timestamp_at(std::size_t index, int intervals_per_day, int start_weekday);

Dataset generate_dataset(const DatasetConfig& config);

/// Pearson correlation over fine cells between the road raster (averaged over each cell's
/// 2x2 pixels) and the mean total training flow.
double road_flow_correlation(const Dataset& data);

// Layout: manifest.txt, road.rtfm, fine/<idx>.rtfm, coarse/<idx>.rtfm, external.rtfm ([T,5]).
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace ratfm
