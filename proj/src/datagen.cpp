#include "ratfm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ratfm/keyvalue.hpp"
#include "ratfm/random.hpp"
#include "ratfm/tensor_io.hpp"

namespace ratfm {

namespace {

enum StreamTag : std::uint64_t {
  kGeometryTag = 0x67656f,
  kDayTag = 0x646179,
  kBlockTag = 0x626c6b,
  kNoiseTag = 0x6e6f6973,
  kBackgroundTag = 0x626b67,
  kExternalTag = 0x657874,
};

DirectionClass direction_of(std::size_t k) { return static_cast<DirectionClass>(k % 4); }

// A straight run through the grid along `dir`, starting near (y, x) and spanning `length`
// cells at most, clipped to the grid.
RoadSegment make_line(DirectionClass dir, int h, int w, int y, int x, int length) {
  int dy = 0, dx = 0;
  switch (dir) {
    case DirectionClass::horizontal: dx = 1; break;
    case DirectionClass::vertical: dy = 1; break;
    case DirectionClass::forward_diagonal: dy = 1; dx = 1; break;
    case DirectionClass::backward_diagonal: dy = 1; dx = -1; break;
  }
  int steps = length - 1;
  if (dy > 0) steps = std::min(steps, h - 1 - y);
  if (dx > 0) steps = std::min(steps, w - 1 - x);
  if (dx < 0) steps = std::min(steps, x);
  RoadSegment s;
  s.y0 = y;
  s.x0 = x;
  s.y1 = y + dy * steps;
  s.x1 = x + dx * steps;
  s.direction = dir;
  return s;
}

double distance_to_segment(double py, double px, const RoadSegment& s) {
  const double ay = s.y0 + 0.5, ax = s.x0 + 0.5;
  const double by = s.y1 + 0.5, bx = s.x1 + 0.5;
  const double vy = by - ay, vx = bx - ax;
  const double len2 = vy * vy + vx * vx;
  double t = len2 > 0.0 ? ((py - ay) * vy + (px - ax) * vx) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ey = py - (ay + t * vy), ex = px - (ax + t * vx);
  return std::sqrt(ey * ey + ex * ex);
}

bool covers(const RoadSegment& s, std::size_t ry, std::size_t rx) {
  return distance_to_segment((static_cast<double>(ry) + 0.5) / 2.0, (static_cast<double>(rx) + 0.5) / 2.0, s) <=
         s.width / 2.0;
}

double bump(double hour, double centre, double width) {
  const double d = (hour - centre) / width;
  return std::exp(-0.5 * d * d);
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

RoadGeometry gen_road_geometry(std::uint64_t seed, std::size_t fine_h, std::size_t fine_w, std::size_t n_arterial,
                               std::size_t n_secondary, bool suburban_artifact) {
  if (n_arterial < 1 || n_secondary < 1) throw std::invalid_argument("gen_road_geometry: counts must be at least 1");
  if (fine_h < 4 || fine_w < 4) throw std::invalid_argument("gen_road_geometry: grid must be at least 4x4");
  Rng rng(seed, stream_id({kGeometryTag}));
  const int h = static_cast<int>(fine_h);
  const int w = static_cast<int>(fine_w);
  const int span = std::max(h, w);
  RoadGeometry g{fine_h, fine_w, {}};
  const std::size_t total = n_arterial + n_secondary;
  for (std::size_t k = 0; k < total; ++k) {
    const bool arterial = k < n_arterial;
    const DirectionClass dir = direction_of(k);
    int y = 0, x = 0, length = span;
    if (arterial) {
      // Arterials cross the whole city from an edge.
      switch (dir) {
        case DirectionClass::horizontal: y = 1 + static_cast<int>(rng.below(h - 2)); break;
        case DirectionClass::vertical: x = 1 + static_cast<int>(rng.below(w - 2)); break;
        case DirectionClass::forward_diagonal:
          if (rng.uniform() < 0.5) x = static_cast<int>(rng.below(w / 2));
          else y = static_cast<int>(rng.below(h / 2));
          break;
        case DirectionClass::backward_diagonal:
          if (rng.uniform() < 0.5) x = w - 1 - static_cast<int>(rng.below(w / 2));
          else { x = w - 1; y = static_cast<int>(rng.below(h / 2)); }
          break;
      }
    } else {
      length = std::max(4, span / 4 + static_cast<int>(rng.below(span / 4 + 1)));
      y = static_cast<int>(rng.below(h));
      x = static_cast<int>(rng.below(w));
      if (dir == DirectionClass::vertical || dir == DirectionClass::forward_diagonal ||
          dir == DirectionClass::backward_diagonal) {
        y = static_cast<int>(rng.below(std::max(1, h - length / 2)));
      }
    }
    RoadSegment s = make_line(dir, h, w, y, x, length);
    s.road_class = arterial ? RoadClass::arterial : RoadClass::secondary;
    s.width = arterial ? (rng.uniform() < 0.5 ? 1.0 : 2.0) : 1.0;
    s.base_rate = arterial ? rng.uniform(30.0, 50.0) : rng.uniform(10.0, 20.0);
    g.segments.push_back(s);
  }
  if (suburban_artifact) {
    RoadSegment s = make_line(DirectionClass::horizontal, h, w, h - 2, 0, w);
    s.road_class = RoadClass::arterial;
    s.width = 2.0;
    s.base_rate = 3.0;
    g.segments.push_back(s);
  }
  return g;
}

Tensor rasterize_roads(const RoadGeometry& g, std::size_t fine_h, std::size_t fine_w) {
  const std::size_t rh = 2 * fine_h, rw = 2 * fine_w;
  std::vector<double> raster(rh * rw, 0.0);
  for (const auto& s : g.segments) {
    const double reach = s.width / 2.0 + 1.0;
    const double lo_y = std::min(s.y0, s.y1) + 0.5 - reach, hi_y = std::max(s.y0, s.y1) + 0.5 + reach;
    const double lo_x = std::min(s.x0, s.x1) + 0.5 - reach, hi_x = std::max(s.x0, s.x1) + 0.5 + reach;
    const std::size_t y_begin = static_cast<std::size_t>(std::max(0.0, std::floor(2.0 * lo_y)));
    const std::size_t y_end = std::min(rh, static_cast<std::size_t>(std::max(0.0, std::ceil(2.0 * hi_y))));
    const std::size_t x_begin = static_cast<std::size_t>(std::max(0.0, std::floor(2.0 * lo_x)));
    const std::size_t x_end = std::min(rw, static_cast<std::size_t>(std::max(0.0, std::ceil(2.0 * hi_x))));
    for (std::size_t y = y_begin; y < y_end; ++y) {
      for (std::size_t x = x_begin; x < x_end; ++x) {
        if (covers(s, y, x)) raster[y * rw + x] = std::max(raster[y * rw + x], s.intensity());
      }
    }
  }
  return Tensor::from({rh, rw, 1}, std::move(raster));
}

double diurnal_profile(RoadClass road_class, double hour, bool weekday) {
  const double daytime = sigmoid(2.0 * (hour - 6.5)) * sigmoid(2.0 * (21.0 - hour));
  if (weekday) {
    if (road_class == RoadClass::arterial) {
      return 0.08 + 1.0 * bump(hour, 8.0, 1.0) + 0.9 * bump(hour, 18.0, 1.2) + 0.3 * daytime;
    }
    return 0.12 + 0.35 * bump(hour, 8.5, 1.5) + 0.35 * bump(hour, 17.5, 1.5) + 0.45 * daytime;
  }
  if (road_class == RoadClass::arterial) return 0.08 + 0.5 * bump(hour, 13.0, 3.0) + 0.15 * daytime;
  return 0.12 + 0.55 * bump(hour, 14.0, 3.5) + 0.2 * daytime;
}

Tensor simulate_fine_flow(const RoadGeometry& g, const Timestamp& t, std::uint64_t seed, const FlowOptions& options,
                          int weather) {
  if (options.intervals_per_day <= 0 || t.interval >= static_cast<std::size_t>(options.intervals_per_day)) {
    throw std::invalid_argument("simulate_fine_flow: interval out of range");
  }
  if (t.day_of_week < 0 || t.day_of_week > 6) throw std::invalid_argument("simulate_fine_flow: bad day_of_week");
  const std::size_t h = g.fine_h, w = g.fine_w;
  const double hours_per_interval = 24.0 / options.intervals_per_day;
  const double hour = (static_cast<double>(t.interval) + 0.5) * hours_per_interval;
  const bool wet = weather >= kPrecipitationCode;
  const std::size_t per_block = std::max<std::size_t>(1, static_cast<std::size_t>(options.intervals_per_day / 12));
  const std::size_t block = t.interval / per_block;

  std::vector<double> rate(h * w * 2, 0.0);
  // Background traffic on every cell, with a fixed spatial texture.
  Rng texture(seed, stream_id({kBackgroundTag}));
  for (std::size_t i = 0; i < h * w; ++i) {
    const double level = options.background * (0.3 + 0.7 * texture.uniform()) * (wet ? 0.7 : 1.0);
    rate[2 * i] = level * (0.3 + 0.7 * diurnal_profile(RoadClass::secondary, hour, t.weekday()));
    rate[2 * i + 1] = level * (0.3 + 0.7 * diurnal_profile(RoadClass::secondary, std::fmod(hour + 23.25, 24.0), t.weekday()));
  }

  for (std::size_t si = 0; si < g.segments.size(); ++si) {
    const RoadSegment& s = g.segments[si];
    Rng day_rng(seed, stream_id({kDayTag, si, t.day}));
    Rng block_rng(seed, stream_id({kBlockTag, si, t.day, block}));
    const double level = std::exp(0.35 * day_rng.normal() + 0.3 * block_rng.normal());
    const double weather_factor = !wet ? 1.0 : (s.road_class == RoadClass::arterial ? 1.15 : 0.6);
    const double in_level = s.intensity() * s.base_rate * level * weather_factor *
                            diurnal_profile(s.road_class, hour, t.weekday());
    const double out_level = s.intensity() * s.base_rate * level * weather_factor *
                             diurnal_profile(s.road_class, std::fmod(hour + 23.25, 24.0), t.weekday());
    const double reach = s.width / 2.0 + 1.0;
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - reach)));
    const int y_hi = std::min(static_cast<int>(h) - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + reach)));
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - reach)));
    const int x_hi = std::min(static_cast<int>(w) - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + reach)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        int covered = 0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) covered += covers(s, 2 * y + sy, 2 * x + sx) ? 1 : 0;
        }
        if (covered == 0) continue;
        const double fraction = covered / 4.0;
        const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
        rate[2 * i] += fraction * in_level;
        rate[2 * i + 1] += fraction * out_level;
      }
    }
  }

  Rng noise(seed, stream_id({kNoiseTag, t.day, t.interval}));
  std::vector<double> counts(rate.size());
  for (std::size_t i = 0; i < rate.size(); ++i) {
    const double jitter = options.noise > 0.0 ? options.noise * std::sqrt(rate[i]) * std::abs(noise.normal()) : 0.0;
    counts[i] = std::floor(rate[i] + jitter + 0.5);
  }
  return Tensor::from({h, w, 2}, std::move(counts));
}

Tensor aggregate_coarse(const Tensor& fine, std::size_t n) {
  if (fine.rank() != 3) throw ShapeError("aggregate_coarse: expected [H,W,C], got " + to_string(fine.shape()));
  const std::size_t h = fine.dim(0), w = fine.dim(1), c = fine.dim(2);
  if (n == 0 || h % n != 0 || w % n != 0) {
    throw ShapeError("aggregate_coarse: extents " + to_string(fine.shape()) + " not divisible by " + std::to_string(n));
  }
  const std::size_t ch = h / n, cw = w / n;
  std::vector<double> out(ch * cw * c, 0.0);
  const auto f = fine.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) out[((y / n) * cw + x / n) * c + k] += f[(y * w + x) * c + k];
    }
  }
  return Tensor::from({ch, cw, c}, std::move(out));
}

std::vector<ExternalVector> gen_external_series(std::uint64_t seed, std::size_t days, int intervals_per_day,
                                                int start_weekday) {
  if (days == 0 || intervals_per_day <= 0) throw std::invalid_argument("gen_external_series: counts must be positive");
  if (start_weekday < 0 || start_weekday > 6) throw std::invalid_argument("gen_external_series: bad start weekday");
  const std::size_t n = days * static_cast<std::size_t>(intervals_per_day);
  Rng rng(seed, stream_id({kExternalTag}));
  std::vector<ExternalVector> out(n);
  std::vector<double> temperature(n), wind(n);
  int code = 0;
  double daily_mean = 15.0;
  double gust = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t day = i / intervals_per_day;
    const int tod = static_cast<int>(i % intervals_per_day);
    if (tod == 0 && i > 0) daily_mean += 1.5 * rng.normal();
    if (rng.uniform() > 0.985) {
      code = rng.uniform() < 0.7 ? static_cast<int>(rng.below(5)) : 5 + static_cast<int>(rng.below(kWeatherCodes - 5));
    }
    const double hour = 24.0 * tod / intervals_per_day;
    temperature[i] = daily_mean + 7.0 * std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0);
    gust = 0.97 * gust + 0.3 * rng.normal();
    wind[i] = std::abs(gust) + 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * (hour - 12.0) / 24.0));
    out[i].weather = code;
    out[i].day_of_week = static_cast<int>((static_cast<std::size_t>(start_weekday) + day) % 7);
    out[i].time_of_day = tod;
  }
  auto scale_into = [&](const std::vector<double>& raw, double ExternalVector::*field) {
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = range > 0.0 ? (raw[i] - *lo) / range : 0.0;
      out[i].*field = static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0)));
    }
  };
  scale_into(temperature, &ExternalVector::temperature);
  scale_into(wind, &ExternalVector::windspeed);
  return out;
}

// --- dataset -------------------------------------------------------------------------------

void DatasetConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("dataset config: " + m); };
  if (coarse_h == 0 || coarse_w == 0 || scale == 0) fail("extents and scale must be positive");
  if (days == 0) fail("days must be positive");
  if (train_days + val_days + test_days != days) fail("train_days + val_days + test_days must equal days");
  if (train_days == 0 || val_days == 0 || test_days == 0) fail("each split needs at least one day");
  if (intervals_per_day <= 0 || 1440 % intervals_per_day != 0) fail("intervals_per_day must divide 1440");
  if (start_weekday < 0 || start_weekday > 6) fail("start_weekday must be in [0, 6]");
  if (n_arterial == 0 || n_secondary == 0) fail("road counts must be positive");
  if (noise < 0.0) fail("noise must be nonnegative");
}

std::vector<Tensor> Dataset::coarse_maps(SampleRange r) const {
  std::vector<Tensor> out;
  for (std::size_t i = r.begin; i < r.end; ++i) out.push_back(samples[i].coarse);
  return out;
}

std::vector<Tensor> Dataset::fine_maps(SampleRange r) const {
  std::vector<Tensor> out;
  for (std::size_t i = r.begin; i < r.end; ++i) out.push_back(samples[i].fine);
  return out;
}

Timestamp timestamp_at(std::size_t index, int intervals_per_day, int start_weekday) {
  Timestamp t;
  t.day = index / static_cast<std::size_t>(intervals_per_day);
  t.interval = index % static_cast<std::size_t>(intervals_per_day);
  t.day_of_week = static_cast<int>((static_cast<std::size_t>(start_weekday) + t.day) % 7);
  return t;
}

namespace {

void assign_splits(Dataset& d) {
  const std::size_t per_day = static_cast<std::size_t>(d.config.intervals_per_day);
  d.train = {0, d.config.train_days * per_day};
  d.val = {d.train.end, d.train.end + d.config.val_days * per_day};
  d.test = {d.val.end, d.val.end + d.config.test_days * per_day};
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset d;
  d.config = config;
  const std::size_t fh = config.fine_h(), fw = config.fine_w();
  const RoadGeometry geometry =
      gen_road_geometry(config.seed, fh, fw, config.n_arterial, config.n_secondary, config.suburban_artifact);
  d.road = rasterize_roads(geometry, fh, fw);
  const auto external = gen_external_series(config.seed, config.days, config.intervals_per_day, config.start_weekday);
  FlowOptions options;
  options.intervals_per_day = config.intervals_per_day;
  options.noise = config.noise;
  d.samples.resize(external.size());
  for (std::size_t i = 0; i < external.size(); ++i) {
    Sample& s = d.samples[i];
    s.time = timestamp_at(i, config.intervals_per_day, config.start_weekday);
    s.external = external[i];
    s.fine = simulate_fine_flow(geometry, s.time, config.seed, options, s.external.weather);
    s.coarse = aggregate_coarse(s.fine, config.scale);
  }
  assign_splits(d);
  return d;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "fine");
  fs::create_directories(dir / "coarse");
  const DatasetConfig& c = data.config;
  KeyValues m;
  m.set("format", "ratfm-dataset");
  m.set("version", 1);
  m.set("coarse_h", c.coarse_h);
  m.set("coarse_w", c.coarse_w);
  m.set("fine_h", c.fine_h());
  m.set("fine_w", c.fine_w());
  m.set("scale", c.scale);
  m.set("days", c.days);
  m.set("train_days", c.train_days);
  m.set("val_days", c.val_days);
  m.set("test_days", c.test_days);
  m.set("intervals_per_day", c.intervals_per_day);
  m.set("interval_minutes", c.interval_minutes());
  m.set("start_weekday", c.start_weekday);
  m.set("n_arterial", c.n_arterial);
  m.set("n_secondary", c.n_secondary);
  m.set("suburban_artifact", c.suburban_artifact);
  m.set("noise", c.noise);
  m.set("seed", static_cast<unsigned long long>(c.seed));
  m.set("samples", data.samples.size());
  m.set("train", std::to_string(data.train.begin) + ":" + std::to_string(data.train.end));
  m.set("val", std::to_string(data.val.begin) + ":" + std::to_string(data.val.end));
  m.set("test", std::to_string(data.test.begin) + ":" + std::to_string(data.test.end));

  write_rtfm(dir / "road.rtfm", data.road);
  std::vector<double> ext;
  ext.reserve(data.samples.size() * kExternalFeatures);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const std::string name = std::to_string(i) + ".rtfm";
    write_rtfm(dir / "fine" / name, data.samples[i].fine);
    write_rtfm(dir / "coarse" / name, data.samples[i].coarse);
    const auto row = to_row(data.samples[i].external);
    ext.insert(ext.end(), row.begin(), row.end());
  }
  write_rtfm(dir / "external.rtfm", Tensor::from({data.samples.size(), kExternalFeatures}, std::move(ext)));
  m.write(dir / "manifest.txt");
}

namespace {

SampleRange parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw FormatError("bad sample range '" + text + "'");
  return {std::stoul(text.substr(0, colon)), std::stoul(text.substr(colon + 1))};
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& dir) {
  const KeyValues m = KeyValues::read(dir / "manifest.txt");
  if (m.get_or("format", "") != "ratfm-dataset") throw FormatError("not a dataset directory: " + dir.string());
  Dataset d;
  DatasetConfig& c = d.config;
  c.coarse_h = static_cast<std::size_t>(m.get_int("coarse_h"));
  c.coarse_w = static_cast<std::size_t>(m.get_int("coarse_w"));
  c.scale = static_cast<std::size_t>(m.get_int("scale"));
  c.days = static_cast<std::size_t>(m.get_int("days"));
  c.train_days = static_cast<std::size_t>(m.get_int("train_days"));
  c.val_days = static_cast<std::size_t>(m.get_int("val_days"));
  c.test_days = static_cast<std::size_t>(m.get_int("test_days"));
  c.intervals_per_day = static_cast<int>(m.get_int("intervals_per_day"));
  c.start_weekday = static_cast<int>(m.get_int("start_weekday"));
  c.n_arterial = static_cast<std::size_t>(m.get_int("n_arterial"));
  c.n_secondary = static_cast<std::size_t>(m.get_int("n_secondary"));
  c.suburban_artifact = m.get_bool("suburban_artifact");
  c.noise = m.get_double("noise");
  c.seed = std::stoull(m.get("seed"));
  c.validate();
  if (static_cast<std::size_t>(m.get_int("fine_h")) != c.fine_h() ||
      static_cast<std::size_t>(m.get_int("fine_w")) != c.fine_w()) {
    throw FormatError("manifest fine extents disagree with coarse extents and scale");
  }

  const std::size_t n = static_cast<std::size_t>(m.get_int("samples"));
  if (n != c.days * static_cast<std::size_t>(c.intervals_per_day)) throw FormatError("manifest sample count mismatch");
  d.road = read_rtfm(dir / "road.rtfm");
  if (d.road.shape() != Shape{2 * c.fine_h(), 2 * c.fine_w(), 1}) throw FormatError("road map has the wrong shape");
  const Tensor ext = read_rtfm(dir / "external.rtfm");
  if (ext.shape() != Shape{n, kExternalFeatures}) throw FormatError("external table has the wrong shape");
  const Shape fine_shape{c.fine_h(), c.fine_w(), 2};
  const Shape coarse_shape{c.coarse_h, c.coarse_w, 2};
  d.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample& s = d.samples[i];
    const std::string name = std::to_string(i) + ".rtfm";
    s.time = timestamp_at(i, c.intervals_per_day, c.start_weekday);
    s.fine = read_rtfm(dir / "fine" / name);
    s.coarse = read_rtfm(dir / "coarse" / name);
    if (s.fine.shape() != fine_shape || s.coarse.shape() != coarse_shape) {
      throw FormatError("sample " + std::to_string(i) + " has the wrong shape");
    }
    s.external = from_row(ext.data().data() + i * kExternalFeatures);
  }
  assign_splits(d);
  if (parse_range(m.get("train")).end != d.train.end || parse_range(m.get("val")).end != d.val.end ||
      parse_range(m.get("test")).end != d.test.end) {
    throw FormatError("manifest split ranges disagree with the day counts");
  }
  return d;
}

double road_flow_correlation(const Dataset& data) {
  const std::size_t h = data.config.fine_h(), w = data.config.fine_w();
  std::vector<double> road(h * w, 0.0), flow(h * w, 0.0);
  for (std::size_t r = 0; r < 2 * h; ++r) {
    for (std::size_t c = 0; c < 2 * w; ++c) road[(r / 2) * w + c / 2] += 0.25 * data.road.data()[r * 2 * w + c];
  }
  for (std::size_t i = data.train.begin; i < data.train.end; ++i) {
    const auto f = data.samples[i].fine.data();
    for (std::size_t k = 0; k < h * w; ++k) flow[k] += f[2 * k] + f[2 * k + 1];
  }
  const double n = static_cast<double>(h * w);
  const double mr = std::accumulate(road.begin(), road.end(), 0.0) / n;
  const double mf = std::accumulate(flow.begin(), flow.end(), 0.0) / n;
  double srf = 0.0, srr = 0.0, sff = 0.0;
  for (std::size_t k = 0; k < h * w; ++k) {
    srf += (road[k] - mr) * (flow[k] - mf);
    srr += (road[k] - mr) * (road[k] - mr);
    sff += (flow[k] - mf) * (flow[k] - mf);
  }
  return srr > 0.0 && sff > 0.0 ? srf / std::sqrt(srr * sff) : 0.0;
}

}  // namespace ratfm
