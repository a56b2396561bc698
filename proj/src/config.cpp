#include "ratfm/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <stdexcept>

namespace ratfm {

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "' expects a boolean, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"coarse_h", [](RunConfig& c, auto& k, auto& v) { c.data.coarse_h = c.model.coarse_h = to_size(k, v); }},
      {"coarse_w", [](RunConfig& c, auto& k, auto& v) { c.data.coarse_w = c.model.coarse_w = to_size(k, v); }},
      {"scale", [](RunConfig& c, auto& k, auto& v) { c.data.scale = c.model.scale = to_size(k, v); }},
      {"days", [](RunConfig& c, auto& k, auto& v) { c.data.days = to_size(k, v); }},
      {"train_days", [](RunConfig& c, auto& k, auto& v) { c.data.train_days = to_size(k, v); }},
      {"val_days", [](RunConfig& c, auto& k, auto& v) { c.data.val_days = to_size(k, v); }},
      {"test_days", [](RunConfig& c, auto& k, auto& v) { c.data.test_days = to_size(k, v); }},
      {"intervals_per_day",
       [](RunConfig& c, auto& k, auto& v) { c.data.intervals_per_day = c.model.intervals_per_day = to_int(k, v); }},
      {"start_weekday", [](RunConfig& c, auto& k, auto& v) { c.data.start_weekday = to_int(k, v); }},
      {"n_arterial", [](RunConfig& c, auto& k, auto& v) { c.data.n_arterial = to_size(k, v); }},
      {"n_secondary", [](RunConfig& c, auto& k, auto& v) { c.data.n_secondary = to_size(k, v); }},
      {"suburban_artifact", [](RunConfig& c, auto& k, auto& v) { c.data.suburban_artifact = to_bool(k, v); }},
      {"noise", [](RunConfig& c, auto& k, auto& v) { c.data.noise = to_double(k, v); }},
      {"channels", [](RunConfig& c, auto& k, auto& v) { c.model.channels = to_size(k, v); }},
      {"radius", [](RunConfig& c, auto& k, auto& v) { c.model.radius = to_size(k, v); }},
      {"pool", [](RunConfig& c, auto& k, auto& v) { c.model.pool = to_size(k, v); }},
      {"variant", [](RunConfig& c, auto&, auto& v) { c.model.variant = parse_variant(v); }},
      {"road_conv", [](RunConfig& c, auto&, auto& v) { c.model.road_conv = parse_road_conv(v); }},
      {"road_weighting", [](RunConfig& c, auto&, auto& v) { c.road_weighting = parse_road_weighting(v); }},
      {"query", [](RunConfig& c, auto&, auto& v) { c.model.query = parse_query(v); }},
      {"lr", [](RunConfig& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"lr_decay", [](RunConfig& c, auto& k, auto& v) { c.lr_decay = to_double(k, v); }},
      {"lr_patience", [](RunConfig& c, auto& k, auto& v) { c.lr_patience = to_size(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.batch_size = to_size(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.epochs = to_size(k, v); }},
      {"steps_per_epoch", [](RunConfig& c, auto& k, auto& v) { c.steps_per_epoch = to_size(k, v); }},
      {"max_steps", [](RunConfig& c, auto& k, auto& v) { c.max_steps = to_size(k, v); }},
      {"val_samples", [](RunConfig& c, auto& k, auto& v) { c.val_samples = to_size(k, v); }},
      {"loss_epsilon", [](RunConfig& c, auto& k, auto& v) { c.loss_epsilon = to_double(k, v); }},
      {"seed",
       [](RunConfig& c, auto& k, auto& v) {
         std::uint64_t s = 0;
         const auto res = std::from_chars(v.data(), v.data() + v.size(), s);
         if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
           throw std::invalid_argument("config key '" + k + "' expects an unsigned integer, got '" + v + "'");
         }
         c.seed = c.data.seed = c.model.seed = s;
       }},
      {"clamp_nonneg", [](RunConfig& c, auto& k, auto& v) { c.clamp_nonneg = to_bool(k, v); }},
      {"data", [](RunConfig& c, auto&, auto& v) { c.data_dir = v; }},
      {"checkpoint", [](RunConfig& c, auto&, auto& v) { c.checkpoint_dir = v; }},
      {"out", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second(*this, key, value);
  explicit_keys.insert(key);
}

void RunConfig::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv.entries()) set(k, v);
}

KeyValues RunConfig::to_keyvalues() const {
  KeyValues kv;
  kv.set("coarse_h", model.coarse_h);
  kv.set("coarse_w", model.coarse_w);
  kv.set("scale", model.scale);
  kv.set("days", data.days);
  kv.set("train_days", data.train_days);
  kv.set("val_days", data.val_days);
  kv.set("test_days", data.test_days);
  kv.set("intervals_per_day", data.intervals_per_day);
  kv.set("start_weekday", data.start_weekday);
  kv.set("n_arterial", data.n_arterial);
  kv.set("n_secondary", data.n_secondary);
  kv.set("suburban_artifact", data.suburban_artifact);
  kv.set("noise", data.noise);
  kv.set("channels", model.channels);
  kv.set("radius", model.radius);
  kv.set("pool", model.pool_factor());
  kv.set("variant", std::string(to_string(model.variant)));
  kv.set("road_conv", std::string(to_string(model.road_conv)));
  kv.set("road_weighting", std::string(to_string(road_weighting)));
  kv.set("query", std::string(to_string(model.query)));
  kv.set("lr", learning_rate);
  kv.set("lr_decay", lr_decay);
  kv.set("lr_patience", lr_patience);
  kv.set("batch_size", batch_size);
  kv.set("epochs", epochs);
  kv.set("steps_per_epoch", steps_per_epoch);
  kv.set("max_steps", max_steps);
  kv.set("val_samples", val_samples);
  kv.set("loss_epsilon", loss_epsilon);
  kv.set("seed", static_cast<unsigned long long>(seed));
  kv.set("clamp_nonneg", clamp_nonneg);
  kv.set("data", data_dir.string());
  kv.set("checkpoint", checkpoint_dir.string());
  kv.set("out", out_dir.string());
  return kv;
}

void RunConfig::use_paper_scale() {
  model.channels = 128;
  model.radius = 4;
  explicit_keys.insert("channels");
  explicit_keys.insert("radius");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (model.channels == 0 || model.channels % 4 != 0) fail("channels must be a positive multiple of 4");
  if (model.scale < 1) fail("scale must be at least 1");
  if (model.coarse_h != data.coarse_h || model.coarse_w != data.coarse_w || model.scale != data.scale) {
    fail("fine extents must equal scale times the coarse extents");
  }
  if (!(learning_rate > 0.0)) fail("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must be in (0, 1]");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(loss_epsilon > 0.0)) fail("loss_epsilon must be positive");
  model.validate();
  data.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  c.apply(KeyValues::read(path));
  return c;
}

}  // namespace ratfm
