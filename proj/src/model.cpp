#include "ratfm/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ratfm/optim.hpp"
#include "ratfm/tensor_io.hpp"

namespace ratfm {

namespace {

std::string normalized_name(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '-' || c == '+' || c == ' ') c = '_';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

Tensor project(const Tensor& tokens, const Tensor& weight) {
  const Shape& s = tokens.shape();
  Tensor flat = reshape(tokens, {s[0] * s[1], s[2]});
  return reshape(matmul(flat, weight), {s[0], s[1], weight.dim(1)});
}

Tensor dense_tokens(const DenseLayer& layer, const Tensor& tokens) {
  const Shape& s = tokens.shape();
  Tensor y = layer.forward(reshape(tokens, {s[0] * s[1], s[2]}));
  return reshape(y, {s[0], s[1], y.dim(1)});
}

void check_tokens(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw ShapeError(std::string(what) + ": expected [B,T,C] tokens, got " + to_string(t.shape()));
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::short_net: return "Short-Net";
    case Variant::short_road: return "Short+Road";
    case Variant::short_long_road: return "Short+Long+Road";
    case Variant::full: return "Full";
  }
  return "?";
}

std::string_view to_string(RoadConvKind k) { return k == RoadConvKind::md1d ? "md1d" : "square2d"; }
std::string_view to_string(RoadWeighting w) { return w == RoadWeighting::weighted ? "weighted" : "common"; }
std::string_view to_string(QueryMode q) { return q == QueryMode::road ? "road" : "positional"; }

Variant parse_variant(std::string_view text) {
  const std::string n = normalized_name(text);
  if (n == "short_net") return Variant::short_net;
  if (n == "short_road") return Variant::short_road;
  if (n == "short_long_road") return Variant::short_long_road;
  if (n == "full" || n == "ratfm") return Variant::full;
  throw std::invalid_argument("unknown variant '" + std::string(text) + "'");
}

RoadConvKind parse_road_conv(std::string_view text) {
  const std::string n = normalized_name(text);
  if (n == "md1d") return RoadConvKind::md1d;
  if (n == "square2d") return RoadConvKind::square2d;
  throw std::invalid_argument("unknown road_conv '" + std::string(text) + "'");
}

RoadWeighting parse_road_weighting(std::string_view text) {
  const std::string n = normalized_name(text);
  if (n == "weighted") return RoadWeighting::weighted;
  if (n == "common") return RoadWeighting::common;
  throw std::invalid_argument("unknown road_weighting '" + std::string(text) + "'");
}

QueryMode parse_query(std::string_view text) {
  const std::string n = normalized_name(text);
  if (n == "road") return QueryMode::road;
  if (n == "positional") return QueryMode::positional;
  throw std::invalid_argument("unknown query '" + std::string(text) + "'");
}

// --- config --------------------------------------------------------------------------------

std::size_t ModelConfig::pool_factor() const {
  if (pool != 0) return pool;
  return std::max(fine_h(), fine_w()) >= 128 ? 4 : 2;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (channels == 0 || channels % 4 != 0) fail("channels must be a positive multiple of 4");
  if (radius == 0) fail("radius must be at least 1");
  if (coarse_h == 0 || coarse_w == 0 || scale == 0) fail("grid extents and scale must be positive");
  if (fine_h() % 2 != 0 || fine_w() % 2 != 0) fail("fine extents must be even");
  const std::size_t s = pool_factor();
  if (uses_transformer() && (s == 0 || fine_h() % s != 0 || fine_w() % s != 0)) {
    fail("fine extents must be divisible by the pool factor " + std::to_string(s));
  }
  if (intervals_per_day <= 0) fail("intervals_per_day must be positive");
}

void ModelConfig::store(KeyValues& kv) const {
  kv.set("variant", std::string(to_string(variant)));
  kv.set("channels", channels);
  kv.set("radius", radius);
  kv.set("coarse_h", coarse_h);
  kv.set("coarse_w", coarse_w);
  kv.set("scale", scale);
  kv.set("pool", pool_factor());
  kv.set("road_conv", std::string(to_string(road_conv)));
  kv.set("query", std::string(to_string(query)));
  kv.set("seed", static_cast<unsigned long long>(seed));
  kv.set("intervals_per_day", intervals_per_day);
}

ModelConfig ModelConfig::load(const KeyValues& kv) {
  ModelConfig c;
  c.variant = parse_variant(kv.get("variant"));
  c.channels = static_cast<std::size_t>(kv.get_int("channels"));
  c.radius = static_cast<std::size_t>(kv.get_int("radius"));
  c.coarse_h = static_cast<std::size_t>(kv.get_int("coarse_h"));
  c.coarse_w = static_cast<std::size_t>(kv.get_int("coarse_w"));
  c.scale = static_cast<std::size_t>(kv.get_int("scale"));
  c.pool = static_cast<std::size_t>(kv.get_int("pool"));
  c.road_conv = parse_road_conv(kv.get("road_conv"));
  c.query = parse_query(kv.get("query"));
  c.seed = std::stoull(kv.get("seed"));
  c.intervals_per_day = static_cast<int>(kv.get_int("intervals_per_day"));
  c.validate();
  return c;
}

// --- external ------------------------------------------------------------------------------

ExternalMlp::ExternalMlp(Rng& rng) : hidden_(kExternalFeatures, 128, rng), output_(128, 1, rng) {}

Tensor ExternalMlp::forward(const Tensor& encoded, std::size_t fine_h, std::size_t fine_w) const {
  if (encoded.rank() != 2 || encoded.dim(1) != kExternalFeatures) {
    throw ShapeError("external module: expected [B,5], got " + to_string(encoded.shape()));
  }
  Tensor h = relu(hidden_.forward(encoded));
  Tensor y = relu(output_.forward(h));
  return tile(reshape(y, {encoded.dim(0), 1, 1, 1}), {1, fine_h, fine_w, 1});
}

void ExternalMlp::parameters(const std::string& prefix, NamedTensors& out) const {
  hidden_.parameters(prefix + ".hidden", out);
  output_.parameters(prefix + ".output", out);
}

// --- short range ---------------------------------------------------------------------------

ShortRangeBranch::ShortRangeBranch(std::size_t channels, bool fuse_road, Rng& rng)
    : fuse_road_(fuse_road), entry_(9, 3, channels, rng) {
  for (int i = 0; i < 5; ++i) local_.push_back(make_residual_block_2d(channels, rng));
  fusion_ = Conv2DLayer(3, fuse_road ? 2 * channels : channels, channels, rng);
  for (int i = 0; i < 11; ++i) deep_.push_back(make_residual_block_2d(channels, rng));
  out1_ = Conv2DLayer(3, channels, channels, rng);
  out2_ = Conv2DLayer(3, channels, channels, rng);
}

Tensor ShortRangeBranch::forward(const Tensor& coarse, const Tensor& external_feature, const Tensor& road_feature,
                                 Mode mode) {
  if (coarse.rank() != 4 || coarse.dim(3) != 2) {
    throw ShapeError("short range: coarse map must be [B,Ic,Jc,2], got " + to_string(coarse.shape()));
  }
  const Shape& es = external_feature.shape();
  if (es.size() != 4 || es[0] != coarse.dim(0) || es[3] != 1) {
    throw ShapeError("short range: external feature must be [B,H,W,1], got " + to_string(es));
  }
  Tensor up = bilinear_resize(coarse, es[1], es[2]);
  Tensor x = entry_.forward(concat(3, {up, external_feature}));
  for (auto& b : local_) x = b.forward(x, mode);
  if (fuse_road_) {
    if (!road_feature.defined()) throw std::invalid_argument("short range: road feature required");
    if (road_feature.shape() != x.shape()) {
      throw ShapeError("short range: road feature " + to_string(road_feature.shape()) + " vs " + to_string(x.shape()));
    }
    x = concat(3, {x, road_feature});
  }
  x = fusion_.forward(x);
  for (auto& b : deep_) x = b.forward(x, mode);
  return out2_.forward(out1_.forward(x));
}

void ShortRangeBranch::parameters(const std::string& prefix, NamedTensors& out) const {
  entry_.parameters(prefix + ".entry", out);
  for (std::size_t i = 0; i < local_.size(); ++i) local_[i].parameters(prefix + ".local" + std::to_string(i), out);
  fusion_.parameters(prefix + ".fusion", out);
  for (std::size_t i = 0; i < deep_.size(); ++i) deep_[i].parameters(prefix + ".deep" + std::to_string(i), out);
  out1_.parameters(prefix + ".out1", out);
  out2_.parameters(prefix + ".out2", out);
}

void ShortRangeBranch::buffers(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t i = 0; i < local_.size(); ++i) local_[i].buffers(prefix + ".local" + std::to_string(i), out);
  for (std::size_t i = 0; i < deep_.size(); ++i) deep_[i].buffers(prefix + ".deep" + std::to_string(i), out);
}

// --- transformer ---------------------------------------------------------------------------

AttentionParams AttentionParams::create(std::size_t channels, Rng& rng) {
  AttentionParams p;
  p.query = xavier_uniform({channels, channels}, channels, channels, next_init_seed(rng));
  p.key = xavier_uniform({channels, channels}, channels, channels, next_init_seed(rng));
  p.value = xavier_uniform({channels, channels}, channels, channels, next_init_seed(rng));
  return p;
}

void AttentionParams::parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".query", query});
  out.push_back({prefix + ".key", key});
  out.push_back({prefix + ".value", value});
}

FeedForwardParams FeedForwardParams::create(std::size_t channels, Rng& rng) {
  return {DenseLayer(channels, 2 * channels, rng), DenseLayer(2 * channels, channels, rng)};
}

void FeedForwardParams::parameters(const std::string& prefix, NamedTensors& out) const {
  expand.parameters(prefix + ".expand", out);
  project.parameters(prefix + ".project", out);
}

Tensor attention(const AttentionParams& p, const Tensor& queries, const Tensor& keys_values, Tensor* weights) {
  check_tokens(queries, "attention");
  check_tokens(keys_values, "attention");
  if (queries.dim(0) != keys_values.dim(0) || queries.dim(2) != keys_values.dim(2)) {
    throw ShapeError("attention: " + to_string(queries.shape()) + " vs " + to_string(keys_values.shape()));
  }
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(queries.dim(2)));
  Tensor q = project(queries, p.query);
  Tensor k = project(keys_values, p.key);
  Tensor v = project(keys_values, p.value);
  Tensor probs = softmax(scale(matmul(q, transpose(k)), inv_sqrt_c));
  if (weights != nullptr) *weights = probs;
  return add(queries, matmul(probs, v));
}

Tensor feed_forward(const FeedForwardParams& p, const Tensor& x) {
  check_tokens(x, "feed forward");
  return add(x, dense_tokens(p.project, relu(dense_tokens(p.expand, x))));
}

Tensor to_tokens(const Tensor& map, std::size_t pool) {
  if (map.rank() != 4) throw ShapeError("to_tokens: expected [B,H,W,C], got " + to_string(map.shape()));
  if (pool == 0 || map.dim(1) % pool != 0 || map.dim(2) % pool != 0) {
    throw ShapeError("to_tokens: extents " + to_string(map.shape()) + " not divisible by " + std::to_string(pool));
  }
  Tensor pooled = pool == 1 ? map : max_pool2d(map, pool);
  return reshape(pooled, {pooled.dim(0), pooled.dim(1) * pooled.dim(2), pooled.dim(3)});
}

TransformerParams TransformerParams::create(std::size_t channels, std::size_t tokens, QueryMode query, Rng& rng) {
  TransformerParams t;
  t.encoder_attention = AttentionParams::create(channels, rng);
  t.encoder_ffn = FeedForwardParams::create(channels, rng);
  t.query_attention = AttentionParams::create(channels, rng);
  t.cross_attention = AttentionParams::create(channels, rng);
  t.decoder_ffn = FeedForwardParams::create(channels, rng);
  if (query == QueryMode::positional) {
    t.positional_query = xavier_uniform({tokens, channels}, tokens, channels, next_init_seed(rng));
  }
  return t;
}

void TransformerParams::parameters(const std::string& prefix, NamedTensors& out) const {
  encoder_attention.parameters(prefix + ".encoder_attention", out);
  encoder_ffn.parameters(prefix + ".encoder_ffn", out);
  query_attention.parameters(prefix + ".query_attention", out);
  cross_attention.parameters(prefix + ".cross_attention", out);
  decoder_ffn.parameters(prefix + ".decoder_ffn", out);
  if (positional_query.defined()) out.push_back({prefix + ".positional_query", positional_query});
}

Tensor encoder_forward(const TransformerParams& t, const Tensor& short_range, std::size_t pool, AttentionTrace* trace) {
  Tensor x = to_tokens(short_range, pool);
  Tensor a = attention(t.encoder_attention, x, x, trace ? &trace->encoder : nullptr);
  return feed_forward(t.encoder_ffn, a);
}

Tensor decoder_forward(const TransformerParams& t, const Tensor& encoded, const Tensor& query_tokens,
                       AttentionTrace* trace) {
  check_tokens(encoded, "decoder");
  check_tokens(query_tokens, "decoder");
  if (encoded.shape() != query_tokens.shape()) {
    throw ShapeError("decoder: token mismatch " + to_string(encoded.shape()) + " vs " +
                     to_string(query_tokens.shape()));
  }
  Tensor q = attention(t.query_attention, query_tokens, query_tokens, trace ? &trace->query : nullptr);
  Tensor a = attention(t.cross_attention, q, encoded, trace ? &trace->cross : nullptr);
  return feed_forward(t.decoder_ffn, a);
}

// --- model ---------------------------------------------------------------------------------

RatfmModel::RatfmModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed, stream_id({0x6d6f64656cULL}));
  const std::size_t c = config_.channels;
  if (config_.uses_road()) road_.emplace(c, config_.radius, config_.road_conv, rng);
  if (config_.uses_external()) external_.emplace(rng);
  short_ = ShortRangeBranch(c, config_.uses_road(), rng);
  if (config_.uses_transformer()) transformer_ = TransformerParams::create(c, config_.tokens(), config_.query, rng);
  head_ = Conv2DLayer(1, c, 2, rng);
}

Tensor RatfmModel::forward(const Tensor& coarse_in, std::span<const ExternalVector> external, const Tensor& road_map,
                           Mode mode, AttentionTrace* trace) {
  const bool single = coarse_in.rank() == 3;
  Tensor coarse = single ? reshape(coarse_in, {1, coarse_in.dim(0), coarse_in.dim(1), coarse_in.dim(2)}) : coarse_in;
  if (coarse.rank() != 4 || coarse.dim(1) != config_.coarse_h || coarse.dim(2) != config_.coarse_w ||
      coarse.dim(3) != 2) {
    throw ShapeError("model: coarse input " + to_string(coarse_in.shape()) + " does not match a " +
                     std::to_string(config_.coarse_h) + "x" + std::to_string(config_.coarse_w) + "x2 grid");
  }
  const std::size_t batch = coarse.dim(0);
  const std::size_t h = config_.fine_h();
  const std::size_t w = config_.fine_w();

  Tensor external_feature;
  if (external_) {
    if (external.size() != batch) {
      throw std::invalid_argument("model: expected " + std::to_string(batch) + " external vectors, got " +
                                  std::to_string(external.size()));
    }
    std::vector<double> encoded;
    encoded.reserve(batch * kExternalFeatures);
    for (const auto& e : external) {
      const auto row = encode(e, config_.intervals_per_day);
      encoded.insert(encoded.end(), row.begin(), row.end());
    }
    external_feature = external_->forward(Tensor::from({batch, kExternalFeatures}, std::move(encoded)), h, w);
  } else {
    external_feature = Tensor::zeros({batch, h, w, 1});
  }

  Tensor road_feature;
  if (road_) {
    if (!road_map.defined()) throw std::invalid_argument("model: variant " + std::string(to_string(config_.variant)) +
                                                         " requires a road map");
    const Shape expected{2 * h, 2 * w, 1};
    if (road_map.shape() != expected) {
      throw ShapeError("model: road map must be " + to_string(expected) + ", got " + to_string(road_map.shape()));
    }
    Tensor f = road_->forward(reshape(road_map, {1, 2 * h, 2 * w, 1}), mode);
    road_feature = batch == 1 ? f : tile(f, {batch, 1, 1, 1});
  }

  Tensor fused = short_.forward(coarse, external_feature, road_feature, mode);
  if (transformer_) {
    const std::size_t s = config_.pool_factor();
    Tensor encoded = encoder_forward(*transformer_, fused, s, trace);
    Tensor query;
    if (config_.query == QueryMode::road) {
      query = to_tokens(road_feature, s);
    } else {
      const Tensor& pq = transformer_->positional_query;
      query = tile(reshape(pq, {1, pq.dim(0), pq.dim(1)}), {batch, 1, 1});
    }
    Tensor decoded = decoder_forward(*transformer_, encoded, query, trace);
    Tensor long_range = reshape(decoded, {batch, h / s, w / s, config_.channels});
    fused = add(fused, bilinear_resize(long_range, h, w));
  }
  Tensor out = head_.forward(fused);
  return single ? reshape(out, {h, w, 2}) : out;
}

NamedTensors RatfmModel::parameters() const {
  NamedTensors out;
  if (road_) road_->parameters("road", out);
  if (external_) external_->parameters("external", out);
  short_.parameters("short", out);
  if (transformer_) transformer_->parameters("transformer", out);
  head_.parameters("head", out);
  return out;
}

NamedTensors RatfmModel::buffers() const {
  NamedTensors out;
  if (road_) road_->buffers("road", out);
  short_.buffers("short", out);
  return out;
}

std::vector<Tensor> RatfmModel::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t RatfmModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

RatfmModel build_variant(const ModelConfig& config) { return RatfmModel(config); }

// --- loss ----------------------------------------------------------------------------------

Tensor mape_loss(const Tensor& pred, const Tensor& truth, double epsilon) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("mape_loss: " + to_string(pred.shape()) + " vs " + to_string(truth.shape()));
  }
  const std::size_t batch = pred.rank() == 4 ? pred.dim(0) : 1;
  const std::size_t per = pred.size() / batch;
  const auto p = pred.data();
  const auto t = truth.data();
  std::vector<double> denom(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      num += std::abs(p[i] - t[i]);
      den += std::abs(t[i]);
    }
    denom[b] = den + epsilon;
    total += num / denom[b];
  }
  const double mean = total / static_cast<double>(batch);
  return make_result({1}, {mean}, {pred}, [pred, truth, denom, batch, per](std::span<const double> g) {
    auto gp = pred.mutable_grad();
    const auto pv = pred.data();
    const auto tv = truth.data();
    for (std::size_t b = 0; b < batch; ++b) {
      const double coef = g[0] / (static_cast<double>(batch) * denom[b]);
      for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
        const double d = pv[i] - tv[i];
        gp[i] += d > 0.0 ? coef : (d < 0.0 ? -coef : 0.0);
      }
    }
  });
}

Tensor clamp_nonnegative(const Tensor& x) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (double& e : v) e = std::max(e, 0.0);
  return Tensor::from(x.shape(), std::move(v));
}

// --- state ---------------------------------------------------------------------------------

namespace {

NamedTensors state_of(const RatfmModel& m) {
  NamedTensors all = m.parameters();
  NamedTensors b = m.buffers();
  all.insert(all.end(), b.begin(), b.end());
  return all;
}

void assign(Tensor& dst, const Tensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw ShapeError("state '" + name + "': " + to_string(src.shape()) + " vs " + to_string(dst.shape()));
  }
  std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
}

}  // namespace

void copy_state(const RatfmModel& from, RatfmModel& to) {
  NamedTensors src = state_of(from);
  NamedTensors dst = state_of(to);
  if (src.size() != dst.size()) throw ShapeError("copy_state: models have different structure");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name) throw ShapeError("copy_state: '" + src[i].name + "' vs '" + dst[i].name + "'");
    assign(dst[i].tensor, src[i].tensor, src[i].name);
  }
}

void round_state_to_storage(RatfmModel& model) {
  for (auto& [name, t] : state_of(model)) assign(t, round_to_storage(t), name);
}

void save_checkpoint(const std::filesystem::path& dir, const RatfmModel& model, const KeyValues& extra) {
  std::filesystem::create_directories(dir);
  KeyValues manifest = extra;
  manifest.set("format", "ratfm-checkpoint");
  model.config().store(manifest);
  const NamedTensors state = state_of(model);
  manifest.set("tensors", state.size());
  for (const auto& [name, t] : state) write_rtfm(dir / (name + ".rtfm"), t);
  manifest.write(dir / "manifest.txt");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ck;
  ck.manifest = KeyValues::read(dir / "manifest.txt");
  if (ck.manifest.get_or("format", "") != "ratfm-checkpoint") {
    throw FormatError("not a checkpoint directory: " + dir.string());
  }
  ck.model = build_variant(ModelConfig::load(ck.manifest));
  for (auto& [name, t] : state_of(ck.model)) assign(t, read_rtfm(dir / (name + ".rtfm")), name);
  return ck;
}

}  // namespace ratfm
