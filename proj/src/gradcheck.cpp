#include "ratfm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ratfm/layers.hpp"
#include "ratfm/model.hpp"
#include "ratfm/random.hpp"
#include "ratfm/road_network.hpp"

namespace ratfm {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return scale > 0.0 ? std::abs(analytic - numeric) / scale : 0.0;
}

Tensor faulty_identity(const Tensor& x, double factor) {
  std::vector<double> v(x.data().begin(), x.data().end());
  return make_result(x.shape(), std::move(v), {x}, [x, factor](std::span<const double> g) {
    if (!x.requires_grad()) return;
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

GradcheckEntry check_gradient(const std::string& component, const std::function<Tensor()>& loss,
                              std::vector<Tensor> inputs, double step, double tolerance,
                              std::vector<CoordinateRef> coords) {
  if (coords.empty()) {
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      for (std::size_t i = 0; i < inputs[t].size(); ++i) coords.push_back({t, i});
    }
  }
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss());
  }
  std::vector<double> analytic;
  analytic.reserve(coords.size());
  for (const auto& c : coords) {
    const Tensor& t = inputs.at(c.tensor);
    analytic.push_back(t.has_grad() ? t.grad()[c.index] : 0.0);
  }

  GradcheckEntry entry{component, coords.size(), 0.0, tolerance, false};
  NoGradScope no_grad;
  auto central = [&](std::size_t k, double h) {
    Tensor& t = inputs[coords[k].tensor];
    double& x = t.mutable_data()[coords[k].index];
    const double saved = x;
    x = saved + h;
    const double up = loss().item();
    x = saved - h;
    const double down = loss().item();
    x = saved;
    return (up - down) / (2.0 * h);
  };
  std::vector<double> numeric(coords.size());
  for (std::size_t k = 0; k < coords.size(); ++k) numeric[k] = central(k, step);
  double largest = 0.0;
  for (double n : numeric) largest = std::max(largest, std::abs(n));
  const double floor = std::max(1e-4 * largest, 1e-10);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    double err = relative_error(analytic[k], numeric[k], floor);
    // A ReLU or max-pool switch inside the stencil spoils the central difference; smaller
    // stencils clear it, while a wrong rule stays wrong at every step.
    for (double h = step / 10.0; err >= tolerance && h >= step / 100.0; h /= 10.0) {
      err = std::min(err, relative_error(analytic[k], central(k, h), floor));
    }
    entry.max_rel_error = std::max(entry.max_rel_error, err);
  }
  for (auto& t : inputs) t.clear_grad();
  entry.passed = entry.max_rel_error < tolerance;
  return entry;
}

namespace {

class Suite {
 public:
  explicit Suite(const GradcheckOptions& options) : options_(options), rng_(options.seed, stream_id({0x6763})) {}

  Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(element_count(shape));
    for (double& e : v) e = rng_.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v));
  }

  // Values with magnitude in [0.2, 1] and random sign, away from ReLU kinks.
  Tensor away_from_zero(Shape shape) {
    std::vector<double> v(element_count(shape));
    for (double& e : v) e = (rng_.uniform() < 0.5 ? -1.0 : 1.0) * rng_.uniform(0.2, 1.0);
    return Tensor::from(std::move(shape), std::move(v));
  }

  // Distinct values, so max-pooling windows have unique maxima.
  Tensor distinct(Shape shape) {
    const std::size_t n = element_count(shape);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i) / static_cast<double>(n) - 0.5;
    for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng_.below(i)]);
    return Tensor::from(std::move(shape), std::move(v));
  }

  Rng& rng() { return rng_; }

  // Projects the component output onto a fixed random direction.
  void layer(const std::string& name, const std::function<Tensor()>& forward, std::vector<Tensor> inputs) {
    run(name, forward, std::move(inputs), options_.layer_tolerance, {});
  }

  void run(const std::string& name, const std::function<Tensor()>& forward, std::vector<Tensor> inputs,
           double tolerance, std::vector<CoordinateRef> coords) {
    Tensor direction;
    const bool corrupt = options_.corrupt_component == name;
    auto loss = [&]() {
      Tensor out = forward();
      if (corrupt) out = faulty_identity(out, 1.5);
      if (out.size() == 1) return sum(out);
      if (!direction.defined()) direction = random(out.shape());
      return sum(mul(out, direction));
    };
    {
      NoGradScope no_grad;
      loss();
    }
    entries_.push_back(check_gradient(name, loss, std::move(inputs), options_.step, tolerance, std::move(coords)));
  }

  std::vector<GradcheckEntry> take() { return std::move(entries_); }

 private:
  GradcheckOptions options_;
  Rng rng_;
  std::vector<GradcheckEntry> entries_;
};

}  // namespace

const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names{
    "matmul", "elementwise", "scale", "relu", "softmax", "concat_slice", "reshape_permute_transpose", "tile",
    "sum", "conv2d", "mdconv1d", "batch_norm_train", "batch_norm_eval", "max_pool2d", "bilinear_resize",
    "dense", "residual_block_2d", "residual_block_1d", "road_branch", "external_mlp", "short_range",
    "attention", "feed_forward", "encoder", "decoder", "mape_loss", "end_to_end"};
  return names;
}

std::vector<GradcheckEntry> run_gradcheck(const GradcheckOptions& options) {
  const auto& known = gradcheck_components();
  if (!options.corrupt_component.empty() &&
      std::find(known.begin(), known.end(), options.corrupt_component) == known.end()) {
    throw std::invalid_argument("unknown gradcheck component '" + options.corrupt_component + "'");
  }
  Suite s(options);

  {
    Tensor a = s.random({2, 3, 4}), b = s.random({2, 4, 2});
    s.layer("matmul", [&] { return matmul(a, b); }, {a, b});
  }
  {
    Tensor a = s.random({2, 3}), b = s.random({2, 3}), c = s.random({2, 3});
    s.layer("elementwise", [&] { return mul(add(a, b), sub(c, a)); }, {a, b, c});
  }
  {
    Tensor x = s.random({3, 4});
    s.layer("scale", [&] { return scale(x, -2.5); }, {x});
  }
  {
    Tensor x = s.away_from_zero({3, 5});
    s.layer("relu", [&] { return relu(x); }, {x});
  }
  {
    Tensor x = s.random({3, 5}, -2.0, 2.0);
    s.layer("softmax", [&] { return softmax(x); }, {x});
  }
  {
    Tensor a = s.random({2, 3, 2}), b = s.random({2, 3, 1});
    s.layer("concat_slice", [&] { return slice(concat(2, {a, b}), 2, 1, 3); }, {a, b});
  }
  {
    Tensor x = s.random({2, 3, 4});
    s.layer("reshape_permute_transpose",
            [&] { return transpose(permute(reshape(x, {3, 2, 4}), {2, 0, 1})); }, {x});
  }
  {
    Tensor x = s.random({1, 3, 2});
    s.layer("tile", [&] { return tile(x, {2, 1, 3}); }, {x});
  }
  {
    Tensor x = s.random({4, 3});
    s.layer("sum", [&] { return scale(sum(x), 1.0); }, {x});
  }
  {
    Tensor x = s.random({2, 5, 5, 3}), k = s.random({3, 3, 3, 4}), b = s.random({4});
    s.layer("conv2d", [&] { return conv2d(x, k, b); }, {x, k, b});
  }
  {
    Tensor x = s.random({2, 6, 6, 3});
    std::array<Tensor, 4> ks{s.random({3, 5, 2}), s.random({3, 5, 2}), s.random({3, 5, 2}), s.random({3, 5, 2})};
    s.layer("mdconv1d", [&] { return mdconv1d(x, ks, 2); }, {x, ks[0], ks[1], ks[2], ks[3]});
  }
  {
    Tensor x = s.random({2, 3, 3, 4}), g = s.random({4}, 0.5, 1.5), b = s.random({4});
    s.layer("batch_norm_train", [&] { return batch_norm_train(x, g, b, 1e-5); }, {x, g, b});
  }
  {
    Tensor x = s.random({2, 3, 3, 4}), g = s.random({4}, 0.5, 1.5), b = s.random({4});
    const std::vector<double> mean{0.1, -0.2, 0.0, 0.3}, var{0.5, 1.5, 1.0, 2.0};
    s.layer("batch_norm_eval", [&] { return batch_norm_eval(x, g, b, mean, var, 1e-5); }, {x, g, b});
  }
  {
    Tensor x = s.distinct({2, 4, 4, 3});
    s.layer("max_pool2d", [&] { return max_pool2d(x, 2); }, {x});
  }
  {
    Tensor x = s.random({2, 3, 3, 2});
    s.layer("bilinear_resize", [&] { return bilinear_resize(x, 7, 5); }, {x});
  }
  {
    Tensor x = s.random({3, 4}), w = s.random({4, 5}), b = s.random({5});
    s.layer("dense", [&] { return dense(x, w, b); }, {x, w, b});
  }
  {
    Rng init(options.seed, 1);
    ResidualBlock block = make_residual_block_2d(4, init);
    Tensor x = s.random({2, 4, 4, 4});
    NamedTensors p;
    block.parameters("block", p);
    std::vector<Tensor> inputs{x};
    for (auto& e : p) inputs.push_back(e.tensor);
    s.layer("residual_block_2d", [&] { return block.forward(x, Mode::train); }, inputs);
  }
  {
    Rng init(options.seed, 2);
    ResidualBlock block = make_residual_block_1d(4, 2, init);
    Tensor x = s.random({2, 5, 5, 4});
    NamedTensors p;
    block.parameters("block", p);
    std::vector<Tensor> inputs{x};
    for (auto& e : p) inputs.push_back(e.tensor);
    s.layer("residual_block_1d", [&] { return block.forward(x, Mode::train); }, inputs);
  }
  {
    Rng init(options.seed, 3);
    RoadBranch branch(4, 2, RoadConvKind::md1d, init);
    Tensor road = s.random({1, 8, 8, 1}, 0.0, 1.0);
    NamedTensors p;
    branch.parameters("road", p);
    std::vector<Tensor> inputs;
    for (auto& e : p) inputs.push_back(e.tensor);
    s.layer("road_branch", [&] { return branch.forward(road, Mode::train); }, inputs);
  }
  {
    Rng init(options.seed, 4);
    ExternalMlp mlp(init);
    Tensor e = s.random({2, 5}, 0.0, 1.0);
    NamedTensors p;
    mlp.parameters("external", p);
    std::vector<Tensor> inputs;
    for (auto& t : p) inputs.push_back(t.tensor);
    // Offsets keep both ReLUs away from their kinks.
    auto hb = inputs[1].mutable_data();
    for (double& v : hb) v = 0.5;
    inputs[3].mutable_data()[0] = 0.5;
    s.layer("external_mlp", [&] { return mlp.forward(e, 2, 2); }, inputs);
  }
  {
    Rng init(options.seed, 5);
    ShortRangeBranch branch(4, true, init);
    Tensor coarse = s.random({2, 2, 2, 2}, 0.0, 1.0);
    Tensor ext = s.random({2, 8, 8, 1}, 0.0, 1.0);
    Tensor road = s.random({2, 8, 8, 4});
    NamedTensors p;
    branch.parameters("short", p);
    std::vector<Tensor> inputs{coarse, ext, road};
    for (auto& e : p) inputs.push_back(e.tensor);
    s.layer("short_range", [&] { return branch.forward(coarse, ext, road, Mode::train); }, inputs);
  }
  {
    Rng init(options.seed, 6);
    AttentionParams a = AttentionParams::create(4, init);
    Tensor q = s.random({2, 3, 4}), kv = s.random({2, 5, 4});
    s.layer("attention", [&] { return attention(a, q, kv); }, {q, kv, a.query, a.key, a.value});
  }
  {
    Rng init(options.seed, 7);
    FeedForwardParams f = FeedForwardParams::create(4, init);
    Tensor x = s.random({2, 3, 4});
    s.layer("feed_forward", [&] { return feed_forward(f, x); },
            {x, f.expand.weight(), f.expand.bias(), f.project.weight(), f.project.bias()});
  }
  {
    Rng init(options.seed, 8);
    TransformerParams t = TransformerParams::create(4, 16, QueryMode::road, init);
    Tensor map = s.distinct({2, 8, 8, 4});
    NamedTensors p;
    t.encoder_attention.parameters("enc", p);
    t.encoder_ffn.parameters("ffn", p);
    std::vector<Tensor> inputs{map};
    for (auto& e : p) inputs.push_back(e.tensor);
    s.layer("encoder", [&] { return encoder_forward(t, map, 2); }, inputs);
  }
  {
    Rng init(options.seed, 9);
    TransformerParams t = TransformerParams::create(4, 16, QueryMode::road, init);
    Tensor encoded = s.random({2, 16, 4}), query = s.random({2, 16, 4});
    NamedTensors p;
    t.query_attention.parameters("q", p);
    t.cross_attention.parameters("x", p);
    t.decoder_ffn.parameters("ffn", p);
    std::vector<Tensor> inputs{encoded, query};
    for (auto& e : p) inputs.push_back(e.tensor);
    s.layer("decoder", [&] { return decoder_forward(t, encoded, query); }, inputs);
  }
  {
    Tensor pred = s.random({2, 3, 3, 2}, 0.0, 2.0), truth = s.random({2, 3, 3, 2}, 0.0, 2.0);
    s.layer("mape_loss", [&] { return mape_loss(pred, truth); }, {pred});
  }
  {
    ModelConfig cfg;
    cfg.variant = Variant::full;
    cfg.channels = 4;
    cfg.radius = 2;
    cfg.coarse_h = 2;
    cfg.coarse_w = 2;
    cfg.scale = 4;
    cfg.seed = options.seed;
    RatfmModel model = build_variant(cfg);
    Tensor coarse = s.random({2, 2, 2, 2}, 0.0, 1.0);
    Tensor truth = s.random({2, 8, 8, 2}, 0.0, 0.2);
    Tensor road = s.random({16, 16, 1}, 0.0, 1.0);
    std::vector<ExternalVector> ext(2);
    ext[0] = {3, 0.25, 0.5, 1, 30};
    ext[1] = {10, 0.75, 0.125, 5, 80};
    // Keep the external module's final ReLU active.
    model.external_mlp()->output().bias().mutable_data()[0] = 0.5;
    std::vector<Tensor> params = model.parameter_tensors();
    std::vector<CoordinateRef> all;
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t].size(); ++i) all.push_back({t, i});
    }
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(options.model_fraction * all.size())));
    for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + s.rng().below(all.size() - i)]);
    all.resize(n);
    s.run("end_to_end", [&] { return mape_loss(model.forward(coarse, ext, road, Mode::train), truth); }, params,
          options.model_tolerance, all);
  }
  return s.take();
}

}  // namespace ratfm
