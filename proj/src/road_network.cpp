#include "ratfm/road_network.hpp"

namespace ratfm {

Tensor build_weight_map(std::span<const Tensor> coarse_history, std::size_t fine_h, std::size_t fine_w) {
  if (coarse_history.empty()) throw std::invalid_argument("build_weight_map: empty history");
  const Shape& shape = coarse_history.front().shape();
  if (shape.size() != 3 || shape[2] != 2) {
    throw ShapeError("build_weight_map: coarse maps must be [H,W,2], got " + to_string(shape));
  }
  const std::size_t cells = shape[0] * shape[1];
  std::vector<double> mean(cells, 0.0);
  for (const Tensor& map : coarse_history) {
    if (map.shape() != shape) {
      throw ShapeError("build_weight_map: inconsistent coarse shape " + to_string(map.shape()));
    }
    const auto d = map.data();
    for (std::size_t i = 0; i < cells; ++i) mean[i] += d[2 * i] + d[2 * i + 1];
  }
  const double n = static_cast<double>(coarse_history.size());
  for (double& v : mean) v /= n;
  return nearest_resize(Tensor::from({shape[0], shape[1], 1}, std::move(mean)), 2 * fine_h, 2 * fine_w);
}

Tensor weighted_road_map(const Tensor& base, const Tensor& weight) {
  if (base.shape() != weight.shape()) {
    throw ShapeError("weighted_road_map: " + to_string(base.shape()) + " vs " + to_string(weight.shape()));
  }
  return mul(base, weight);
}

RoadBranch::RoadBranch(std::size_t channels, std::size_t radius, RoadConvKind kind, Rng& rng)
    : kind_(kind), channels_(channels), stem_(3, 1, channels, rng) {
  if (kind == RoadConvKind::md1d) {
    directional_ = MDConv1DLayer(radius, channels, channels, rng);
    for (auto& b : blocks_) b = make_residual_block_1d(channels, radius, rng);
  } else {
    directional_ = Conv2DLayer(3, channels, channels, rng);
    for (auto& b : blocks_) b = make_residual_block_2d(channels, rng);
  }
}

Tensor RoadBranch::forward(const Tensor& road_map, Mode mode) {
  const Shape& s = road_map.shape();
  if (s.size() < 3 || s.back() != 1) {
    throw ShapeError("road branch: expected [..,2H,2W,1], got " + to_string(s));
  }
  const std::size_t h = s[s.size() - 3];
  const std::size_t w = s[s.size() - 2];
  if (h % 4 != 0 || w % 4 != 0) {
    throw ShapeError("road branch: fine extents must be even, road map is " + to_string(s));
  }
  Tensor x = ratfm::forward(directional_, stem_.forward(road_map));
  for (auto& b : blocks_) x = b.forward(x, mode);
  return max_pool2d(x, 2);
}

void RoadBranch::parameters(const std::string& prefix, NamedTensors& out) const {
  stem_.parameters(prefix + ".stem", out);
  ratfm::parameters(directional_, prefix + ".directional", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].parameters(prefix + ".block" + std::to_string(i), out);
}

void RoadBranch::buffers(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].buffers(prefix + ".block" + std::to_string(i), out);
}

}  // namespace ratfm
