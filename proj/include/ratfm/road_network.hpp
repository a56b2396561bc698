#pragma once

#include <span>

#include "ratfm/layers.hpp"

namespace ratfm {

enum class RoadConvKind { md1d, square2d };
enum class RoadWeighting { weighted, common };

/// Per-cell mean of inflow + outflow over the history, nearest-resized to
/// [2*fine_h, 2*fine_w, 1]. Coarse maps are [I_c,J_c,2].
Tensor build_weight_map(std::span<const Tensor> coarse_history, std::size_t fine_h, std::size_t fine_w);

/// Elementwise product of the road raster and the weight map.
Tensor weighted_road_map(const Tensor& base, const Tensor& weight);

/// Road feature extractor: 3x3 conv (1->C), directional conv, two residual blocks and a 2x2
/// max-pool. Maps [2H,2W,1] to [H,W,C] (batched inputs keep their batch axis).
class RoadBranch {
 public:
  RoadBranch() = default;
  RoadBranch(std::size_t channels, std::size_t radius, RoadConvKind kind, Rng& rng);

  Tensor forward(const Tensor& road_map, Mode mode);

  RoadConvKind kind() const { return kind_; }
  std::size_t channels() const { return channels_; }
  Conv2DLayer& stem() { return stem_; }
  SpatialConv& directional() { return directional_; }
  ResidualBlock& block(std::size_t i) { return blocks_.at(i); }

  void parameters(const std::string& prefix, NamedTensors& out) const;
  void buffers(const std::string& prefix, NamedTensors& out) const;

 private:
  RoadConvKind kind_ = RoadConvKind::md1d;
  std::size_t channels_ = 0;
  Conv2DLayer stem_;
  SpatialConv directional_;
  std::array<ResidualBlock, 2> blocks_;
};

}  // namespace ratfm
