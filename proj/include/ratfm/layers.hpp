#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ratfm/random.hpp"
#include "ratfm/tensor.hpp"

namespace ratfm {

// Feature maps are channels-last: [N,H,W,C], or [H,W,C] for a single map. Every spatial
// op returns the same rank it was given.

enum class Mode { train, eval };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using NamedTensors = std::vector<NamedTensor>;

// --- functional forms --------------------------------------------------------------------

/// Same-padded, stride-1 cross-correlation. kernel: [k,k,C_in,C_out], bias: [C_out].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// Direction indicator (dh, dw) for horizontal, vertical, forward and backward diagonal.
inline constexpr std::array<std::array<int, 2>, 4> kDirections{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};

/// Multi-directional 1-D convolution. kernels[d]: [C_in, 2R+1, C_out/4]. For each direction
/// out_d[h,w,c] = sum_i sum_j x[h + i*dh, w + i*dw, j] * K_d[j, i+R, c] with zero reads
/// outside the map; the four outputs are concatenated on channels in kDirections order.
Tensor mdconv1d(const Tensor& x, const std::array<Tensor, 4>& kernels, std::size_t radius);

/// Batch-statistics normalization over N*H*W per channel. Writes the batch mean and the
/// biased batch variance to the optional outputs.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon,
                        std::vector<double>* batch_mean = nullptr, std::vector<double>* batch_var = nullptr);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::span<const double> mean,
                       std::span<const double> var, double epsilon);

/// k x k max pooling with stride k. Ties go to the first element in row-major order.
Tensor max_pool2d(const Tensor& x, std::size_t k);

/// Half-pixel-centre bilinear resampling with edge clamping.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Half-pixel-centre nearest-neighbour resampling. Not recorded on the tape.
Tensor nearest_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// x: [batch, in], weight: [in, out], bias: [out].
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

// --- layers ------------------------------------------------------------------------------

class Conv2DLayer {
 public:
  Conv2DLayer() = default;
  /// Xavier kernel, zero bias. kernel_size must be odd.
  Conv2DLayer(std::size_t kernel_size, std::size_t in_channels, std::size_t out_channels, Rng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t kernel_size() const { return kernel_.dim(0); }
  std::size_t in_channels() const { return kernel_.dim(2); }
  std::size_t out_channels() const { return kernel_.dim(3); }
  Tensor& kernel() { return kernel_; }
  Tensor& bias() { return bias_; }
  const Tensor& kernel() const { return kernel_; }
  const Tensor& bias() const { return bias_; }

  void parameters(const std::string& prefix, NamedTensors& out) const;

 private:
  Tensor kernel_;
  Tensor bias_;
};

class MDConv1DLayer {
 public:
  MDConv1DLayer() = default;
  /// out_channels must be divisible by 4.
  MDConv1DLayer(std::size_t radius, std::size_t in_channels, std::size_t out_channels, Rng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t radius() const { return radius_; }
  std::size_t in_channels() const { return kernels_[0].dim(0); }
  std::size_t out_channels() const { return 4 * kernels_[0].dim(2); }
  std::array<Tensor, 4>& kernels() { return kernels_; }
  const std::array<Tensor, 4>& kernels() const { return kernels_; }

  void parameters(const std::string& prefix, NamedTensors& out) const;

 private:
  std::size_t radius_ = 0;
  std::array<Tensor, 4> kernels_;
};

struct BatchNormOptions {
  double momentum = 0.9;  // weight on the previous running statistic
  double epsilon = 1e-5;
};

class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t channels, BatchNormOptions options = {});

  /// Train mode normalizes with batch statistics and updates the running statistics
  /// (unbiased variance); eval mode uses the running statistics.
  Tensor forward(const Tensor& x, Mode mode);

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  const BatchNormOptions& options() const { return options_; }

  void parameters(const std::string& prefix, NamedTensors& out) const;
  void buffers(const std::string& prefix, NamedTensors& out) const;

 private:
  Tensor gamma_;
  Tensor beta_;
  Tensor running_mean_;
  Tensor running_var_;
  BatchNormOptions options_;
};

using SpatialConv = std::variant<Conv2DLayer, MDConv1DLayer>;

Tensor forward(const SpatialConv& conv, const Tensor& x);
void parameters(const SpatialConv& conv, const std::string& prefix, NamedTensors& out);

/// x + BN(conv(ReLU(BN(conv(x))))).
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(SpatialConv first, SpatialConv second, std::size_t channels);

  Tensor forward(const Tensor& x, Mode mode);

  SpatialConv& first() { return first_; }
  SpatialConv& second() { return second_; }
  BatchNormLayer& first_norm() { return norm1_; }
  BatchNormLayer& second_norm() { return norm2_; }

  void parameters(const std::string& prefix, NamedTensors& out) const;
  void buffers(const std::string& prefix, NamedTensors& out) const;

 private:
  SpatialConv first_;
  SpatialConv second_;
  BatchNormLayer norm1_;
  BatchNormLayer norm2_;
  std::size_t channels_ = 0;
};

/// Two 3x3 convolutions.
ResidualBlock make_residual_block_2d(std::size_t channels, Rng& rng);
/// Two multi-directional 1-D convolutions.
ResidualBlock make_residual_block_1d(std::size_t channels, std::size_t radius, Rng& rng);

class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng);

  Tensor forward(const Tensor& x) const { return dense(x, weight_, bias_); }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

  void parameters(const std::string& prefix, NamedTensors& out) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Seed for the next parameter tensor drawn from a construction-order stream.
std::uint64_t next_init_seed(Rng& rng);

}  // namespace ratfm
