#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ratfm/external.hpp"
#include "ratfm/keyvalue.hpp"
#include "ratfm/layers.hpp"
#include "ratfm/road_network.hpp"

namespace ratfm {

enum class Variant { short_net, short_road, short_long_road, full };
enum class QueryMode { road, positional };

std::string_view to_string(Variant v);
std::string_view to_string(RoadConvKind k);
std::string_view to_string(RoadWeighting w);
std::string_view to_string(QueryMode q);
/// Accepts the display names (e.g. "Short+Long+Road") and the snake_case names.
Variant parse_variant(std::string_view text);
RoadConvKind parse_road_conv(std::string_view text);
RoadWeighting parse_road_weighting(std::string_view text);
QueryMode parse_query(std::string_view text);

struct ModelConfig {
  Variant variant = Variant::full;
  std::size_t channels = 16;
  std::size_t radius = 2;
  std::size_t coarse_h = 8;
  std::size_t coarse_w = 8;
  std::size_t scale = 4;
  std::size_t pool = 0;  // 0 selects 2, or 4 when a fine extent is at least 128
  RoadConvKind road_conv = RoadConvKind::md1d;
  QueryMode query = QueryMode::road;
  std::uint64_t seed = 1;
  int intervals_per_day = 96;

  std::size_t fine_h() const { return coarse_h * scale; }
  std::size_t fine_w() const { return coarse_w * scale; }
  std::size_t pool_factor() const;
  std::size_t tokens() const { return (fine_h() / pool_factor()) * (fine_w() / pool_factor()); }

  bool uses_road() const { return variant != Variant::short_net; }
  bool uses_transformer() const { return variant == Variant::short_long_road || variant == Variant::full; }
  bool uses_external() const { return variant == Variant::full; }

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;

  void store(KeyValues& kv) const;
  static ModelConfig load(const KeyValues& kv);
};

/// dense(5->128) -> ReLU -> dense(128->1) -> ReLU, tiled over the fine grid.
class ExternalMlp {
 public:
  ExternalMlp() = default;
  explicit ExternalMlp(Rng& rng);

  /// encoded: [B,5] -> [B,H,W,1].
  Tensor forward(const Tensor& encoded, std::size_t fine_h, std::size_t fine_w) const;

  DenseLayer& hidden() { return hidden_; }
  DenseLayer& output() { return output_; }
  void parameters(const std::string& prefix, NamedTensors& out) const;

 private:
  DenseLayer hidden_;
  DenseLayer output_;
};

/// Local inference: upsampled coarse map and external feature -> 9x9 conv -> 5 residual
/// blocks; optional road fusion; 11 residual blocks; two 3x3 convs.
class ShortRangeBranch {
 public:
  ShortRangeBranch() = default;
  ShortRangeBranch(std::size_t channels, bool fuse_road, Rng& rng);

  /// coarse: [B,Ic,Jc,2]; external_feature: [B,H,W,1]; road_feature: [B,H,W,C], or an
  /// undefined tensor when road fusion is off.
  Tensor forward(const Tensor& coarse, const Tensor& external_feature, const Tensor& road_feature, Mode mode);

  bool fuses_road() const { return fuse_road_; }
  void parameters(const std::string& prefix, NamedTensors& out) const;
  void buffers(const std::string& prefix, NamedTensors& out) const;

 private:
  bool fuse_road_ = false;
  Conv2DLayer entry_;
  std::vector<ResidualBlock> local_;
  Conv2DLayer fusion_;
  std::vector<ResidualBlock> deep_;
  Conv2DLayer out1_;
  Conv2DLayer out2_;
};

struct AttentionParams {
  Tensor query;  // [C,C]
  Tensor key;    // [C,C]
  Tensor value;  // [C,C]

  static AttentionParams create(std::size_t channels, Rng& rng);
  void parameters(const std::string& prefix, NamedTensors& out) const;
};

struct FeedForwardParams {
  DenseLayer expand;   // C -> 2C
  DenseLayer project;  // 2C -> C

  static FeedForwardParams create(std::size_t channels, Rng& rng);
  void parameters(const std::string& prefix, NamedTensors& out) const;
};

/// queries + softmax(queries Wq (kv Wk)^T / sqrt(C)) kv Wv. Tokens are [B,T,C]; the
/// attention probabilities [B,Tq,Tkv] go to `weights` when given.
Tensor attention(const AttentionParams& p, const Tensor& queries, const Tensor& keys_values,
                 Tensor* weights = nullptr);

/// x + W2 ReLU(W1 x + b1) + b2 applied per token.
Tensor feed_forward(const FeedForwardParams& p, const Tensor& x);

/// Max-pools by `pool` and flattens to tokens: [B,H,W,C] -> [B,HW/pool^2,C].
Tensor to_tokens(const Tensor& map, std::size_t pool);

struct AttentionTrace {
  Tensor encoder;
  Tensor query;
  Tensor cross;
};

struct TransformerParams {
  AttentionParams encoder_attention;
  FeedForwardParams encoder_ffn;
  AttentionParams query_attention;
  AttentionParams cross_attention;
  FeedForwardParams decoder_ffn;
  Tensor positional_query;  // [T,C], defined only for positional queries

  static TransformerParams create(std::size_t channels, std::size_t tokens, QueryMode query, Rng& rng);
  void parameters(const std::string& prefix, NamedTensors& out) const;
};

/// Pooled short-range tokens through one self-attention + feed-forward layer.
Tensor encoder_forward(const TransformerParams& t, const Tensor& short_range, std::size_t pool,
                       AttentionTrace* trace = nullptr);

/// Query tokens through their own self-attention, then cross-attention onto the encoded
/// tokens and a feed-forward layer.
Tensor decoder_forward(const TransformerParams& t, const Tensor& encoded, const Tensor& query_tokens,
                       AttentionTrace* trace = nullptr);

class RatfmModel {
 public:
  RatfmModel() = default;
  explicit RatfmModel(const ModelConfig& config);

  /// coarse: [B,Ic,Jc,2] or [Ic,Jc,2]; external: one vector per sample (ignored by variants
  /// without the external module); road_map: [2H,2W,1] (never read by Short-Net).
  /// Returns [B,H,W,2] (or [H,W,2]).
  Tensor forward(const Tensor& coarse, std::span<const ExternalVector> external, const Tensor& road_map, Mode mode,
                 AttentionTrace* trace = nullptr);

  const ModelConfig& config() const { return config_; }

  std::optional<RoadBranch>& road_branch() { return road_; }
  std::optional<ExternalMlp>& external_mlp() { return external_; }
  ShortRangeBranch& short_range() { return short_; }
  std::optional<TransformerParams>& transformer() { return transformer_; }
  Conv2DLayer& head() { return head_; }

  NamedTensors parameters() const;
  NamedTensors buffers() const;
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  std::optional<RoadBranch> road_;
  std::optional<ExternalMlp> external_;
  ShortRangeBranch short_;
  std::optional<TransformerParams> transformer_;
  Conv2DLayer head_;
};

/// Deterministic Xavier initialization of the stages the variant uses.
RatfmModel build_variant(const ModelConfig& config);

/// Per sample sum|pred - truth| / (sum|truth| + epsilon), averaged over the leading batch
/// axis ([H,W,C] inputs count as one sample). Differentiable with respect to pred.
Tensor mape_loss(const Tensor& pred, const Tensor& truth, double epsilon = 1e-5);

/// Copy of x with negatives replaced by zero; not recorded.
Tensor clamp_nonnegative(const Tensor& x);

/// Copies every parameter and buffer by name. Throws ShapeError on any mismatch.
void copy_state(const RatfmModel& from, RatfmModel& to);

/// Rounds every parameter and buffer through float32 in place.
void round_state_to_storage(RatfmModel& model);

// Checkpoint directory: one <name>.rtfm per parameter and buffer plus manifest.txt holding the
// model configuration and any extra entries.
void save_checkpoint(const std::filesystem::path& dir, const RatfmModel& model, const KeyValues& extra = {});

struct Checkpoint {
  RatfmModel model;
  KeyValues manifest;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace ratfm
