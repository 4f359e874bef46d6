#pragma once

// Desk-scale pre-norm transformer encoder with a token-merging block between
// attention and MLP in every layer:
//
//   x = x + Attn(LN1(x))        proportional attention over current sizes
//   merge(x, spatial)           fused-score bipartite soft matching
//   x = x + MLP(LN2(x))

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tosa/merge_core.hpp"
#include "tosa/numerics.hpp"
#include "tosa/spatial_tokens.hpp"

namespace tosa {

struct EncoderConfig {
  std::size_t layers = 27;
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  PatchGrid grid{};
  std::uint64_t seed = 0;
  std::size_t depth_levels = kDefaultDepthLevels;
  std::size_t spatial_dim = kDefaultSpatialDim;

  std::size_t hidden_dim() const;
  void validate() const;
};

struct EncoderLayerParams {
  Matrix wq, wk, wv, wo;  // D x D
  Matrix w1;              // D x H
  std::vector<float> b1;  // H
  Matrix w2;              // H x D
  std::vector<float> b2;  // D
  std::vector<float> ln1_gain, ln1_bias;
  std::vector<float> ln2_gain, ln2_bias;

  friend bool operator==(const EncoderLayerParams&, const EncoderLayerParams&) = default;
};

// Weights uniform in [-1, 1) / sqrt(model_dim) from a SplitMix64 stream seeded
// with config.seed; norm gains 1, biases 0.
std::vector<EncoderLayerParams> init_encoder(const EncoderConfig& config);

struct AttentionOutput {
  Matrix hidden;  // x + Attn(LN1(x))
  Matrix keys;    // head-averaged keys, N x (D / heads)
};

AttentionOutput attention_block(const Matrix& x, std::span<const float> sizes,
                                const EncoderLayerParams& params, std::size_t heads);

// x + MLP(LN2(x)) with tanh GELU.
Matrix mlp_block(const Matrix& x, const EncoderLayerParams& params);

struct LayerSettings {
  std::size_t layer = 0;
  std::size_t heads = 4;
  double alpha = 1.0;
  std::size_t r = 0;
  std::span<const std::uint32_t> protected_tokens{};
};

struct MergeEvent {
  std::size_t layer;
  double alpha;
  std::span<const MergePair> pairs;
  const TokenState& before;
  const TokenState& after;
};

using MergeObserver = std::function<void(const MergeEvent&)>;

// One encoder layer. Spatial scores are only formed when alpha < 1.
TokenState encoder_layer_forward(const TokenState& state, const EncoderLayerParams& params,
                                 const LayerSettings& settings,
                                 const MergeObserver& observer = {});

struct ForwardResult {
  TokenState state;
  MergeTrace trace;
};

// Full forward pass. `depth` may be null only for visual_only schedules, in
// which case no spatial tokens are built.
ForwardResult vit_forward(const Matrix& tokens, const DepthMap* depth, const EncoderConfig& config,
                          std::span<const EncoderLayerParams> params,
                          const MergeSchedule& schedule, const MergeObserver& observer = {});

ForwardResult vit_forward(const Matrix& tokens, const DepthMap* depth, const EncoderConfig& config,
                          const MergeSchedule& schedule);

// Synthetic scene: a near rectangular object in front of a far back plane.
// The back plane is split into Voronoi regions around random sites. Each
// region (and the object) owns a cluster feature; every patch adds one of a
// few texture prototypes shared by all regions, Gaussian noise and, when
// field_scale > 0, a smooth field of low-frequency plane waves.
struct SceneParams {
  std::size_t background_regions = 4;
  std::size_t textures = 6;
  std::size_t waves = 64;
  double frequency_scale = 0.7;  // std of wave frequency, cycles per grid extent
  double cluster_scale = 1.0;
  double field_scale = 0.0;  // weight of the smooth plane-wave field; off by default
  double texture_scale = 1.0;
  double noise = 1.0;
  double near_depth = 0.25;
  double far_depth = 0.8;
  double depth_jitter = 0.02;
};

struct SyntheticScene {
  Matrix features;  // N x D
  DepthMap depth;   // pixel resolution of the grid
  std::vector<std::uint32_t> region;  // per patch, 0 is the object
};

SyntheticScene make_two_plane_scene(const PatchGrid& grid, std::size_t dim, std::uint64_t seed,
                                    const SceneParams& params = {});

}  // namespace tosa
