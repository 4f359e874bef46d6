#pragma once

// Bipartite soft matching with fused visual/spatial scores.
//
// A layer's merge step is:
//   partition tokens alternately into A (even) and B (odd)
//   score A x B by cosine similarity of visual keys and of spatial tokens
//   blend the two score matrices with alpha
//   take the r A-tokens whose best B match scores highest
//   fold each chosen A-token into its B match by size-weighted average
// Visual features, spatial tokens and centroids all merge with the same pairs.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tosa/numerics.hpp"
#include "tosa/spatial_tokens.hpp"

namespace tosa {

using PatchGroup = std::vector<std::uint32_t>;

struct TokenState {
  Matrix features;           // N x D
  std::vector<float> sizes;  // patches represented per token
  Matrix spatial;            // N x Ds; 0 columns when spatial tokens are not tracked
  Matrix centroids;          // N x 3 size-weighted (x, y, z) patch coordinates
  std::vector<PatchGroup> lineage;  // original patch ids per token, ascending

  std::size_t token_count() const noexcept { return features.rows(); }
  bool has_spatial() const noexcept { return spatial.cols() > 0; }
};

// Singleton tokens, one per row of `features`. `spatial` may be empty (no
// spatial tracking); `triplets` may be empty (centroids left at the origin).
TokenState initial_state(Matrix features, Matrix spatial,
                         std::span<const SpatialTriplet> triplets);

// Throws shape / invalid_size / invalid_trace on violated TokenState invariants.
void validate_state(const TokenState& state, std::size_t original_count);

struct Partition {
  std::vector<std::uint32_t> a;
  std::vector<std::uint32_t> b;
};

// Even positions to A, odd to B; protected tokens never enter A. Returns
// nullopt when there are fewer than two tokens.
std::optional<Partition> bipartite_partition(std::size_t n,
                                             std::span<const std::uint32_t> protected_tokens = {});

struct ScoreMatrix {
  Matrix values;  // |A| x |B|
  std::vector<std::uint32_t> a_indices;
  std::vector<std::uint32_t> b_indices;
};

// Cosine similarity between rows in A and rows in B of `tokens`.
ScoreMatrix similarity_scores(const Matrix& tokens, const Partition& partition);

// Single-precision variant used for spatial tokens.
ScoreMatrix spatial_similarity_scores(const Matrix& spatial, const Partition& partition);

// fused_score of the two similarity matrices computed in a single
// single-precision pass; agrees with the two-step form to about 1e-6.
// alpha == 1 is exactly similarity_scores(keys), alpha == 0 exactly
// spatial_similarity_scores(spatial).
ScoreMatrix fused_similarity_scores(const Matrix& keys, const Matrix& spatial,
                                    const Partition& partition, double alpha);

// alpha * visual + (1 - alpha) * spatial. alpha == 1 and alpha == 0 return
// the respective input unchanged.
ScoreMatrix fused_score(const ScoreMatrix& visual, const ScoreMatrix& spatial, double alpha);
// Reuses the storage of `visual`.
ScoreMatrix fused_score(ScoreMatrix&& visual, const ScoreMatrix& spatial, double alpha);

struct MergePair {
  std::uint32_t a = 0;  // merged away
  std::uint32_t b = 0;  // survives
  friend bool operator==(const MergePair&, const MergePair&) = default;
};

// Best B per A row (lowest b on ties), then the r largest row maxima (lowest
// a on ties), returned in that order. `layer` only labels errors.
std::vector<MergePair> bsm_select(const ScoreMatrix& scores, std::size_t r,
                                  std::optional<std::size_t> layer = std::nullopt);

TokenState apply_merge(const TokenState& state, std::span<const MergePair> pairs);

// softmax(Q K^T / sqrt(d_head) + log s) V, per head over column slices.
Matrix proportional_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                              std::span<const float> sizes, std::size_t heads = 1);

enum class ScheduleKind { increase, decrease, uniform, visual_only };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view text);

struct MergeSchedule {
  ScheduleKind kind = ScheduleKind::increase;
  std::size_t layers = 0;
  std::vector<std::size_t> r_per_layer;
  double uniform_alpha = 0.5;

  std::size_t total_reduction() const;
};

double alpha_at(const MergeSchedule& schedule, std::size_t layer);

// Target count round(n0 * retain); the reduction n0 - target is spread as
// floor(R / L) per layer with one extra on the first R mod L layers.
MergeSchedule build_schedule(ScheduleKind kind, std::size_t n0, double retain_fraction,
                             std::size_t layers, double uniform_alpha = 0.5);

// Throws schedule_infeasible naming the first layer whose r exceeds half the
// tokens entering it.
void check_schedule_feasible(const MergeSchedule& schedule, std::size_t n0);

struct TraceLayer {
  std::size_t layer = 0;
  double alpha = 0.0;
  std::size_t r = 0;
  // One entry per merged pair: sorted union of both tokens' patch ids.
  std::vector<PatchGroup> pairs;
  friend bool operator==(const TraceLayer&, const TraceLayer&) = default;
};

struct MergeTrace {
  std::size_t grid_w = 0;
  std::size_t grid_h = 0;
  std::vector<TraceLayer> layers;
  std::vector<PatchGroup> final_groups;
  friend bool operator==(const MergeTrace&, const MergeTrace&) = default;
};

// Pair entries for a merge plan, sorted ascending.
std::vector<PatchGroup> trace_pairs(const TokenState& state, std::span<const MergePair> pairs);

// Lineage sorted ascending by first patch id.
std::vector<PatchGroup> canonical_groups(std::span<const PatchGroup> lineage);

// Union of every pair entry, starting from n0 singletons.
std::vector<PatchGroup> replay_trace(const MergeTrace& trace, std::size_t n0);

bool is_partition(std::span<const PatchGroup> groups, std::size_t n0);

}  // namespace tosa
