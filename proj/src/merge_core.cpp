#include "tosa/merge_core.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <numeric>
#include <string>

#include "kernels.hpp"
#include "tosa/error.hpp"

namespace tosa {

TokenState initial_state(Matrix features, Matrix spatial,
                         std::span<const SpatialTriplet> triplets) {
  const std::size_t n = features.rows();
  if (!spatial.empty() && spatial.rows() != n) {
    throw Error(ErrorKind::shape, "spatial tokens have " + std::to_string(spatial.rows()) +
                                      " rows for " + std::to_string(n) + " visual tokens");
  }
  if (!triplets.empty() && triplets.size() != n) {
    throw Error(ErrorKind::shape, "got " + std::to_string(triplets.size()) + " triplets for " +
                                      std::to_string(n) + " tokens");
  }
  TokenState state;
  state.features = std::move(features);
  state.sizes.assign(n, 1.0f);
  state.spatial = spatial.empty() ? Matrix(n, 0) : std::move(spatial);
  state.centroids = Matrix(n, 3);
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    state.centroids(i, 0) = static_cast<float>(triplets[i].x);
    state.centroids(i, 1) = static_cast<float>(triplets[i].y);
    state.centroids(i, 2) = static_cast<float>(triplets[i].z);
  }
  state.lineage.resize(n);
  for (std::size_t i = 0; i < n; ++i) state.lineage[i] = {static_cast<std::uint32_t>(i)};
  return state;
}

void validate_state(const TokenState& state, std::size_t original_count) {
  const std::size_t n = state.token_count();
  if (state.sizes.size() != n || state.spatial.rows() != n || state.centroids.rows() != n ||
      state.lineage.size() != n) {
    throw Error(ErrorKind::shape, "token state row counts disagree");
  }
  for (float s : state.sizes) {
    if (!(s >= 1.0f)) throw Error(ErrorKind::invalid_size, "token size below 1");
  }
  if (!is_partition(state.lineage, original_count)) {
    throw Error(ErrorKind::invalid_trace, "lineage does not partition the original tokens");
  }
}

std::optional<Partition> bipartite_partition(std::size_t n,
                                             std::span<const std::uint32_t> protected_tokens) {
  if (n < 2) return std::nullopt;
  std::vector<bool> is_protected(n, false);
  for (auto t : protected_tokens) {
    if (t >= n) {
      throw Error(ErrorKind::index, "protected token " + std::to_string(t) + " out of range " +
                                        std::to_string(n));
    }
    is_protected[t] = true;
  }
  Partition p;
  p.a.reserve((n + 1) / 2);
  p.b.reserve(n / 2);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (i % 2 == 1) {
      p.b.push_back(i);
    } else if (!is_protected[i]) {
      p.a.push_back(i);
    }
  }
  return p;
}

ScoreMatrix similarity_scores(const Matrix& tokens, const Partition& partition) {
  return {cosine_similarity_matrix(gather_rows(tokens, partition.a),
                                   gather_rows(tokens, partition.b)),
          partition.a, partition.b};
}

ScoreMatrix spatial_similarity_scores(const Matrix& spatial, const Partition& partition) {
  return {cosine_similarity_matrix_f32(gather_rows(spatial, partition.a),
                                       gather_rows(spatial, partition.b)),
          partition.a, partition.b};
}

ScoreMatrix fused_similarity_scores(const Matrix& keys, const Matrix& spatial,
                                    const Partition& partition, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::domain, "alpha " + std::to_string(alpha) + " is outside [0, 1]");
  }
  if (alpha == 1.0) return similarity_scores(keys, partition);
  if (alpha == 0.0) return spatial_similarity_scores(spatial, partition);
  return {blended_cosine_similarity_f32(gather_rows(keys, partition.a),
                                        gather_rows(keys, partition.b),
                                        gather_rows(spatial, partition.a),
                                        gather_rows(spatial, partition.b), alpha),
          partition.a, partition.b};
}

namespace {

void check_fusable(const ScoreMatrix& visual, const ScoreMatrix& spatial, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::domain, "alpha " + std::to_string(alpha) + " is outside [0, 1]");
  }
  if (visual.values.rows() != spatial.values.rows() ||
      visual.values.cols() != spatial.values.cols() || visual.a_indices != spatial.a_indices ||
      visual.b_indices != spatial.b_indices) {
    throw Error(ErrorKind::incompatible_scores,
                "visual scores are " + std::to_string(visual.values.rows()) + "x" +
                    std::to_string(visual.values.cols()) + ", spatial scores are " +
                    std::to_string(spatial.values.rows()) + "x" +
                    std::to_string(spatial.values.cols()) + " or index sets differ");
  }
}

}  // namespace

ScoreMatrix fused_score(ScoreMatrix&& visual, const ScoreMatrix& spatial, double alpha) {
  check_fusable(visual, spatial, alpha);
  if (alpha == 0.0) return spatial;
  if (alpha < 1.0) {
    auto v = visual.values.data();
    const auto s = spatial.values.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<float>(alpha * v[i] + (1.0 - alpha) * s[i]);
    }
  }
  return std::move(visual);
}

ScoreMatrix fused_score(const ScoreMatrix& visual, const ScoreMatrix& spatial, double alpha) {
  check_fusable(visual, spatial, alpha);
  if (alpha == 0.0) return spatial;
  return fused_score(ScoreMatrix(visual), spatial, alpha);
}

std::vector<MergePair> bsm_select(const ScoreMatrix& scores, std::size_t r,
                                  std::optional<std::size_t> layer) {
  const std::size_t rows = scores.values.rows();
  const std::size_t cols = scores.values.cols();
  if (rows != scores.a_indices.size() || cols != scores.b_indices.size()) {
    throw Error(ErrorKind::incompatible_scores, "score matrix shape does not match index sets");
  }
  if (r > rows) {
    throw Error(ErrorKind::reduction_too_large,
                (layer ? "layer " + std::to_string(*layer) + ": " : std::string()) + "r=" +
                    std::to_string(r) + " exceeds |A|=" + std::to_string(rows) +
                    " (|B|=" + std::to_string(cols) + ")");
  }
  if (r == 0) return {};
  if (cols == 0) {
    throw Error(ErrorKind::reduction_too_large, "set B is empty");
  }

  std::vector<float> best(rows);
  std::vector<std::size_t> best_col(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = scores.values.row(i);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < cols; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    best[i] = row[arg];
    best_col[i] = arg;
  }

  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(r), order.end(),
                    [&](std::size_t x, std::size_t y) {
                      if (best[x] != best[y]) return best[x] > best[y];
                      return scores.a_indices[x] < scores.a_indices[y];
                    });

  std::vector<MergePair> pairs;
  pairs.reserve(r);
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t i = order[k];
    pairs.push_back({scores.a_indices[i], scores.b_indices[best_col[i]]});
  }
  return pairs;
}

namespace {

// Replaces each destination row by the size-weighted mean of itself and its
// sources. Sources are folded in ascending index order.
void merge_rows(Matrix& m, std::span<const float> sizes,
                const std::vector<std::vector<std::uint32_t>>& sources_of,
                std::span<const std::uint32_t> destinations) {
  const std::size_t width = m.cols();
  if (width == 0) return;
  std::vector<double> acc(width);
  for (std::uint32_t b : destinations) {
    const double sb = sizes[b];
    double total = sb;
    auto brow = m.row(b);
    for (std::size_t c = 0; c < width; ++c) acc[c] = sb * brow[c];
    for (std::uint32_t a : sources_of[b]) {
      const double sa = sizes[a];
      total += sa;
      const auto arow = m.row(a);
      for (std::size_t c = 0; c < width; ++c) acc[c] += sa * arow[c];
    }
    for (std::size_t c = 0; c < width; ++c) brow[c] = static_cast<float>(acc[c] / total);
  }
}

Matrix keep_rows(const Matrix& m, std::span<const std::uint32_t> keep) {
  return gather_rows(m, keep);
}

}  // namespace

TokenState apply_merge(const TokenState& state, std::span<const MergePair> pairs) {
  const std::size_t n = state.token_count();
  if (pairs.empty()) return state;

  std::vector<bool> removed(n, false);
  std::vector<std::vector<std::uint32_t>> sources_of(n);
  for (const auto& p : pairs) {
    if (p.a >= n || p.b >= n || p.a == p.b) {
      throw Error(ErrorKind::invalid_plan, "pair (" + std::to_string(p.a) + ", " +
                                               std::to_string(p.b) + ") is invalid for " +
                                               std::to_string(n) + " tokens");
    }
    if (removed[p.a]) {
      throw Error(ErrorKind::invalid_plan, "token " + std::to_string(p.a) +
                                               " appears twice as a merge source");
    }
    removed[p.a] = true;
    sources_of[p.b].push_back(p.a);
  }
  std::vector<std::uint32_t> destinations;
  for (std::uint32_t b = 0; b < n; ++b) {
    if (sources_of[b].empty()) continue;
    if (removed[b]) {
      throw Error(ErrorKind::invalid_plan,
                  "token " + std::to_string(b) + " is both a merge source and destination");
    }
    std::ranges::sort(sources_of[b]);
    destinations.push_back(b);
  }

  TokenState merged = state;
  merge_rows(merged.features, state.sizes, sources_of, destinations);
  merge_rows(merged.spatial, state.sizes, sources_of, destinations);
  merge_rows(merged.centroids, state.sizes, sources_of, destinations);
  for (std::uint32_t b : destinations) {
    double total = state.sizes[b];
    auto& group = merged.lineage[b];
    for (std::uint32_t a : sources_of[b]) {
      total += state.sizes[a];
      group.insert(group.end(), state.lineage[a].begin(), state.lineage[a].end());
    }
    merged.sizes[b] = static_cast<float>(total);
    std::ranges::sort(group);
  }

  std::vector<std::uint32_t> keep;
  keep.reserve(n - pairs.size());
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!removed[i]) keep.push_back(i);
  }
  TokenState out;
  out.features = keep_rows(merged.features, keep);
  out.spatial = keep_rows(merged.spatial, keep);
  out.centroids = keep_rows(merged.centroids, keep);
  out.sizes.reserve(keep.size());
  out.lineage.reserve(keep.size());
  for (auto i : keep) {
    out.sizes.push_back(merged.sizes[i]);
    out.lineage.push_back(std::move(merged.lineage[i]));
  }
  return out;
}

namespace {

using kernels::kColTile;
using kernels::kRowTile;

// One head of K and V laid out for the tiled kernel: K transposed, V with rows
// padded to kColTile. Padding is zero.
struct HeadLayout {
  std::size_t model_dim = 0, n = 0, n_pad = 0, dh = 0, dh_pad = 0;
  std::vector<float> kt;  // dh x n_pad
  std::vector<float> v;   // n x dh_pad
};

void load_head(const Matrix& k, const Matrix& v, std::size_t c0, HeadLayout& h) {
  for (std::size_t j = 0; j < h.n; ++j) {
    for (std::size_t p = 0; p < h.dh; ++p) {
      h.kt[p * h.n_pad + j] = k(j, c0 + p);
      h.v[j * h.dh_pad + p] = v(j, c0 + p);
    }
  }
}

// acc(r, p) = sum_j w(r, j) * v(j, p), summed in j order.
template <std::size_t R>
void tile_values(const HeadLayout& h, const double* weights, double* acc) {
  using kernels::Vec8d;
  for (std::size_t p0 = 0; p0 < h.dh_pad; p0 += kColTile) {
    Vec8d lo[R] = {};
    Vec8d hi[R] = {};
    for (std::size_t j = 0; j < h.n; ++j) {
      const float* vrow = h.v.data() + j * h.dh_pad + p0;
      const Vec8d v0 = kernels::load8(vrow);
      const Vec8d v1 = kernels::load8(vrow + 8);
      for (std::size_t r = 0; r < R; ++r) {
        const double w = weights[r * h.n_pad + j];
        lo[r] = kernels::fma8(w, v0, lo[r]);
        hi[r] = kernels::fma8(w, v1, hi[r]);
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      std::memcpy(acc + r * h.dh_pad + p0, &lo[r], sizeof lo[r]);
      std::memcpy(acc + r * h.dh_pad + p0 + 8, &hi[r], sizeof hi[r]);
    }
  }
}

template <std::size_t R>
void attend_rows(const Matrix& q, const HeadLayout& h, std::size_t i0, std::size_t c0,
                 double scale, const double* log_sizes, std::vector<double>& logits,
                 std::vector<double>& acc, Matrix& out) {
  kernels::tile_product<R>(q.data().data() + i0 * h.model_dim + c0, h.model_dim, h.dh,
                           h.kt.data(), h.n_pad, h.n_pad, logits.data(), h.n_pad);
  double totals[R];
  for (std::size_t r = 0; r < R; ++r) {
    const std::span<double> row(logits.data() + r * h.n_pad, h.n);
    for (std::size_t j = 0; j < h.n; ++j) row[j] = row[j] * scale + log_sizes[j];
    const double peak = max_of(row);
    for (double& l : row) l -= peak;
    exp_nonpositive_inplace(row);
    totals[r] = sum_of(row);
  }
  tile_values<R>(h, logits.data(), acc.data());
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t p = 0; p < h.dh; ++p) {
      out(i0 + r, c0 + p) = static_cast<float>(acc[r * h.dh_pad + p] / totals[r]);
    }
  }
}

}  // namespace

Matrix proportional_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                              std::span<const float> sizes, std::size_t heads) {
  const std::size_t n = q.rows();
  const std::size_t d = q.cols();
  if (k.rows() != n || v.rows() != n || k.cols() != d || v.cols() != d || sizes.size() != n) {
    throw Error(ErrorKind::shape, "attention inputs disagree in shape");
  }
  if (heads == 0 || d % heads != 0) {
    throw Error(ErrorKind::invalid_dimension, "width " + std::to_string(d) +
                                                  " is not divisible into " +
                                                  std::to_string(heads) + " heads");
  }
  HeadLayout h;
  h.model_dim = d;
  h.n = n;
  h.n_pad = kernels::round_up(n, kColTile);
  h.dh = d / heads;
  h.dh_pad = kernels::round_up(h.dh, kColTile);
  h.kt.assign(h.dh * h.n_pad, 0.0f);
  h.v.assign(n * h.dh_pad, 0.0f);

  std::vector<double> log_sizes(h.n_pad, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (!(sizes[j] >= 1.0f)) {
      throw Error(ErrorKind::invalid_size, "token " + std::to_string(j) + " has size " +
                                               std::to_string(sizes[j]) + " < 1");
    }
    log_sizes[j] = std::log(static_cast<double>(sizes[j]));
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(h.dh));
  Matrix out(n, d);
  std::vector<double> logits(kRowTile * h.n_pad);
  std::vector<double> acc(kRowTile * h.dh_pad);
  for (std::size_t head = 0; head < heads; ++head) {
    const std::size_t c0 = head * h.dh;
    load_head(k, v, c0, h);
    std::size_t i = 0;
    for (; i + kRowTile <= n; i += kRowTile) {
      attend_rows<kRowTile>(q, h, i, c0, scale, log_sizes.data(), logits, acc, out);
    }
    for (; i < n; ++i) attend_rows<1>(q, h, i, c0, scale, log_sizes.data(), logits, acc, out);
  }
  return out;
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::increase: return "increase";
    case ScheduleKind::decrease: return "decrease";
    case ScheduleKind::uniform: return "uniform";
    case ScheduleKind::visual_only: return "visual_only";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view text) {
  for (auto kind : {ScheduleKind::increase, ScheduleKind::decrease, ScheduleKind::uniform,
                    ScheduleKind::visual_only}) {
    if (text == to_string(kind)) return kind;
  }
  throw Error(ErrorKind::domain, "unknown schedule kind '" + std::string(text) + "'");
}

std::size_t MergeSchedule::total_reduction() const {
  return std::accumulate(r_per_layer.begin(), r_per_layer.end(), std::size_t{0});
}

double alpha_at(const MergeSchedule& schedule, std::size_t layer) {
  if (layer >= schedule.layers) {
    throw Error(ErrorKind::index, "layer " + std::to_string(layer) + " out of range for " +
                                      std::to_string(schedule.layers) + " layers");
  }
  const double ratio = static_cast<double>(layer) / static_cast<double>(schedule.layers);
  switch (schedule.kind) {
    case ScheduleKind::increase: return ratio;
    case ScheduleKind::decrease: return 1.0 - ratio;
    case ScheduleKind::uniform: return schedule.uniform_alpha;
    case ScheduleKind::visual_only: return 1.0;
  }
  return 1.0;
}

void check_schedule_feasible(const MergeSchedule& schedule, std::size_t n0) {
  if (schedule.r_per_layer.size() != schedule.layers) {
    throw Error(ErrorKind::schedule_infeasible, "schedule lists " +
                                                    std::to_string(schedule.r_per_layer.size()) +
                                                    " reductions for " +
                                                    std::to_string(schedule.layers) + " layers");
  }
  std::size_t n = n0;
  for (std::size_t i = 0; i < schedule.layers; ++i) {
    const std::size_t r = schedule.r_per_layer[i];
    if (r > n / 2) {
      throw Error(ErrorKind::schedule_infeasible,
                  "layer " + std::to_string(i) + ": r=" + std::to_string(r) + " exceeds half of " +
                      std::to_string(n) + " tokens");
    }
    n -= r;
  }
}

MergeSchedule build_schedule(ScheduleKind kind, std::size_t n0, double retain_fraction,
                             std::size_t layers, double uniform_alpha) {
  if (!(retain_fraction > 0.0 && retain_fraction <= 1.0)) {
    throw Error(ErrorKind::domain, "retain fraction " + std::to_string(retain_fraction) +
                                       " is outside (0, 1]");
  }
  if (static_cast<double>(n0) * retain_fraction < 1.0) {
    throw Error(ErrorKind::domain, "retaining " + std::to_string(retain_fraction) + " of " +
                                       std::to_string(n0) + " tokens leaves none");
  }
  if (layers == 0) throw Error(ErrorKind::domain, "schedule needs at least one layer");
  if (!(uniform_alpha >= 0.0 && uniform_alpha <= 1.0)) {
    throw Error(ErrorKind::domain, "uniform alpha is outside [0, 1]");
  }
  const auto target =
      static_cast<std::size_t>(std::llround(static_cast<double>(n0) * retain_fraction));
  const std::size_t reduction = n0 - std::min(target, n0);
  MergeSchedule schedule{kind, layers, std::vector<std::size_t>(layers, reduction / layers),
                         uniform_alpha};
  for (std::size_t i = 0; i < reduction % layers; ++i) ++schedule.r_per_layer[i];
  check_schedule_feasible(schedule, n0);
  return schedule;
}

std::vector<PatchGroup> trace_pairs(const TokenState& state, std::span<const MergePair> pairs) {
  std::vector<PatchGroup> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    PatchGroup g = state.lineage.at(p.a);
    const auto& gb = state.lineage.at(p.b);
    g.insert(g.end(), gb.begin(), gb.end());
    std::ranges::sort(g);
    out.push_back(std::move(g));
  }
  std::ranges::sort(out);
  return out;
}

std::vector<PatchGroup> canonical_groups(std::span<const PatchGroup> lineage) {
  std::vector<PatchGroup> out(lineage.begin(), lineage.end());
  for (auto& g : out) std::ranges::sort(g);
  std::ranges::sort(out);
  return out;
}

std::vector<PatchGroup> replay_trace(const MergeTrace& trace, std::size_t n0) {
  std::vector<std::uint32_t> parent(n0);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& layer : trace.layers) {
    for (const auto& entry : layer.pairs) {
      if (entry.empty()) throw Error(ErrorKind::invalid_trace, "empty pair entry");
      for (auto id : entry) {
        if (id >= n0) {
          throw Error(ErrorKind::invalid_trace, "patch id " + std::to_string(id) +
                                                    " out of range " + std::to_string(n0));
        }
        const auto ra = find(entry.front());
        const auto rb = find(id);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  std::vector<PatchGroup> by_root(n0);
  for (std::uint32_t i = 0; i < n0; ++i) by_root[find(i)].push_back(i);
  std::vector<PatchGroup> groups;
  for (auto& g : by_root) {
    if (!g.empty()) groups.push_back(std::move(g));
  }
  return canonical_groups(groups);
}

bool is_partition(std::span<const PatchGroup> groups, std::size_t n0) {
  std::vector<bool> seen(n0, false);
  std::size_t count = 0;
  for (const auto& g : groups) {
    if (g.empty()) return false;
    for (auto id : g) {
      if (id >= n0 || seen[id]) return false;
      seen[id] = true;
      ++count;
    }
  }
  return count == n0;
}

}  // namespace tosa
