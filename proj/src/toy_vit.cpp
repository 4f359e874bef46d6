#include "tosa/toy_vit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tosa/error.hpp"
#include "tosa/rng.hpp"

namespace tosa {

std::size_t EncoderConfig::hidden_dim() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(model_dim)));
}

void EncoderConfig::validate() const {
  if (layers == 0) throw Error(ErrorKind::domain, "encoder needs at least one layer");
  if (model_dim == 0 || heads == 0 || model_dim % heads != 0) {
    throw Error(ErrorKind::invalid_dimension, "model dim " + std::to_string(model_dim) +
                                                  " is not divisible by " +
                                                  std::to_string(heads) + " heads");
  }
  if (!(mlp_ratio > 0.0) || hidden_dim() == 0) {
    throw Error(ErrorKind::invalid_dimension, "mlp ratio must give a positive hidden width");
  }
  if (grid.grid_w == 0 || grid.grid_h == 0 || grid.patch_size == 0) {
    throw Error(ErrorKind::shape, "patch grid must be non-empty");
  }
  if (spatial_dim == 0 || spatial_dim % 6 != 0) {
    throw Error(ErrorKind::invalid_dimension, "spatial dim must be a positive multiple of 6");
  }
  if (depth_levels == 0) throw Error(ErrorKind::domain, "depth levels must be >= 1");
}

namespace {

// Entries uniform in [-scale, scale].
Matrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols, double scale) {
  std::vector<float> data(rows * cols);
  for (float& v : data) v = static_cast<float>(rng.uniform(-1.0, 1.0) * scale);
  return Matrix(rows, cols, std::move(data));
}

void add_bias(Matrix& m, std::span<const float> bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void add_inplace(Matrix& x, const Matrix& y) {
  auto xd = x.data();
  const auto yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += yd[i];
}

}  // namespace

std::vector<EncoderLayerParams> init_encoder(const EncoderConfig& config) {
  config.validate();
  const std::size_t d = config.model_dim;
  const std::size_t h = config.hidden_dim();
  SplitMix64 rng(config.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<EncoderLayerParams> layers;
  layers.reserve(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayerParams p;
    p.wq = random_matrix(rng, d, d, scale);
    p.wk = random_matrix(rng, d, d, scale);
    p.wv = random_matrix(rng, d, d, scale);
    p.wo = random_matrix(rng, d, d, scale);
    p.w1 = random_matrix(rng, d, h, scale);
    p.w2 = random_matrix(rng, h, d, scale);
    p.b1.assign(h, 0.0f);
    p.b2.assign(d, 0.0f);
    p.ln1_gain.assign(d, 1.0f);
    p.ln1_bias.assign(d, 0.0f);
    p.ln2_gain.assign(d, 1.0f);
    p.ln2_bias.assign(d, 0.0f);
    layers.push_back(std::move(p));
  }
  return layers;
}

AttentionOutput attention_block(const Matrix& x, std::span<const float> sizes,
                                const EncoderLayerParams& params, std::size_t heads) {
  const Matrix normed = layer_norm(x, params.ln1_gain, params.ln1_bias);
  const Matrix q = matmul(normed, params.wq);
  const Matrix k = matmul(normed, params.wk);
  const Matrix v = matmul(normed, params.wv);
  const Matrix mixed = proportional_attention(q, k, v, sizes, heads);

  AttentionOutput out{x, Matrix(x.rows(), x.cols() / heads)};
  add_inplace(out.hidden, matmul(mixed, params.wo));

  const std::size_t dh = x.cols() / heads;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t p = 0; p < dh; ++p) {
      double sum = 0.0;
      for (std::size_t h = 0; h < heads; ++h) sum += k(i, h * dh + p);
      out.keys(i, p) = static_cast<float>(sum / static_cast<double>(heads));
    }
  }
  return out;
}

Matrix mlp_block(const Matrix& x, const EncoderLayerParams& params) {
  const Matrix normed = layer_norm(x, params.ln2_gain, params.ln2_bias);
  Matrix hidden = matmul(normed, params.w1);
  add_bias(hidden, params.b1);
  gelu_tanh_inplace(hidden.data());
  Matrix projected = matmul(hidden, params.w2);
  add_bias(projected, params.b2);
  Matrix out = x;
  add_inplace(out, projected);
  return out;
}

TokenState encoder_layer_forward(const TokenState& state, const EncoderLayerParams& params,
                                 const LayerSettings& settings, const MergeObserver& observer) {
  AttentionOutput attn = attention_block(state.features, state.sizes, params, settings.heads);

  TokenState mid = state;
  mid.features = std::move(attn.hidden);

  TokenState merged;
  std::vector<MergePair> pairs;
  const auto partition = settings.r > 0
                             ? bipartite_partition(mid.token_count(), settings.protected_tokens)
                             : std::nullopt;
  if (partition) {
    ScoreMatrix scores;
    if (settings.alpha < 1.0) {
      if (!mid.has_spatial()) {
        throw Error(ErrorKind::domain, "layer " + std::to_string(settings.layer) +
                                           ": alpha < 1 requires spatial tokens");
      }
      scores = fused_similarity_scores(attn.keys, mid.spatial, *partition, settings.alpha);
    } else {
      scores = similarity_scores(attn.keys, *partition);
    }
    pairs = bsm_select(scores, settings.r, settings.layer);
    merged = apply_merge(mid, pairs);
  } else {
    if (settings.r > 0) {
      throw Error(ErrorKind::reduction_too_large,
                  "layer " + std::to_string(settings.layer) + ": nothing to merge");
    }
    merged = std::move(mid);
  }
  if (observer) {
    observer(MergeEvent{settings.layer, settings.alpha, pairs, partition ? mid : merged, merged});
  }
  merged.features = mlp_block(merged.features, params);
  return merged;
}

ForwardResult vit_forward(const Matrix& tokens, const DepthMap* depth, const EncoderConfig& config,
                          std::span<const EncoderLayerParams> params,
                          const MergeSchedule& schedule, const MergeObserver& observer) {
  config.validate();
  const std::size_t n0 = config.grid.patch_count();
  if (tokens.rows() != n0 || tokens.cols() != config.model_dim) {
    throw Error(ErrorKind::shape, "tokens are " + std::to_string(tokens.rows()) + "x" +
                                      std::to_string(tokens.cols()) + ", expected " +
                                      std::to_string(n0) + "x" +
                                      std::to_string(config.model_dim));
  }
  if (schedule.layers != config.layers || params.size() != config.layers) {
    throw Error(ErrorKind::schedule_infeasible,
                "schedule has " + std::to_string(schedule.layers) + " layers, encoder has " +
                    std::to_string(config.layers) + " (" + std::to_string(params.size()) +
                    " parameter sets)");
  }
  check_schedule_feasible(schedule, n0);

  TokenState state;
  if (depth != nullptr) {
    const auto triplets = spatial_triplets(*depth, config.grid, config.depth_levels);
    state = initial_state(tokens, encode_triplets(triplets, config.spatial_dim), triplets);
  } else {
    if (schedule.kind != ScheduleKind::visual_only) {
      throw Error(ErrorKind::domain, std::string("schedule '") +
                                         std::string(to_string(schedule.kind)) +
                                         "' needs a depth map");
    }
    state = initial_state(tokens, Matrix{}, planar_triplets(config.grid));
  }

  ForwardResult result;
  result.trace.grid_w = config.grid.grid_w;
  result.trace.grid_h = config.grid.grid_h;
  result.trace.layers.reserve(config.layers);
  const MergeObserver record = [&](const MergeEvent& event) {
    result.trace.layers.push_back(
        {event.layer, event.alpha, event.pairs.size(), trace_pairs(event.before, event.pairs)});
    if (observer) observer(event);
  };
  for (std::size_t l = 0; l < config.layers; ++l) {
    const LayerSettings settings{l, config.heads, alpha_at(schedule, l), schedule.r_per_layer[l]};
    state = encoder_layer_forward(state, params[l], settings, record);
  }
  result.trace.final_groups = canonical_groups(state.lineage);
  result.state = std::move(state);
  return result;
}

ForwardResult vit_forward(const Matrix& tokens, const DepthMap* depth, const EncoderConfig& config,
                          const MergeSchedule& schedule) {
  const auto params = init_encoder(config);
  return vit_forward(tokens, depth, config, params, schedule);
}

SyntheticScene make_two_plane_scene(const PatchGrid& grid, std::size_t dim, std::uint64_t seed,
                                    const SceneParams& params) {
  if (grid.patch_count() == 0 || dim == 0) {
    throw Error(ErrorKind::invalid_dimension, "scene needs a non-empty grid and width");
  }
  if (params.textures == 0 || params.background_regions == 0) {
    throw Error(ErrorKind::domain, "scene needs at least one texture and one background region");
  }
  SplitMix64 rng(seed ^ 0x5CE7E5CE7E5CE7EULL);
  const auto gaussian_rows = [&](std::size_t count) {
    std::vector<std::vector<double>> rows(count, std::vector<double>(dim));
    for (auto& row : rows) {
      for (double& v : row) v = rng.normal();
    }
    return rows;
  };
  const auto clusters = gaussian_rows(params.background_regions + 1);
  const auto textures = gaussian_rows(params.textures);
  const auto wave_dirs = gaussian_rows(params.waves);
  struct Wave {
    double fx, fy, phase;
  };
  std::vector<Wave> waves(params.waves);
  for (auto& w : waves) {
    w = {params.frequency_scale * rng.normal(), params.frequency_scale * rng.normal(),
         rng.uniform(0.0, 2.0 * std::numbers::pi)};
  }
  const double wave_norm = params.waves ? 1.0 / std::sqrt(static_cast<double>(params.waves)) : 0.0;
  std::vector<double> field(dim);

  // Foreground rectangle spanning roughly a quarter to a half of each axis.
  const auto span_of = [&](std::size_t extent) {
    const std::size_t lo = std::max<std::size_t>(1, extent / 4);
    const std::size_t hi = std::max<std::size_t>(lo, extent / 2);
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
  };
  const std::size_t fw = span_of(grid.grid_w);
  const std::size_t fh = span_of(grid.grid_h);
  const std::size_t fx = static_cast<std::size_t>(rng.below(grid.grid_w - fw + 1));
  const std::size_t fy = static_cast<std::size_t>(rng.below(grid.grid_h - fh + 1));
  const auto in_object = [&](std::size_t px, std::size_t py) {
    return px >= fx && px < fx + fw && py >= fy && py < fy + fh;
  };

  std::vector<std::pair<double, double>> sites(params.background_regions);
  for (auto& site : sites) {
    site = {rng.uniform(0.0, static_cast<double>(grid.grid_w)),
            rng.uniform(0.0, static_cast<double>(grid.grid_h))};
  }

  SyntheticScene scene;
  scene.region.resize(grid.patch_count());
  std::vector<float> features(grid.patch_count() * dim);
  for (std::size_t py = 0; py < grid.grid_h; ++py) {
    for (std::size_t px = 0; px < grid.grid_w; ++px) {
      const std::size_t k = py * grid.grid_w + px;
      std::uint32_t region = 0;
      if (!in_object(px, py)) {
        double best = HUGE_VAL;
        for (std::size_t s = 0; s < sites.size(); ++s) {
          const double dx = static_cast<double>(px) + 0.5 - sites[s].first;
          const double dy = static_cast<double>(py) + 0.5 - sites[s].second;
          const double d2 = dx * dx + dy * dy;
          if (d2 < best) {
            best = d2;
            region = static_cast<std::uint32_t>(s + 1);
          }
        }
      }
      scene.region[k] = region;
      std::ranges::fill(field, 0.0);
      for (std::size_t m = 0; m < waves.size(); ++m) {
        const double u = (static_cast<double>(px) + 0.5) / static_cast<double>(grid.grid_w);
        const double v = (static_cast<double>(py) + 0.5) / static_cast<double>(grid.grid_h);
        const double a =
            wave_norm * std::sin(2.0 * std::numbers::pi * (waves[m].fx * u + waves[m].fy * v) +
                                 waves[m].phase);
        for (std::size_t c = 0; c < dim; ++c) field[c] += a * wave_dirs[m][c];
      }
      const auto& cluster = clusters[region];
      const auto& texture = textures[rng.below(params.textures)];
      for (std::size_t c = 0; c < dim; ++c) {
        features[k * dim + c] =
            static_cast<float>(params.cluster_scale * cluster[c] + params.field_scale * field[c] +
                               params.texture_scale * texture[c] + params.noise * rng.normal());
      }
    }
  }
  scene.features = Matrix(grid.patch_count(), dim, std::move(features));

  scene.depth.width = grid.pixel_width();
  scene.depth.height = grid.pixel_height();
  scene.depth.values.resize(scene.depth.width * scene.depth.height);
  for (std::size_t y = 0; y < scene.depth.height; ++y) {
    for (std::size_t x = 0; x < scene.depth.width; ++x) {
      const double base =
          in_object(x / grid.patch_size, y / grid.patch_size) ? params.near_depth : params.far_depth;
      const double v = base + params.depth_jitter * rng.uniform(-1.0, 1.0);
      scene.depth.values[y * scene.depth.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return scene;
}

}  // namespace tosa
