#include "tosa/commands.hpp"

#include <algorithm>
#include <chrono>

#include <json.hpp>

#include "tosa/error.hpp"
#include "tosa/io_formats.hpp"
#include "tosa/metrics.hpp"

namespace tosa::commands {

Inputs load_inputs(const InputPaths& paths, EncoderConfig& config) {
  Inputs inputs;
  if (paths.features) {
    inputs.features = load_feature_file(*paths.features);
    config.model_dim = inputs.features.cols();
  } else {
    auto scene = make_two_plane_scene(config.grid, config.model_dim, config.seed);
    inputs.features = std::move(scene.features);
    inputs.depth = std::move(scene.depth);
  }
  if (paths.depth) inputs.depth = load_depth_file(*paths.depth);
  return inputs;
}

namespace {

std::vector<SpatialTriplet> triplets_for(const Inputs& inputs, const EncoderConfig& config) {
  if (!inputs.depth) return {};
  return spatial_triplets(*inputs.depth, config.grid, config.depth_levels);
}

}  // namespace

MergeSummary run_merge(MergeOptions options) {
  const Inputs inputs = load_inputs(options.inputs, options.config);
  const auto& config = options.config;
  const std::size_t n0 = config.grid.patch_count();
  const auto schedule = build_schedule(options.kind, n0, options.retain, config.layers, options.alpha);
  // visual_only never reads depth, so it runs the depth-free path.
  const DepthMap* depth =
      options.kind == ScheduleKind::visual_only || !inputs.depth ? nullptr : &*inputs.depth;
  auto result = vit_forward(inputs.features, depth, config, schedule);

  MergeSummary summary;
  summary.tokens_initial = n0;
  summary.tokens_final = result.state.token_count();
  summary.dispersion = spatial_dispersion(result.trace, config.grid, triplets_for(inputs, config),
                                          config.depth_levels);
  if (options.out_trace) save_trace(*options.out_trace, result.trace);
  if (options.out_svg) {
    write_text_file(*options.out_svg,
                    render_merge_map(result.trace, config.grid, summary.tokens_final));
  }
  summary.trace = std::move(result.trace);
  return summary;
}

std::vector<RunReport> run_bench(const BenchOptions& options) {
  if (options.images == 0 || options.repetitions == 0) {
    throw Error(ErrorKind::domain, "bench needs at least one image and one repetition");
  }
  const auto& config = options.config;
  const std::size_t n0 = config.grid.patch_count();
  const auto params = init_encoder(config);

  std::vector<SyntheticScene> scenes;
  for (std::size_t i = 0; i < options.images; ++i) {
    scenes.push_back(make_two_plane_scene(config.grid, config.model_dim, config.seed + i));
  }

  struct Case {
    RunReport report;
    MergeSchedule schedule;
    std::vector<double> seconds;
  };
  std::vector<Case> cases;
  for (double retain : options.retains) {
    for (auto kind : options.kinds) {
      Case c;
      c.report.kind = kind;
      c.report.retain = retain;
      c.report.tokens_initial = n0;
      c.schedule = build_schedule(kind, n0, retain, config.layers);
      cases.push_back(std::move(c));
    }
  }

  using Clock = std::chrono::steady_clock;
  // Cases are interleaved per image, and the order rotates each repetition, so
  // slow stretches on the machine spread across all cases.
  for (std::size_t rep = 0; rep < options.repetitions; ++rep) {
    for (auto& c : cases) c.seconds.push_back(0.0);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      for (std::size_t j = 0; j < cases.size(); ++j) {
        auto& c = cases[(j + rep) % cases.size()];
        const DepthMap* depth =
            c.report.kind == ScheduleKind::visual_only ? nullptr : &scenes[i].depth;
        const auto start = Clock::now();
        auto result = vit_forward(scenes[i].features, depth, config, params, c.schedule);
        c.seconds.back() += std::chrono::duration<double>(Clock::now() - start).count();
        if (rep == 0 && i == 0) {
          c.report.tokens_final = result.state.token_count();
          c.report.coherence = spatial_dispersion(
              result.trace, config.grid,
              spatial_triplets(scenes[0].depth, config.grid, config.depth_levels),
              config.depth_levels);
        }
      }
    }
  }

  std::vector<RunReport> reports;
  for (auto& c : cases) {
    auto sorted = c.seconds;
    std::ranges::sort(sorted);
    const std::size_t m = sorted.size();
    const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    c.report.wall_time_per_image = median / static_cast<double>(options.images);
    c.report.throughput = static_cast<double>(options.images) / median;
    reports.push_back(c.report);
  }
  return reports;
}

std::vector<CompareRow> run_compare(CompareOptions options) {
  const Inputs inputs = load_inputs(options.inputs, options.config);
  const auto& config = options.config;
  if (!inputs.depth) {
    throw Error(ErrorKind::domain, "compare needs a depth map");
  }
  const std::size_t n0 = config.grid.patch_count();
  const auto params = init_encoder(config);
  const auto triplets = triplets_for(inputs, config);
  std::vector<CompareRow> rows;
  for (auto kind : {ScheduleKind::visual_only, ScheduleKind::uniform, ScheduleKind::decrease,
                    ScheduleKind::increase}) {
    const auto schedule = build_schedule(kind, n0, options.retain, config.layers, options.alpha);
    const auto result = vit_forward(inputs.features, &*inputs.depth, config, params, schedule);
    rows.push_back({kind, spatial_dispersion(result.trace, config.grid, triplets, config.depth_levels),
                    result.state.token_count()});
  }
  return rows;
}

std::string reports_to_json(const std::vector<RunReport>& reports) {
  auto arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"tokens_initial", r.tokens_initial},
                   {"tokens_final", r.tokens_final},
                   {"wall_time_per_image", r.wall_time_per_image},
                   {"throughput", r.throughput},
                   {"schedule", std::string(to_string(r.kind))},
                   {"retain", r.retain},
                   {"coherence", r.coherence}});
  }
  return nlohmann::json{{"runs", arr}}.dump(2) + "\n";
}

std::string compare_to_json(const std::vector<CompareRow>& rows, double retain) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"schedule", std::string(to_string(r.kind))},
                   {"dispersion", r.dispersion},
                   {"tokens_final", r.tokens_final}});
  }
  return nlohmann::json{{"retain", retain}, {"schedules", arr}}.dump(2) + "\n";
}

}  // namespace tosa::commands
