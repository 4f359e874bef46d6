// tosa: run spatially-aware token merging on desk-scale inputs.
//
//   tosa merge   --features F.tsaf --depth D.pgm --retain 0.1 --schedule increase
//                --out-trace trace.json --out-svg map.svg
//   tosa bench   --images 2 --repetitions 3 [--json]
//   tosa compare --retain 0.1 --seed 7 [--json]
//
// Exit codes: 0 success, 1 other failure, 2 usage, 3 input format,
// 4 schedule infeasible.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tosa/commands.hpp"
#include "tosa/error.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitInfeasible = 4;

int exit_code_for(tosa::ErrorKind kind) {
  using tosa::ErrorKind;
  switch (kind) {
    case ErrorKind::format:
    case ErrorKind::truncation:
    case ErrorKind::non_finite:
    case ErrorKind::io:
    case ErrorKind::invalid_trace:
    case ErrorKind::shape:
      return kExitFormat;
    case ErrorKind::schedule_infeasible:
    case ErrorKind::reduction_too_large:
      return kExitInfeasible;
    case ErrorKind::domain:
    case ErrorKind::invalid_dimension:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

struct CommonFlags {
  std::optional<std::string> features;
  std::optional<std::string> depth;
  double retain = 0.1;
  std::string schedule = "increase";
  double alpha = 0.5;
  std::size_t layers = 27;
  std::string grid = "27x27";
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  bool json = false;
};

tosa::PatchGrid parse_grid(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) {
    throw tosa::Error(tosa::ErrorKind::domain, "--grid expects WxH, got '" + text + "'");
  }
  try {
    tosa::PatchGrid grid;
    std::size_t used = 0;
    grid.grid_w = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    grid.grid_h = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
    return grid;
  } catch (const std::logic_error&) {
    throw tosa::Error(tosa::ErrorKind::domain, "--grid expects WxH, got '" + text + "'");
  }
}

tosa::EncoderConfig make_config(const CommonFlags& flags) {
  tosa::EncoderConfig config;
  config.layers = flags.layers;
  config.grid = parse_grid(flags.grid);
  config.model_dim = flags.dim;
  config.seed = flags.seed;
  return config;
}

tosa::commands::InputPaths make_paths(const CommonFlags& flags) {
  tosa::commands::InputPaths paths;
  if (flags.features) paths.features = *flags.features;
  if (flags.depth) paths.depth = *flags.depth;
  return paths;
}

void add_shape_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--layers", flags.layers, "Encoder layers")->check(CLI::PositiveNumber);
  cmd->add_option("--grid", flags.grid, "Patch grid WxH");
  cmd->add_option("--dim", flags.dim, "Model width for synthetic features")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", flags.seed, "Seed for weights and synthetic scenes");
  cmd->add_flag("--json", flags.json, "Print JSON instead of a table");
}

void add_input_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--features", flags.features, "Feature file (TSAF)");
  cmd->add_option("--depth", flags.depth, "Depth map (PGM or TSAD)");
  cmd->add_option("--retain", flags.retain, "Fraction of tokens kept")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--alpha", flags.alpha, "Alpha for the uniform schedule")
      ->check(CLI::Range(0.0, 1.0));
}

int do_merge(const CommonFlags& flags, const std::optional<std::string>& out_trace,
             const std::optional<std::string>& out_svg) {
  tosa::commands::MergeOptions options;
  options.inputs = make_paths(flags);
  options.config = make_config(flags);
  options.kind = tosa::parse_schedule_kind(flags.schedule);
  options.retain = flags.retain;
  options.alpha = flags.alpha;
  if (out_trace) options.out_trace = *out_trace;
  if (out_svg) options.out_svg = *out_svg;
  if (flags.features && !flags.depth && options.kind != tosa::ScheduleKind::visual_only) {
    throw tosa::Error(tosa::ErrorKind::domain,
                      "--schedule " + flags.schedule + " with --features needs --depth");
  }
  const auto summary = tosa::commands::run_merge(std::move(options));
  if (flags.json) {
    std::cout << "{\"tokens_initial\": " << summary.tokens_initial
              << ", \"tokens_final\": " << summary.tokens_final
              << ", \"groups\": " << summary.trace.final_groups.size()
              << ", \"dispersion\": " << summary.dispersion << "}\n";
  } else {
    std::cout << "merged " << summary.tokens_initial << " -> " << summary.tokens_final
              << " tokens (" << flags.schedule << ", retain " << flags.retain
              << "), dispersion " << summary.dispersion << "\n";
  }
  return 0;
}

int do_bench(const CommonFlags& flags, std::size_t images, std::size_t repetitions) {
  tosa::commands::BenchOptions options;
  options.config = make_config(flags);
  options.images = images;
  options.repetitions = repetitions;
  const auto reports = tosa::commands::run_bench(options);
  if (flags.json) {
    std::cout << tosa::commands::reports_to_json(reports);
    return 0;
  }
  std::printf("%-12s %7s %8s %10s %10s %11s\n", "schedule", "retain", "tokens", "s/image",
              "im/s", "dispersion");
  for (const auto& r : reports) {
    std::printf("%-12s %7.2f %8zu %10.4f %10.3f %11.4f\n",
                std::string(tosa::to_string(r.kind)).c_str(), r.retain, r.tokens_final,
                r.wall_time_per_image, r.throughput, r.coherence);
  }
  return 0;
}

int do_compare(const CommonFlags& flags) {
  tosa::commands::CompareOptions options;
  options.inputs = make_paths(flags);
  options.config = make_config(flags);
  options.retain = flags.retain;
  options.alpha = flags.alpha;
  const auto rows = tosa::commands::run_compare(std::move(options));
  if (flags.json) {
    std::cout << tosa::commands::compare_to_json(rows, flags.retain);
    return 0;
  }
  std::printf("%-12s %8s %11s\n", "schedule", "tokens", "dispersion");
  for (const auto& r : rows) {
    std::printf("%-12s %8zu %11.4f\n", std::string(tosa::to_string(r.kind)).c_str(),
                r.tokens_final, r.dispersion);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatially-aware token merging for transformer encoders"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<std::string> out_trace;
  std::optional<std::string> out_svg;
  std::size_t images = 2;
  std::size_t repetitions = 3;

  auto* merge = app.add_subcommand("merge", "Run one forward pass and write the merge trace");
  add_input_flags(merge, flags);
  add_shape_flags(merge, flags);
  merge->add_option("--schedule", flags.schedule, "increase|decrease|uniform|visual_only")
      ->check(CLI::IsMember({"increase", "decrease", "uniform", "visual_only"}));
  merge->add_option("--out-trace", out_trace, "Write the merge trace JSON here");
  merge->add_option("--out-svg", out_svg, "Write the merge map SVG here");

  auto* bench = app.add_subcommand("bench", "Measure encoder throughput with and without merging");
  add_shape_flags(bench, flags);
  bench->add_option("--images", images, "Synthetic images per repetition")
      ->check(CLI::PositiveNumber);
  bench->add_option("--repetitions", repetitions, "Timed repetitions (median reported)")
      ->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "Spatial dispersion for every schedule");
  add_input_flags(compare, flags);
  add_shape_flags(compare, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (merge->parsed()) return do_merge(flags, out_trace, out_svg);
    if (bench->parsed()) return do_bench(flags, images, repetitions);
    if (compare->parsed()) return do_compare(flags);
  } catch (const tosa::Error& e) {
    std::cerr << "tosa: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "tosa: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
