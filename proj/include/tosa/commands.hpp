#pragma once

// Command implementations behind the `tosa` executable. Each returns plain
// data; formatting and exit codes live in tools/tosa.cpp.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tosa/merge_core.hpp"
#include "tosa/toy_vit.hpp"

namespace tosa::commands {

// Token features and optional depth for one image. Without a feature file the
// two-plane synthetic scene for `config.seed` supplies both; an explicit
// depth file replaces the scene's depth.
struct Inputs {
  Matrix features;
  std::optional<DepthMap> depth;
};

struct InputPaths {
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> depth;
};

// Updates config.model_dim to the feature file width when one is given.
Inputs load_inputs(const InputPaths& paths, EncoderConfig& config);

struct MergeOptions {
  InputPaths inputs;
  EncoderConfig config;
  ScheduleKind kind = ScheduleKind::increase;
  double retain = 0.1;
  double alpha = 0.5;
  std::optional<std::filesystem::path> out_trace;
  std::optional<std::filesystem::path> out_svg;
};

struct MergeSummary {
  std::size_t tokens_initial = 0;
  std::size_t tokens_final = 0;
  double dispersion = 0.0;
  MergeTrace trace;
};

MergeSummary run_merge(MergeOptions options);

struct RunReport {
  std::size_t tokens_initial = 0;
  std::size_t tokens_final = 0;
  double wall_time_per_image = 0.0;  // seconds
  double throughput = 0.0;           // images / second
  ScheduleKind kind = ScheduleKind::visual_only;
  double retain = 1.0;
  double coherence = 0.0;  // spatial dispersion of the first image
};

struct BenchOptions {
  EncoderConfig config;
  std::size_t images = 2;
  std::size_t repetitions = 3;
  std::vector<double> retains{1.0, 0.5, 0.1};
  std::vector<ScheduleKind> kinds{ScheduleKind::visual_only, ScheduleKind::increase};
};

// Median-of-repetitions throughput per (retain, kind), timing vit_forward
// only. Configurations are interleaved per image within each repetition.
std::vector<RunReport> run_bench(const BenchOptions& options);

struct CompareOptions {
  InputPaths inputs;
  EncoderConfig config;
  double retain = 0.1;
  double alpha = 0.5;
};

struct CompareRow {
  ScheduleKind kind = ScheduleKind::visual_only;
  double dispersion = 0.0;
  std::size_t tokens_final = 0;
};

// One row each for visual_only, uniform, decrease, increase.
std::vector<CompareRow> run_compare(CompareOptions options);

std::string reports_to_json(const std::vector<RunReport>& reports);
std::string compare_to_json(const std::vector<CompareRow>& rows, double retain);

}  // namespace tosa::commands
