#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>

#include "tosa/error.hpp"
#include "tosa/io_formats.hpp"
#include "tosa/merge_core.hpp"
#include "tosa/metrics.hpp"
#include "tosa/numerics.hpp"
#include "tosa/spatial_tokens.hpp"
#include "tosa/toy_vit.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

tosa::Matrix to_matrix(const FloatArray& array) {
  if (array.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(array.shape(0));
  const auto cols = static_cast<std::size_t>(array.shape(1));
  std::vector<float> data(array.data(), array.data() + rows * cols);
  return tosa::Matrix(rows, cols, std::move(data));
}

FloatArray to_array(const tosa::Matrix& m) {
  FloatArray out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  if (m.size()) std::memcpy(out.mutable_data(), m.data().data(), m.size() * sizeof(float));
  return out;
}

tosa::DepthMap to_depth(const FloatArray& array) {
  if (array.ndim() != 2) throw py::value_error("depth must be a 2-D (height, width) array");
  tosa::DepthMap depth;
  depth.height = static_cast<std::size_t>(array.shape(0));
  depth.width = static_cast<std::size_t>(array.shape(1));
  depth.values.assign(array.data(), array.data() + depth.width * depth.height);
  return depth;
}

tosa::PatchGrid make_grid(std::size_t w, std::size_t h, std::size_t patch) { return {w, h, patch}; }

py::dict state_to_dict(const tosa::TokenState& s) {
  py::dict d;
  d["features"] = to_array(s.features);
  d["sizes"] = s.sizes;
  d["spatial"] = to_array(s.spatial);
  d["centroids"] = to_array(s.centroids);
  d["lineage"] = s.lineage;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spatially-aware token merging kernels";

  static PyObject* tosa_error =
      py::exception<tosa::Error>(m, "TosaError", PyExc_ValueError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const tosa::Error& e) {
      py::object instance = py::reinterpret_borrow<py::object>(tosa_error)(e.what());
      instance.attr("kind") = std::string(tosa::to_string(e.kind()));
      PyErr_SetObject(tosa_error, instance.ptr());
    }
  });

  m.def("cosine_similarity_matrix", [](const FloatArray& a, const FloatArray& b) {
    return to_array(tosa::cosine_similarity_matrix(to_matrix(a), to_matrix(b)));
  });
  m.def("sinusoidal_encoding", &tosa::sinusoidal_encoding, py::arg("index"), py::arg("dim"));
  m.def("row_softmax_with_bias", [](const FloatArray& logits, std::vector<float> bias) {
    return to_array(tosa::row_softmax_with_bias(to_matrix(logits), bias));
  });
  m.def("weighted_row_average", [](std::vector<float> fa, float sa, std::vector<float> fb, float sb) {
    auto r = tosa::weighted_row_average(fa, sa, fb, sb);
    return py::make_tuple(r.features, r.size);
  });

  m.def(
      "patch_mean_depth",
      [](const FloatArray& depth, std::size_t grid_w, std::size_t grid_h, std::size_t patch) {
        return tosa::patch_mean_depth(to_depth(depth), make_grid(grid_w, grid_h, patch));
      },
      py::arg("depth"), py::arg("grid_w"), py::arg("grid_h"), py::arg("patch_size"));
  m.def("quantize_depth", &tosa::quantize_depth, py::arg("mean_depth"), py::arg("levels") = 27);
  m.def(
      "make_spatial_tokens",
      [](const FloatArray& depth, std::size_t grid_w, std::size_t grid_h, std::size_t patch,
         std::size_t token_dim, std::size_t levels) {
        return to_array(tosa::make_spatial_tokens(to_depth(depth), make_grid(grid_w, grid_h, patch),
                                                  token_dim, levels));
      },
      py::arg("depth"), py::arg("grid_w") = 27, py::arg("grid_h") = 27, py::arg("patch_size") = 14,
      py::arg("token_dim") = tosa::kDefaultSpatialDim, py::arg("levels") = tosa::kDefaultDepthLevels);

  m.def(
      "bipartite_partition",
      [](std::size_t n, std::vector<std::uint32_t> protected_tokens) -> py::object {
        auto p = tosa::bipartite_partition(n, protected_tokens);
        if (!p) return py::none();
        return py::make_tuple(p->a, p->b);
      },
      py::arg("n"), py::arg("protected_tokens") = std::vector<std::uint32_t>{});
  m.def(
      "fused_score",
      [](const FloatArray& visual, const FloatArray& spatial, double alpha) {
        tosa::ScoreMatrix v{to_matrix(visual), {}, {}};
        tosa::ScoreMatrix s{to_matrix(spatial), {}, {}};
        return to_array(tosa::fused_score(v, s, alpha).values);
      },
      py::arg("visual"), py::arg("spatial"), py::arg("alpha"));
  m.def(
      "bsm_select",
      [](const FloatArray& scores, std::vector<std::uint32_t> a, std::vector<std::uint32_t> b,
         std::size_t r) {
        const auto pairs = tosa::bsm_select({to_matrix(scores), std::move(a), std::move(b)}, r);
        std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
        for (const auto& p : pairs) out.emplace_back(p.a, p.b);
        return out;
      },
      py::arg("scores"), py::arg("a_indices"), py::arg("b_indices"), py::arg("r"));
  m.def(
      "proportional_attention",
      [](const FloatArray& q, const FloatArray& k, const FloatArray& v, std::vector<float> sizes,
         std::size_t heads) {
        return to_array(
            tosa::proportional_attention(to_matrix(q), to_matrix(k), to_matrix(v), sizes, heads));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("sizes"), py::arg("heads") = 1);

  m.def(
      "alpha_at",
      [](const std::string& kind, std::size_t layers, std::size_t layer, double uniform_alpha) {
        tosa::MergeSchedule s{tosa::parse_schedule_kind(kind), layers, {}, uniform_alpha};
        return tosa::alpha_at(s, layer);
      },
      py::arg("kind"), py::arg("layers"), py::arg("layer"), py::arg("uniform_alpha") = 0.5);
  m.def(
      "build_schedule",
      [](const std::string& kind, std::size_t n0, double retain, std::size_t layers,
         double uniform_alpha) {
        return tosa::build_schedule(tosa::parse_schedule_kind(kind), n0, retain, layers,
                                    uniform_alpha)
            .r_per_layer;
      },
      py::arg("kind"), py::arg("n0"), py::arg("retain"), py::arg("layers"),
      py::arg("uniform_alpha") = 0.5);

  m.def(
      "two_plane_scene",
      [](std::size_t grid_w, std::size_t grid_h, std::size_t patch, std::size_t dim,
         std::uint64_t seed) {
        auto scene = tosa::make_two_plane_scene(make_grid(grid_w, grid_h, patch), dim, seed);
        FloatArray depth({static_cast<py::ssize_t>(scene.depth.height),
                          static_cast<py::ssize_t>(scene.depth.width)});
        std::memcpy(depth.mutable_data(), scene.depth.values.data(),
                    scene.depth.values.size() * sizeof(float));
        return py::make_tuple(to_array(scene.features), depth);
      },
      py::arg("grid_w") = 27, py::arg("grid_h") = 27, py::arg("patch_size") = 14,
      py::arg("dim") = 64, py::arg("seed") = 0);

  m.def(
      "vit_forward",
      [](const FloatArray& tokens, std::optional<FloatArray> depth, const std::string& schedule,
         double retain, std::size_t layers, std::size_t heads, std::size_t grid_w,
         std::size_t grid_h, std::size_t patch, std::uint64_t seed, double uniform_alpha) {
        tosa::EncoderConfig config;
        config.layers = layers;
        config.heads = heads;
        config.grid = make_grid(grid_w, grid_h, patch);
        config.seed = seed;
        const auto features = to_matrix(tokens);
        config.model_dim = features.cols();
        const auto kind = tosa::parse_schedule_kind(schedule);
        const auto sched =
            tosa::build_schedule(kind, config.grid.patch_count(), retain, layers, uniform_alpha);
        std::optional<tosa::DepthMap> d;
        if (depth) d = to_depth(*depth);
        tosa::ForwardResult result;
        {
          py::gil_scoped_release release;
          result = tosa::vit_forward(features, d ? &*d : nullptr, config, sched);
        }
        py::dict out = state_to_dict(result.state);
        out["trace_json"] = tosa::trace_to_json(result.trace);
        std::vector<tosa::SpatialTriplet> triplets;
        if (d) triplets = tosa::spatial_triplets(*d, config.grid, config.depth_levels);
        out["dispersion"] = tosa::spatial_dispersion(result.trace, config.grid, triplets);
        return out;
      },
      py::arg("tokens"), py::arg("depth") = py::none(), py::arg("schedule") = "increase",
      py::arg("retain") = 0.1, py::arg("layers") = 27, py::arg("heads") = 4,
      py::arg("grid_w") = 27, py::arg("grid_h") = 27, py::arg("patch_size") = 14,
      py::arg("seed") = 0, py::arg("uniform_alpha") = 0.5);

  m.def(
      "spatial_dispersion",
      [](std::vector<tosa::PatchGroup> groups, std::size_t grid_w, std::size_t grid_h,
         std::vector<std::uint32_t> z_levels, std::size_t levels) {
        const auto grid = make_grid(grid_w, grid_h, 1);
        std::vector<tosa::SpatialTriplet> triplets;
        if (!z_levels.empty()) {
          triplets = tosa::planar_triplets(grid);
          if (z_levels.size() != triplets.size()) throw py::value_error("z_levels length");
          for (std::size_t i = 0; i < triplets.size(); ++i) triplets[i].z = z_levels[i];
        }
        return tosa::spatial_dispersion(groups, grid, triplets, levels);
      },
      py::arg("groups"), py::arg("grid_w") = 27, py::arg("grid_h") = 27,
      py::arg("z_levels") = std::vector<std::uint32_t>{}, py::arg("levels") = 27);
  m.def(
      "render_merge_map",
      [](const std::string& trace_json, std::size_t retained) {
        const auto trace = tosa::trace_from_json(trace_json);
        return tosa::render_merge_map(trace, make_grid(trace.grid_w, trace.grid_h, 1), retained);
      },
      py::arg("trace_json"), py::arg("retained"));

  m.def("save_feature_file", [](const std::filesystem::path& path, const FloatArray& a) {
    tosa::save_feature_file(path, to_matrix(a));
  });
  m.def("load_feature_file",
        [](const std::filesystem::path& path) { return to_array(tosa::load_feature_file(path)); });
}
