#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles/reference_encoder.hpp"
#include "support/helpers.hpp"
#include "tosa/error.hpp"
#include "tosa/io_formats.hpp"
#include "tosa/toy_vit.hpp"

using tosa::EncoderConfig;
using tosa::ErrorKind;
using tosa::Matrix;
using tosa::ScheduleKind;
using testing::error_kind;

namespace {

EncoderConfig small_config(std::uint64_t seed = 0) {
  EncoderConfig c;
  c.layers = 6;
  c.grid = {9, 9, 2};
  c.seed = seed;
  return c;
}

tosa::TokenState scene_state(const EncoderConfig& c, std::uint64_t seed, bool spatial) {
  const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, seed);
  const auto ts = tosa::spatial_triplets(scene.depth, c.grid, c.depth_levels);
  return tosa::initial_state(scene.features,
                             spatial ? tosa::encode_triplets(ts, c.spatial_dim) : Matrix{}, ts);
}

}  // namespace

TEST_SUITE("parameters") {
  TEST_CASE("same seed gives identical parameters") {
    CHECK(tosa::init_encoder(small_config(5)) == tosa::init_encoder(small_config(5)));
  }

  TEST_CASE("different seeds differ") {
    CHECK(tosa::init_encoder(small_config(5)) != tosa::init_encoder(small_config(6)));
  }

  TEST_CASE("shapes follow the config") {
    const auto p = tosa::init_encoder(EncoderConfig{});
    REQUIRE(p.size() == 27);
    CHECK(p[0].w1.rows() == 64);
    CHECK(p[0].w1.cols() == 256);
    CHECK(p[0].w2.rows() == 256);
    CHECK(p[0].wq.rows() == 64);
    CHECK(p[0].wq.cols() == 64);
    const double bound = 1.0 / std::sqrt(64.0);
    for (const auto* m : {&p[0].wq, &p[0].w1, &p[0].w2}) {
      for (float v : m->data()) CHECK(std::fabs(v) <= bound);
    }
  }

  TEST_CASE("invalid configs are rejected") {
    EncoderConfig c;
    c.heads = 5;
    CHECK(error_kind([&] { tosa::init_encoder(c); }) == ErrorKind::invalid_dimension);
    c = EncoderConfig{};
    c.layers = 0;
    CHECK(error_kind([&] { tosa::init_encoder(c); }) == ErrorKind::domain);
    c = EncoderConfig{};
    c.spatial_dim = 64;
    CHECK(error_kind([&] { tosa::init_encoder(c); }) == ErrorKind::invalid_dimension);
  }
}

TEST_SUITE("encoder layer") {
  TEST_CASE("r = 0 keeps the token count") {
    const auto c = small_config();
    const auto p = tosa::init_encoder(c);
    const auto st = scene_state(c, 1, true);
    const auto out = tosa::encoder_layer_forward(st, p[0], {0, c.heads, 0.0, 0});
    CHECK(out.token_count() == 81);
    CHECK(out.lineage == st.lineage);
  }

  TEST_CASE("r = 2 on ten tokens leaves eight") {
    EncoderConfig c = small_config();
    c.grid = {5, 2, 2};
    const auto p = tosa::init_encoder(c);
    const auto st = scene_state(c, 2, true);
    REQUIRE(st.token_count() == 10);
    const auto out = tosa::encoder_layer_forward(st, p[0], {0, c.heads, 0.5, 2});
    CHECK(out.token_count() == 8);
    tosa::validate_state(out, 10);
  }

  TEST_CASE("alpha = 1 matches a layer without spatial tokens bitwise") {
    const auto c = small_config();
    const auto p = tosa::init_encoder(c);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto with = tosa::encoder_layer_forward(scene_state(c, seed, true), p[1],
                                                    {1, c.heads, 1.0, 20});
      const auto without = tosa::encoder_layer_forward(scene_state(c, seed, false), p[1],
                                                       {1, c.heads, 1.0, 20});
      CHECK(with.features == without.features);
      CHECK(with.sizes == without.sizes);
      CHECK(with.lineage == without.lineage);
    }
  }

  TEST_CASE("unit sizes and no merging match a standard transformer layer") {
    const auto c = small_config();
    const auto p = tosa::init_encoder(c);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto st = scene_state(c, seed, false);
      const auto out = tosa::encoder_layer_forward(st, p[seed], {seed, c.heads, 1.0, 0});
      const Matrix ref = oracle::standard_layer(st.features, p[seed], c.heads);
      double worst = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(out.features.data()[i]) -
                                          ref.data()[i]));
      }
      CHECK(worst <= 1e-6);
    }
  }

  TEST_CASE("alpha below one needs spatial tokens") {
    const auto c = small_config();
    const auto p = tosa::init_encoder(c);
    const auto st = scene_state(c, 1, false);
    CHECK(error_kind([&] { tosa::encoder_layer_forward(st, p[0], {0, c.heads, 0.5, 3}); }) ==
          ErrorKind::domain);
  }

  TEST_CASE("too large a reduction is reported") {
    const auto c = small_config();
    const auto p = tosa::init_encoder(c);
    const auto st = scene_state(c, 1, true);
    CHECK(error_kind([&] { tosa::encoder_layer_forward(st, p[0], {0, c.heads, 0.5, 60}); }) ==
          ErrorKind::reduction_too_large);
  }

  TEST_CASE("the observer sees the pre-merge state and the pairs") {
    const auto c = small_config();
    const auto p = tosa::init_encoder(c);
    const auto st = scene_state(c, 3, true);
    std::size_t calls = 0;
    const auto out = tosa::encoder_layer_forward(
        st, p[0], {0, c.heads, 0.3, 7}, [&](const tosa::MergeEvent& e) {
          ++calls;
          CHECK(e.pairs.size() == 7);
          CHECK(e.before.token_count() == 81);
          CHECK(e.after.token_count() == 74);
          CHECK(e.alpha == 0.3);
        });
    CHECK(calls == 1);
    CHECK(out.token_count() == 74);
  }
}

TEST_SUITE("forward pass") {
  TEST_CASE("full retention merges nothing") {
    const auto c = small_config();
    const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, 1);
    const auto s = tosa::build_schedule(ScheduleKind::increase, 81, 1.0, c.layers);
    const auto r = tosa::vit_forward(scene.features, &scene.depth, c, s);
    CHECK(r.state.token_count() == 81);
    for (const auto& l : r.trace.layers) CHECK(l.pairs.empty());
    CHECK(r.trace.final_groups.size() == 81);
  }

  TEST_CASE("token count follows the schedule after every layer") {
    const auto c = small_config();
    const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, 2);
    const auto s = tosa::build_schedule(ScheduleKind::increase, 81, 0.3, c.layers);
    std::size_t expected = 81;
    std::size_t layer = 0;
    const auto r = tosa::vit_forward(scene.features, &scene.depth, c, tosa::init_encoder(c), s,
                                     [&](const tosa::MergeEvent& e) {
                                       CHECK(e.layer == layer);
                                       CHECK(e.alpha == tosa::alpha_at(s, layer));
                                       expected -= s.r_per_layer[layer];
                                       CHECK(e.after.token_count() == expected);
                                       ++layer;
                                     });
    CHECK(layer == c.layers);
    CHECK(r.state.token_count() == 24);
    CHECK(tosa::replay_trace(r.trace, 81) == r.trace.final_groups);
  }

  TEST_CASE("ten percent of 729 tokens leaves 73") {
    EncoderConfig c;
    c.layers = 27;
    const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, 3);
    const auto s = tosa::build_schedule(ScheduleKind::increase, 729, 0.1, 27);
    const auto r = tosa::vit_forward(scene.features, &scene.depth, c, s);
    CHECK(r.state.token_count() == 73);
    CHECK(r.trace.final_groups.size() == 73);
    tosa::validate_state(r.state, 729);
  }

  TEST_CASE("identical inputs give identical trace bytes") {
    const auto c = small_config(4);
    const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, 4);
    const auto s = tosa::build_schedule(ScheduleKind::uniform, 81, 0.2, c.layers);
    const auto a = tosa::vit_forward(scene.features, &scene.depth, c, s);
    const auto b = tosa::vit_forward(scene.features, &scene.depth, c, s);
    CHECK(tosa::trace_to_json(a.trace) == tosa::trace_to_json(b.trace));
    CHECK(a.state.features == b.state.features);
  }

  TEST_CASE("visual-only merging ignores depth entirely") {
    const auto c = small_config(5);
    const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, 5);
    const auto s = tosa::build_schedule(ScheduleKind::visual_only, 81, 0.3, c.layers);
    const auto with = tosa::vit_forward(scene.features, &scene.depth, c, s);
    const auto without = tosa::vit_forward(scene.features, nullptr, c, s);
    CHECK(with.trace == without.trace);
    CHECK(with.state.features == without.state.features);
    CHECK(with.state.sizes == without.state.sizes);
  }

  TEST_CASE("visual-only merging matches a reference without spatial code") {
    const auto c = small_config(6);
    const auto p = tosa::init_encoder(c);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, seed);
      const auto s = tosa::build_schedule(ScheduleKind::visual_only, 81, 0.2, c.layers);
      std::vector<std::vector<tosa::MergePair>> pairs;
      const auto r = tosa::vit_forward(scene.features, &scene.depth, c, p, s,
                                       [&](const tosa::MergeEvent& e) {
                                         pairs.emplace_back(e.pairs.begin(), e.pairs.end());
                                       });
      const auto ref = oracle::tome_forward(scene.features, c, p, s.r_per_layer);
      CHECK(r.state.features == ref.features);
      CHECK(r.state.sizes == ref.sizes);
      CHECK(pairs == ref.pairs);
    }
  }

  TEST_CASE("input validation") {
    const auto c = small_config();
    const auto scene = tosa::make_two_plane_scene(c.grid, c.model_dim, 1);
    const auto s = tosa::build_schedule(ScheduleKind::increase, 81, 0.5, c.layers);
    CHECK(error_kind([&] { tosa::vit_forward(scene.features, nullptr, c, s); }) ==
          ErrorKind::domain);
    CHECK(error_kind([&] { tosa::vit_forward(Matrix(80, 64), &scene.depth, c, s); }) ==
          ErrorKind::shape);
    const auto wrong = tosa::build_schedule(ScheduleKind::increase, 81, 0.5, c.layers + 1);
    CHECK(error_kind([&] { tosa::vit_forward(scene.features, &scene.depth, c, wrong); }) ==
          ErrorKind::schedule_infeasible);
    auto greedy = s;
    greedy.r_per_layer[2] = 60;
    CHECK(error_kind([&] { tosa::vit_forward(scene.features, &scene.depth, c, greedy); }) ==
          ErrorKind::schedule_infeasible);
  }
}

TEST_SUITE("synthetic scene") {
  TEST_CASE("deterministic in the seed") {
    const tosa::PatchGrid g{27, 27, 4};
    const auto a = tosa::make_two_plane_scene(g, 64, 9);
    const auto b = tosa::make_two_plane_scene(g, 64, 9);
    const auto c = tosa::make_two_plane_scene(g, 64, 10);
    CHECK(a.features == b.features);
    CHECK(a.depth == b.depth);
    CHECK(a.features != c.features);
  }

  TEST_CASE("two depth planes with the object nearer") {
    const tosa::PatchGrid g{27, 27, 4};
    const auto s = tosa::make_two_plane_scene(g, 32, 11);
    CHECK(s.features.rows() == 729);
    CHECK(s.features.cols() == 32);
    CHECK(s.depth.width == 108);
    CHECK(s.depth.height == 108);
    tosa::validate_depth(s.depth);
    const auto means = tosa::patch_mean_depth(s.depth, g);
    std::size_t object = 0;
    for (std::size_t k = 0; k < 729; ++k) {
      if (s.region[k] == 0) {
        ++object;
        CHECK(means[k] < 0.3);
      } else {
        CHECK(means[k] > 0.75);
      }
    }
    CHECK(object >= 36);
    CHECK(object <= 196);
  }

  TEST_CASE("degenerate requests are rejected") {
    CHECK(error_kind([] { tosa::make_two_plane_scene({0, 3, 2}, 8, 0); }) ==
          ErrorKind::invalid_dimension);
    CHECK(error_kind([] { tosa::make_two_plane_scene({3, 3, 2}, 0, 0); }) ==
          ErrorKind::invalid_dimension);
    tosa::SceneParams p;
    p.textures = 0;
    CHECK(error_kind([&] { tosa::make_two_plane_scene({3, 3, 2}, 8, 0, p); }) ==
          ErrorKind::domain);
  }
}
