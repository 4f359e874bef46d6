#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "support/helpers.hpp"
#include "tosa/error.hpp"
#include "tosa/io_formats.hpp"

using tosa::DepthMap;
using tosa::ErrorKind;
using tosa::Matrix;
using tosa::MergeTrace;
using Bytes = std::vector<unsigned char>;
using testing::error_kind;

namespace {

Bytes bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

void put_float_at(Bytes& b, std::size_t offset, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) b[offset + i] = static_cast<unsigned char>(u >> (8 * i));
}

DepthMap random_depth(tosa::SplitMix64& rng, std::size_t w, std::size_t h) {
  DepthMap d{w, h, {}};
  for (std::size_t i = 0; i < w * h; ++i) d.values.push_back(static_cast<float>(rng.uniform()));
  return d;
}

std::set<std::string> fills_of(const std::string& svg) {
  std::set<std::string> fills;
  for (std::size_t p = svg.find("fill=\"#"); p != std::string::npos;
       p = svg.find("fill=\"#", p + 1)) {
    fills.insert(svg.substr(p + 6, 7));
  }
  return fills;
}

MergeTrace identity_trace(std::size_t w, std::size_t h) {
  MergeTrace t{w, h, {}, {}};
  for (std::uint32_t i = 0; i < w * h; ++i) t.final_groups.push_back({i});
  return t;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / "tosa_io_test") {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_SUITE("feature file") {
  TEST_CASE("header layout") {
    Matrix m(2, 3);
    m(1, 2) = 1.0f;
    const Bytes b = tosa::encode_feature_file(m);
    REQUIRE(b.size() == 13 + 24);
    CHECK(std::memcmp(b.data(), "TSAF", 4) == 0);
    CHECK(b[4] == 1);
    CHECK(b[5] == 2);  // rows, little-endian
    CHECK(b[6] == 0);
    CHECK(b[9] == 3);  // cols
    // 1.0f = 0x3f800000 in the last slot.
    CHECK(b[33] == 0x00);
    CHECK(b[35] == 0x80);
    CHECK(b[36] == 0x3f);
  }

  TEST_CASE("round trip is lossless in both directions") {
    tosa::SplitMix64 rng(3);
    for (std::size_t rows : {0, 1, 7, 40}) {
      const Matrix m = testing::random_matrix(rng, rows, 5, -1e6, 1e6);
      const Bytes b = tosa::encode_feature_file(m);
      const Matrix back = tosa::decode_feature_file(b);
      CHECK(back == m);
      CHECK(tosa::encode_feature_file(back) == b);
    }
  }

  TEST_CASE("malformed files name their failure") {
    const Bytes good = tosa::encode_feature_file(Matrix(3, 2));
    Bytes b = good;
    b.pop_back();
    CHECK(error_kind([&] { tosa::decode_feature_file(b); }) == ErrorKind::truncation);
    CHECK(error_kind([&] { tosa::decode_feature_file(Bytes(good.begin(), good.begin() + 8)); }) ==
          ErrorKind::truncation);
    b = good;
    b.push_back(0);
    CHECK(error_kind([&] { tosa::decode_feature_file(b); }) == ErrorKind::format);
    b = good;
    b[0] = 'X';
    CHECK(error_kind([&] { tosa::decode_feature_file(b); }) == ErrorKind::format);
    b = good;
    b[4] = 2;
    CHECK(error_kind([&] { tosa::decode_feature_file(b); }) == ErrorKind::format);
    b = good;
    put_float_at(b, 13 + 4 * 3, std::numeric_limits<float>::quiet_NaN());
    try {
      tosa::decode_feature_file(b);
      FAIL("expected non_finite");
    } catch (const tosa::Error& e) {
      CHECK(e.kind() == ErrorKind::non_finite);
      CHECK(std::string(e.what()).find("offset 25") != std::string::npos);
    }
    b = good;
    put_float_at(b, 13, std::numeric_limits<float>::infinity());
    CHECK(error_kind([&] { tosa::decode_feature_file(b); }) == ErrorKind::non_finite);
  }

  TEST_CASE("save and load through the filesystem") {
    TempDir dir;
    tosa::SplitMix64 rng(4);
    const Matrix m = testing::random_matrix(rng, 9, 4);
    tosa::save_feature_file(dir.path / "x.tsaf", m);
    CHECK(tosa::load_feature_file(dir.path / "x.tsaf") == m);
    CHECK(tosa::read_file_bytes(dir.path / "x.tsaf") == tosa::encode_feature_file(m));
    CHECK(error_kind([&] { tosa::load_feature_file(dir.path / "missing.tsaf"); }) ==
          ErrorKind::io);
  }
}

TEST_SUITE("depth files") {
  TEST_CASE("raw depth round trip") {
    tosa::SplitMix64 rng(5);
    const DepthMap d = random_depth(rng, 6, 4);
    const Bytes b = tosa::encode_raw_depth(d);
    REQUIRE(b.size() == 12 + 4 * 24);
    CHECK(std::memcmp(b.data(), "TSAD", 4) == 0);
    CHECK(b[4] == 6);
    CHECK(b[8] == 4);
    const DepthMap back = tosa::decode_raw_depth(b);
    CHECK(back == d);
    CHECK(tosa::encode_raw_depth(back) == b);
    CHECK(tosa::decode_depth(b) == d);
  }

  TEST_CASE("raw depth keeps values outside the unit interval") {
    const DepthMap d{2, 1, {-3.0f, 40.0f}};
    CHECK(tosa::decode_raw_depth(tosa::encode_raw_depth(d)) == d);
  }

  TEST_CASE("raw depth errors") {
    Bytes b = tosa::encode_raw_depth({2, 2, {0, 0, 0, 0}});
    b.resize(b.size() - 3);
    CHECK(error_kind([&] { tosa::decode_raw_depth(b); }) == ErrorKind::truncation);
    CHECK(error_kind([&] { tosa::decode_raw_depth(bytes_of("TSAD")); }) == ErrorKind::truncation);
    b = tosa::encode_raw_depth({1, 1, {0}});
    put_float_at(b, 12, std::numeric_limits<float>::quiet_NaN());
    CHECK(error_kind([&] { tosa::decode_raw_depth(b); }) == ErrorKind::non_finite);
  }

  TEST_CASE("8-bit binary PGM") {
    const DepthMap d{3, 1, {0.0f, 0.5f, 1.0f}};
    const Bytes b = tosa::encode_pgm(d);
    CHECK(b == Bytes{'P', '5', '\n', '3', ' ', '1', '\n', '2', '5', '5', '\n', 0, 128, 255});
    const DepthMap back = tosa::decode_pgm(b);
    CHECK(back.values[0] == 0.0f);
    CHECK(back.values[1] == static_cast<float>(128.0 / 255.0));
    CHECK(back.values[2] == 1.0f);
    CHECK(tosa::encode_pgm(back) == b);
  }

  TEST_CASE("16-bit PGM is big-endian") {
    const DepthMap d{1, 1, {1.0f}};
    const Bytes b = tosa::encode_pgm(d, 65535);
    REQUIRE(b.size() >= 2);
    CHECK(b[b.size() - 2] == 0xff);
    CHECK(b.back() == 0xff);
    const Bytes c = tosa::encode_pgm({1, 1, {256.0f / 1000.0f}}, 1000);
    CHECK(c[c.size() - 2] == 0x01);
    CHECK(c.back() == 0x00);
  }

  TEST_CASE("PGM round trips at several depths") {
    tosa::SplitMix64 rng(6);
    for (unsigned maxval : {1u, 255u, 256u, 4095u, 65535u}) {
      for (bool binary : {true, false}) {
        const DepthMap d = random_depth(rng, 5, 3);
        const Bytes b = tosa::encode_pgm(d, maxval, binary);
        const DepthMap back = tosa::decode_depth(b);
        CHECK(back.width == 5);
        CHECK(back.height == 3);
        for (std::size_t i = 0; i < d.values.size(); ++i) {
          CHECK(std::fabs(back.values[i] - d.values[i]) <= 0.5 / maxval + 1e-7);
        }
        CHECK(tosa::encode_pgm(back, maxval, binary) == b);
      }
    }
  }

  TEST_CASE("ASCII PGM with comments") {
    const DepthMap d = tosa::decode_pgm(bytes_of("P2\n# made by hand\n2 2\n# max\n4\n0 1\n2 4\n"));
    CHECK(d.values == std::vector<float>{0.0f, 0.25f, 0.5f, 1.0f});
  }

  TEST_CASE("PGM errors") {
    CHECK(error_kind([] { tosa::decode_pgm(bytes_of("P6\n1 1\n255\n\x01")); }) ==
          ErrorKind::format);
    CHECK(error_kind([] { tosa::decode_pgm(bytes_of("P5\n2 2\n255\n\x01\x02")); }) ==
          ErrorKind::truncation);
    CHECK(error_kind([] { tosa::decode_pgm(bytes_of("P5\n2 2")); }) == ErrorKind::truncation);
    CHECK(error_kind([] { tosa::decode_pgm(bytes_of("P2\n1 1\n0\n0\n")); }) == ErrorKind::format);
    CHECK(error_kind([] { tosa::decode_pgm(bytes_of("P2\n1 1\n10\n11\n")); }) ==
          ErrorKind::format);
    CHECK(error_kind([] { tosa::decode_pgm(bytes_of("P2\nx 1\n10\n1\n")); }) == ErrorKind::format);
    CHECK(error_kind([] { tosa::encode_pgm({1, 1, {0.5f}}, 0); }) == ErrorKind::domain);
    CHECK(error_kind([] { tosa::decode_depth(bytes_of("GIF89a")); }) == ErrorKind::format);
  }

  TEST_CASE("loading normalizes unless told not to") {
    TempDir dir;
    tosa::save_raw_depth(dir.path / "d.tsad", {3, 1, {2.0f, 6.0f, 4.0f}});
    CHECK(tosa::load_depth_file(dir.path / "d.tsad").values ==
          std::vector<float>{0.0f, 1.0f, 0.5f});
    CHECK(error_kind([&] { tosa::load_depth_file(dir.path / "d.tsad", false); }) ==
          ErrorKind::domain);
    tosa::save_pgm(dir.path / "d.pgm", {2, 1, {0.0f, 1.0f}});
    CHECK(tosa::load_depth_file(dir.path / "d.pgm", false).values ==
          std::vector<float>{0.0f, 1.0f});
  }
}

TEST_SUITE("merge trace") {
  TEST_CASE("serialization is canonical") {
    MergeTrace t{3, 2, {{0, 0.25, 1, {{0, 1}}}, {1, 0.5, 1, {{0, 1, 3}}}}, {}};
    t.final_groups = {{0, 1, 3}, {2}, {4}, {5}};
    CHECK(tosa::trace_to_json(t) ==
          "{\"final_groups\":[[0,1,3],[2],[4],[5]],\"grid\":{\"h\":2,\"w\":3},"
          "\"layers\":[{\"alpha\":0.25,\"layer\":0,\"pairs\":[[0,1]],\"r\":1},"
          "{\"alpha\":0.5,\"layer\":1,\"pairs\":[[0,1,3]],\"r\":1}]}\n");
  }

  TEST_CASE("round trip") {
    MergeTrace t{4, 4, {}, {}};
    for (std::size_t l = 0; l < 5; ++l) {
      t.layers.push_back({l, l / 27.0, 2, {{std::uint32_t(l), 9}, {1, 2, 3}}});
    }
    t.final_groups = {{0, 1, 2}, {3}};
    const std::string text = tosa::trace_to_json(t);
    const MergeTrace back = tosa::trace_from_json(text);
    CHECK(back == t);
    CHECK(tosa::trace_to_json(back) == text);
  }

  TEST_CASE("alpha survives as an exact double") {
    MergeTrace t = identity_trace(1, 1);
    t.layers.push_back({0, 1.0 / 3.0, 0, {}});
    CHECK(tosa::trace_from_json(tosa::trace_to_json(t)).layers[0].alpha == 1.0 / 3.0);
  }

  TEST_CASE("malformed JSON is a format error") {
    CHECK(error_kind([] { tosa::trace_from_json("{"); }) == ErrorKind::format);
    CHECK(error_kind([] { tosa::trace_from_json("{\"grid\":{\"w\":1}}"); }) == ErrorKind::format);
    CHECK(error_kind([] { tosa::trace_from_json("[]"); }) == ErrorKind::format);
  }

  TEST_CASE("file round trip") {
    TempDir dir;
    const MergeTrace t = identity_trace(2, 3);
    tosa::save_trace(dir.path / "t.json", t);
    CHECK(tosa::load_trace(dir.path / "t.json") == t);
  }
}

TEST_SUITE("merge map") {
  const tosa::PatchGrid grid{4, 4, 2};

  TEST_CASE("rendering is deterministic") {
    const auto t = identity_trace(4, 4);
    CHECK(tosa::render_merge_map(t, grid, 16) == tosa::render_merge_map(t, grid, 16));
  }

  TEST_CASE("the palette has 32 distinct colours") {
    CHECK(std::set<unsigned>(tosa::kMergePalette.begin(), tosa::kMergePalette.end()).size() ==
          32);
  }

  TEST_CASE("sixteen singleton groups use sixteen fills") {
    const std::string svg = tosa::render_merge_map(identity_trace(4, 4), grid, 16);
    auto fills = fills_of(svg);
    CHECK(fills.size() == 16);
    CHECK(svg.find("16 retained tokens") != std::string::npos);
    // One rect per patch plus the frame.
    std::size_t rects = 0;
    for (auto p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) ++rects;
    CHECK(rects == 17);
  }

  TEST_CASE("one group gives one fill and no inner edges") {
    MergeTrace t{4, 4, {}, {{}}};
    for (std::uint32_t i = 0; i < 16; ++i) t.final_groups[0].push_back(i);
    const std::string svg = tosa::render_merge_map(t, grid, 1);
    CHECK(fills_of(svg).size() == 1);
    CHECK(svg.find("d=\"\"") != std::string::npos);
  }

  TEST_CASE("invalid traces are rejected") {
    auto t = identity_trace(4, 4);
    t.final_groups.pop_back();
    CHECK(error_kind([&] { tosa::render_merge_map(t, grid, 15); }) == ErrorKind::invalid_trace);
    CHECK(error_kind([&] { tosa::render_merge_map(identity_trace(3, 4), grid, 12); }) ==
          ErrorKind::invalid_trace);
  }
}
