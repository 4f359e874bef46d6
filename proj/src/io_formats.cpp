#include "tosa/io_formats.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "tosa/error.hpp"

namespace tosa {

namespace {

constexpr std::size_t kFeatureHeader = 13;
constexpr std::size_t kDepthHeader = 12;
constexpr std::uint8_t kFeatureVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

void put_f32(std::vector<unsigned char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

float get_f32(std::span<const unsigned char> bytes, std::size_t offset) {
  return std::bit_cast<float>(get_u32(bytes, offset));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw Error(ErrorKind::format, std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

bool has_magic(std::span<const unsigned char> bytes, std::string_view magic) {
  if (bytes.size() < magic.size()) return false;
  for (std::size_t i = 0; i < magic.size(); ++i) {
    if (bytes[i] != static_cast<unsigned char>(magic[i])) return false;
  }
  return true;
}

// Reads `count` f32 values at `offset` after checking the payload length.
std::vector<float> read_payload(std::span<const unsigned char> bytes, std::size_t offset,
                                std::size_t count) {
  const std::size_t expected = offset + 4 * count;
  if (bytes.size() < expected) {
    throw Error(ErrorKind::truncation, "expected " + std::to_string(expected) + " bytes, got " +
                                           std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::format, "unexpected trailing data at byte offset " +
                                       std::to_string(expected));
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = get_f32(bytes, offset + 4 * i);
    if (!std::isfinite(values[i])) {
      throw Error(ErrorKind::non_finite, "non-finite float at byte offset " +
                                             std::to_string(offset + 4 * i));
    }
  }
  return values;
}

}  // namespace

std::vector<unsigned char> encode_feature_file(const Matrix& m) {
  std::vector<unsigned char> out{'T', 'S', 'A', 'F', kFeatureVersion};
  out.reserve(kFeatureHeader + 4 * m.size());
  put_u32(out, checked_u32(m.rows(), "row count"));
  put_u32(out, checked_u32(m.cols(), "column count"));
  for (float v : m.data()) put_f32(out, v);
  return out;
}

Matrix decode_feature_file(std::span<const unsigned char> bytes) {
  if (bytes.size() < kFeatureHeader) {
    throw Error(ErrorKind::truncation, "feature header needs " + std::to_string(kFeatureHeader) +
                                           " bytes, got " + std::to_string(bytes.size()));
  }
  if (!has_magic(bytes, "TSAF")) throw Error(ErrorKind::format, "bad magic at byte offset 0");
  if (bytes[4] != kFeatureVersion) {
    throw Error(ErrorKind::format, "unsupported version " + std::to_string(bytes[4]) +
                                       " at byte offset 4");
  }
  const std::size_t rows = get_u32(bytes, 5);
  const std::size_t cols = get_u32(bytes, 9);
  return Matrix(rows, cols, read_payload(bytes, kFeatureHeader, rows * cols));
}

std::vector<unsigned char> encode_raw_depth(const DepthMap& depth) {
  std::vector<unsigned char> out{'T', 'S', 'A', 'D'};
  out.reserve(kDepthHeader + 4 * depth.values.size());
  put_u32(out, checked_u32(depth.width, "width"));
  put_u32(out, checked_u32(depth.height, "height"));
  for (float v : depth.values) put_f32(out, v);
  return out;
}

DepthMap decode_raw_depth(std::span<const unsigned char> bytes) {
  if (bytes.size() < kDepthHeader) {
    throw Error(ErrorKind::truncation, "depth header needs " + std::to_string(kDepthHeader) +
                                           " bytes, got " + std::to_string(bytes.size()));
  }
  if (!has_magic(bytes, "TSAD")) throw Error(ErrorKind::format, "bad magic at byte offset 0");
  DepthMap depth;
  depth.width = get_u32(bytes, 4);
  depth.height = get_u32(bytes, 8);
  depth.values = read_payload(bytes, kDepthHeader, depth.width * depth.height);
  return depth;
}

std::vector<unsigned char> encode_pgm(const DepthMap& depth, unsigned maxval, bool binary) {
  if (maxval == 0 || maxval > 65535) {
    throw Error(ErrorKind::domain, "PGM maxval must be in [1, 65535]");
  }
  validate_depth(depth);
  const std::string header = std::string(binary ? "P5" : "P2") + "\n" +
                             std::to_string(depth.width) + " " + std::to_string(depth.height) +
                             "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const auto sample = [&](float v) {
    return static_cast<unsigned>(std::lround(static_cast<double>(v) * maxval));
  };
  if (binary) {
    for (float v : depth.values) {
      const unsigned s = sample(v);
      if (maxval > 255) out.push_back(static_cast<unsigned char>(s >> 8));
      out.push_back(static_cast<unsigned char>(s & 0xFFu));
    }
  } else {
    for (std::size_t y = 0; y < depth.height; ++y) {
      std::string line;
      for (std::size_t x = 0; x < depth.width; ++x) {
        if (x) line += ' ';
        line += std::to_string(sample(depth.at(x, y)));
      }
      line += '\n';
      out.insert(out.end(), line.begin(), line.end());
    }
  }
  return out;
}

namespace {

class PgmReader {
 public:
  explicit PgmReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) {
      throw Error(ErrorKind::truncation, std::string("PGM ended before ") + what);
    }
    if (!std::isdigit(bytes_[pos_])) {
      throw Error(ErrorKind::format, std::string("expected ") + what + " at byte offset " +
                                         std::to_string(pos_));
    }
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 0xFFFFFFFFul) throw Error(ErrorKind::format, std::string(what) + " too large");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from binary samples.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw Error(ErrorKind::format, "expected whitespace at byte offset " + std::to_string(pos_));
    }
    ++pos_;
  }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

DepthMap decode_pgm(std::span<const unsigned char> bytes) {
  const bool binary = has_magic(bytes, "P5");
  if (!binary && !has_magic(bytes, "P2")) {
    throw Error(ErrorKind::format, "bad PGM magic at byte offset 0");
  }
  PgmReader reader(bytes);
  DepthMap depth;
  depth.width = reader.number("width");
  depth.height = reader.number("height");
  const unsigned long maxval = reader.number("maxval");
  if (maxval == 0 || maxval > 65535) {
    throw Error(ErrorKind::format, "PGM maxval " + std::to_string(maxval) + " out of range");
  }
  const std::size_t count = depth.width * depth.height;
  depth.values.resize(count);
  const double scale = static_cast<double>(maxval);
  if (binary) {
    reader.single_space();
    const std::size_t width = maxval > 255 ? 2 : 1;
    const std::size_t start = reader.offset();
    const std::size_t expected = start + width * count;
    if (bytes.size() < expected) {
      throw Error(ErrorKind::truncation, "expected " + std::to_string(expected) +
                                             " bytes, got " + std::to_string(bytes.size()));
    }
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t at = start + width * i;
      const unsigned s = width == 2 ? (unsigned{bytes[at]} << 8) | bytes[at + 1] : bytes[at];
      if (s > maxval) {
        throw Error(ErrorKind::format, "sample exceeds maxval at byte offset " + std::to_string(at));
      }
      depth.values[i] = static_cast<float>(s / scale);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t at = reader.offset();
      const unsigned long s = reader.number("sample");
      if (s > maxval) {
        throw Error(ErrorKind::format, "sample exceeds maxval at byte offset " + std::to_string(at));
      }
      depth.values[i] = static_cast<float>(static_cast<double>(s) / scale);
    }
  }
  return depth;
}

DepthMap decode_depth(std::span<const unsigned char> bytes) {
  if (has_magic(bytes, "TSAD")) return decode_raw_depth(bytes);
  if (has_magic(bytes, "P5") || has_magic(bytes, "P2")) return decode_pgm(bytes);
  throw Error(ErrorKind::format, "unrecognized depth format at byte offset 0");
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

void save_feature_file(const std::filesystem::path& path, const Matrix& m) {
  write_file_bytes(path, encode_feature_file(m));
}

Matrix load_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(read_file_bytes(path));
}

DepthMap load_depth_file(const std::filesystem::path& path, bool normalize) {
  DepthMap depth = decode_depth(read_file_bytes(path));
  if (normalize) return normalize_min_max(std::move(depth));
  validate_depth(depth);
  return depth;
}

void save_raw_depth(const std::filesystem::path& path, const DepthMap& depth) {
  write_file_bytes(path, encode_raw_depth(depth));
}

void save_pgm(const std::filesystem::path& path, const DepthMap& depth, unsigned maxval,
              bool binary) {
  write_file_bytes(path, encode_pgm(depth, maxval, binary));
}

std::string trace_to_json(const MergeTrace& trace) {
  nlohmann::json j;
  j["grid"] = {{"w", trace.grid_w}, {"h", trace.grid_h}};
  auto layers = nlohmann::json::array();
  for (const auto& l : trace.layers) {
    layers.push_back({{"layer", l.layer}, {"alpha", l.alpha}, {"r", l.r}, {"pairs", l.pairs}});
  }
  j["layers"] = std::move(layers);
  j["final_groups"] = trace.final_groups;
  return j.dump() + "\n";
}

MergeTrace trace_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MergeTrace trace;
    trace.grid_w = j.at("grid").at("w").get<std::size_t>();
    trace.grid_h = j.at("grid").at("h").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      trace.layers.push_back({l.at("layer").get<std::size_t>(), l.at("alpha").get<double>(),
                              l.at("r").get<std::size_t>(),
                              l.at("pairs").get<std::vector<PatchGroup>>()});
    }
    trace.final_groups = j.at("final_groups").get<std::vector<PatchGroup>>();
    return trace;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("merge trace JSON: ") + e.what());
  }
}

void save_trace(const std::filesystem::path& path, const MergeTrace& trace) {
  write_text_file(path, trace_to_json(trace));
}

MergeTrace load_trace(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return trace_from_json({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

const std::array<unsigned, kPaletteSize> kMergePalette = {
    0x1f77b4, 0xff7f0e, 0x2ca02c, 0xd62728, 0x9467bd, 0x8c564b, 0xe377c2, 0x7f7f7f,
    0xbcbd22, 0x17becf, 0xaec7e8, 0xffbb78, 0x98df8a, 0xff9896, 0xc5b0d5, 0xc49c94,
    0xf7b6d2, 0xc7c7c7, 0xdbdb8d, 0x9edae5, 0x393b79, 0x637939, 0x8c6d31, 0x843c39,
    0x7b4173, 0x5254a3, 0x8ca252, 0xbd9e39, 0xad494a, 0xa55194, 0x6b6ecf, 0xe7ba52,
};

std::string render_merge_map(const MergeTrace& trace, const PatchGrid& grid, std::size_t retained) {
  const std::size_t n = grid.patch_count();
  if (trace.grid_w != grid.grid_w || trace.grid_h != grid.grid_h) {
    throw Error(ErrorKind::invalid_trace, "trace grid " + std::to_string(trace.grid_w) + "x" +
                                              std::to_string(trace.grid_h) +
                                              " does not match " + std::to_string(grid.grid_w) +
                                              "x" + std::to_string(grid.grid_h));
  }
  if (!is_partition(trace.final_groups, n)) {
    throw Error(ErrorKind::invalid_trace, "final groups do not partition the patch grid");
  }
  std::vector<std::size_t> group_of(n);
  for (std::size_t g = 0; g < trace.final_groups.size(); ++g) {
    for (auto id : trace.final_groups[g]) group_of[id] = g;
  }

  constexpr int kCell = 16;
  const std::size_t w = grid.grid_w * kCell;
  const std::size_t h = grid.grid_h * kCell;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  svg << "<title>merge map: " << retained << " retained tokens, " << trace.final_groups.size()
      << " groups</title>\n";
  char colour[8];
  for (std::size_t r = 0; r < grid.grid_h; ++r) {
    for (std::size_t c = 0; c < grid.grid_w; ++c) {
      const std::size_t g = group_of[r * grid.grid_w + c];
      std::snprintf(colour, sizeof colour, "#%06x", kMergePalette[g % kPaletteSize]);
      svg << "<rect x=\"" << c * kCell << "\" y=\"" << r * kCell << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" fill=\"" << colour << "\"/>\n";
    }
  }
  svg << "<path fill=\"none\" stroke=\"#202020\" stroke-width=\"1.5\" d=\"";
  for (std::size_t r = 0; r < grid.grid_h; ++r) {
    for (std::size_t c = 0; c < grid.grid_w; ++c) {
      const std::size_t g = group_of[r * grid.grid_w + c];
      if (c + 1 < grid.grid_w && group_of[r * grid.grid_w + c + 1] != g) {
        svg << 'M' << (c + 1) * kCell << ' ' << r * kCell << 'v' << kCell;
      }
      if (r + 1 < grid.grid_h && group_of[(r + 1) * grid.grid_w + c] != g) {
        svg << 'M' << c * kCell << ' ' << (r + 1) * kCell << 'h' << kCell;
      }
    }
  }
  svg << "\"/>\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
      << "\" fill=\"none\" stroke=\"#202020\" stroke-width=\"2\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tosa
