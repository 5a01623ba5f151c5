#include "dfm/field_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dfm {
namespace {

constexpr const char* kMagic = "DFM-DF";
constexpr const char* kVersion = "v1";

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

void write_direction_field(std::ostream& os, const DirectionField& df) {
  os << kMagic << ' ' << kVersion << ' ' << df.height() << ' ' << df.width() << '\n';
  const Tensor& t = df.tensor();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(t[i]));
    os.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!os) throw std::runtime_error("failed to write direction field");
}

void write_direction_field(const std::string& path, const DirectionField& df) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_direction_field(os, df);
}

DirectionField read_direction_field(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("missing direction field header");
  std::istringstream header(line);
  std::string magic, version;
  int h = 0, w = 0;
  header >> magic >> version >> h >> w;
  if (magic != kMagic || version != kVersion || !header || h < 1 || w < 1) {
    throw std::runtime_error("bad direction field header: '" + line + "'");
  }
  Tensor t({2, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    if (!is.read(reinterpret_cast<char*>(&bits), sizeof(bits))) {
      throw std::runtime_error("truncated direction field payload");
    }
    t[i] = std::bit_cast<float>(to_little(bits));
  }
  return DirectionField(std::move(t));
}

DirectionField read_direction_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_direction_field(is);
}

RgbImage render_direction_field(const DirectionField& df) {
  const PolarField polar = field_to_polar(df);
  RgbImage img(polar.height, polar.width, {0, 0, 0});
  for (int y = 0; y < polar.height; ++y) {
    for (int x = 0; x < polar.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * polar.width + x;
      const double hue = (polar.angle[i] + std::numbers::pi) / (2.0 * std::numbers::pi);
      const double value = std::clamp(static_cast<double>(polar.magnitude[i]), 0.0, 1.0);
      img.put(y, x, hsv_to_rgb(hue, 1.0, value));
    }
  }
  return img;
}

}  // namespace dfm
