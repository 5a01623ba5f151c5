#include "dfm/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <stdexcept>

namespace dfm {

RgbImage::RgbImage(int h, int w, std::array<std::uint8_t, 3> fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3) {
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

void RgbImage::put(int y, int x, std::array<std::uint8_t, 3> rgb) {
  if (y < 0 || y >= height || x < 0 || x >= width) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  pixels[i] = rgb[0];
  pixels[i + 1] = rgb[1];
  pixels[i + 2] = rgb[2];
}

void write_png(const std::string& path, const RgbImage& image) {
  if (image.height < 1 || image.width < 1) throw std::invalid_argument("empty image");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng error while writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    auto* row = const_cast<png_bytep>(image.pixels.data() +
                                      static_cast<std::size_t>(y) * image.width * 3);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  auto to8 = [](double c) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(c * 255.0), 0L, 255L));
  };
  return {to8(r), to8(g), to8(b)};
}

namespace {

void draw_line(RgbImage& img, int x0, int y0, int x1, int y1,
               std::array<std::uint8_t, 3> c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.put(y0, x0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

}  // namespace

RgbImage render_line_plot(const std::vector<PlotSeries>& series, int height, int width,
                          double y_min, double y_max) {
  RgbImage img(height, width);
  const int left = 40, right = width - 15, top = 15, bottom = height - 30;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (std::isfinite(y_min)) ymin = y_min;
  if (std::isfinite(y_max)) ymax = y_max;
  if (!std::isfinite(xmin)) { xmin = 0; xmax = 1; }
  if (!std::isfinite(ymin)) { ymin = 0; ymax = 1; }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;

  auto px = [&](double x) {
    return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left)));
  };
  auto py = [&](double y) {
    return bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top)));
  };

  const std::array<std::uint8_t, 3> grid{225, 225, 225};
  for (int i = 1; i < 5; ++i) {
    const int gy = top + (bottom - top) * i / 5;
    draw_line(img, left, gy, right, gy, grid);
    const int gx = left + (right - left) * i / 5;
    draw_line(img, gx, top, gx, bottom, grid);
  }
  const std::array<std::uint8_t, 3> axis{0, 0, 0};
  draw_line(img, left, top, left, bottom, axis);
  draw_line(img, left, bottom, right, bottom, axis);
  draw_line(img, left, top, right, top, axis);
  draw_line(img, right, top, right, bottom, axis);

  for (const auto& s : series) {
    int prev_x = 0, prev_y = 0;
    bool have_prev = false;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        have_prev = false;
        continue;
      }
      const int cx = px(s.x[i]);
      const int cy = py(std::clamp(s.y[i], ymin, ymax));
      if (have_prev) draw_line(img, prev_x, prev_y, cx, cy, s.color);
      for (int oy = -2; oy <= 2; ++oy) {
        for (int ox = -2; ox <= 2; ++ox) img.put(cy + oy, cx + ox, s.color);
      }
      prev_x = cx;
      prev_y = cy;
      have_prev = true;
    }
  }
  return img;
}

}  // namespace dfm
