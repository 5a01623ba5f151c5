#ifndef DFM_PNG_HPP_
#define DFM_PNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace dfm {

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  RgbImage() = default;
  RgbImage(int h, int w, std::array<std::uint8_t, 3> fill = {255, 255, 255});

  void put(int y, int x, std::array<std::uint8_t, 3> rgb);
};

void write_png(const std::string& path, const RgbImage& image);

/// HSV (each in [0, 1]) to 8-bit RGB.
std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v);

struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

/// Minimal line chart: axes box, light grid, one polyline per series with
/// square markers. Axis ranges span all series; y_min/y_max override when
/// finite.
RgbImage render_line_plot(const std::vector<PlotSeries>& series, int height = 360,
                          int width = 480, double y_min = NAN, double y_max = NAN);

}  // namespace dfm

#endif  // DFM_PNG_HPP_
