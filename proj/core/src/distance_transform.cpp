#include "dfm/distance_transform.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfm {
namespace {

// num/den with den > 0; den == 0 encodes +inf (num > 0) or -inf (num < 0).
struct Rational {
  std::int64_t num;
  std::int64_t den;
};

constexpr Rational kMinusInf{-1, 0};
constexpr Rational kPlusInf{1, 0};

bool less(const Rational& a, const Rational& b) {
  if (a.den == 0 && b.den == 0) return a.num < b.num;
  if (a.den == 0) return a.num < 0;
  if (b.den == 0) return b.num > 0;
  return a.num * b.den < b.num * a.den;
}

bool less_than_int(const Rational& a, std::int64_t x) {
  if (a.den == 0) return a.num < 0;
  return a.num < x * a.den;
}

bool less_equal_int(const Rational& a, std::int64_t x) {
  if (a.den == 0) return a.num < 0;
  return a.num <= x * a.den;
}

}  // namespace

NearestSiteMap nearest_site_transform(int height, int width,
                                      std::span<const std::uint8_t> is_site) {
  if (height < 1 || width < 1) throw std::invalid_argument("empty grid");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (is_site.size() != n) throw std::invalid_argument("site map size mismatch");

  NearestSiteMap out;
  out.height = height;
  out.width = width;
  out.site.assign(n, -1);
  out.squared_distance.assign(n, -1);

  // Column pass: nearest site row within each column, smaller row on ties.
  std::vector<std::int32_t> col_row(n, -1);
  for (int x = 0; x < width; ++x) {
    std::int32_t last = -1;
    for (int y = 0; y < height; ++y) {
      if (is_site[static_cast<std::size_t>(y) * width + x]) last = y;
      col_row[static_cast<std::size_t>(y) * width + x] = last;
    }
    std::int32_t next = -1;
    for (int y = height - 1; y >= 0; --y) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (is_site[i]) next = y;
      const std::int32_t up = col_row[i];
      if (next < 0) continue;
      if (up < 0 || (next - y) < (y - up)) col_row[i] = next;
    }
  }

  // Row pass: lower envelope of parabolas, keeping parabolas that touch the
  // envelope at a single point so that ties can be resolved afterwards.
  std::vector<int> v(static_cast<std::size_t>(width));
  std::vector<Rational> z(static_cast<std::size_t>(width) + 1);
  std::vector<std::int64_t> f(static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * width;
    int k = -1;
    for (int q = 0; q < width; ++q) {
      const std::int32_t r = col_row[row + q];
      if (r < 0) continue;
      const std::int64_t dy = y - r;
      f[static_cast<std::size_t>(q)] = dy * dy;
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = kMinusInf;
        z[1] = kPlusInf;
        continue;
      }
      Rational s{};
      while (true) {
        const int p = v[static_cast<std::size_t>(k)];
        const std::int64_t fp = f[static_cast<std::size_t>(p)];
        const std::int64_t fq = f[static_cast<std::size_t>(q)];
        s = Rational{(fq + static_cast<std::int64_t>(q) * q) -
                         (fp + static_cast<std::int64_t>(p) * p),
                     2 * static_cast<std::int64_t>(q - p)};
        if (k > 0 && less(s, z[static_cast<std::size_t>(k)])) {
          --k;
          continue;
        }
        break;
      }
      ++k;
      v[static_cast<std::size_t>(k)] = q;
      z[static_cast<std::size_t>(k)] = s;
      z[static_cast<std::size_t>(k) + 1] = kPlusInf;
    }
    if (k < 0) continue;  // no sites anywhere

    int j = 0;
    for (int x = 0; x < width; ++x) {
      while (less_than_int(z[static_cast<std::size_t>(j) + 1], x)) ++j;
      int best_col = -1;
      std::int32_t best_row = 0;
      std::int64_t best_d = 0;
      for (int m = j; m <= k; ++m) {
        if (m > j && !less_equal_int(z[static_cast<std::size_t>(m)], x)) break;
        const int col = v[static_cast<std::size_t>(m)];
        const std::int32_t r = col_row[row + col];
        const std::int64_t dx = x - col;
        const std::int64_t d = dx * dx + f[static_cast<std::size_t>(col)];
        if (best_col < 0 || d < best_d ||
            (d == best_d && (r < best_row || (r == best_row && col < best_col)))) {
          best_col = col;
          best_row = r;
          best_d = d;
        }
      }
      out.site[row + x] = best_row * width + best_col;
      out.squared_distance[row + x] = best_d;
    }
  }
  return out;
}

namespace {

// 1D squared distance transform with sample spacing h over a strided line.
void edt_line(const double* in, double* out, int n, std::ptrdiff_t stride, double h,
              std::vector<int>& v, std::vector<double>& z) {
  const double inf = std::numeric_limits<double>::infinity();
  const double h2 = h * h;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = in[q * stride];
    if (!std::isfinite(fq)) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      const double fp = in[p * stride];
      s = ((fq + h2 * q * q) - (fp + h2 * p * p)) / (2.0 * h2 * (q - p));
      if (k > 0 && s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q * stride] = inf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    const double d = h * (q - p);
    out[q * stride] = d * d + in[p * stride];
  }
}

}  // namespace

std::vector<double> squared_distance_3d(int depth, int height, int width,
                                        std::span<const std::uint8_t> is_site,
                                        std::array<double, 3> spacing) {
  if (depth < 1 || height < 1 || width < 1) throw std::invalid_argument("empty grid");
  const std::size_t n = static_cast<std::size_t>(depth) * height * width;
  if (is_site.size() != n) throw std::invalid_argument("site map size mismatch");
  for (double s : spacing) {
    if (!(s > 0.0)) throw std::invalid_argument("spacing must be positive");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = is_site[i] ? 0.0 : inf;

  const int longest = std::max(depth, std::max(height, width));
  std::vector<int> v(static_cast<std::size_t>(longest));
  std::vector<double> z(static_cast<std::size_t>(longest) + 1);
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(height) * width;

  // x lines
  for (int d = 0; d < depth; ++d) {
    for (int y = 0; y < height; ++y) {
      const std::ptrdiff_t off = d * plane + static_cast<std::ptrdiff_t>(y) * width;
      edt_line(a.data() + off, b.data() + off, width, 1, spacing[2], v, z);
    }
  }
  // y lines
  for (int d = 0; d < depth; ++d) {
    for (int x = 0; x < width; ++x) {
      const std::ptrdiff_t off = d * plane + x;
      edt_line(b.data() + off, a.data() + off, height, width, spacing[1], v, z);
    }
  }
  // z lines
  if (depth == 1) return a;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(y) * width + x;
      edt_line(a.data() + off, b.data() + off, depth, plane, spacing[0], v, z);
    }
  }
  return b;
}

}  // namespace dfm
