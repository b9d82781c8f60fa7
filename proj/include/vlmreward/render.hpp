#pragma once

// Static raster renderings: attention heatmap overlays, line plots of
// training curves and bar charts of per-domain accuracy.
//
// Heatmap colormap ("jet"): v in [0,1] maps piecewise-linearly through
// dark blue (0) -> blue (1/8) -> cyan (3/8) -> yellow (5/8) -> red (7/8)
// -> dark red (1). Overlays blend 50/50 with the source image.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "vlmreward/tensor.hpp"

namespace vlmreward::render {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
};

inline Rgb jet(double v) {
  v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  auto ramp = [](double x) { return std::clamp(1.5 - std::abs(4.0 * x), 0.0, 1.0); };
  auto to8 = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * x)); };
  return {to8(ramp(v - 0.75)), to8(ramp(v - 0.5)), to8(ramp(v - 0.25))};
}

// Colormapped pixel map; values are expected in [0,1].
inline RgbImage heatmap(const Matrix<double>& map) {
  RgbImage out(map.rows(), map.cols());
  for (std::size_t r = 0; r < map.rows(); ++r) {
    for (std::size_t c = 0; c < map.cols(); ++c) {
      const auto col = jet(map(r, c));
      out.set(r, c, col.r, col.g, col.b);
    }
  }
  return out;
}

// Heatmap of `map` blended with `image` (same size) at weight alpha.
inline RgbImage overlay(const RgbImage& image, const Matrix<double>& map, double alpha = 0.5) {
  RgbImage out = heatmap(map);
  if (image.height != map.rows() || image.width != map.cols()) return out;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(
        std::lround((1.0 - alpha) * image.pixels[i] + alpha * out.pixels[i]));
  }
  return out;
}

// Rescales to [0,1] by max-min; constant maps render as zeros.
inline Matrix<double> rescale01(Matrix<double> m) {
  auto& v = m.data();
  if (v.empty()) return m;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& x : v) x = range > 0.0 ? (x - min) / range : 0.0;
  return m;
}

// --- canvas ----------------------------------------------------------------------

inline constexpr std::array<Rgb, 8> kPalette = {{{31, 119, 180},
                                                 {255, 127, 14},
                                                 {44, 160, 44},
                                                 {214, 39, 40},
                                                 {148, 103, 189},
                                                 {140, 86, 75},
                                                 {227, 119, 194},
                                                 {127, 127, 127}}};

namespace detail {

// 3x5 glyphs, row-major bits (MSB = top-left).
inline std::uint16_t glyph(char ch) {
  switch (ch) {
    case '0': return 0b111101101101111;
    case '1': return 0b010110010010111;
    case '2': return 0b111001111100111;
    case '3': return 0b111001111001111;
    case '4': return 0b101101111001001;
    case '5': return 0b111100111001111;
    case '6': return 0b111100111101111;
    case '7': return 0b111001001001001;
    case '8': return 0b111101111101111;
    case '9': return 0b111101111001111;
    case '.': return 0b000000000000010;
    case '-': return 0b000000111000000;
    case '+': return 0b000010111010000;
    case '/': return 0b001001010100100;
    case '_': return 0b000000000000111;
    case 'A': return 0b010101111101101;
    case 'B': return 0b110101110101110;
    case 'C': return 0b011100100100011;
    case 'D': return 0b110101101101110;
    case 'E': return 0b111100110100111;
    case 'F': return 0b111100110100100;
    case 'G': return 0b011100101101011;
    case 'H': return 0b101101111101101;
    case 'I': return 0b111010010010111;
    case 'J': return 0b001001001101010;
    case 'K': return 0b101101110101101;
    case 'L': return 0b100100100100111;
    case 'M': return 0b101111111101101;
    case 'N': return 0b110101101101101;
    case 'O': return 0b010101101101010;
    case 'P': return 0b110101110100100;
    case 'Q': return 0b010101101110011;
    case 'R': return 0b110101110101101;
    case 'S': return 0b011100010001110;
    case 'T': return 0b111010010010010;
    case 'U': return 0b101101101101111;
    case 'V': return 0b101101101101010;
    case 'W': return 0b101101111111101;
    case 'X': return 0b101101010101101;
    case 'Y': return 0b101101010010010;
    case 'Z': return 0b111001010100111;
    default: return 0;
  }
}

}  // namespace detail

class Canvas {
 public:
  Canvas(std::size_t width, std::size_t height) : img_(height, width, 255) {}

  void pixel(long x, long y, Rgb c) {
    if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= img_.width ||
        static_cast<std::size_t>(y) >= img_.height) {
      return;
    }
    img_.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c.r, c.g, c.b);
  }

  void line(long x0, long y0, long x1, long y1, Rgb c) {
    const long dx = std::abs(x1 - x0);
    const long dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1;
    const long sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
      pixel(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void rect(long x0, long y0, long x1, long y1, Rgb c) {
    for (long y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
      for (long x = std::min(x0, x1); x <= std::max(x0, x1); ++x) pixel(x, y, c);
    }
  }

  // Uppercased text in the 3x5 font at integer scale.
  void text(long x, long y, std::string_view s, Rgb c, int scale = 2) {
    for (char ch : s) {
      const auto g = detail::glyph(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if ((g >> (14 - (row * 3 + col))) & 1u) {
            rect(x + col * scale, y + row * scale, x + col * scale + scale - 1,
                 y + row * scale + scale - 1, c);
          }
        }
      }
      x += 4 * scale;
    }
  }

  const RgbImage& image() const { return img_; }

 private:
  RgbImage img_;
};

inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<double> values;
};

// Line plot of one or more series against their index.
inline RgbImage line_plot(const std::vector<Series>& series, std::string_view title,
                          std::size_t width = 800, std::size_t height = 480) {
  Canvas cv(width, height);
  const long left = 70, right = static_cast<long>(width) - 20;
  const long top = 40, bottom = static_cast<long>(height) - 40;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, s.values.size());
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const Rgb black{0, 0, 0};
  const Rgb grid{225, 225, 225};
  for (int i = 0; i <= 4; ++i) {
    const long y = bottom - (bottom - top) * i / 4;
    cv.line(left, y, right, y, grid);
    cv.text(4, y - 5, short_number(lo + (hi - lo) * i / 4.0), black);
  }
  cv.line(left, top, left, bottom, black);
  cv.line(left, bottom, right, bottom, black);
  cv.text(left, 10, title, black);
  cv.text(left, bottom + 12, "0", black);
  cv.text(right - 40, bottom + 12, std::to_string(n > 0 ? n - 1 : 0), black);

  auto xpos = [&](std::size_t i) {
    return n <= 1 ? left : left + static_cast<long>((right - left) * static_cast<double>(i) / (n - 1));
  };
  auto ypos = [&](double v) {
    return bottom - static_cast<long>(std::lround((bottom - top) * (v - lo) / (hi - lo)));
  };
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb col = kPalette[s % kPalette.size()];
    const auto& v = series[s].values;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (std::isfinite(v[i - 1]) && std::isfinite(v[i])) {
        cv.line(xpos(i - 1), ypos(v[i - 1]), xpos(i), ypos(v[i]), col);
      }
    }
    const long ly = top + 4 + static_cast<long>(s) * 14;
    cv.rect(right - 200, ly, right - 190, ly + 9, col);
    cv.text(right - 184, ly, series[s].label, black);
  }
  return cv.image();
}

struct Bar {
  std::string label;
  double value = 0.0;  // in [0,1]
};

inline RgbImage bar_chart(const std::vector<Bar>& bars, std::string_view title,
                          std::size_t width = 800, std::size_t height = 420) {
  Canvas cv(width, height);
  const long left = 60, right = static_cast<long>(width) - 20;
  const long top = 40, bottom = static_cast<long>(height) - 50;
  const Rgb black{0, 0, 0};
  cv.text(left, 10, title, black);
  for (int i = 0; i <= 4; ++i) {
    const long y = bottom - (bottom - top) * i / 4;
    cv.line(left, y, right, y, {225, 225, 225});
    cv.text(4, y - 5, short_number(i / 4.0), black);
  }
  cv.line(left, bottom, right, bottom, black);
  if (bars.empty()) return cv.image();
  const long slot = (right - left) / static_cast<long>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const long x0 = left + static_cast<long>(i) * slot + slot / 6;
    const long x1 = left + static_cast<long>(i + 1) * slot - slot / 6;
    const double v = std::clamp(bars[i].value, 0.0, 1.0);
    const long y = bottom - static_cast<long>(std::lround((bottom - top) * v));
    cv.rect(x0, y, x1, bottom, kPalette[i % kPalette.size()]);
    cv.text(x0, bottom + 10, bars[i].label.substr(0, static_cast<std::size_t>(slot / 8)), black);
    cv.text(x0, y - 14, short_number(bars[i].value), black);
  }
  return cv.image();
}

}  // namespace vlmreward::render
