#pragma once

// Reference implementations used only by the tests. Each one is written
// independently of the library code it checks (different loop structure,
// different formulas) so that agreement is evidence rather than repetition.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "vlmreward/attention_grounding.hpp"
#include "vlmreward/tensor.hpp"

namespace oracle {

using vlmreward::AttentionCapture;
using vlmreward::Matrix;
using vlmreward::RgbImage;

// HF rotary tables: cos[t, i] = cos(t * base^(-2(i mod d/2)/d)).
inline void hf_rope_tables(std::size_t seq_len, std::size_t d, double base, std::vector<float>& cos_t,
                           std::vector<float>& sin_t) {
  cos_t.assign(seq_len * d, 0.0f);
  sin_t.assign(seq_len * d, 0.0f);
  for (std::size_t t = 0; t < seq_len; ++t) {
    for (std::size_t j = 0; j < d / 2; ++j) {
      const double inv_freq = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d));
      const double angle = static_cast<double>(t) * inv_freq;
      for (std::size_t i : {j, j + d / 2}) {
        cos_t[t * d + i] = static_cast<float>(std::cos(angle));
        sin_t[t * d + i] = static_cast<float>(std::sin(angle));
      }
    }
  }
}

// Rotates pair (x_j, x_{j+d/2}) as the complex number x_j + i x_{j+d/2}
// multiplied by cos + i sin. Only meaningful for HF-style tables where the
// two halves share angles.
inline std::vector<double> rope_complex(const std::vector<double>& x, const float* cos_row,
                                        const float* sin_row) {
  const std::size_t h = x.size() / 2;
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < h; ++j) {
    const double re = x[j], im = x[j + h];
    const double c = cos_row[j], s = sin_row[j];
    out[j] = re * c - im * s;
    out[j + h] = re * s + im * c;
  }
  return out;
}

// Dense attention: full T x T logits per head with -inf above the diagonal
// and a log-sum-exp softmax in long double. Works for arbitrary tables.
inline std::vector<std::vector<std::vector<double>>> dense_attention(const AttentionCapture& c) {
  const std::size_t T = c.seq_len, H = c.n_heads, D = c.head_dim, half = D / 2;
  const std::size_t group = H / c.n_kv_heads;
  auto rotated = [&](const std::vector<float>& proj, std::size_t width, std::size_t head, std::size_t t) {
    std::vector<long double> v(D);
    for (std::size_t i = 0; i < D; ++i) {
      const long double x = proj[t * width + head * D + i];
      const long double partner = i < half ? -static_cast<long double>(proj[t * width + head * D + i + half])
                                           : static_cast<long double>(proj[t * width + head * D + i - half]);
      v[i] = x * c.cos_table[t * D + i] + partner * c.sin_table[t * D + i];
    }
    return v;
  };
  std::vector<std::vector<std::vector<double>>> out(H, std::vector<std::vector<double>>(T, std::vector<double>(T)));
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t kvh = h / group;
    std::vector<std::vector<long double>> logits(T, std::vector<long double>(T));
    for (std::size_t i = 0; i < T; ++i) {
      const auto q = rotated(c.q, c.d_model(), h, i);
      for (std::size_t j = 0; j < T; ++j) {
        if (j > i) {
          logits[i][j] = -std::numeric_limits<long double>::infinity();
          continue;
        }
        const auto k = rotated(c.k, c.d_kv(), kvh, j);
        long double dot = 0;
        for (std::size_t d = 0; d < D; ++d) dot += q[d] * k[d];
        logits[i][j] = dot * static_cast<long double>(c.scaling);
      }
    }
    for (std::size_t i = 0; i < T; ++i) {
      long double m = -std::numeric_limits<long double>::infinity();
      for (auto v : logits[i]) m = std::max(m, v);
      long double lse = 0;
      for (auto v : logits[i]) lse += std::exp(v - m);
      lse = m + std::log(lse);
      for (std::size_t j = 0; j < T; ++j) out[h][i][j] = static_cast<double>(std::exp(logits[i][j] - lse));
    }
  }
  return out;
}

// Random capture with T <= max_t, n_h <= 4 (n_kv | n_h), d_h <= 8 even.
// HF tables half the time, arbitrary tables otherwise.
template <typename Rng>
AttentionCapture random_capture(Rng& rng, std::size_t grid_side = 1, std::size_t max_t = 8) {
  std::uniform_int_distribution<std::size_t> heads_d(1, 4);
  AttentionCapture c;
  c.grid_side = grid_side;
  const std::size_t img = grid_side * grid_side;
  std::uniform_int_distribution<std::size_t> t_d(std::max<std::size_t>(img + 1, 1), std::max(max_t, img + 1));
  c.seq_len = t_d(rng);
  c.n_heads = heads_d(rng);
  std::vector<std::size_t> divisors;
  for (std::size_t k = 1; k <= c.n_heads; ++k) {
    if (c.n_heads % k == 0) divisors.push_back(k);
  }
  c.n_kv_heads = divisors[std::uniform_int_distribution<std::size_t>(0, divisors.size() - 1)(rng)];
  c.head_dim = 2 * std::uniform_int_distribution<std::size_t>(1, 4)(rng);
  c.scaling = 1.0 / std::sqrt(static_cast<double>(c.head_dim));
  std::normal_distribution<float> n(0.0f, 1.5f);
  c.q.resize(c.seq_len * c.d_model());
  c.k.resize(c.seq_len * c.d_kv());
  for (auto& v : c.q) v = n(rng);
  for (auto& v : c.k) v = n(rng);
  if (std::bernoulli_distribution(0.5)(rng)) {
    hf_rope_tables(c.seq_len, c.head_dim, 10000.0, c.cos_table, c.sin_table);
  } else {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    c.cos_table.resize(c.seq_len * c.head_dim);
    c.sin_table.resize(c.seq_len * c.head_dim);
    for (auto& v : c.cos_table) v = u(rng);
    for (auto& v : c.sin_table) v = u(rng);
  }
  const std::size_t start = std::uniform_int_distribution<std::size_t>(0, c.seq_len - img - 1)(rng);
  c.image_tokens = {start, start + img};
  c.image_height = grid_side * 4;
  c.image_width = grid_side * 4;
  return c;
}

// Flood fill by repeated relaxation sweeps (no queue): a background pixel is
// "outside" if it is on the border or 4-adjacent to an outside pixel.
inline Matrix<std::uint8_t> fill_by_relaxation(const Matrix<std::uint8_t>& fg) {
  const std::size_t h = fg.rows(), w = fg.cols();
  Matrix<std::uint8_t> outside(h, w, 0);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        if (fg(r, c) != 0 || outside(r, c) != 0) continue;
        const bool border = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
        const bool touch = (r > 0 && outside(r - 1, c)) || (r + 1 < h && outside(r + 1, c)) ||
                           (c > 0 && outside(r, c - 1)) || (c + 1 < w && outside(r, c + 1));
        if (border || touch) {
          outside(r, c) = 1;
          changed = true;
        }
      }
    }
  }
  Matrix<std::uint8_t> out(h, w, 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out(r, c) = (fg(r, c) != 0 || outside(r, c) == 0) ? 1 : 0;
  }
  return out;
}

// Nearest resize by painting each grid cell's pixel block. Cell i covers
// pixel rows r with i*H <= r*G < (i+1)*H, i.e. r in [ceil(iH/G), ceil((i+1)H/G)).
inline Matrix<double> resize_by_blocks(const Matrix<double>& grid, std::size_t H, std::size_t W) {
  const std::size_t G = grid.rows(), GW = grid.cols();
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  Matrix<double> out(H, W, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < G; ++i) {
    for (std::size_t j = 0; j < GW; ++j) {
      for (std::size_t r = ceil_div(i * H, G); r < ceil_div((i + 1) * H, G); ++r) {
        for (std::size_t c = ceil_div(j * W, GW); c < ceil_div((j + 1) * W, GW); ++c) out(r, c) = grid(i, j);
      }
    }
  }
  return out;
}

// Foreground score computed pixel by pixel straight from the raw grid:
// normalize, look up the covering cell, average over non-white pixels.
inline double pixel_space_score(const Matrix<double>& raw_grid, const RgbImage& image, int tau,
                                const Matrix<std::uint8_t>* filled = nullptr) {
  double lo = raw_grid.data()[0], hi = lo;
  for (double v : raw_grid.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const std::size_t G = raw_grid.rows();
  long double sum = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      bool fg;
      if (filled) {
        fg = (*filled)(r, c) != 0;
      } else {
        const auto* p = image.at(r, c);
        fg = !(p[0] >= tau && p[1] >= tau && p[2] >= tau);
      }
      if (!fg) continue;
      const double v = raw_grid(r * G / image.height, c * G / image.width);
      sum += hi > lo ? (v - lo) / (hi - lo) : 0.0;
      ++n;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(sum / n);
}

// Shannon entropy in nats of a non-negative vector after L1 normalization.
inline double entropy_nats(const std::vector<double>& w) {
  long double total = 0;
  for (double v : w) total += v;
  long double h = 0;
  for (double v : w) {
    if (v <= 0) continue;
    const long double p = v / total;
    h -= p * std::log(p);
  }
  return static_cast<double>(h);
}

struct MeanStd {
  double mean;
  double std;
};

// Two-pass population statistics in long double.
inline MeanStd mean_std(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += v;
  const long double m = s / static_cast<long double>(x.size());
  long double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return {static_cast<double>(m), static_cast<double>(std::sqrt(ss / static_cast<long double>(x.size())))};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vlmreward-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
