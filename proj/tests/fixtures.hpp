#pragma once

// Synthetic inputs shared by unit and acceptance tests.

#include <cstdint>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "vlmreward/attention_grounding.hpp"
#include "vlmreward/tensor.hpp"

namespace fixture {

using vlmreward::AttentionCapture;
using vlmreward::Matrix;
using vlmreward::RgbImage;

// 16x16 diagram: a one-pixel ring enclosing white space (rows/cols 2..9), a
// solid block (rows 11..14, cols 10..14) and a few near-white pixels that sit
// above the 230 threshold.
inline RgbImage diagram_16() {
  RgbImage img(16, 16, 255);
  for (std::size_t i = 2; i <= 9; ++i) {
    img.set(2, i, 20, 20, 20);
    img.set(9, i, 20, 20, 20);
    img.set(i, 2, 20, 20, 20);
    img.set(i, 9, 20, 20, 20);
  }
  for (std::size_t r = 11; r <= 14; ++r) {
    for (std::size_t c = 10; c <= 14; ++c) img.set(r, c, 200, 40, 40);
  }
  img.set(0, 15, 240, 240, 240);
  img.set(13, 1, 231, 250, 236);
  img.set(14, 3, 229, 255, 255);  // one channel below threshold: foreground
  return img;
}

// Capture over a 4x4 image grid: 2 text tokens, 16 image tokens, 6 text
// tokens of which the last four are generated.
inline AttentionCapture grid4_capture(std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  AttentionCapture c;
  c.seq_len = 24;
  c.n_heads = 4;
  c.n_kv_heads = 2;
  c.head_dim = 8;
  c.scaling = 1.0 / std::sqrt(8.0);
  c.q.resize(c.seq_len * c.d_model());
  c.k.resize(c.seq_len * c.d_kv());
  for (auto& v : c.q) v = n(rng);
  for (auto& v : c.k) v = n(rng);
  oracle::hf_rope_tables(c.seq_len, c.head_dim, 10000.0, c.cos_table, c.sin_table);
  c.image_tokens = {2, 18};
  c.grid_side = 4;
  c.generated = {20, 24};
  c.image_height = 16;
  c.image_width = 16;
  return c;
}

// Threshold mask computed directly from pixels.
inline Matrix<std::uint8_t> threshold_mask(const RgbImage& img, int tau) {
  Matrix<std::uint8_t> m(img.height, img.width, 0);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const auto* p = img.at(r, c);
      m(r, c) = (p[0] < tau || p[1] < tau || p[2] < tau) ? 1 : 0;
    }
  }
  return m;
}

struct OracleAsm {
  std::vector<double> per_token;
  double asm_value = 0.0;
};

// ASM of a capture computed from the dense attention oracle and the
// pixel-space score.
inline OracleAsm oracle_asm(const AttentionCapture& c, const RgbImage& img, int tau, bool fill) {
  const auto attn = oracle::dense_attention(c);
  const auto mask = threshold_mask(img, tau);
  const auto filled = oracle::fill_by_relaxation(mask);
  OracleAsm out;
  std::vector<std::size_t> queries;
  if (c.generated.empty()) {
    queries.push_back(c.seq_len - 1);
  } else {
    for (std::size_t t = c.generated.begin; t < c.generated.end; ++t) queries.push_back(t);
  }
  for (std::size_t q : queries) {
    Matrix<double> grid(c.grid_side, c.grid_side, 0.0);
    for (std::size_t i = 0; i < c.grid_side * c.grid_side; ++i) {
      double s = 0.0;
      for (std::size_t h = 0; h < c.n_heads; ++h) s += attn[h][q][c.image_tokens.begin + i];
      grid.data()[i] = s / static_cast<double>(c.n_heads);
    }
    out.per_token.push_back(oracle::pixel_space_score(grid, img, tau, fill ? &filled : nullptr));
  }
  double s = 0.0;
  for (double v : out.per_token) s += v;
  out.asm_value = s / static_cast<double>(out.per_token.size());
  return out;
}

}  // namespace fixture
