#pragma once

// Attention-grounding reward: rebuild final-layer attention from captured
// query/key projections and rotary tables, extract the last token's attention
// over image patches, and score how much of it lands on non-white foreground.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vlmreward/error.hpp"
#include "vlmreward/parallel.hpp"
#include "vlmreward/tensor.hpp"

namespace vlmreward {

// Half-open [begin, end) index range.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return size() == 0; }
  friend bool operator==(IndexRange, IndexRange) = default;
};

// Everything the final-layer hooks record for one forward pass. Positions are
// 0-based; image_tokens holds grid_side^2 consecutive positions.
struct AttentionCapture {
  std::size_t seq_len = 0;
  std::size_t n_heads = 0;
  std::size_t n_kv_heads = 0;
  std::size_t head_dim = 0;
  double scaling = 1.0;
  std::vector<float> q;          // [seq_len x n_heads*head_dim]
  std::vector<float> k;          // [seq_len x n_kv_heads*head_dim]
  std::vector<float> cos_table;  // [seq_len x head_dim]
  std::vector<float> sin_table;  // [seq_len x head_dim]
  IndexRange image_tokens;
  std::size_t grid_side = 0;
  // Generated positions to score; empty means only the final position.
  IndexRange generated;
  std::size_t image_height = 0;
  std::size_t image_width = 0;

  std::size_t d_model() const { return n_heads * head_dim; }
  std::size_t d_kv() const { return n_kv_heads * head_dim; }
};

namespace detail {

inline void require_finite(std::span<const float> v, const char* name) {
  for (float x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + name);
  }
}

}  // namespace detail

inline void validate(const AttentionCapture& c) {
  if (c.seq_len == 0 || c.n_heads == 0 || c.n_kv_heads == 0 || c.head_dim == 0) {
    throw ContractError("capture dimensions must be positive");
  }
  if (c.n_heads % c.n_kv_heads != 0) {
    throw ContractError("n_heads must be a multiple of n_kv_heads");
  }
  if (c.head_dim % 2 != 0) throw ContractError("head_dim must be even for rotary embedding");
  if (c.q.size() != c.seq_len * c.d_model()) throw ContractError("Q has wrong size");
  if (c.k.size() != c.seq_len * c.d_kv()) throw ContractError("K has wrong size");
  if (c.cos_table.size() != c.seq_len * c.head_dim) throw ContractError("cos_table has wrong size");
  if (c.sin_table.size() != c.seq_len * c.head_dim) throw ContractError("sin_table has wrong size");
  if (c.image_tokens.end > c.seq_len) throw ContractError("image token span outside sequence");
  if (c.grid_side == 0 || c.image_tokens.size() != c.grid_side * c.grid_side) {
    throw ContractError("image token span must hold grid_side^2 tokens");
  }
  if (c.generated.end > c.seq_len) throw ContractError("generated range outside sequence");
  if (!(c.scaling > 0.0) || !std::isfinite(c.scaling)) {
    throw NumericError("scaling must be a positive finite number");
  }
  detail::require_finite(c.q, "Q");
  detail::require_finite(c.k, "K");
  detail::require_finite(c.cos_table, "cos_table");
  detail::require_finite(c.sin_table, "sin_table");
}

// [T x n*d] projection -> [n x T x d] heads.
inline Tensor3<double> split_heads(std::span<const float> proj, std::size_t seq_len,
                                   std::size_t n, std::size_t d) {
  if (proj.size() != seq_len * n * d) throw ContractError("projection size mismatch");
  Tensor3<double> out(n, seq_len, d);
  for (std::size_t t = 0; t < seq_len; ++t) {
    for (std::size_t h = 0; h < n; ++h) {
      for (std::size_t i = 0; i < d; ++i) out(h, t, i) = proj[t * n * d + h * d + i];
    }
  }
  return out;
}

// x * cos + rotate_half(x) * sin, rotate_half(x) = [-x[d/2:], x[:d/2]].
inline void rotate_in_place(std::span<double> x, std::span<const float> cos_row,
                            std::span<const float> sin_row) {
  const std::size_t half = x.size() / 2;
  thread_local std::vector<double> rotated;
  rotated.resize(x.size());
  for (std::size_t i = 0; i < half; ++i) {
    rotated[i] = -x[half + i];
    rotated[half + i] = x[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = x[i] * static_cast<double>(cos_row[i]) + rotated[i] * static_cast<double>(sin_row[i]);
  }
}

// Applies the rotary embedding to every head and position of Q and K.
// Tables are [T x d_h] row-major.
inline std::pair<Tensor3<double>, Tensor3<double>> apply_rope(Tensor3<double> q_heads,
                                                              Tensor3<double> k_heads,
                                                              std::span<const float> cos_table,
                                                              std::span<const float> sin_table) {
  const std::size_t d = q_heads.dim2();
  if (d % 2 != 0) throw ContractError("rotary head_dim must be even");
  if (k_heads.dim2() != d || k_heads.dim1() != q_heads.dim1()) {
    throw ContractError("Q and K head shapes disagree");
  }
  const std::size_t seq_len = q_heads.dim1();
  if (cos_table.size() < seq_len * d || sin_table.size() < seq_len * d) {
    throw ContractError("rotary tables do not cover the sequence");
  }
  auto rotate_all = [&](Tensor3<double>& x) {
    for (std::size_t h = 0; h < x.dim0(); ++h) {
      for (std::size_t t = 0; t < seq_len; ++t) {
        rotate_in_place(x.vec(h, t), cos_table.subspan(t * d, d), sin_table.subspan(t * d, d));
      }
    }
  };
  rotate_all(q_heads);
  rotate_all(k_heads);
  return {std::move(q_heads), std::move(k_heads)};
}

// Repeat-interleave along the head axis: output head i is input head i / ratio.
inline Tensor3<double> expand_gqa(const Tensor3<double>& k_heads, std::size_t ratio) {
  if (ratio == 0) throw ContractError("GQA ratio must be positive");
  Tensor3<double> out(k_heads.dim0() * ratio, k_heads.dim1(), k_heads.dim2());
  for (std::size_t h = 0; h < out.dim0(); ++h) {
    for (std::size_t t = 0; t < k_heads.dim1(); ++t) {
      const auto src = k_heads.vec(h / ratio, t);
      std::copy(src.begin(), src.end(), out.vec(h, t).begin());
    }
  }
  return out;
}

inline std::size_t gqa_ratio(std::size_t n_heads, std::size_t n_kv_heads) {
  if (n_kv_heads == 0 || n_heads % n_kv_heads != 0) {
    throw ContractError("n_heads / n_kv_heads is not an integer");
  }
  return n_heads / n_kv_heads;
}

// Rotated, GQA-expanded heads of a capture, ready for dot products.
struct RotatedHeads {
  Tensor3<double> q;  // [n_h x T x d_h]
  Tensor3<double> k;  // [n_h x T x d_h]
};

inline RotatedHeads prepare_heads(const AttentionCapture& c) {
  validate(c);
  auto [q, k] = apply_rope(split_heads(c.q, c.seq_len, c.n_heads, c.head_dim),
                           split_heads(c.k, c.seq_len, c.n_kv_heads, c.head_dim), c.cos_table,
                           c.sin_table);
  const std::size_t ratio = gqa_ratio(c.n_heads, c.n_kv_heads);
  return {std::move(q), ratio > 1 ? expand_gqa(k, ratio) : std::move(k)};
}

// Causal softmax row of one head: weights over keys [0, query]; later keys are
// exactly zero.
inline void attention_row(const RotatedHeads& heads, double scaling, std::size_t head,
                          std::size_t query, std::span<double> out) {
  const std::size_t d = heads.q.dim2();
  const auto qv = heads.q.vec(head, query);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t key = 0; key <= query; ++key) {
    const auto kv = heads.k.vec(head, key);
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += qv[i] * kv[i];
    out[key] = scaling * dot;
    max_logit = std::max(max_logit, out[key]);
  }
  if (!std::isfinite(max_logit)) throw NumericError("non-finite attention logit");
  double denom = 0.0;
  for (std::size_t key = 0; key <= query; ++key) {
    out[key] = std::exp(out[key] - max_logit);
    denom += out[key];
  }
  for (std::size_t key = 0; key <= query; ++key) out[key] /= denom;
  for (std::size_t key = query + 1; key < out.size(); ++key) out[key] = 0.0;
}

// Full per-head attention A[h, query, key] = softmax(scaling * q.k) with a
// causal mask.
inline Tensor3<double> reconstruct_attention(const AttentionCapture& c) {
  const auto heads = prepare_heads(c);
  Tensor3<double> a(c.n_heads, c.seq_len, c.seq_len);
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    for (std::size_t t = 0; t < c.seq_len; ++t) attention_row(heads, c.scaling, h, t, a.vec(h, t));
  }
  return a;
}

// --- grids ---------------------------------------------------------------------

struct AttentionGrid {
  Matrix<double> values;
  bool normalized = false;
};

inline AttentionGrid grid_from_row(std::span<const double> head_mean_row,
                                   const AttentionCapture& c) {
  if (c.image_tokens.end > head_mean_row.size()) {
    throw ContractError("image token span outside attention row");
  }
  const std::size_t g = c.grid_side;
  if (c.image_tokens.size() != g * g) throw ContractError("image span is not grid_side^2");
  AttentionGrid grid{Matrix<double>(g, g), false};
  for (std::size_t i = 0; i < g * g; ++i) {
    grid.values(i / g, i % g) = head_mean_row[c.image_tokens.begin + i];
  }
  return grid;
}

// Head-mean attention of `query` over the image span, reshaped row-major.
inline AttentionGrid extract_image_attention(const Tensor3<double>& a, const AttentionCapture& c,
                                             std::optional<std::size_t> query = std::nullopt) {
  const std::size_t q = query.value_or(a.dim1() - 1);
  if (a.dim1() == 0 || q >= a.dim1() || c.image_tokens.end > a.dim2()) {
    throw ContractError("image token span outside attention tensor");
  }
  std::vector<double> mean(a.dim2(), 0.0);
  for (std::size_t h = 0; h < a.dim0(); ++h) {
    const auto row = a.vec(h, q);
    for (std::size_t j = 0; j < row.size(); ++j) mean[j] += row[j];
  }
  for (double& v : mean) v /= static_cast<double>(a.dim0());
  return grid_from_row(mean, c);
}

// (x - min) / (max - min). A constant grid maps to all zeros.
inline AttentionGrid minmax_normalize(const AttentionGrid& grid) {
  AttentionGrid out{grid.values, true};
  auto& v = out.values.data();
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo;
  const double range = *hi - min;
  for (double& x : v) x = range > 0.0 ? (x - min) / range : 0.0;
  return out;
}

// Nearest-neighbour upsampling; source index = floor(target * grid / size).
inline Matrix<double> nearest_resize(const AttentionGrid& grid, std::size_t height,
                                     std::size_t width) {
  const auto& g = grid.values;
  if (height == 0 || width == 0) throw ContractError("resize target must be non-empty");
  if (height < g.rows() || width < g.cols()) {
    throw ContractError("resize target smaller than the attention grid");
  }
  Matrix<double> out(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t sr = r * g.rows() / height;
    for (std::size_t c = 0; c < width; ++c) out(r, c) = g(sr, c * g.cols() / width);
  }
  return out;
}

// --- foreground ----------------------------------------------------------------

inline constexpr int kDefaultWhiteThreshold = 230;

struct ForegroundMask {
  Matrix<std::uint8_t> mask;  // 1 = foreground
  int white_threshold = kDefaultWhiteThreshold;
  bool whitespace_filled = false;

  std::size_t area() const {
    std::size_t n = 0;
    for (auto v : mask.data()) n += v;
    return n;
  }
};

// Background iff all three channels >= threshold.
inline ForegroundMask foreground_mask(const RgbImage& image, int white_threshold = kDefaultWhiteThreshold) {
  ForegroundMask out{Matrix<std::uint8_t>(image.height, image.width, 0), white_threshold, false};
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      const auto* p = image.at(r, c);
      const bool white = p[0] >= white_threshold && p[1] >= white_threshold && p[2] >= white_threshold;
      out.mask(r, c) = white ? 0 : 1;
    }
  }
  return out;
}

// Background regions not 4-connected to the image border become foreground.
inline ForegroundMask fill_whitespace(const ForegroundMask& in) {
  ForegroundMask out = in;
  out.whitespace_filled = true;
  const std::size_t h = in.mask.rows();
  const std::size_t w = in.mask.cols();
  if (h == 0 || w == 0) return out;

  Matrix<std::uint8_t> outside(h, w, 0);
  std::deque<std::pair<std::size_t, std::size_t>> frontier;
  auto seed = [&](std::size_t r, std::size_t c) {
    if (in.mask(r, c) == 0 && outside(r, c) == 0) {
      outside(r, c) = 1;
      frontier.emplace_back(r, c);
    }
  };
  for (std::size_t r = 0; r < h; ++r) {
    seed(r, 0);
    seed(r, w - 1);
  }
  for (std::size_t c = 0; c < w; ++c) {
    seed(0, c);
    seed(h - 1, c);
  }
  while (!frontier.empty()) {
    const auto [r, c] = frontier.front();
    frontier.pop_front();
    if (r > 0) seed(r - 1, c);
    if (r + 1 < h) seed(r + 1, c);
    if (c > 0) seed(r, c - 1);
    if (c + 1 < w) seed(r, c + 1);
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (in.mask(r, c) == 0 && outside(r, c) == 0) out.mask(r, c) = 1;
    }
  }
  return out;
}

// Mean normalized attention over foreground pixels; 0 for an empty mask.
inline double foreground_score(const Matrix<double>& pixel_map, const ForegroundMask& mask) {
  if (pixel_map.rows() != mask.mask.rows() || pixel_map.cols() != mask.mask.cols()) {
    throw ContractError("attention map and mask shapes differ");
  }
  double num = 0.0;
  std::size_t area = 0;
  for (std::size_t i = 0; i < pixel_map.size(); ++i) {
    if (mask.mask.data()[i] != 0) {
      num += pixel_map.data()[i];
      ++area;
    }
  }
  return area == 0 ? 0.0 : num / static_cast<double>(area);
}

inline double asm_score(std::span<const double> per_token) {
  if (per_token.empty()) throw ContractError("ASM needs at least one token score");
  double sum = 0.0;
  for (double v : per_token) sum += v;
  return sum / static_cast<double>(per_token.size());
}

// Entropy (natural log) of the min-max then L1 normalized cumulative map.
// A constant map is treated as the uniform distribution; 0 log 0 = 0.
inline double entropy_of_cumulative(const Matrix<double>& cumulative) {
  const auto& s = cumulative.data();
  if (s.empty()) throw ContractError("entropy of an empty map");
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return std::log(static_cast<double>(s.size()));
  double total = 0.0;
  for (double v : s) total += (v - *lo) / range;
  double h = 0.0;
  for (double v : s) {
    const double p = (v - *lo) / range / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

inline double attention_entropy(std::span<const Matrix<double>> per_token_maps) {
  if (per_token_maps.empty()) throw ContractError("entropy needs at least one map");
  Matrix<double> cumulative(per_token_maps[0].rows(), per_token_maps[0].cols(), 0.0);
  for (const auto& m : per_token_maps) {
    if (m.rows() != cumulative.rows() || m.cols() != cumulative.cols()) {
      throw ContractError("per-token maps differ in shape");
    }
    for (std::size_t i = 0; i < m.size(); ++i) cumulative.data()[i] += m.data()[i];
  }
  return entropy_of_cumulative(cumulative);
}

// --- end to end ----------------------------------------------------------------

struct GroundingOptions {
  int white_threshold = kDefaultWhiteThreshold;
  bool fill_whitespace = true;
  std::size_t jobs = 1;
};

struct GroundingScores {
  std::vector<double> per_token;
  double asm_value = 0.0;
  double entropy = 0.0;
  Matrix<double> cumulative;  // sum of per-token pixel maps
};

// Query positions scored for one capture.
inline std::vector<std::size_t> scored_positions(const AttentionCapture& c) {
  std::vector<std::size_t> out;
  if (c.generated.empty()) {
    out.push_back(c.seq_len - 1);
  } else {
    for (std::size_t t = c.generated.begin; t < c.generated.end; ++t) out.push_back(t);
  }
  return out;
}

// Normalized, image-resolution attention map for one query position.
inline Matrix<double> token_pixel_map(const RotatedHeads& heads, const AttentionCapture& c,
                                      std::size_t query) {
  std::vector<double> mean(c.seq_len, 0.0);
  std::vector<double> row(c.seq_len, 0.0);
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    attention_row(heads, c.scaling, h, query, row);
    for (std::size_t j = 0; j < c.seq_len; ++j) mean[j] += row[j];
  }
  for (double& v : mean) v /= static_cast<double>(c.n_heads);
  const auto grid = minmax_normalize(grid_from_row(mean, c));
  return nearest_resize(grid, c.image_height, c.image_width);
}

// Scores a rollout given one capture per generated token (final position of
// each) or captures declaring a generated range. One capture's heads are held
// in memory at a time.
inline GroundingScores attn_reward_for_rollout(std::span<const AttentionCapture> captures,
                                               const RgbImage& image,
                                               const GroundingOptions& opts = {}) {
  if (captures.empty()) throw ContractError("rollout has no captures");
  const auto& first = captures.front();
  for (const auto& c : captures) {
    if (c.grid_side != first.grid_side || c.image_height != first.image_height ||
        c.image_width != first.image_width) {
      throw ContractError("captures in a rollout must share grid and image geometry");
    }
  }
  if (image.height != first.image_height || image.width != first.image_width) {
    throw ContractError("image is " + std::to_string(image.height) + "x" +
                        std::to_string(image.width) + " but captures declare " +
                        std::to_string(first.image_height) + "x" +
                        std::to_string(first.image_width));
  }
  auto mask = foreground_mask(image, opts.white_threshold);
  if (opts.fill_whitespace) mask = fill_whitespace(mask);

  GroundingScores out;
  out.cumulative = Matrix<double>(image.height, image.width, 0.0);
  for (const auto& c : captures) {
    const auto heads = prepare_heads(c);
    const auto positions = scored_positions(c);
    std::vector<Matrix<double>> maps(positions.size());
    parallel_for(positions.size(), opts.jobs,
                 [&](std::size_t i) { maps[i] = token_pixel_map(heads, c, positions[i]); });
    for (const auto& m : maps) {
      out.per_token.push_back(foreground_score(m, mask));
      for (std::size_t i = 0; i < m.size(); ++i) out.cumulative.data()[i] += m.data()[i];
    }
  }
  out.asm_value = asm_score(out.per_token);
  out.entropy = entropy_of_cumulative(out.cumulative);
  return out;
}

}  // namespace vlmreward
