#pragma once

// Attention capture files: a JSON manifest plus a flat blob of little-endian
// IEEE-754 float32 values, row-major.
//
// {
//   "format": "vlmreward-attention-capture", "version": 1,
//   "blob": "captures.bin",                     // relative to the manifest
//   "captures": [{
//     "seq_len": T, "n_heads": 8, "n_kv_heads": 2, "head_dim": 64,
//     "scaling": 0.125,
//     "image_tokens": {"begin": 5, "end": 581},  // half-open, 0-based
//     "grid_side": 24,
//     "generated": {"begin": 600, "end": 640},   // optional
//     "image_height": 384, "image_width": 384,
//     "tensors": {"q": {"offset": 0, "shape": [T, 512]},   // byte offsets
//                 "k": {...}, "cos": {...}, "sin": {...}}
//   }]
// }

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/attention_grounding.hpp"
#include "vlmreward/error.hpp"

namespace vlmreward {

inline constexpr const char* kCaptureFormat = "vlmreward-attention-capture";

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

template <typename T>
T required(const nlohmann::json& j, const char* field, const std::string& where) {
  if (!j.contains(field)) throw ValidationError(where + ": missing field '" + field + "'");
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field '" + field + "' has the wrong type");
  }
}

inline IndexRange read_range(const nlohmann::json& j, const char* field, const std::string& where) {
  const auto r = required<nlohmann::json>(j, field, where);
  return {required<std::size_t>(r, "begin", where + "." + field),
          required<std::size_t>(r, "end", where + "." + field)};
}

inline std::vector<float> read_tensor(const std::vector<char>& blob, const nlohmann::json& tensors,
                                      const char* name, std::size_t rows, std::size_t cols,
                                      const std::string& where) {
  const auto t = required<nlohmann::json>(tensors, name, where + ".tensors");
  const auto offset = required<std::size_t>(t, "offset", where + ".tensors." + name);
  const auto shape = required<std::vector<std::size_t>>(t, "shape", where + ".tensors." + name);
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
    throw ValidationError(where + ".tensors." + name + ": shape must be [" + std::to_string(rows) +
                          ", " + std::to_string(cols) + "]");
  }
  const std::size_t bytes = rows * cols * 4;
  if (offset % 4 != 0 || offset + bytes > blob.size()) {
    throw ValidationError(where + ".tensors." + name + ": byte range outside blob");
  }
  std::vector<float> out(rows * cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, blob.data() + offset + i * 4, 4);
    out[i] = std::bit_cast<float>(to_little(bits));
  }
  return out;
}

}  // namespace detail

inline std::vector<AttentionCapture> read_captures(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open capture manifest: " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("capture manifest is not valid JSON: " + std::string(e.what()));
  }
  const std::string where = "manifest";
  if (detail::required<std::string>(m, "format", where) != kCaptureFormat) {
    throw ValidationError("manifest.format must be '" + std::string(kCaptureFormat) + "'");
  }
  if (detail::required<int>(m, "version", where) != 1) {
    throw ValidationError("manifest.version must be 1");
  }
  const auto blob_path = manifest_path.parent_path() / detail::required<std::string>(m, "blob", where);
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw ValidationError("cannot open capture blob: " + blob_path.string());
  const std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  std::vector<AttentionCapture> out;
  const auto list = detail::required<nlohmann::json>(m, "captures", where);
  if (!list.is_array() || list.empty()) throw ValidationError("manifest.captures must be a non-empty array");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& j = list[i];
    const std::string at = "captures[" + std::to_string(i) + "]";
    AttentionCapture c;
    c.seq_len = detail::required<std::size_t>(j, "seq_len", at);
    c.n_heads = detail::required<std::size_t>(j, "n_heads", at);
    c.n_kv_heads = detail::required<std::size_t>(j, "n_kv_heads", at);
    c.head_dim = detail::required<std::size_t>(j, "head_dim", at);
    c.scaling = detail::required<double>(j, "scaling", at);
    c.image_tokens = detail::read_range(j, "image_tokens", at);
    c.grid_side = detail::required<std::size_t>(j, "grid_side", at);
    if (j.contains("generated")) c.generated = detail::read_range(j, "generated", at);
    c.image_height = detail::required<std::size_t>(j, "image_height", at);
    c.image_width = detail::required<std::size_t>(j, "image_width", at);
    const auto tensors = detail::required<nlohmann::json>(j, "tensors", at);
    c.q = detail::read_tensor(blob, tensors, "q", c.seq_len, c.d_model(), at);
    c.k = detail::read_tensor(blob, tensors, "k", c.seq_len, c.d_kv(), at);
    c.cos_table = detail::read_tensor(blob, tensors, "cos", c.seq_len, c.head_dim, at);
    c.sin_table = detail::read_tensor(blob, tensors, "sin", c.seq_len, c.head_dim, at);
    try {
      validate(c);
    } catch (const std::exception& e) {
      throw ValidationError(at + ": " + e.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Writes `captures` to manifest_path and a sibling blob named blob_name.
inline void write_captures(const std::filesystem::path& manifest_path,
                           const std::vector<AttentionCapture>& captures,
                           const std::string& blob_name = "captures.bin") {
  if (manifest_path.has_parent_path()) std::filesystem::create_directories(manifest_path.parent_path());
  std::ofstream bin(manifest_path.parent_path() / blob_name, std::ios::binary | std::ios::trunc);
  std::size_t offset = 0;
  auto put = [&](const std::vector<float>& v, std::size_t rows, std::size_t cols) {
    nlohmann::json t = {{"offset", offset}, {"shape", {rows, cols}}};
    for (float f : v) {
      const std::uint32_t bits = detail::to_little(std::bit_cast<std::uint32_t>(f));
      bin.write(reinterpret_cast<const char*>(&bits), 4);
    }
    offset += v.size() * 4;
    return t;
  };
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : captures) {
    nlohmann::json j = {{"seq_len", c.seq_len},
                        {"n_heads", c.n_heads},
                        {"n_kv_heads", c.n_kv_heads},
                        {"head_dim", c.head_dim},
                        {"scaling", c.scaling},
                        {"image_tokens", {{"begin", c.image_tokens.begin}, {"end", c.image_tokens.end}}},
                        {"grid_side", c.grid_side},
                        {"image_height", c.image_height},
                        {"image_width", c.image_width}};
    if (!c.generated.empty()) j["generated"] = {{"begin", c.generated.begin}, {"end", c.generated.end}};
    j["tensors"] = {{"q", put(c.q, c.seq_len, c.d_model())},
                    {"k", put(c.k, c.seq_len, c.d_kv())},
                    {"cos", put(c.cos_table, c.seq_len, c.head_dim)},
                    {"sin", put(c.sin_table, c.seq_len, c.head_dim)}};
    list.push_back(std::move(j));
  }
  nlohmann::json m = {{"format", kCaptureFormat}, {"version", 1}, {"blob", blob_name}, {"captures", list}};
  std::ofstream(manifest_path, std::ios::trunc) << m.dump(2) << '\n';
}

}  // namespace vlmreward
