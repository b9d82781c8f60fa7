#pragma once

// Tag-structured completions: <think>, <answer>, <unit>, <principle>.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "vlmreward/text.hpp"

namespace vlmreward {

enum class Tag : std::uint8_t { kThink = 0, kAnswer = 1, kUnit = 2, kPrinciple = 3 };

inline constexpr std::array<Tag, 4> kAllTags = {Tag::kThink, Tag::kAnswer, Tag::kUnit,
                                                Tag::kPrinciple};

inline constexpr std::string_view tag_name(Tag t) {
  switch (t) {
    case Tag::kThink: return "think";
    case Tag::kAnswer: return "answer";
    case Tag::kUnit: return "unit";
    case Tag::kPrinciple: return "principle";
  }
  return "";
}

// Number of Unicode code points in a UTF-8 string; stray continuation bytes
// are not counted.
inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0u) != 0x80u) ++n;
  }
  return n;
}

struct Completion {
  std::string text;
  std::size_t token_count = 0;

  Completion() = default;
  explicit Completion(std::string t, std::size_t tokens = 0)
      : text(std::move(t)), token_count(tokens) {}

  // |y| in characters.
  std::size_t char_length() const { return utf8_length(text); }
};

class TagSet {
 public:
  constexpr void insert(Tag t) { bits_ |= bit(t); }
  constexpr void erase(Tag t) { bits_ &= static_cast<std::uint8_t>(~bit(t)); }
  constexpr bool contains(Tag t) const { return (bits_ & bit(t)) != 0; }
  constexpr std::size_t size() const {
    std::size_t n = 0;
    for (Tag t : kAllTags) n += contains(t) ? 1 : 0;
    return n;
  }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t mask() const { return bits_; }
  static constexpr TagSet from_mask(std::uint8_t m) {
    TagSet s;
    s.bits_ = static_cast<std::uint8_t>(m & 0x0Fu);
    return s;
  }
  friend constexpr bool operator==(TagSet, TagSet) = default;

 private:
  static constexpr std::uint8_t bit(Tag t) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(t));
  }
  std::uint8_t bits_ = 0;
};

struct ParsedResponse {
  std::optional<std::string> think;
  std::optional<std::string> answer;
  std::optional<std::string> unit;
  std::optional<std::string> principle;

  const std::optional<std::string>& field(Tag t) const {
    switch (t) {
      case Tag::kThink: return think;
      case Tag::kAnswer: return answer;
      case Tag::kUnit: return unit;
      case Tag::kPrinciple: break;
    }
    return principle;
  }
  std::optional<std::string>& field(Tag t) {
    return const_cast<std::optional<std::string>&>(std::as_const(*this).field(t));
  }

  // Present tags are exactly the non-null fields.
  TagSet tags_present() const {
    TagSet s;
    for (Tag t : kAllTags) {
      if (field(t).has_value()) s.insert(t);
    }
    return s;
  }

  // Content of a tag, or "" when absent. Empty and absent are equivalent for
  // content rewards.
  std::string_view content(Tag t) const {
    const auto& f = field(t);
    return f ? std::string_view(*f) : std::string_view{};
  }

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

namespace detail {

inline std::string open_tag(Tag t) { return "<" + std::string(tag_name(t)) + ">"; }
inline std::string close_tag(Tag t) { return "</" + std::string(tag_name(t)) + ">"; }

// Given an opening tag at `open` whose first closing tag is at `close`, the
// innermost opening of the same name before `close` delimits the content.
inline std::string extract_innermost(std::string_view s, Tag t, std::size_t open,
                                     std::size_t close) {
  const std::string o = open_tag(t);
  std::size_t start = open;
  for (std::size_t p = s.find(o, open + 1); p != std::string_view::npos && p < close;
       p = s.find(o, p + 1)) {
    start = p;
  }
  const std::size_t body = start + o.size();
  return std::string(text::trim(s.substr(body, close - body)));
}

struct TagToken {
  std::size_t pos = std::string_view::npos;
  Tag tag = Tag::kThink;
  bool closing = false;
  std::size_t length = 0;
};

inline TagToken next_tag_token(std::string_view s, std::size_t from) {
  TagToken best;
  for (Tag t : kAllTags) {
    for (bool closing : {false, true}) {
      const std::string tok = closing ? close_tag(t) : open_tag(t);
      const std::size_t p = s.find(tok, from);
      if (p != std::string_view::npos && p < best.pos) {
        best = TagToken{p, t, closing, tok.size()};
      }
    }
  }
  return best;
}

}  // namespace detail

// Extracts the four tagged fields. Top-level pairs are preferred: a pair nested
// inside another tag's region (for instance a tag restated inside <think>) is
// used only when no top-level pair of that name exists. Unclosed tags are
// absent. Parsing is total.
inline ParsedResponse parse_structured_response(std::string_view s) {
  ParsedResponse out;

  std::size_t pos = 0;
  while (pos < s.size()) {
    const detail::TagToken tok = detail::next_tag_token(s, pos);
    if (tok.pos == std::string_view::npos) break;
    if (tok.closing) {
      pos = tok.pos + tok.length;
      continue;
    }
    const std::string close = detail::close_tag(tok.tag);
    const std::size_t c = s.find(close, tok.pos + tok.length);
    if (c == std::string_view::npos) {
      pos = tok.pos + tok.length;
      continue;
    }
    auto& f = out.field(tok.tag);
    if (!f) f = detail::extract_innermost(s, tok.tag, tok.pos, c);
    pos = c + close.size();
  }

  for (Tag t : kAllTags) {
    auto& f = out.field(t);
    if (f) continue;
    const std::string open = detail::open_tag(t);
    const std::string close = detail::close_tag(t);
    for (std::size_t c = s.find(close); c != std::string_view::npos;
         c = s.find(close, c + 1)) {
      const std::size_t o = s.substr(0, c).find(open);
      if (o != std::string_view::npos) {
        f = detail::extract_innermost(s, t, o, c);
        break;
      }
    }
  }
  return out;
}

inline ParsedResponse parse_structured_response(const Completion& c) {
  return parse_structured_response(std::string_view(c.text));
}

// Emits present fields as <tag>content</tag> in canonical order.
inline std::string serialize_structured_response(const ParsedResponse& p) {
  std::string out;
  for (Tag t : kAllTags) {
    const auto& f = p.field(t);
    if (!f) continue;
    out += detail::open_tag(t);
    out += *f;
    out += detail::close_tag(t);
  }
  return out;
}

// Fraction of the four required tag pairs that are present.
inline double format_reward(const ParsedResponse& p) {
  return static_cast<double>(p.tags_present().size()) / 4.0;
}

}  // namespace vlmreward
