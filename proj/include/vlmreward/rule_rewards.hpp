#pragma once

// Rule-based reward components and the weighted rubric combination.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vlmreward/error.hpp"
#include "vlmreward/structured_output.hpp"
#include "vlmreward/text.hpp"

namespace vlmreward {

enum class AnswerFormat { kMcq, kOe };

inline std::string_view to_string(AnswerFormat f) {
  return f == AnswerFormat::kMcq ? "MCQ" : "OE";
}

struct GoldLabels {
  std::string answer;
  std::string unit;
  std::string principle;
  AnswerFormat format = AnswerFormat::kMcq;
};

// Strips surrounding decoration from an MCQ answer: "B", "b", "B.", "(B)",
// "B:", " [b] " all reduce to the bare letter text.
inline std::string strip_answer_decoration(std::string_view s) {
  auto is_deco = [](char c) {
    return text::is_space(c) || (!text::is_alnum(c) && static_cast<unsigned char>(c) < 0x80);
  };
  while (!s.empty() && is_deco(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_deco(s.back())) s.remove_suffix(1);
  return std::string(s);
}

inline bool is_mcq_letter(std::string_view s) {
  return s.size() == 1 && std::string_view("ABCDabcd").find(s[0]) != std::string_view::npos;
}

inline void validate(const GoldLabels& g) {
  if (g.format == AnswerFormat::kMcq && !is_mcq_letter(text::trim(g.answer))) {
    throw ContractError("MCQ gold answer must be one of A-D, got '" + g.answer + "'");
  }
}

// --- stopwords -------------------------------------------------------------

class Stopwords {
 public:
  static constexpr std::string_view kVersion = "stopwords-v1";

  explicit Stopwords(std::set<std::string> words) : words_(std::move(words)) {
    if (words_.empty()) throw ContractError("stopword set must be non-empty");
    for (const auto& w : words_) {
      if (w != text::to_lower(w)) throw ContractError("stopword not lowercase: " + w);
    }
  }

  // Shipped default list; identical to data/stopwords_v1.txt.
  static const Stopwords& builtin() {
    static const Stopwords sw = [] {
      static constexpr std::array<std::string_view, 56> kWords = {
          "a",     "an",    "and",   "are",   "as",    "at",    "be",    "been",
          "but",   "by",    "can",   "could", "did",   "do",    "does",  "for",
          "from",  "had",   "has",   "have",  "he",    "her",   "his",   "how",
          "i",     "if",    "in",    "into",  "is",    "it",    "its",   "may",
          "no",    "not",   "of",    "on",    "or",    "our",   "she",   "so",
          "such",  "than",  "that",  "the",   "their", "them",  "then",  "there",
          "these", "they",  "this",  "to",    "was",   "were",  "which", "with"};
      return Stopwords(std::set<std::string>(kWords.begin(), kWords.end()));
    }();
    return sw;
  }

  // One lowercase word per line; blank lines and '#' comments skipped.
  static Stopwords load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open stopword file: " + path.string());
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      const auto w = text::trim(line);
      if (w.empty() || w.front() == '#') continue;
      words.insert(std::string(w));
    }
    return Stopwords(std::move(words));
  }

  bool contains(const std::string& w) const { return words_.count(w) != 0; }
  const std::set<std::string>& words() const { return words_; }

 private:
  std::set<std::string> words_;
};

// --- unit aliases ------------------------------------------------------------

// Optional pre-matching expansion for unit strings ("m/s" <-> "meters per
// second"). Empty by default so matching stays the literal substring rule.
class UnitAliases {
 public:
  UnitAliases() = default;

  void add(std::string_view a, std::string_view b) {
    const auto na = text::normalize_spacing(a);
    const auto nb = text::normalize_spacing(b);
    groups_[na].insert(nb);
    groups_[nb].insert(na);
  }

  // The normalized string plus every alias registered for it.
  std::vector<std::string> expand(std::string_view s) const {
    const auto n = text::normalize_spacing(s);
    std::vector<std::string> out{n};
    if (auto it = groups_.find(n); it != groups_.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
  }

  bool empty() const { return groups_.empty(); }

 private:
  std::map<std::string, std::set<std::string>> groups_;
};

// --- components --------------------------------------------------------------

inline double mcq_accuracy_reward(const ParsedResponse& parsed, const GoldLabels& gold) {
  if (gold.format != AnswerFormat::kMcq) {
    throw ContractError("mcq_accuracy_reward requires an MCQ gold label");
  }
  if (!parsed.answer) return 0.0;
  const auto predicted = strip_answer_decoration(*parsed.answer);
  const auto expected = strip_answer_decoration(gold.answer);
  return !predicted.empty() && text::iequals(predicted, expected) ? 1.0 : 0.0;
}

// 1 iff the two strings share at least two non-stopword words.
inline double principle_overlap_reward(std::string_view predicted, std::string_view gold,
                                       const Stopwords& stopwords = Stopwords::builtin()) {
  const auto pw = text::words(predicted);
  const auto gw = text::words(gold);
  const std::set<std::string> ps(pw.begin(), pw.end());
  std::set<std::string> shared;
  for (const auto& w : gw) {
    if (ps.count(w) != 0 && !stopwords.contains(w)) shared.insert(w);
  }
  return shared.size() >= 2 ? 1.0 : 0.0;
}

namespace detail {

inline bool units_match(const std::string& a, const std::string& b) {
  if (a.empty() || b.empty()) return false;
  if (std::min(a.size(), b.size()) <= 2) return a == b;
  return a.find(b) != std::string::npos || b.find(a) != std::string::npos;
}

}  // namespace detail

// Bidirectional substring match after lowercasing and whitespace collapsing;
// when the shorter string has at most two characters only exact equality
// counts.
inline double unit_consistency_reward(std::string_view predicted, std::string_view gold,
                                      const UnitAliases* aliases = nullptr) {
  if (aliases == nullptr || aliases->empty()) {
    return detail::units_match(text::normalize_spacing(predicted),
                               text::normalize_spacing(gold))
               ? 1.0
               : 0.0;
  }
  for (const auto& p : aliases->expand(predicted)) {
    for (const auto& g : aliases->expand(gold)) {
      if (detail::units_match(p, g)) return 1.0;
    }
  }
  return 0.0;
}

inline constexpr double kLengthPenaltyScale = 4000.0;
inline constexpr double kLengthPenaltyCap = 0.05;

inline double length_penalty(std::size_t char_length) {
  return std::min(static_cast<double>(char_length) / kLengthPenaltyScale, kLengthPenaltyCap);
}

inline double length_penalty(const Completion& c) { return length_penalty(c.char_length()); }

// --- rubric ------------------------------------------------------------------

struct RubricWeights {
  double accuracy = 0.50;
  double principle = 0.15;
  double unit = 0.10;
  double reasoning = 0.15;
  double format = 0.10;
};

inline constexpr double kSoftPenaltyFactor = 0.6;

struct RubricComponents {
  double r_a = 0.0;       // [0,1]
  double r_p = 0.0;       // {0,1}
  double r_u = 0.0;       // {0,1}
  double r_reason = 0.0;  // [0,1]; always 0 for MCQ
  double r_f = 0.0;       // [0,1]
  std::size_t char_length = 0;
  AnswerFormat format = AnswerFormat::kMcq;
  // MCQ only: whether <think> carried non-empty content.
  bool has_reasoning_trace = false;
};

inline void validate(const RubricComponents& c) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  auto binary = [](double v) { return v == 0.0 || v == 1.0; };
  if (!in_unit(c.r_a) || !in_unit(c.r_reason) || !in_unit(c.r_f) || !binary(c.r_p) ||
      !binary(c.r_u)) {
    throw ContractError("rubric component outside its range");
  }
  if (c.format == AnswerFormat::kMcq && c.r_reason != 0.0) {
    throw ContractError("r_reason must be 0 for MCQ");
  }
}

// OE: reasoning is absent when the judged reasoning score is 0.
// MCQ: reasoning is absent when <think> is missing or empty.
inline bool soft_penalty_applies(const RubricComponents& c) {
  return c.format == AnswerFormat::kOe ? c.r_reason == 0.0 : !c.has_reasoning_trace;
}

struct RubricTrace {
  double base = 0.0;
  bool soft_penalty = false;
  double length_penalty = 0.0;
  double value = 0.0;
};

inline RubricTrace rubric_reward_traced(const RubricComponents& c,
                                        const RubricWeights& w = {}) {
  validate(c);
  RubricTrace t;
  t.base = w.accuracy * c.r_a + w.principle * c.r_p + w.unit * c.r_u +
           w.reasoning * c.r_reason + w.format * c.r_f;
  t.soft_penalty = soft_penalty_applies(c);
  t.length_penalty = length_penalty(c.char_length);
  double v = t.soft_penalty ? t.base * kSoftPenaltyFactor : t.base;
  v -= t.length_penalty;
  t.value = std::clamp(v, 0.0, 1.0);
  return t;
}

inline double rubric_reward(const RubricComponents& c, const RubricWeights& w = {}) {
  return rubric_reward_traced(c, w).value;
}

// Overload taking |y| from the completion itself.
inline double rubric_reward(RubricComponents c, const Completion& completion) {
  c.char_length = completion.char_length();
  return rubric_reward(c);
}

// All-rule MCQ rubric components for one completion.
inline RubricComponents mcq_rubric_components(const ParsedResponse& parsed,
                                              const GoldLabels& gold,
                                              const Completion& completion,
                                              const Stopwords& stopwords = Stopwords::builtin(),
                                              const UnitAliases* aliases = nullptr) {
  RubricComponents c;
  c.format = AnswerFormat::kMcq;
  c.r_a = mcq_accuracy_reward(parsed, gold);
  c.r_p = principle_overlap_reward(parsed.content(Tag::kPrinciple), gold.principle, stopwords);
  c.r_u = unit_consistency_reward(parsed.content(Tag::kUnit), gold.unit, aliases);
  c.r_reason = 0.0;
  c.r_f = format_reward(parsed);
  c.char_length = completion.char_length();
  c.has_reasoning_trace = !parsed.content(Tag::kThink).empty();
  return c;
}

}  // namespace vlmreward
