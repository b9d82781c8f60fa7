#pragma once

// Reward conditions (Fmt, Fmt+Acc, Rubric, ASM, Fmt+Acc+ASM and custom
// weighted sums) and the per-completion reward breakdown.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/error.hpp"
#include "vlmreward/rule_rewards.hpp"
#include "vlmreward/text.hpp"

namespace vlmreward {

enum class RewardTerm { kFormat, kAccuracy, kRubric, kAttention };

inline std::string_view term_name(RewardTerm t) {
  switch (t) {
    case RewardTerm::kFormat: return "fmt";
    case RewardTerm::kAccuracy: return "acc";
    case RewardTerm::kRubric: return "rubric";
    case RewardTerm::kAttention: return "asm";
  }
  return "";
}

// Weighted sum of reward terms. Named conditions are plain sums of their
// terms; "Rubric" is the weighted rubric on its own.
class RewardSelection {
 public:
  RewardSelection() = default;

  static RewardSelection parse(std::string_view spec) {
    static const std::map<std::string, std::vector<RewardTerm>, std::less<>> kNamed = {
        {"Fmt", {RewardTerm::kFormat}},
        {"Fmt+Acc", {RewardTerm::kFormat, RewardTerm::kAccuracy}},
        {"Rubric", {RewardTerm::kRubric}},
        {"ASM", {RewardTerm::kAttention}},
        {"Fmt+Acc+ASM", {RewardTerm::kFormat, RewardTerm::kAccuracy, RewardTerm::kAttention}},
    };
    RewardSelection sel;
    sel.name_ = std::string(text::trim(spec));
    if (auto it = kNamed.find(sel.name_); it != kNamed.end()) {
      for (auto t : it->second) sel.weights_[t] += 1.0;
      return sel;
    }
    // Custom form: "fmt + 0.5*acc + asm".
    std::string s(spec);
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const auto plus = s.find('+', pos);
      const auto piece = text::trim(std::string_view(s).substr(pos, plus == std::string::npos ? std::string::npos : plus - pos));
      double w = 1.0;
      std::string_view name = piece;
      if (const auto star = piece.find('*'); star != std::string_view::npos) {
        try {
          w = std::stod(std::string(text::trim(piece.substr(0, star))));
        } catch (const std::exception&) {
          throw ContractError("bad reward weight in '" + std::string(spec) + "'");
        }
        name = text::trim(piece.substr(star + 1));
      }
      const auto lower = text::to_lower(name);
      bool known = false;
      for (auto t : {RewardTerm::kFormat, RewardTerm::kAccuracy, RewardTerm::kRubric, RewardTerm::kAttention}) {
        if (lower == term_name(t)) {
          sel.weights_[t] += w;
          known = true;
        }
      }
      if (!known) {
        throw ContractError("unknown reward term '" + std::string(name) +
                            "' (expected Fmt, Fmt+Acc, Rubric, ASM, Fmt+Acc+ASM or fmt/acc/rubric/asm terms)");
      }
      if (plus == std::string::npos) break;
      pos = plus + 1;
    }
    return sel;
  }

  const std::string& name() const { return name_; }
  double weight(RewardTerm t) const {
    auto it = weights_.find(t);
    return it == weights_.end() ? 0.0 : it->second;
  }
  bool uses(RewardTerm t) const { return weight(t) != 0.0; }
  const std::map<RewardTerm, double>& weights() const { return weights_; }

 private:
  std::string name_;
  std::map<RewardTerm, double> weights_;
};

struct RewardBreakdown {
  std::string problem_id;
  double r_f = 0.0;
  double r_a = 0.0;
  double r_p = 0.0;
  double r_u = 0.0;
  double r_reason = 0.0;
  std::optional<double> r_attn;
  RubricTrace rubric;
  double combined = 0.0;
};

// Combined reward of a breakdown under `sel`. A selection using the attention
// term requires r_attn.
inline double combine(const RewardBreakdown& b, const RewardSelection& sel) {
  if (sel.uses(RewardTerm::kAttention) && !b.r_attn) {
    throw ContractError("reward selection '" + sel.name() + "' needs attention captures");
  }
  return sel.weight(RewardTerm::kFormat) * b.r_f + sel.weight(RewardTerm::kAccuracy) * b.r_a +
         sel.weight(RewardTerm::kRubric) * b.rubric.value +
         sel.weight(RewardTerm::kAttention) * b.r_attn.value_or(0.0);
}

inline nlohmann::json to_json(const RewardBreakdown& b) {
  nlohmann::json j = {{"problem_id", b.problem_id},
                      {"r_f", b.r_f},
                      {"r_a", b.r_a},
                      {"r_p", b.r_p},
                      {"r_u", b.r_u},
                      {"r_reason", b.r_reason},
                      {"r_attn", b.r_attn ? nlohmann::json(*b.r_attn) : nlohmann::json(nullptr)},
                      {"rubric", b.rubric.value},
                      {"rubric_base", b.rubric.base},
                      {"soft_penalty", b.rubric.soft_penalty},
                      {"length_penalty", b.rubric.length_penalty},
                      {"combined", b.combined}};
  return j;
}

inline RewardBreakdown breakdown_from_json(const nlohmann::json& j) {
  RewardBreakdown b;
  b.problem_id = j.value("problem_id", "");
  b.r_f = j.at("r_f").get<double>();
  b.r_a = j.at("r_a").get<double>();
  b.r_p = j.at("r_p").get<double>();
  b.r_u = j.at("r_u").get<double>();
  b.r_reason = j.at("r_reason").get<double>();
  if (j.contains("r_attn") && !j.at("r_attn").is_null()) b.r_attn = j.at("r_attn").get<double>();
  b.rubric.value = j.at("rubric").get<double>();
  b.rubric.base = j.at("rubric_base").get<double>();
  b.rubric.soft_penalty = j.at("soft_penalty").get<bool>();
  b.rubric.length_penalty = j.at("length_penalty").get<double>();
  b.combined = j.at("combined").get<double>();
  return b;
}

}  // namespace vlmreward
