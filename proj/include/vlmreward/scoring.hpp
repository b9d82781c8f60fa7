#pragma once

// Reward breakdown for one (problem, completion) pair.
//
// MCQ: every component is rule-based (letter match, principle overlap, unit
// match, tag count); r_reason is 0.
// OE:  format is rule-based. A selection using the rubric runs the rubric
// jury, which supplies r_a, r_p, r_u and r_reason. A selection using
// accuracy without the rubric runs the accuracy jury for r_a and keeps rule
// matches for r_p and r_u. Otherwise no judge is called and r_a = 0.

#include <optional>
#include <span>
#include <string>

#include "vlmreward/attention_grounding.hpp"
#include "vlmreward/composite.hpp"
#include "vlmreward/dataset_io.hpp"
#include "vlmreward/error.hpp"
#include "vlmreward/judge.hpp"
#include "vlmreward/rule_rewards.hpp"
#include "vlmreward/structured_output.hpp"

namespace vlmreward {

struct ScoringContext {
  const JudgeClient* judge = nullptr;  // required for OE acc/rubric selections
  const Stopwords* stopwords = nullptr;
  const UnitAliases* aliases = nullptr;
};

inline bool needs_judge(const Problem& p, const RewardSelection& sel) {
  return p.gold.format == AnswerFormat::kOe &&
         (sel.uses(RewardTerm::kAccuracy) || sel.uses(RewardTerm::kRubric));
}

inline RewardBreakdown score_completion(const Problem& p, const Completion& completion, const RewardSelection& sel,
                                        const ScoringContext& ctx = {},
                                        std::optional<double> r_attn = std::nullopt) {
  const auto& stopwords = ctx.stopwords ? *ctx.stopwords : Stopwords::builtin();
  const auto parsed = parse_structured_response(completion);
  RubricComponents rc;
  if (p.gold.format == AnswerFormat::kMcq) {
    rc = mcq_rubric_components(parsed, p.gold, completion, stopwords, ctx.aliases);
  } else {
    rc.format = AnswerFormat::kOe;
    rc.r_f = format_reward(parsed);
    rc.char_length = completion.char_length();
    rc.r_p = principle_overlap_reward(parsed.content(Tag::kPrinciple), p.gold.principle, stopwords);
    rc.r_u = unit_consistency_reward(parsed.content(Tag::kUnit), p.gold.unit, ctx.aliases);
    if (needs_judge(p, sel)) {
      if (ctx.judge == nullptr) {
        throw ContractError("problem '" + p.id + "' is open-ended and reward '" + sel.name() + "' needs a judge");
      }
      if (sel.uses(RewardTerm::kRubric)) {
        const auto v = judge_oe_rubric(p.question, p.image_path, parsed, p.gold, *ctx.judge);
        rc.r_a = v.r_a;
        rc.r_p = v.r_p;
        rc.r_u = v.r_u;
        rc.r_reason = v.r_reason;
      } else {
        rc.r_a = judge_oe_accuracy(p.question, parsed, p.gold, *ctx.judge);
      }
    }
  }
  RewardBreakdown b;
  b.problem_id = p.id;
  b.r_f = rc.r_f;
  b.r_a = rc.r_a;
  b.r_p = rc.r_p;
  b.r_u = rc.r_u;
  b.r_reason = rc.r_reason;
  b.r_attn = r_attn;
  b.rubric = rubric_reward_traced(rc);
  b.combined = combine(b, sel);
  return b;
}

}  // namespace vlmreward
