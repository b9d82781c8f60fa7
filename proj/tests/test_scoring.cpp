#include <gtest/gtest.h>

#include "vlmreward/logging.hpp"
#include "vlmreward/scoring.hpp"

using namespace vlmreward;

namespace {

Problem mcq() {
  Problem p;
  p.id = "m1";
  p.question = "q";
  p.options = {"a", "b", "c", "d"};
  p.gold = {"B", "N", "Newton's second law", AnswerFormat::kMcq};
  return p;
}

Problem oe() {
  Problem p;
  p.id = "o1";
  p.question = "How fast?";
  p.gold = {"12 m/s", "m/s", "conservation of energy", AnswerFormat::kOe};
  return p;
}

const Completion kGood(
    "<think>Energy conservation gives v = sqrt(2gh) = 12 m/s.</think><answer>12 m/s</answer>"
    "<unit>m/s</unit><principle>conservation of mechanical energy</principle>");

}  // namespace

TEST(Scoring, NeedsJudgeOnlyForOeAccuracyAndRubric) {
  EXPECT_FALSE(needs_judge(mcq(), RewardSelection::parse("Fmt+Rubric")));
  EXPECT_FALSE(needs_judge(oe(), RewardSelection::parse("Fmt")));
  EXPECT_TRUE(needs_judge(oe(), RewardSelection::parse("Fmt+Acc")));
  EXPECT_TRUE(needs_judge(oe(), RewardSelection::parse("Rubric")));
}

TEST(Scoring, McqIsRuleBased) {
  const Completion c("<think>F = ma.</think><answer>(B)</answer><unit>newtons</unit>"
                     "<principle>Newton's second law of motion</principle>");
  const auto b = score_completion(mcq(), c, RewardSelection::parse("Fmt+Acc"));
  EXPECT_EQ(b.r_f, 1.0);
  EXPECT_EQ(b.r_a, 1.0);
  EXPECT_EQ(b.r_p, 1.0);
  EXPECT_EQ(b.combined, 2.0);
  EXPECT_FALSE(b.r_attn);
  EXPECT_EQ(b.problem_id, "m1");
}

TEST(Scoring, OeWithoutJudgeFailsLoudly) {
  EXPECT_THROW(score_completion(oe(), kGood, RewardSelection::parse("Fmt+Acc")), ContractError);
  const auto b = score_completion(oe(), kGood, RewardSelection::parse("Fmt"));
  EXPECT_EQ(b.r_f, 1.0);
  EXPECT_EQ(b.r_a, 0.0);
  EXPECT_EQ(b.r_u, 1.0);
  EXPECT_EQ(b.combined, 1.0);
}

TEST(Scoring, OeAccuracyFromJury) {
  JudgeConfig cfg;
  cfg.n_judges = 3;
  auto backend = ScriptedJudge::by_call_index({"Correctness: 2", "Correctness: 1", "Correctness: 2"});
  JudgeClient client(backend, cfg);
  ScoringContext ctx;
  ctx.judge = &client;
  const auto b = score_completion(oe(), kGood, RewardSelection::parse("Fmt+Acc"), ctx);
  EXPECT_NEAR(b.r_a, 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(b.combined, 1.0 + 5.0 / 6.0, 1e-12);
  EXPECT_EQ(backend->calls(), 3);
}

TEST(Scoring, OeRubricFromOfflineJury) {
  JudgeConfig cfg;
  cfg.n_judges = 3;
  JudgeClient client(std::make_shared<OfflineJudge>(), cfg);
  ScoringContext ctx;
  ctx.judge = &client;
  const auto b = score_completion(oe(), kGood, RewardSelection::parse("Rubric"), ctx);
  EXPECT_EQ(b.r_a, 1.0);
  EXPECT_EQ(b.r_u, 1.0);
  EXPECT_EQ(b.r_reason, 1.0);
  EXPECT_GT(b.rubric.value, 0.8);
  EXPECT_EQ(b.combined, b.rubric.value);
}

TEST(Scoring, AttentionTermNeedsAValue) {
  EXPECT_THROW(score_completion(mcq(), kGood, RewardSelection::parse("Fmt+ASM")), ContractError);
  const auto b = score_completion(mcq(), kGood, RewardSelection::parse("Fmt+ASM"), {}, 0.25);
  EXPECT_EQ(b.r_attn, 0.25);
}
