#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "vlmreward/composite.hpp"
#include "vlmreward/prompts.hpp"
#include "vlmreward/rule_rewards.hpp"

using namespace vlmreward;

namespace {

GoldLabels mcq(const char* letter) { return {letter, "N", "Newton second law", AnswerFormat::kMcq}; }

RubricComponents all_ones(AnswerFormat f) {
  RubricComponents c;
  c.format = f;
  c.r_a = c.r_p = c.r_u = c.r_f = 1.0;
  c.r_reason = f == AnswerFormat::kOe ? 1.0 : 0.0;
  c.has_reasoning_trace = true;
  return c;
}

}  // namespace

TEST(McqAccuracy, DecorationsAndCase) {
  for (const char* a : {"B", "b", "B.", "(B)", "B:", " [b] "}) {
    ParsedResponse p;
    p.answer = a;
    EXPECT_EQ(mcq_accuracy_reward(p, mcq("B")), 1.0) << a;
  }
  ParsedResponse wrong;
  wrong.answer = "C";
  EXPECT_EQ(mcq_accuracy_reward(wrong, mcq("B")), 0.0);
  EXPECT_EQ(mcq_accuracy_reward(ParsedResponse{}, mcq("B")), 0.0);
  ParsedResponse verbose;
  verbose.answer = "B because";
  EXPECT_EQ(mcq_accuracy_reward(verbose, mcq("B")), 0.0);
}

TEST(McqAccuracy, RejectsOeGold) {
  GoldLabels g{"12 N", "N", "", AnswerFormat::kOe};
  EXPECT_THROW(mcq_accuracy_reward(ParsedResponse{}, g), ContractError);
  EXPECT_THROW(validate(GoldLabels{"E", "", "", AnswerFormat::kMcq}), ContractError);
}

TEST(PrincipleOverlap, NeedsTwoSharedContentWords) {
  EXPECT_EQ(principle_overlap_reward("Newton's second law", "Newton second law of motion"), 1.0);
  EXPECT_EQ(principle_overlap_reward("conservation of energy", "conservation of mechanical energy"), 1.0);
  EXPECT_EQ(principle_overlap_reward("second law", "Newton law"), 0.0);
  // Stopwords never count toward the overlap.
  EXPECT_EQ(principle_overlap_reward("the law of the land", "the law of physics"), 0.0);
  EXPECT_EQ(principle_overlap_reward("", "anything at all"), 0.0);
  // Repeated words count once.
  EXPECT_EQ(principle_overlap_reward("law law law", "law law"), 0.0);
}

TEST(PrincipleOverlap, CustomStopwords) {
  Stopwords sw({"law"});
  EXPECT_EQ(principle_overlap_reward("Newton law", "Newton law", sw), 0.0);
  EXPECT_EQ(principle_overlap_reward("Newton second law", "Newton second law", sw), 1.0);
}

TEST(Stopwords, LoadFileMatchesBuiltin) {
  const auto path = std::filesystem::path(VLMREWARD_SOURCE_DIR) / "data" / "stopwords_v1.txt";
  EXPECT_EQ(Stopwords::load(path).words(), Stopwords::builtin().words());
  EXPECT_THROW(Stopwords::load("/nonexistent/stopwords.txt"), ValidationError);
  EXPECT_THROW(Stopwords({"Upper"}), ContractError);
}

TEST(UnitConsistency, SubstringBothWays) {
  EXPECT_EQ(unit_consistency_reward("m/s", "m/s"), 1.0);
  EXPECT_EQ(unit_consistency_reward("meters per second", "meters"), 1.0);
  EXPECT_EQ(unit_consistency_reward("kg", "kg*m/s^2"), 0.0);  // shorter is 2 chars: exact only
  EXPECT_EQ(unit_consistency_reward("kg m", "kg m/s"), 1.0);
  EXPECT_EQ(unit_consistency_reward("  Newton  Meters ", "newton meters"), 1.0);
  EXPECT_EQ(unit_consistency_reward("m", "mm"), 0.0);
  EXPECT_EQ(unit_consistency_reward("N", "n"), 1.0);
  EXPECT_EQ(unit_consistency_reward("", "N"), 0.0);
  EXPECT_EQ(unit_consistency_reward("N", ""), 0.0);
}

TEST(UnitConsistency, AliasesExpandBeforeMatching) {
  UnitAliases aliases;
  aliases.add("m/s", "meters per second");
  EXPECT_EQ(unit_consistency_reward("meters per second", "m/s", &aliases), 1.0);
  EXPECT_EQ(unit_consistency_reward("meters per second", "m/s"), 0.0);
}

TEST(LengthPenalty, LinearThenCapped) {
  EXPECT_DOUBLE_EQ(length_penalty(std::size_t{0}), 0.0);
  EXPECT_DOUBLE_EQ(length_penalty(std::size_t{100}), 0.025);
  EXPECT_DOUBLE_EQ(length_penalty(std::size_t{200}), 0.05);
  EXPECT_DOUBLE_EQ(length_penalty(std::size_t{100000}), 0.05);
  // Code points, not bytes: 100 two-byte characters.
  std::string s;
  for (int i = 0; i < 100; ++i) s += "\xc2\xb0";
  EXPECT_DOUBLE_EQ(length_penalty(Completion(s)), 0.025);
}

TEST(Rubric, AllOnesIsExactlyOne) {
  EXPECT_EQ(rubric_reward(all_ones(AnswerFormat::kOe)), 1.0);
  const RubricWeights w;
  EXPECT_EQ(w.accuracy + w.principle + w.unit + w.reasoning + w.format, 1.0);
}

TEST(Rubric, SoftPenaltyCase) {
  RubricComponents c;
  c.format = AnswerFormat::kOe;
  c.r_a = 1.0;
  c.r_f = 1.0;
  EXPECT_EQ(rubric_reward(c), 0.36);
  const auto t = rubric_reward_traced(c);
  EXPECT_TRUE(t.soft_penalty);
  EXPECT_DOUBLE_EQ(t.base, 0.6);
}

TEST(Rubric, McqCeilingWithoutReasoningWeight) {
  auto c = all_ones(AnswerFormat::kMcq);
  EXPECT_DOUBLE_EQ(rubric_reward(c), 0.85);
  c.has_reasoning_trace = false;
  EXPECT_DOUBLE_EQ(rubric_reward(c), 0.85 * 0.6);
  c.r_reason = 0.5;
  EXPECT_THROW(rubric_reward(c), ContractError);
}

TEST(Rubric, LengthPenaltyAndClamp) {
  auto c = all_ones(AnswerFormat::kOe);
  c.char_length = 400;
  EXPECT_DOUBLE_EQ(rubric_reward(c), 0.95);
  RubricComponents zero;
  zero.format = AnswerFormat::kOe;
  zero.char_length = 400;
  EXPECT_EQ(rubric_reward(zero), 0.0);
}

TEST(Rubric, RangeValidation) {
  auto c = all_ones(AnswerFormat::kOe);
  c.r_p = 0.5;
  EXPECT_THROW(rubric_reward(c), ContractError);
  c = all_ones(AnswerFormat::kOe);
  c.r_a = 1.5;
  EXPECT_THROW(rubric_reward(c), ContractError);
}

TEST(Rubric, RandomComponentsStayInUnitInterval) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution b(0.5);
  std::uniform_int_distribution<std::size_t> len(0, 1000);
  for (int i = 0; i < 5000; ++i) {
    RubricComponents c;
    c.format = b(rng) ? AnswerFormat::kOe : AnswerFormat::kMcq;
    c.r_a = u(rng);
    c.r_p = b(rng) ? 1.0 : 0.0;
    c.r_u = b(rng) ? 1.0 : 0.0;
    c.r_reason = c.format == AnswerFormat::kOe && b(rng) ? u(rng) : 0.0;
    c.r_f = static_cast<double>(len(rng) % 5) / 4.0;
    c.char_length = len(rng);
    c.has_reasoning_trace = b(rng);
    const auto t = rubric_reward_traced(c);
    EXPECT_GE(t.value, 0.0);
    EXPECT_LE(t.value, 1.0);
    const double expected = std::clamp((t.soft_penalty ? 0.6 : 1.0) *
                                               (0.5 * c.r_a + 0.15 * c.r_p + 0.1 * c.r_u + 0.15 * c.r_reason +
                                                0.1 * c.r_f) -
                                           std::min(static_cast<double>(c.char_length) / 4000.0, 0.05),
                                       0.0, 1.0);
    EXPECT_NEAR(t.value, expected, 1e-12);
  }
}

TEST(McqComponents, FromCompletion) {
  const Completion y("<think>F = ma</think><answer>B</answer><unit>N</unit><principle>Newton's second law</principle>");
  const auto c = mcq_rubric_components(parse_structured_response(y), mcq("B"), y);
  EXPECT_EQ(c.r_a, 1.0);
  EXPECT_EQ(c.r_p, 1.0);
  EXPECT_EQ(c.r_u, 1.0);
  EXPECT_EQ(c.r_reason, 0.0);
  EXPECT_EQ(c.r_f, 1.0);
  EXPECT_TRUE(c.has_reasoning_trace);
  EXPECT_EQ(c.char_length, y.char_length());
}

TEST(RewardSelection, NamedConditions) {
  const auto fmt = RewardSelection::parse("Fmt");
  EXPECT_EQ(fmt.weight(RewardTerm::kFormat), 1.0);
  EXPECT_FALSE(fmt.uses(RewardTerm::kAccuracy));
  const auto all = RewardSelection::parse("Fmt+Acc+ASM");
  EXPECT_TRUE(all.uses(RewardTerm::kFormat) && all.uses(RewardTerm::kAccuracy) && all.uses(RewardTerm::kAttention));
  EXPECT_EQ(RewardSelection::parse("Rubric").weights().size(), 1u);
}

TEST(RewardSelection, CustomWeights) {
  const auto s = RewardSelection::parse("fmt + 0.5*acc + 2*asm");
  EXPECT_EQ(s.weight(RewardTerm::kFormat), 1.0);
  EXPECT_EQ(s.weight(RewardTerm::kAccuracy), 0.5);
  EXPECT_EQ(s.weight(RewardTerm::kAttention), 2.0);
  EXPECT_THROW(RewardSelection::parse("fmt + bogus"), ContractError);
  EXPECT_THROW(RewardSelection::parse("x*acc"), ContractError);
}

TEST(Combine, SumsSelectedTerms) {
  RewardBreakdown b;
  b.r_f = 0.75;
  b.r_a = 1.0;
  b.rubric.value = 0.4;
  EXPECT_DOUBLE_EQ(combine(b, RewardSelection::parse("Fmt")), 0.75);
  EXPECT_DOUBLE_EQ(combine(b, RewardSelection::parse("Fmt+Acc")), 1.75);
  EXPECT_DOUBLE_EQ(combine(b, RewardSelection::parse("Rubric")), 0.4);
  EXPECT_THROW(combine(b, RewardSelection::parse("ASM")), ContractError);
  b.r_attn = 0.3;
  EXPECT_DOUBLE_EQ(combine(b, RewardSelection::parse("Fmt+Acc+ASM")), 2.05);
}

TEST(Combine, JsonRoundTrip) {
  RewardBreakdown b;
  b.problem_id = "p1";
  b.r_f = 0.5;
  b.r_attn = 0.25;
  b.rubric = {0.3, true, 0.01, 0.17};
  b.combined = 0.75;
  const auto back = breakdown_from_json(to_json(b));
  EXPECT_EQ(back.problem_id, "p1");
  EXPECT_EQ(*back.r_attn, 0.25);
  EXPECT_EQ(back.rubric.value, 0.17);
  EXPECT_TRUE(back.rubric.soft_penalty);
  EXPECT_EQ(back.combined, 0.75);
}

TEST(Prompts, ByteExactAgainstReferenceFiles) {
  const auto dir = std::filesystem::path(VLMREWARD_SOURCE_DIR) / "tests" / "data" / "prompts";
  int checked = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto id = entry.path().stem().string();
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    auto expected = ss.str();
    if (!expected.empty() && expected.back() == '\n') expected.pop_back();
    const auto it = prompts::templates().find(id);
    ASSERT_NE(it, prompts::templates().end()) << id;
    EXPECT_EQ(std::string(it->second), expected) << id;
    ++checked;
  }
  EXPECT_GE(checked, 8);
}

TEST(Prompts, SlotsAndEscapes) {
  EXPECT_EQ(prompts::format_template("a {x} {{y}} {x}", {{"x", "1"}}), "a 1 {y} 1");
  EXPECT_THROW(prompts::format_template("{missing}", {}), ContractError);
  EXPECT_THROW(prompts::render("no_such_template"), ContractError);
  const auto names = prompts::slot_names(prompts::k_oe_rubric_judge_user);
  EXPECT_NE(std::find(names.begin(), names.end(), "gold_answer"), names.end());
  EXPECT_NO_THROW(prompts::render("mcqa_system"));
}
