#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "scorecard.hpp"
#include "vlmreward/eval_harness.hpp"

using namespace vlmreward;

namespace {

struct Eval10 {
  std::vector<Problem> problems = load_problems(scorecard::eval10_dir() / "problems.jsonl");
  std::vector<CompletionRecord> completions = load_completions(scorecard::eval10_dir() / "completions.jsonl");
};

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Eval10, MatchesScorecard) {
  Eval10 d;
  const auto records = evaluate(d.problems, d.completions);
  const auto rep = aggregate(records, d.problems);
  EXPECT_EQ(scorecard::mismatches(records, rep, scorecard::load()), "");
}

TEST(Eval10, ParallelMatchesSerial) {
  Eval10 d;
  EvalOptions opts;
  opts.jobs = 4;
  const auto a = evaluate(d.problems, d.completions);
  const auto b = evaluate(d.problems, d.completions, opts);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
}

TEST(Eval10, AggregationIsPermutationInvariant) {
  Eval10 d;
  const auto records = evaluate(d.problems, d.completions);
  const auto base = to_json(aggregate(records, d.problems)).dump();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    auto p = d.problems;
    auto c = d.completions;
    auto r = records;
    std::shuffle(p.begin(), p.end(), rng);
    std::shuffle(c.begin(), c.end(), rng);
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_EQ(to_json(aggregate(r, p)).dump(), base);
    EXPECT_EQ(to_json(aggregate(evaluate(p, c), d.problems)).dump(), base);
  }
}

TEST(Eval10, JudgeModeUsesSuppliedClient) {
  Eval10 d;
  auto backend = ScriptedJudge::sequence({"False"});
  JudgeConfig cfg;
  cfg.n_judges = 1;
  JudgeClient client(backend, cfg);
  EvalOptions opts;
  opts.mode = EvalMode::kJudge;
  const auto records = evaluate(d.problems, d.completions, opts, &client);
  std::size_t oe = 0;
  for (std::size_t i = 0; i < d.problems.size(); ++i) {
    if (d.problems[i].format() == AnswerFormat::kOe) {
      ++oe;
      EXPECT_EQ(records[i].answer_correct, 0) << d.problems[i].id;
    }
  }
  EXPECT_GT(oe, 0u);
  EXPECT_LE(backend->calls(), static_cast<int>(oe));
  EXPECT_THROW(evaluate(d.problems, d.completions, opts, nullptr), ContractError);
}

TEST(Eval10, ReportJsonRoundTrip) {
  Eval10 d;
  const auto rep = aggregate(evaluate(d.problems, d.completions), d.problems);
  const auto j = to_json(rep);
  EXPECT_EQ(to_json(report_from_json(nlohmann::json::parse(j.dump()))).dump(), j.dump());
  EXPECT_TRUE(j.at("domains").contains("Wave/Acoustics"));
  EXPECT_THROW(report_from_json({{"overall", 1}}), ValidationError);
}

TEST(Completions, MatchingReportsEveryProblem) {
  Eval10 d;
  auto c = d.completions;
  c.erase(c.begin());
  c.push_back({"zz", "x"});
  c.push_back(c.front());
  const auto msg = message_of([&] { match_completions(d.problems, c); });
  EXPECT_NE(msg.find("missing completions for: e01"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown problems: zz"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicated completions for: e02"), std::string::npos) << msg;
  EXPECT_THROW(match_completions(d.problems, {}), ValidationError);
}

TEST(Completions, ParseErrorsCarryLineNumbers) {
  std::istringstream in("{\"problem_id\": \"a\", \"text\": \"x\"}\n\nnot json\n{\"text\": \"x\"}\n");
  const auto msg = message_of([&] { parse_completions(in, "c.jsonl"); });
  EXPECT_NE(msg.find("c.jsonl:3: invalid JSON"), std::string::npos) << msg;
  EXPECT_NE(msg.find("c.jsonl:4: missing string field 'problem_id'"), std::string::npos) << msg;
}

TEST(Completions, WriteParseRoundTrip) {
  const std::vector<CompletionRecord> recs = {{"a", "line\nbreak \"q\""}, {"b", "\xce\xbc"}};
  std::stringstream s;
  write_completions(s, recs);
  const auto back = parse_completions(s);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].text, recs[0].text);
  EXPECT_EQ(back[1].text, recs[1].text);
}

TEST(Report, FormatRatioRoundsHalfToEven) {
  EXPECT_EQ(format_ratio(7, 10), "0.700");
  EXPECT_EQ(format_ratio(1, 3), "0.333");
  EXPECT_EQ(format_ratio(2, 3), "0.667");
  EXPECT_EQ(format_ratio(1, 8), "0.125");
  EXPECT_EQ(format_ratio(1, 16), "0.062");   // 0.0625 -> even
  EXPECT_EQ(format_ratio(3, 16), "0.188");   // 0.1875 -> even
  EXPECT_EQ(format_ratio(1, 2000), "0.000");  // 0.0005 -> even
  EXPECT_EQ(format_ratio(3, 2000), "0.002");  // 0.0015 -> even
  EXPECT_EQ(format_ratio(5, 5), "1.000");
  EXPECT_EQ(format_ratio(0, 0), "-");
}

TEST(Report, AverageReports) {
  Report a, b;
  a.overall = {1, 2};
  b.overall = {3, 4};
  a.unit = b.unit = {1, 1};
  a.domains[Domain::kOptics] = {1, 1};
  const auto m = average_reports({a, b});
  EXPECT_EQ(m.runs, 2u);
  EXPECT_DOUBLE_EQ(m.overall.mean, 0.625);
  EXPECT_DOUBLE_EQ(m.overall.std, 0.125);
  EXPECT_EQ(m.domains.at(Domain::kOptics).runs, 1u);
  EXPECT_FALSE(m.domains.count(Domain::kMechanics));
  EXPECT_THROW(average_reports({}), ContractError);
}

TEST(Report, TextTableListsDomains) {
  Eval10 d;
  const auto rep = aggregate(evaluate(d.problems, d.completions), d.problems);
  const auto t = report_text(rep, "base");
  EXPECT_NE(t.find("0.700"), std::string::npos) << t;
  EXPECT_NE(t.find("base"), std::string::npos);
}
