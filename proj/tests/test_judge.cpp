#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "oracles.hpp"
#include "vlmreward/judge.hpp"
#include "vlmreward/judge_http.hpp"

using namespace vlmreward;

namespace {

std::string verdict(int c, int p, int u, int r) {
  return "Correctness: " + std::to_string(c) + "\nPrinciple: " + std::to_string(p) +
         "\nUnit: " + std::to_string(u) + "\nReasoning: " + std::to_string(r);
}

JudgeConfig fast_config(int n = 3) {
  JudgeConfig cfg;
  cfg.n_judges = n;
  cfg.backoff_initial = std::chrono::milliseconds(1);
  return cfg;
}

const GoldLabels kOeGold{"12 N", "N", "Newton second law", AnswerFormat::kOe};

ParsedResponse good_response() {
  return parse_structured_response(
      "<think>F = ma with m = 3 kg and a = 4 m/s^2 gives 12 N</think><answer>12 N</answer>"
      "<unit>N</unit><principle>Newton's second law</principle>");
}

class SilenceLog : public ::testing::Test {
 protected:
  void SetUp() override { previous_ = set_log_sink([](const std::string&) {}); }
  void TearDown() override { set_log_sink(previous_); }
  LogSink previous_;
};

using Jury = SilenceLog;
using Client = SilenceLog;
using Http = SilenceLog;

}  // namespace

TEST(Verdicts, ParseRubric) {
  const auto v = parse_rubric_verdict("Correctness: 2\nprinciple: 1\n  Unit: 0\nReasoning: 1\n");
  ASSERT_TRUE(v);
  EXPECT_EQ(v->correctness, 2);
  EXPECT_EQ(v->principle, 1);
  EXPECT_EQ(v->unit, 0);
  EXPECT_EQ(v->reasoning, 1);
  EXPECT_FALSE(parse_rubric_verdict("Correctness: 3\nPrinciple: 1\nUnit: 0\nReasoning: 1"));
  EXPECT_FALSE(parse_rubric_verdict("Correctness: 2\nPrinciple: 1\nUnit: 0"));
  EXPECT_FALSE(parse_rubric_verdict("Correctness: 2\nCorrectness: 1\nPrinciple: 1\nUnit: 0\nReasoning: 1"));
  EXPECT_FALSE(parse_rubric_verdict("Correctness: two\nPrinciple: 1\nUnit: 0\nReasoning: 1"));
}

TEST(Verdicts, ParseEquivalence) {
  EXPECT_EQ(parse_equivalence(" True\n"), true);
  EXPECT_EQ(parse_equivalence("false"), false);
  EXPECT_FALSE(parse_equivalence("maybe"));
  EXPECT_FALSE(parse_equivalence("True, they match"));
}

TEST(Verdicts, AggregateMeanAndMajority) {
  // Per-dimension juries: correctness (2,2,1), unit (1,0,1), reasoning (0,0,0).
  const std::vector<JudgeVerdict> jury = {{2, 1, 1, 0, ""}, {2, 0, 0, 0, ""}, {1, 1, 1, 0, ""}};
  const auto a = aggregate_verdicts(jury);
  EXPECT_EQ(a.r_a, 5.0 / 6.0);
  EXPECT_EQ(a.r_u, 1.0);
  EXPECT_EQ(a.r_p, 1.0);
  EXPECT_EQ(a.r_reason, 0.0);
  EXPECT_EQ(a.n_judges, 3);
  EXPECT_THROW(aggregate_verdicts({}), ContractError);
}

TEST(Verdicts, EvenJuryTieVotesZero) {
  const auto a = aggregate_verdicts({{0, 1, 1, 0, ""}, {0, 0, 0, 0, ""}});
  EXPECT_EQ(a.r_p, 0.0);
  EXPECT_EQ(a.r_u, 0.0);
}

TEST_F(Jury, ScriptedRubricJury) {
  auto backend = ScriptedJudge::by_call_index({verdict(2, 1, 1, 0), verdict(2, 0, 0, 0), verdict(1, 1, 1, 0)});
  JudgeClient client(backend, fast_config());
  const auto a = judge_oe_rubric("q", std::nullopt, good_response(), kOeGold, client);
  EXPECT_EQ(a.r_a, 5.0 / 6.0);
  EXPECT_EQ(a.r_u, 1.0);
  EXPECT_EQ(a.r_reason, 0.0);
  EXPECT_EQ(backend->calls(), 3);
}

TEST_F(Jury, FailedCallsFailClosed) {
  auto backend = ScriptedJudge::by_call_index({verdict(2, 1, 1, 2), "garbage", "garbage"});
  auto cfg = fast_config();
  cfg.max_retries = 1;
  JudgeClient client(backend, cfg);
  const auto a = judge_oe_rubric("q", std::nullopt, good_response(), kOeGold, client);
  EXPECT_EQ(a.r_a, 2.0 / 6.0);
  EXPECT_EQ(a.r_p, 0.0);
  EXPECT_EQ(a.r_reason, 2.0 / 6.0);
  EXPECT_EQ(backend->calls(), 1 + 2 * 2);
}

TEST_F(Jury, AccuracyJury) {
  auto backend = ScriptedJudge::by_call_index({"Correctness: 2", "Correctness: 1", "Correctness: 2"});
  JudgeClient client(backend, fast_config());
  EXPECT_DOUBLE_EQ(judge_oe_accuracy("q", good_response(), kOeGold, client), 5.0 / 6.0);
}

TEST_F(Jury, RejectsMcqGold) {
  JudgeClient client(std::make_shared<OfflineJudge>(), fast_config());
  GoldLabels g{"A", "", "", AnswerFormat::kMcq};
  EXPECT_THROW(judge_oe_rubric("q", std::nullopt, good_response(), g, client), ContractError);
  EXPECT_THROW(judge_oe_accuracy("q", good_response(), g, client), ContractError);
}

TEST_F(Jury, EquivalenceUsesZeroTemperature) {
  double seen = -1.0;
  auto backend = std::make_shared<ScriptedJudge>([&](const ChatRequest& r) {
    seen = r.temperature;
    EXPECT_NE(r.messages.at(1).content.find("Ground Truth Answer: 12 N"), std::string::npos);
    return std::string("True");
  });
  JudgeClient client(backend, fast_config());
  EXPECT_TRUE(judge_mcq_equivalence("12 newtons", "12 N", client));
  EXPECT_EQ(seen, 0.0);
}

TEST(Config, Validation) {
  EXPECT_THROW(JudgeClient(std::make_shared<OfflineJudge>(), fast_config(2)), ContractError);
  EXPECT_THROW(JudgeClient(std::make_shared<OfflineJudge>(), fast_config(0)), ContractError);
  EXPECT_THROW(JudgeClient(nullptr, fast_config()), ContractError);
}

TEST_F(Client, RetriesTransportErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  auto backend = std::make_shared<ScriptedJudge>([&](const ChatRequest&) -> std::string {
    if (calls.fetch_add(1) < 2) throw TransportError("connection refused");
    return "True";
  });
  JudgeClient client(backend, fast_config());
  const auto req = client.make_request("mcqa_judge", "x", 0.0, 0, {});
  EXPECT_EQ(client.call(req, parse_equivalence), true);
  EXPECT_EQ(calls.load(), 3);
}

TEST_F(Client, TransportErrorRethrownAfterRetries) {
  auto backend = std::make_shared<ScriptedJudge>(
      [](const ChatRequest&) -> std::string { throw TransportError("down"); });
  auto cfg = fast_config();
  cfg.max_retries = 2;
  JudgeClient client(backend, cfg);
  const auto req = client.make_request("mcqa_judge", "x", 0.0, 0, {});
  EXPECT_THROW(client.call(req, parse_equivalence), TransportError);
  EXPECT_EQ(backend->calls(), 3);
}

TEST_F(Client, CacheHitSkipsBackend) {
  oracle::TempDir dir("cache");
  auto cache = std::make_shared<ResponseCache>(dir.path());
  auto backend = ScriptedJudge::sequence({"True"});
  JudgeClient client(backend, fast_config(), cache);
  const auto req = client.make_request("mcqa_judge", "x", 0.0, 0, {});
  EXPECT_EQ(client.call(req, parse_equivalence), true);
  EXPECT_EQ(client.call(req, parse_equivalence), true);
  EXPECT_EQ(backend->calls(), 1);

  // A fresh client over the same directory is fully cached.
  auto offline = ScriptedJudge::sequence({"False"});
  JudgeClient second(offline, fast_config(), std::make_shared<ResponseCache>(dir.path()));
  EXPECT_EQ(second.call(req, parse_equivalence), true);
  EXPECT_EQ(offline->calls(), 0);
}

TEST_F(Client, UnparseableRepliesAreNotCached) {
  oracle::TempDir dir("cache");
  auto cache = std::make_shared<ResponseCache>(dir.path());
  auto cfg = fast_config();
  cfg.max_retries = 0;
  JudgeClient client(ScriptedJudge::sequence({"??"}), cfg, cache);
  const auto req = client.make_request("mcqa_judge", "x", 0.0, 0, {});
  EXPECT_FALSE(client.call(req, parse_equivalence));
  EXPECT_FALSE(cache->lookup(req));
}

TEST(CacheKey, DependsOnPromptModelTemperatureAndIndex) {
  ChatRequest a;
  a.model = "m";
  a.messages = {{"system", "s"}, {"user", "u"}};
  auto b = a;
  EXPECT_EQ(a.cache_key(), b.cache_key());
  b.call_index = 1;
  EXPECT_NE(a.cache_key(), b.cache_key());
  b = a;
  b.temperature = 0.7;
  EXPECT_NE(a.cache_key(), b.cache_key());
  b = a;
  b.model = "other";
  EXPECT_NE(a.cache_key(), b.cache_key());
  b = a;
  b.messages[1].content = "v";
  EXPECT_NE(a.cache_key(), b.cache_key());
  // Hints are not part of the identity.
  b = a;
  b.hints.answer = "anything";
  EXPECT_EQ(a.cache_key(), b.cache_key());
}

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(OfflineJudge, RubricRules) {
  OfflineJudge judge;
  ChatRequest req;
  req.hints = rubric_hints("q", good_response(), kOeGold);
  req.hints.task = JudgeTask::kRubric;
  const auto v = parse_rubric_verdict(judge.complete(req));
  ASSERT_TRUE(v);
  EXPECT_EQ(*v, (JudgeVerdict{2, 1, 1, 2, v->raw_response}));

  req.hints.think = "";
  const auto no_reason = parse_rubric_verdict(judge.complete(req));
  EXPECT_EQ(no_reason->correctness, 1);
  EXPECT_EQ(no_reason->reasoning, 0);
}

TEST(OfflineJudge, AnswerScoring) {
  EXPECT_EQ(OfflineJudge::score_answer("12 N", "12  n"), 2);
  EXPECT_EQ(OfflineJudge::score_answer("F = 12 N", "12 N"), 1);
  EXPECT_EQ(OfflineJudge::score_answer("7 m", "12 N"), 0);
  EXPECT_EQ(OfflineJudge::score_answer("", "12 N"), 0);
}

TEST(OfflineJudge, FixedReply) {
  OfflineJudge judge("Correctness: 1");
  EXPECT_EQ(judge.complete(ChatRequest{}), "Correctness: 1");
}

TEST(Endpoint, Split) {
  auto e = split_endpoint("http://localhost:8000");
  EXPECT_EQ(e.origin, "http://localhost:8000");
  EXPECT_EQ(e.path, "/v1/chat/completions");
  e = split_endpoint("https://api.example.com/v1/");
  EXPECT_EQ(e.origin, "https://api.example.com");
  EXPECT_EQ(e.path, "/v1/chat/completions");
  e = split_endpoint("http://h:1/proxy/v1/chat/completions");
  EXPECT_EQ(e.path, "/proxy/v1/chat/completions");
  EXPECT_THROW(split_endpoint("localhost:8000"), ContractError);
}

TEST_F(Http, LocalServerRoundTrip) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    const auto user = body.at("messages").at(1).at("content").get<std::string>();
    const std::string reply = user.find("2.5") != std::string::npos ? "True" : "False";
    nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}};
    res.set_content(out.dump(), "application/json");
  });
  server.Post("/broken/v1/chat/completions",
              [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto cfg = fast_config(1);
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.timeout = std::chrono::milliseconds(5000);
  JudgeClient client(std::make_shared<HttpJudgeBackend>(cfg, "secret"), cfg);
  EXPECT_TRUE(judge_mcq_equivalence("2.5 A", "2.5 amperes", client));
  EXPECT_FALSE(judge_mcq_equivalence("3 A", "4 A", client));
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(auth, "Bearer secret");

  auto bad = cfg;
  bad.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
  bad.max_retries = 1;
  JudgeClient failing(std::make_shared<HttpJudgeBackend>(bad, ""), bad);
  EXPECT_THROW(judge_mcq_equivalence("2.5 A", "2.5 A", failing), TransportError);

  server.stop();
  th.join();
}

TEST_F(Http, ConnectionRefusedIsTransportError) {
  httplib::Server probe;
  const int port = probe.bind_to_any_port("127.0.0.1");
  probe.stop();  // port is now closed
  auto cfg = fast_config(1);
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.timeout = std::chrono::milliseconds(500);
  cfg.max_retries = 0;
  HttpJudgeBackend backend(cfg, "");
  ChatRequest req;
  req.messages = {{"user", "x"}};
  EXPECT_THROW(backend.complete(req), TransportError);
}
