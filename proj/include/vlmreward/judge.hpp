#pragma once

// LLM-judge client: request/verdict types, retry and caching policy, jury
// aggregation, and the deterministic offline judge used without a network.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/error.hpp"
#include "vlmreward/hash.hpp"
#include "vlmreward/logging.hpp"
#include "vlmreward/prompts.hpp"
#include "vlmreward/rule_rewards.hpp"
#include "vlmreward/structured_output.hpp"
#include "vlmreward/text.hpp"

namespace vlmreward {

// --- verdicts ----------------------------------------------------------------

struct JudgeVerdict {
  int correctness = 0;  // {0,1,2}
  int principle = 0;    // {0,1}
  int unit = 0;         // {0,1}
  int reasoning = 0;    // {0,1,2}
  std::string raw_response;

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

struct AggregatedVerdict {
  double r_a = 0.0;
  double r_p = 0.0;
  double r_u = 0.0;
  double r_reason = 0.0;
  int n_judges = 0;
};

// Averages the graded dimensions and majority-votes the binary ones. With an
// even jury a tie votes 0.
inline AggregatedVerdict aggregate_verdicts(const std::vector<JudgeVerdict>& verdicts) {
  if (verdicts.empty()) throw ContractError("cannot aggregate an empty jury");
  AggregatedVerdict out;
  out.n_judges = static_cast<int>(verdicts.size());
  int correctness = 0;
  int reasoning = 0;
  int principle_votes = 0;
  int unit_votes = 0;
  for (const auto& v : verdicts) {
    correctness += v.correctness;
    reasoning += v.reasoning;
    principle_votes += v.principle;
    unit_votes += v.unit;
  }
  const double k = static_cast<double>(verdicts.size());
  out.r_a = static_cast<double>(correctness) / k / 2.0;
  out.r_reason = static_cast<double>(reasoning) / k / 2.0;
  out.r_p = 2 * principle_votes > out.n_judges ? 1.0 : 0.0;
  out.r_u = 2 * unit_votes > out.n_judges ? 1.0 : 0.0;
  return out;
}

namespace detail {

// Finds "<key>: <int>" on its own line, case-insensitive on the key.
inline std::optional<int> labeled_int(std::string_view reply, std::string_view key) {
  std::istringstream in{std::string(reply)};
  std::string line;
  std::optional<int> found;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    const auto colon = t.find(':');
    if (colon == std::string_view::npos) continue;
    if (!text::iequals(text::trim(t.substr(0, colon)), key)) continue;
    const auto value = text::trim(t.substr(colon + 1));
    if (value.size() != 1 || value[0] < '0' || value[0] > '9') return std::nullopt;
    if (found) return std::nullopt;
    found = value[0] - '0';
  }
  return found;
}

}  // namespace detail

inline std::optional<JudgeVerdict> parse_rubric_verdict(std::string_view reply) {
  const auto c = detail::labeled_int(reply, "Correctness");
  const auto p = detail::labeled_int(reply, "Principle");
  const auto u = detail::labeled_int(reply, "Unit");
  const auto r = detail::labeled_int(reply, "Reasoning");
  if (!c || !p || !u || !r || *c > 2 || *p > 1 || *u > 1 || *r > 2) return std::nullopt;
  return JudgeVerdict{*c, *p, *u, *r, std::string(reply)};
}

inline std::optional<int> parse_correctness(std::string_view reply) {
  const auto c = detail::labeled_int(reply, "Correctness");
  if (!c || *c > 2) return std::nullopt;
  return c;
}

inline std::optional<bool> parse_equivalence(std::string_view reply) {
  const auto t = text::trim(reply);
  if (text::iequals(t, "True")) return true;
  if (text::iequals(t, "False")) return false;
  return std::nullopt;
}

// --- requests and backends ----------------------------------------------------

struct ChatMessage {
  std::string role;
  std::string content;
};

enum class JudgeTask { kGeneric, kRubric, kAccuracy, kEquivalence, kUnitExtract, kOntology, kMapping };

// Structured view of what a request asks, for backends that do not read the
// prompt text (the offline judge). Never sent over the wire.
struct JudgeHints {
  JudgeTask task = JudgeTask::kGeneric;
  std::string question;
  std::string think;
  std::string answer;
  std::string unit;
  std::string principle;
  std::string gold_answer;
  std::string gold_unit;
  std::string gold_principle;
  std::string raw_label;
  std::string subfield;
  std::vector<std::string> batch;
  std::map<std::string, std::vector<std::string>> categories;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int call_index = 0;
  JudgeHints hints;

  nlohmann::json messages_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
    return arr;
  }

  // Cache identity: (prompt hash, model, temperature, call index).
  std::string prompt_hash() const { return sha256_hex(messages_json().dump()); }
  std::string cache_key() const {
    std::ostringstream k;
    k << prompt_hash() << '\n' << model << '\n' << temperature << '\n' << call_index;
    return sha256_hex(k.str());
  }
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Returns the assistant message content. Throws TransportError on
  // connection or HTTP failures.
  virtual std::string complete(const ChatRequest& request) = 0;
};

// Replies computed by a user function; used for scripted juries in tests.
class ScriptedJudge : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit ScriptedJudge(Fn fn) : fn_(std::move(fn)) {}

  // Replies are handed out in order, cycling at the end.
  static std::shared_ptr<ScriptedJudge> sequence(std::vector<std::string> replies) {
    auto state = std::make_shared<std::pair<std::mutex, std::size_t>>();
    return std::make_shared<ScriptedJudge>(
        [replies = std::move(replies), state](const ChatRequest&) {
          std::lock_guard lock(state->first);
          return replies[state->second++ % replies.size()];
        });
  }

  // Reply k goes to the request with call_index k; deterministic under
  // concurrent jury calls.
  static std::shared_ptr<ScriptedJudge> by_call_index(std::vector<std::string> replies) {
    return std::make_shared<ScriptedJudge>([replies = std::move(replies)](const ChatRequest& r) {
      return replies.at(static_cast<std::size_t>(r.call_index) % replies.size());
    });
  }

  std::string complete(const ChatRequest& request) override {
    calls_.fetch_add(1);
    return fn_(request);
  }
  int calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::atomic<int> calls_{0};
};

namespace detail {

// Fraction of gold words recovered by the prediction.
inline double token_recall(std::string_view predicted, std::string_view gold) {
  const auto gw = text::words(gold);
  if (gw.empty()) return 0.0;
  const auto pw = text::words(predicted);
  const std::set<std::string> ps(pw.begin(), pw.end());
  const std::set<std::string> gs(gw.begin(), gw.end());
  std::size_t hit = 0;
  for (const auto& w : gs) hit += ps.count(w);
  return static_cast<double>(hit) / static_cast<double>(gs.size());
}

inline std::string snake_case(std::string_view s) {
  std::string out;
  for (const auto& w : text::words(s)) {
    if (!out.empty()) out.push_back('_');
    out += w;
  }
  return out;
}

}  // namespace detail

// Deterministic rule-based judge. Answers: exact (normalized) match scores 2,
// gold-token recall >= 0.5 scores 1, else 0. Principle and unit use the rule
// matchers. Reasoning: empty think 0, fewer than 8 words 1, else 2; full
// correctness is withheld when reasoning is 0.
class OfflineJudge : public ChatBackend {
 public:
  OfflineJudge() = default;
  // Every request is answered with `fixed_reply`.
  explicit OfflineJudge(std::string fixed_reply) : fixed_reply_(std::move(fixed_reply)) {}

  static int score_answer(std::string_view predicted, std::string_view gold) {
    const auto p = text::normalize_spacing(predicted);
    const auto g = text::normalize_spacing(gold);
    if (!p.empty() && p == g) return 2;
    return detail::token_recall(p, g) >= 0.5 ? 1 : 0;
  }

  static int score_reasoning(std::string_view think) {
    const auto n = text::words(think).size();
    if (n == 0) return 0;
    return n < 8 ? 1 : 2;
  }

  std::string complete(const ChatRequest& req) override {
    if (fixed_reply_) return *fixed_reply_;
    const auto& h = req.hints;
    switch (h.task) {
      case JudgeTask::kRubric: {
        const int reasoning = score_reasoning(h.think);
        int correctness = score_answer(h.answer, h.gold_answer);
        if (reasoning == 0) correctness = std::min(correctness, 1);
        std::ostringstream out;
        out << "Correctness: " << correctness << "\n"
            << "Principle: " << principle_overlap_reward(h.principle, h.gold_principle)
            << "\n"
            << "Unit: " << unit_consistency_reward(h.unit, h.gold_unit) << "\n"
            << "Reasoning: " << reasoning;
        return out.str();
      }
      case JudgeTask::kAccuracy:
        return "Correctness: " + std::to_string(score_answer(h.answer, h.gold_answer));
      case JudgeTask::kEquivalence:
        return score_answer(h.answer, h.gold_answer) > 0 ? "True" : "False";
      case JudgeTask::kUnitExtract: {
        nlohmann::json j = {{"principle", h.gold_principle.empty() ? h.subfield : h.gold_principle},
                            {"unit_type", h.gold_unit.empty() ? "none" : h.gold_unit}};
        return j.dump();
      }
      case JudgeTask::kOntology: {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& item : h.batch) {
          const auto name = detail::snake_case(item);
          if (name.empty()) continue;
          j[name].push_back(item);
        }
        return j.dump();
      }
      case JudgeTask::kMapping:
        return map_label(h);
      case JudgeTask::kGeneric:
        break;
    }
    return "";
  }

 private:
  static std::string map_label(const JudgeHints& h) {
    const auto raw = text::normalize_spacing(h.raw_label);
    if (raw.empty()) return "none";
    for (const auto& [name, members] : h.categories) {
      if (text::normalize_spacing(name) == raw || detail::snake_case(name) == detail::snake_case(raw)) {
        return name;
      }
      for (const auto& m : members) {
        if (text::normalize_spacing(m) == raw) return name;
      }
    }
    for (const auto& [name, members] : h.categories) {
      for (const auto& m : members) {
        if (unit_consistency_reward(raw, m) == 1.0) return name;
      }
    }
    return "none";
  }

  std::optional<std::string> fixed_reply_;
};

// --- configuration, cache, client --------------------------------------------

struct JudgeConfig {
  std::string endpoint_url = "http://localhost:8000";
  std::string model_name = "gpt-oss-120b";
  int n_judges = 3;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  double temperature = 0.7;
  double equivalence_temperature = 0.0;
  int max_in_flight = 8;
  std::chrono::milliseconds backoff_initial{500};
};

inline void validate(const JudgeConfig& cfg) {
  if (cfg.n_judges <= 0 || cfg.n_judges % 2 == 0) {
    throw ContractError("n_judges must be a positive odd number");
  }
  if (cfg.timeout.count() <= 0) throw ContractError("judge timeout must be positive");
  if (cfg.max_retries < 0) throw ContractError("max_retries must be non-negative");
  if (cfg.max_in_flight <= 0) throw ContractError("max_in_flight must be positive");
}

// Content-addressed store of judge replies: <dir>/<key[0:2]>/<key>.json.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::optional<std::string> lookup(const ChatRequest& req) const {
    const auto path = path_for(req.cache_key());
    std::lock_guard lock(mu_);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(in);
      return j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

  void store(const ChatRequest& req, const std::string& response) const {
    const auto key = req.cache_key();
    const auto path = path_for(key);
    nlohmann::json j = {{"key", key},
                        {"prompt_sha256", req.prompt_hash()},
                        {"model", req.model},
                        {"temperature", req.temperature},
                        {"call_index", req.call_index},
                        {"response", response}};
    std::lock_guard lock(mu_);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

class JudgeClient {
 public:
  JudgeClient(std::shared_ptr<ChatBackend> backend, JudgeConfig cfg,
              std::shared_ptr<ResponseCache> cache = nullptr)
      : backend_(std::move(backend)),
        cfg_(std::move(cfg)),
        cache_(std::move(cache)),
        in_flight_(std::make_unique<std::counting_semaphore<1024>>(
            std::clamp(cfg_.max_in_flight, 1, 1024))) {
    validate(cfg_);
    if (!backend_) throw ContractError("judge client needs a backend");
  }

  const JudgeConfig& config() const { return cfg_; }

  // Sends `req` and parses the reply. Transport failures back off
  // exponentially and rethrow after max_retries; unparseable replies are
  // re-requested and yield nullopt once retries are exhausted. Only replies
  // that parse are cached.
  template <typename Parse>
  auto call(const ChatRequest& req, Parse parse) const
      -> std::invoke_result_t<Parse, std::string_view> {
    if (cache_) {
      if (auto hit = cache_->lookup(req)) {
        if (auto parsed = parse(std::string_view(*hit))) return parsed;
      }
    }
    auto delay = cfg_.backoff_initial;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      std::string reply;
      try {
        in_flight_->acquire();
        struct Release {
          std::counting_semaphore<1024>* s;
          ~Release() { s->release(); }
        } release{in_flight_.get()};
        reply = backend_->complete(req);
      } catch (const TransportError& e) {
        if (attempt == cfg_.max_retries) throw;
        log_warning(std::string("judge transport error, retrying: ") + e.what());
        std::this_thread::sleep_for(delay);
        delay *= 2;
        continue;
      }
      if (auto parsed = parse(std::string_view(reply))) {
        if (cache_) cache_->store(req, reply);
        return parsed;
      }
      log_warning("unparseable judge reply (attempt " + std::to_string(attempt + 1) +
                  "): " + reply.substr(0, 120));
    }
    return {};
  }

  ChatRequest make_request(std::string_view system_template, std::string user_content,
                           double temperature, int call_index, JudgeHints hints) const {
    ChatRequest req;
    req.model = cfg_.model_name;
    req.messages = {{"system", prompts::render(system_template)},
                    {"user", std::move(user_content)}};
    req.temperature = temperature;
    req.call_index = call_index;
    req.hints = std::move(hints);
    return req;
  }

  // Runs fn(k) for k in [0, n) concurrently; results in call order.
  template <typename Fn>
  auto fan_out(int n, Fn fn) const {
    using R = std::invoke_result_t<Fn, int>;
    std::vector<std::future<R>> futures;
    futures.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) futures.push_back(std::async(std::launch::async, fn, k));
    std::vector<R> out;
    out.reserve(futures.size());
    for (auto& f : futures) out.push_back(f.get());
    return out;
  }

 private:
  std::shared_ptr<ChatBackend> backend_;
  JudgeConfig cfg_;
  std::shared_ptr<ResponseCache> cache_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

// --- jury operations ----------------------------------------------------------

inline JudgeHints rubric_hints(std::string_view question, const ParsedResponse& parsed,
                               const GoldLabels& gold) {
  JudgeHints h;
  h.question = question;
  h.think = parsed.content(Tag::kThink);
  h.answer = parsed.content(Tag::kAnswer);
  h.unit = parsed.content(Tag::kUnit);
  h.principle = parsed.content(Tag::kPrinciple);
  h.gold_answer = gold.answer;
  h.gold_unit = gold.unit;
  h.gold_principle = gold.principle;
  return h;
}

// K independent rubric judgments of one OE completion; failed calls count as
// all-zero verdicts.
inline std::vector<JudgeVerdict> judge_oe_rubric_verdicts(
    std::string_view question, const std::optional<std::string>& image_ref,
    const ParsedResponse& parsed, const GoldLabels& gold, const JudgeClient& client) {
  if (gold.format != AnswerFormat::kOe) throw ContractError("rubric jury requires an OE gold label");
  auto hints = rubric_hints(question, parsed, gold);
  hints.task = JudgeTask::kRubric;
  std::string q(question);
  if (image_ref) q += "\n[image: " + *image_ref + "]";
  const auto user = prompts::render("oe_rubric_judge_user",
                                    {{"question", q},
                                     {"gold_answer", gold.answer},
                                     {"gold_unit", gold.unit},
                                     {"gold_principle", gold.principle},
                                     {"think", hints.think},
                                     {"answer", hints.answer},
                                     {"unit", hints.unit},
                                     {"principle", hints.principle}});
  return client.fan_out(client.config().n_judges, [&](int k) {
    const auto req = client.make_request("oe_rubric_judge", user, client.config().temperature, k, hints);
    auto v = client.call(req, parse_rubric_verdict);
    if (!v) {
      log_warning("rubric judge call " + std::to_string(k) + " failed; scoring as zeros");
      return JudgeVerdict{};
    }
    return *v;
  });
}

inline AggregatedVerdict judge_oe_rubric(std::string_view question,
                                         const std::optional<std::string>& image_ref,
                                         const ParsedResponse& parsed, const GoldLabels& gold,
                                         const JudgeClient& client) {
  return aggregate_verdicts(judge_oe_rubric_verdicts(question, image_ref, parsed, gold, client));
}

// OE answer accuracy: mean of K correctness scores on the 0/1/2 scale, halved.
inline double judge_oe_accuracy(std::string_view question, const ParsedResponse& parsed,
                                const GoldLabels& gold, const JudgeClient& client) {
  if (gold.format != AnswerFormat::kOe) throw ContractError("accuracy jury requires an OE gold label");
  auto hints = rubric_hints(question, parsed, gold);
  hints.task = JudgeTask::kAccuracy;
  const auto user = prompts::render(
      "oe_accuracy_judge_user",
      {{"question", std::string(question)}, {"gold_answer", gold.answer}, {"answer", hints.answer}});
  const auto scores = client.fan_out(client.config().n_judges, [&](int k) {
    const auto req = client.make_request("oe_accuracy_judge", user, client.config().temperature, k, hints);
    auto c = client.call(req, parse_correctness);
    if (!c) log_warning("accuracy judge call " + std::to_string(k) + " failed; scoring as 0");
    return c.value_or(0);
  });
  double sum = 0.0;
  for (int s : scores) sum += s;
  return sum / static_cast<double>(scores.size()) / 2.0;
}

// Semantic equivalence of a free-form answer against the ground truth.
inline bool judge_mcq_equivalence(std::string_view llm_answer, std::string_view gold_answer,
                                  const JudgeClient& client) {
  JudgeHints hints;
  hints.task = JudgeTask::kEquivalence;
  hints.answer = llm_answer;
  hints.gold_answer = gold_answer;
  const auto user = prompts::render(
      "mcqa_judge_user",
      {{"response", std::string(llm_answer)}, {"ground_truth", std::string(gold_answer)}});
  const auto req = client.make_request("mcqa_judge", user, client.config().equivalence_temperature, 0,
                                       std::move(hints));
  const auto verdict = client.call(req, parse_equivalence);
  if (!verdict) {
    log_warning("equivalence judge reply unparseable; treating as not equivalent");
    return false;
  }
  return *verdict;
}

}  // namespace vlmreward
