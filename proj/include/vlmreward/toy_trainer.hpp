#pragma once

// Desk-scale GRPO training of a ToyPolicy on synthetic tasks:
//   tag_emission  - emit the four tag pairs (format reward)
//   parity_mcq    - prompt "d1 d2" with digits 0..3; gold letter is
//                   A + (d1 + d2) mod 4; gold unit "N", principle
//                   "newton second law"
//   grounding     - emit patch symbols p0..p15 on a 4x4 grid over a 16x16
//                   synthetic image; each symbol is a one-hot attention grid
//                   scored by the foreground-grounding pipeline

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/attention_grounding.hpp"
#include "vlmreward/composite.hpp"
#include "vlmreward/error.hpp"
#include "vlmreward/grpo.hpp"
#include "vlmreward/parallel.hpp"
#include "vlmreward/rule_rewards.hpp"
#include "vlmreward/structured_output.hpp"
#include "vlmreward/toy_policy.hpp"

namespace vlmreward {

enum class ToyTaskKind { kTagEmission, kParityMcq, kGrounding };

struct ToyPrompt {
  std::string id;
  std::size_t context = 0;
  GoldLabels gold;
};

struct ToyTask {
  ToyTaskKind kind = ToyTaskKind::kTagEmission;
  std::string name;
  std::vector<std::string> vocabulary;
  std::vector<ToyPrompt> prompts;
  std::size_t max_length = 16;
  // Grounding task only.
  std::size_t grid_side = 0;
  RgbImage image;
  ForegroundMask mask;

  std::size_t num_contexts() const { return prompts.size(); }
};

namespace detail {

inline std::vector<std::string> tag_vocabulary() {
  return {"<eos>",  "<think>", "</think>", "<answer>", "</answer>", "<unit>",  "</unit>",
          "<principle>", "</principle>", "A", "B", "C", "D", "N", "force", "newton", "second", "law"};
}

inline GoldLabels toy_gold(char letter) {
  return GoldLabels{std::string(1, letter), "N", "newton second law", AnswerFormat::kMcq};
}

// 16x16 white image with a dark square outline covering rows/cols 2..9 and
// a small filled block at rows/cols 12..13.
inline RgbImage grounding_image() {
  RgbImage img(16, 16, 255);
  for (std::size_t r = 2; r <= 9; ++r) {
    for (std::size_t c = 2; c <= 9; ++c) {
      if (r == 2 || r == 9 || c == 2 || c == 9) img.set(r, c, 20, 20, 20);
    }
  }
  for (std::size_t r = 12; r <= 13; ++r) {
    for (std::size_t c = 12; c <= 13; ++c) img.set(r, c, 40, 80, 160);
  }
  return img;
}

}  // namespace detail

inline std::optional<ToyTaskKind> parse_toy_task(std::string_view name) {
  if (name == "tag_emission") return ToyTaskKind::kTagEmission;
  if (name == "parity_mcq") return ToyTaskKind::kParityMcq;
  if (name == "grounding") return ToyTaskKind::kGrounding;
  return std::nullopt;
}

inline ToyTask make_toy_task(ToyTaskKind kind, std::size_t max_length = 0) {
  ToyTask t;
  t.kind = kind;
  switch (kind) {
    case ToyTaskKind::kTagEmission:
      t.name = "tag_emission";
      t.vocabulary = detail::tag_vocabulary();
      t.prompts = {{"tags", 0, detail::toy_gold('A')}};
      t.max_length = max_length ? max_length : 16;
      break;
    case ToyTaskKind::kParityMcq:
      t.name = "parity_mcq";
      t.vocabulary = detail::tag_vocabulary();
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          t.prompts.push_back({std::to_string(a) + " " + std::to_string(b), t.prompts.size(),
                               detail::toy_gold(static_cast<char>('A' + (a + b) % 4))});
        }
      }
      t.max_length = max_length ? max_length : 16;
      break;
    case ToyTaskKind::kGrounding:
      t.name = "grounding";
      t.vocabulary = {"<eos>"};
      for (int i = 0; i < 16; ++i) t.vocabulary.push_back("p" + std::to_string(i));
      t.prompts = {{"image", 0, detail::toy_gold('A')}};
      t.max_length = max_length ? max_length : 6;
      t.grid_side = 4;
      t.image = detail::grounding_image();
      t.mask = fill_whitespace(foreground_mask(t.image));
      break;
  }
  return t;
}

// Weak structural prior standing in for an instruction-tuned base model:
// adds `strength` to the shared logits of each transition along the
// exemplar "<think> </think> <answer> {A|B|C|D} </answer> <unit> N </unit>
// <principle> newton second law </principle> <eos>". Grounding tasks get no
// prior.
inline void apply_format_prior(ToyPolicy& policy, const ToyTask& task, double strength) {
  if (task.kind == ToyTaskKind::kGrounding || strength == 0.0) return;
  const auto& vocab = task.vocabulary;
  auto id = [&](std::string_view sym) {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (vocab[i] == sym) return i;
    }
    throw ContractError("symbol '" + std::string(sym) + "' missing from toy vocabulary");
  };
  auto bump = [&](std::size_t prev, std::size_t next) {
    policy.parameters()[policy.shared_offset(prev) + next] += strength;
  };
  const std::vector<std::string_view> head = {"<think>", "</think>", "<answer>"};
  const std::vector<std::string_view> tail = {"</answer>", "<unit>", "N", "</unit>", "<principle>",
                                              "newton", "second", "law", "</principle>"};
  std::size_t prev = policy.begin_state();
  for (auto sym : head) {
    bump(prev, id(sym));
    prev = id(sym);
  }
  for (auto letter : {"A", "B", "C", "D"}) {
    bump(prev, id(letter));
    bump(id(letter), id(tail.front()));
  }
  prev = id(tail.front());
  for (std::size_t i = 1; i < tail.size(); ++i) {
    bump(prev, id(tail[i]));
    prev = id(tail[i]);
  }
  bump(prev, kEndSymbol);
}

inline ToyPolicy make_toy_policy(const ToyTask& task, double prior_strength = 0.0) {
  ToyPolicy policy(task.vocabulary, task.num_contexts(), task.max_length);
  apply_format_prior(policy, task, prior_strength);
  return policy;
}

// Grounding score of one emitted patch symbol (1-based vocabulary index).
inline double toy_patch_score(const ToyTask& task, std::size_t symbol) {
  const std::size_t g = task.grid_side;
  AttentionGrid grid{Matrix<double>(g, g, 0.0), false};
  grid.values.data().at(symbol - 1) = 1.0;
  const auto map = nearest_resize(minmax_normalize(grid), task.image.height, task.image.width);
  return foreground_score(map, task.mask);
}

// Reward breakdown of one toy completion under `sel`.
inline RewardBreakdown score_toy_completion(const ToyTask& task, const ToyPrompt& prompt,
                                            std::span<const std::size_t> tokens,
                                            const Completion& completion,
                                            const RewardSelection& sel) {
  RewardBreakdown b;
  b.problem_id = prompt.id;
  const auto parsed = parse_structured_response(completion);
  const auto rc = mcq_rubric_components(parsed, prompt.gold, completion);
  b.r_f = rc.r_f;
  b.r_a = rc.r_a;
  b.r_p = rc.r_p;
  b.r_u = rc.r_u;
  b.r_reason = rc.r_reason;
  b.rubric = rubric_reward_traced(rc);
  if (task.kind == ToyTaskKind::kGrounding) {
    std::vector<double> per_token;
    for (std::size_t tok : tokens) {
      if (tok == kEndSymbol) break;
      per_token.push_back(toy_patch_score(task, tok));
    }
    b.r_attn = per_token.empty() ? 0.0 : asm_score(per_token);
  }
  b.combined = combine(b, sel);
  return b;
}

struct StepRecord {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double format = 0.0;
  double accuracy = 0.0;
  double principle = 0.0;
  double unit = 0.0;
  double reasoning = 0.0;
  double rubric = 0.0;
  double attention = 0.0;
  double mean_tokens = 0.0;
  double mean_chars = 0.0;
  double kl = 0.0;        // sampled estimator, mean per sequence
  double kl_exact = 0.0;  // exact per-state KL summed along each sequence, mean
  double loss = 0.0;
  struct Sample {
    std::string text;
    RewardBreakdown breakdown;
    std::size_t char_length = 0;
  };
  std::vector<Sample> samples;  // filled when logging samples
};

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j = {{"step", r.step},
                      {"mean_reward", r.mean_reward},
                      {"components",
                       {{"format", r.format},
                        {"accuracy", r.accuracy},
                        {"principle", r.principle},
                        {"unit", r.unit},
                        {"reasoning", r.reasoning},
                        {"rubric", r.rubric},
                        {"attention", r.attention}}},
                      {"mean_tokens", r.mean_tokens},
                      {"mean_chars", r.mean_chars},
                      {"kl", r.kl},
                      {"kl_exact", r.kl_exact},
                      {"loss", r.loss}};
  if (!r.samples.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& s : r.samples) {
      auto b = to_json(s.breakdown);
      b["text"] = s.text;
      b["char_length"] = s.char_length;
      arr.push_back(std::move(b));
    }
    j["samples"] = std::move(arr);
  }
  return j;
}

struct TrainOptions {
  std::uint64_t seed = 0;
  bool log_samples = false;
  std::size_t jobs = 1;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Runs `steps` GRPO updates (plain gradient descent on the surrogate loss)
// and returns the per-step history. Throws NumericError on divergence.
inline std::vector<StepRecord> train_toy(ToyPolicy& policy, const ToyTask& task,
                                         const RewardSelection& sel, const GrpoConfig& cfg,
                                         std::size_t steps, const TrainOptions& opts = {},
                                         const StepCallback& on_step = {}) {
  validate(cfg);
  if (task.prompts.empty()) throw ContractError("toy task has no prompts");
  if (policy.num_contexts() != task.num_contexts() || policy.vocab_size() != task.vocabulary.size()) {
    throw ContractError("policy does not match the task");
  }
  if (sel.uses(RewardTerm::kAttention) && task.kind != ToyTaskKind::kGrounding) {
    throw ContractError("attention rewards need the grounding task");
  }
  const ToyPolicy reference = policy;
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick_prompt(0, task.prompts.size() - 1);

  std::vector<StepRecord> history;
  history.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<const ToyPrompt*> prompts(cfg.batch_size);
    std::vector<SampledSequence> seqs;
    for (auto& p : prompts) {
      p = &task.prompts[pick_prompt(rng)];
      auto group = sample_sequences(policy, p->context, cfg.group_size, rng);
      seqs.insert(seqs.end(), group.begin(), group.end());
    }

    std::vector<RewardBreakdown> breakdowns(seqs.size());
    std::vector<Completion> completions(seqs.size());
    parallel_for(seqs.size(), opts.jobs, [&](std::size_t i) {
      const auto& prompt = *prompts[i / cfg.group_size];
      completions[i] = policy.to_completion(seqs[i].tokens);
      breakdowns[i] = score_toy_completion(task, prompt, seqs[i].tokens, completions[i], sel);
    });

    std::vector<ScoredSequence> scored(seqs.size());
    for (std::size_t b = 0; b < prompts.size(); ++b) {
      std::vector<double> rewards(cfg.group_size);
      for (std::size_t g = 0; g < cfg.group_size; ++g) {
        rewards[g] = breakdowns[b * cfg.group_size + g].combined;
      }
      const auto adv = group_advantages(rewards, cfg.epsilon);
      for (std::size_t g = 0; g < cfg.group_size; ++g) {
        scored[b * cfg.group_size + g] = {seqs[b * cfg.group_size + g], adv[g]};
      }
    }

    const auto surrogate = grpo_surrogate(policy, reference, scored, cfg.kl_coeff);
    if (!std::isfinite(surrogate.loss)) {
      throw NumericError("toy training diverged at step " + std::to_string(step) +
                         ": loss is not finite");
    }

    StepRecord rec;
    rec.step = step;
    rec.loss = surrogate.loss;
    rec.kl = surrogate.kl;
    const double n = static_cast<double>(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto& b = breakdowns[i];
      rec.mean_reward += b.combined / n;
      rec.format += b.r_f / n;
      rec.accuracy += b.r_a / n;
      rec.principle += b.r_p / n;
      rec.unit += b.r_u / n;
      rec.reasoning += b.r_reason / n;
      rec.rubric += b.rubric.value / n;
      rec.attention += b.r_attn.value_or(0.0) / n;
      rec.mean_tokens += static_cast<double>(completions[i].token_count) / n;
      rec.mean_chars += static_cast<double>(completions[i].char_length()) / n;
      double kl_exact = 0.0;
      std::size_t prev = policy.begin_state();
      for (std::size_t tok : seqs[i].tokens) {
        kl_exact += policy.state_kl(reference, seqs[i].context, prev);
        prev = tok;
      }
      rec.kl_exact += kl_exact / n;
      if (opts.log_samples) {
        rec.samples.push_back({completions[i].text, b, completions[i].char_length()});
      }
    }

    auto& params = policy.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= cfg.learning_rate * surrogate.grad[k];

    if (on_step) on_step(rec);
    history.push_back(std::move(rec));
  }
  return history;
}

struct ToyEvaluation {
  double format = 0.0;
  double accuracy = 0.0;
  double attention = 0.0;
  double combined = 0.0;
  std::size_t samples = 0;
};

// Mean rewards of `per_context` fresh samples for every prompt.
inline ToyEvaluation evaluate_toy(const ToyPolicy& policy, const ToyTask& task, const RewardSelection& sel,
                                  std::size_t per_context, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ToyEvaluation ev;
  for (const auto& prompt : task.prompts) {
    for (std::size_t i = 0; i < per_context; ++i) {
      const auto tokens = policy.sample(prompt.context, rng);
      const auto b = score_toy_completion(task, prompt, tokens, policy.to_completion(tokens), sel);
      ev.format += b.r_f;
      ev.accuracy += b.r_a;
      ev.attention += b.r_attn.value_or(0.0);
      ev.combined += b.combined;
      ++ev.samples;
    }
  }
  if (ev.samples > 0) {
    const double n = static_cast<double>(ev.samples);
    ev.format /= n;
    ev.accuracy /= n;
    ev.attention /= n;
    ev.combined /= n;
  }
  return ev;
}

// Run configuration for desk-scale training. "seed" is required so every
// run is reproducible from its config file.
struct ToyRunConfig {
  std::uint64_t seed = 0;
  ToyTaskKind task = ToyTaskKind::kTagEmission;
  std::string reward = "Fmt";
  std::size_t steps = 200;
  GrpoConfig grpo = toy_grpo_defaults();
  double prior_strength = 1.0;
  bool log_samples = false;

  static GrpoConfig toy_grpo_defaults() {
    GrpoConfig g;
    g.group_size = 8;
    g.batch_size = 16;
    g.learning_rate = 1.0;
    g.kl_coeff = 0.04;
    g.max_completion_length = 16;
    return g;
  }
};

inline std::string_view toy_task_name(ToyTaskKind k) {
  switch (k) {
    case ToyTaskKind::kTagEmission: return "tag_emission";
    case ToyTaskKind::kParityMcq: return "parity_mcq";
    case ToyTaskKind::kGrounding: return "grounding";
  }
  return "";
}

inline ToyRunConfig toy_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("toy config must be a JSON object");
  if (!j.contains("seed")) throw ValidationError("toy config needs a 'seed'");
  ToyRunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("task")) {
      const auto name = j.at("task").get<std::string>();
      const auto k = parse_toy_task(name);
      if (!k) throw ValidationError("unknown toy task '" + name + "' (tag_emission, parity_mcq, grounding)");
      c.task = *k;
    }
    c.reward = j.value("reward", c.reward);
    c.steps = j.value("steps", c.steps);
    c.grpo.group_size = j.value("group_size", c.grpo.group_size);
    c.grpo.batch_size = j.value("batch_size", c.grpo.batch_size);
    c.grpo.learning_rate = j.value("learning_rate", c.grpo.learning_rate);
    c.grpo.kl_coeff = j.value("kl_coeff", c.grpo.kl_coeff);
    c.grpo.max_completion_length = j.value("max_completion_length", c.grpo.max_completion_length);
    c.grpo.epsilon = j.value("epsilon", c.grpo.epsilon);
    c.prior_strength = j.value("prior_strength", c.prior_strength);
    c.log_samples = j.value("log_samples", c.log_samples);
  } catch (const nlohmann::json::type_error& e) {
    throw ValidationError(std::string("toy config field has the wrong type: ") + e.what());
  }
  try {
    validate(c.grpo);
    (void)RewardSelection::parse(c.reward);
  } catch (const ContractError& e) {
    throw ValidationError(e.what());
  }
  return c;
}

inline nlohmann::ordered_json to_json(const ToyRunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["task"] = std::string(toy_task_name(c.task));
  j["reward"] = c.reward;
  j["steps"] = c.steps;
  j["group_size"] = c.grpo.group_size;
  j["batch_size"] = c.grpo.batch_size;
  j["learning_rate"] = c.grpo.learning_rate;
  j["kl_coeff"] = c.grpo.kl_coeff;
  j["max_completion_length"] = c.grpo.max_completion_length;
  j["epsilon"] = c.grpo.epsilon;
  j["prior_strength"] = c.prior_strength;
  j["log_samples"] = c.log_samples;
  return j;
}

// Builds the task and a fresh policy, then trains.
inline std::vector<StepRecord> run_toy(const ToyRunConfig& c, std::size_t jobs = 1,
                                       const StepCallback& on_step = {}) {
  const auto task = make_toy_task(c.task, c.grpo.max_completion_length);
  auto policy = make_toy_policy(task, c.prior_strength);
  return train_toy(policy, task, RewardSelection::parse(c.reward), c.grpo, c.steps,
                   TrainOptions{c.seed, c.log_samples, jobs}, on_step);
}

}  // namespace vlmreward
