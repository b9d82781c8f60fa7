#pragma once

// Group-relative advantages, the sampled KL estimator and the GRPO loss.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vlmreward/error.hpp"
#include "vlmreward/structured_output.hpp"

namespace vlmreward {

struct GrpoConfig {
  std::size_t group_size = 8;
  double kl_coeff = 0.04;
  double learning_rate = 1e-5;
  std::size_t batch_size = 128;
  std::size_t max_completion_length = 512;
  double epsilon = 1e-6;
};

inline void validate(const GrpoConfig& cfg) {
  if (cfg.group_size < 2) throw ContractError("group_size must be at least 2");
  if (cfg.kl_coeff < 0.0) throw ContractError("kl_coeff must be non-negative");
  if (!(cfg.learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (cfg.batch_size == 0) throw ContractError("batch_size must be positive");
  if (cfg.max_completion_length == 0) throw ContractError("max_completion_length must be positive");
  if (!(cfg.epsilon > 0.0)) throw ContractError("epsilon must be positive");
}

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline GroupStats group_stats(std::span<const double> rewards) {
  GroupStats s;
  if (rewards.empty()) return s;
  const double n = static_cast<double>(rewards.size());
  s.mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

// (r_i - mean) / std with the population std; all zeros when std <= eps.
inline std::vector<double> group_advantages(std::span<const double> rewards, double eps = 1e-6) {
  if (rewards.size() < 2) throw ContractError("group advantages need at least two rewards");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw NumericError("non-finite reward in group");
  }
  const auto s = group_stats(rewards);
  std::vector<double> out(rewards.size(), 0.0);
  if (s.std <= eps) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - s.mean) / s.std;
  return out;
}

// Per-token estimator exp(ref - cur) - (ref - cur) - 1, summed over tokens.
inline double kl_penalty(std::span<const double> logprobs, std::span<const double> ref_logprobs) {
  if (logprobs.size() != ref_logprobs.size()) {
    throw ContractError("logprob sequences differ in length");
  }
  double kl = 0.0;
  for (std::size_t t = 0; t < logprobs.size(); ++t) {
    const double d = ref_logprobs[t] - logprobs[t];
    if (!std::isfinite(d)) throw NumericError("non-finite logprob in KL estimate");
    kl += std::expm1(d) - d;
  }
  return kl;
}

struct GroupRollout {
  std::string prompt_id;
  std::vector<Completion> completions;
  std::vector<double> rewards;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> advantages;
  // Per-token log-probabilities under the current and reference policies.
  std::vector<std::vector<double>> token_logprobs;
  std::vector<std::vector<double>> ref_token_logprobs;

  std::size_t size() const { return completions.size(); }

  double logprob(std::size_t i) const {
    return std::accumulate(token_logprobs[i].begin(), token_logprobs[i].end(), 0.0);
  }
  double ref_logprob(std::size_t i) const {
    return std::accumulate(ref_token_logprobs[i].begin(), ref_token_logprobs[i].end(), 0.0);
  }
};

inline void validate(const GroupRollout& g) {
  const std::size_t n = g.completions.size();
  if (g.rewards.size() != n || g.advantages.size() != n || g.token_logprobs.size() != n ||
      g.ref_token_logprobs.size() != n) {
    throw ContractError("group rollout lists differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (g.token_logprobs[i].size() != g.ref_token_logprobs[i].size()) {
      throw ContractError("logprob sequences differ in length for completion " + std::to_string(i));
    }
  }
}

inline GroupRollout make_group_rollout(std::string prompt_id, std::vector<Completion> completions,
                                       std::vector<double> rewards,
                                       std::vector<std::vector<double>> token_logprobs,
                                       std::vector<std::vector<double>> ref_token_logprobs,
                                       double eps = 1e-6) {
  GroupRollout g;
  g.prompt_id = std::move(prompt_id);
  g.completions = std::move(completions);
  g.rewards = std::move(rewards);
  const auto s = group_stats(g.rewards);
  g.mean = s.mean;
  g.std = s.std;
  g.advantages = group_advantages(g.rewards, eps);
  g.token_logprobs = std::move(token_logprobs);
  g.ref_token_logprobs = std::move(ref_token_logprobs);
  validate(g);
  return g;
}

// Group mean of -A_i * log pi(y_i) + beta * KL_i.
inline double grpo_loss(const GroupRollout& g, const GrpoConfig& cfg) {
  validate(g);
  if (g.size() == 0) throw ContractError("empty group");
  double loss = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    loss += -g.advantages[i] * g.logprob(i) +
            cfg.kl_coeff * kl_penalty(g.token_logprobs[i], g.ref_token_logprobs[i]);
  }
  loss /= static_cast<double>(g.size());
  if (!std::isfinite(loss)) throw NumericError("non-finite GRPO loss");
  return loss;
}

}  // namespace vlmreward
