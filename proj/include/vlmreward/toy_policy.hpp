#pragma once

// Tabular autoregressive policy used as a desk-scale stand-in for a VLM.
//
// The next-symbol logits are shared[prev][sym] + specific[context][prev][sym]:
// the shared table learns structure common to all prompts, the per-context
// table learns prompt-dependent choices. Symbol 0 is the end symbol.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vlmreward/error.hpp"
#include "vlmreward/grpo.hpp"
#include "vlmreward/structured_output.hpp"

namespace vlmreward {

inline constexpr std::size_t kEndSymbol = 0;

class ToyPolicy {
 public:
  ToyPolicy(std::vector<std::string> vocabulary, std::size_t num_contexts, std::size_t max_length)
      : vocab_(std::move(vocabulary)), contexts_(num_contexts), max_length_(max_length) {
    if (vocab_.size() < 2) throw ContractError("toy vocabulary needs the end symbol and one more");
    if (contexts_ == 0 || max_length_ == 0) throw ContractError("toy policy dimensions must be positive");
    params_.assign(table_size() * (1 + contexts_), 0.0);
  }

  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t num_contexts() const { return contexts_; }
  std::size_t max_length() const { return max_length_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::size_t begin_state() const { return vocab_.size(); }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // Offsets of the shared and context-specific logit rows for a state.
  std::size_t shared_offset(std::size_t prev) const { return prev * vocab_.size(); }
  std::size_t specific_offset(std::size_t context, std::size_t prev) const {
    return table_size() * (1 + context) + prev * vocab_.size();
  }

  std::vector<double> logits(std::size_t context, std::size_t prev) const {
    check_state(context, prev);
    std::vector<double> out(vocab_.size());
    const auto s = shared_offset(prev);
    const auto p = specific_offset(context, prev);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = params_[s + v] + params_[p + v];
    return out;
  }

  std::vector<double> probs(std::size_t context, std::size_t prev) const {
    auto z = logits(context, prev);
    double max = z[0];
    for (double v : z) max = std::max(max, v);
    double sum = 0.0;
    for (double& v : z) {
      v = std::exp(v - max);
      sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
  }

  // Samples until the end symbol (included) or max_length symbols.
  template <typename Rng>
  std::vector<std::size_t> sample(std::size_t context, Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::size_t> out;
    std::size_t prev = begin_state();
    while (out.size() < max_length_) {
      const auto p = probs(context, prev);
      const double u = unif(rng);
      double acc = 0.0;
      std::size_t pick = p.size() - 1;
      for (std::size_t v = 0; v < p.size(); ++v) {
        acc += p[v];
        if (u < acc) {
          pick = v;
          break;
        }
      }
      // Guard against rounding past the last non-zero entry.
      while (p[pick] == 0.0 && pick > 0) --pick;
      out.push_back(pick);
      if (pick == kEndSymbol) break;
      prev = pick;
    }
    return out;
  }

  std::vector<double> token_logprobs(std::size_t context, std::span<const std::size_t> tokens) const {
    std::vector<double> out;
    out.reserve(tokens.size());
    std::size_t prev = begin_state();
    for (std::size_t tok : tokens) {
      out.push_back(std::log(probs(context, prev).at(tok)));
      prev = tok;
    }
    return out;
  }

  // grad += sum_t weights[t] * d log pi(tokens[t] | state_t) / d params.
  void accumulate_grad(std::size_t context, std::span<const std::size_t> tokens,
                       std::span<const double> weights, std::span<double> grad) const {
    if (weights.size() != tokens.size() || grad.size() != params_.size()) {
      throw ContractError("gradient accumulation shape mismatch");
    }
    std::size_t prev = begin_state();
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const auto p = probs(context, prev);
      const auto s = shared_offset(prev);
      const auto c = specific_offset(context, prev);
      for (std::size_t v = 0; v < p.size(); ++v) {
        const double d = weights[t] * ((v == tokens[t] ? 1.0 : 0.0) - p[v]);
        grad[s + v] += d;
        grad[c + v] += d;
      }
      prev = tokens[t];
    }
  }

  // Exact KL(this || ref) of the next-symbol distributions at one state.
  double state_kl(const ToyPolicy& ref, std::size_t context, std::size_t prev) const {
    const auto p = probs(context, prev);
    const auto q = ref.probs(context, prev);
    double kl = 0.0;
    for (std::size_t v = 0; v < p.size(); ++v) {
      if (p[v] > 0.0) kl += p[v] * (std::log(p[v]) - std::log(q[v]));
    }
    return kl;
  }

  // Symbols joined by single spaces; the end symbol is dropped.
  std::string detokenize(std::span<const std::size_t> tokens) const {
    std::string out;
    for (std::size_t tok : tokens) {
      if (tok == kEndSymbol) break;
      if (!out.empty()) out.push_back(' ');
      out += vocab_.at(tok);
    }
    return out;
  }

  Completion to_completion(std::span<const std::size_t> tokens) const {
    std::size_t n = 0;
    while (n < tokens.size() && tokens[n] != kEndSymbol) ++n;
    return Completion(detokenize(tokens), n);
  }

 private:
  std::size_t table_size() const { return (vocab_.size() + 1) * vocab_.size(); }

  void check_state(std::size_t context, std::size_t prev) const {
    if (context >= contexts_ || prev > vocab_.size()) throw ContractError("toy policy state out of range");
  }

  std::vector<std::string> vocab_;
  std::size_t contexts_;
  std::size_t max_length_;
  std::vector<double> params_;
};

struct SampledSequence {
  std::size_t context = 0;
  std::vector<std::size_t> tokens;
};

template <typename Rng>
std::vector<SampledSequence> sample_sequences(const ToyPolicy& policy, std::size_t context,
                                              std::size_t group_size, Rng& rng) {
  std::vector<SampledSequence> out(group_size);
  for (auto& s : out) {
    s.context = context;
    s.tokens = policy.sample(context, rng);
  }
  return out;
}

// G independent completions for one prompt context; reproducible for a seed.
inline std::vector<Completion> sample_group(const ToyPolicy& policy, std::size_t context,
                                            std::size_t group_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Completion> out;
  for (const auto& s : sample_sequences(policy, context, group_size, rng)) {
    out.push_back(policy.to_completion(s.tokens));
  }
  return out;
}

struct ScoredSequence {
  SampledSequence sequence;
  double advantage = 0.0;
};

struct SurrogateResult {
  double loss = 0.0;
  double kl = 0.0;  // mean per-sequence estimator
  std::vector<double> grad;
};

// Mean over sequences of -A * log pi(y) + beta * KL_est(y), with its gradient
// in the policy parameters. Samples are held fixed.
inline SurrogateResult grpo_surrogate(const ToyPolicy& policy, const ToyPolicy& reference,
                                      std::span<const ScoredSequence> batch, double kl_coeff) {
  SurrogateResult out;
  out.grad.assign(policy.parameters().size(), 0.0);
  if (batch.empty()) return out;
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> weights;
  for (const auto& item : batch) {
    const auto& s = item.sequence;
    const auto cur = policy.token_logprobs(s.context, s.tokens);
    const auto ref = reference.token_logprobs(s.context, s.tokens);
    double lp = 0.0;
    for (double v : cur) lp += v;
    const double kl = kl_penalty(cur, ref);
    out.loss += scale * (-item.advantage * lp + kl_coeff * kl);
    out.kl += scale * kl;
    weights.resize(cur.size());
    for (std::size_t t = 0; t < cur.size(); ++t) {
      // d/dcur [exp(ref-cur) - (ref-cur) - 1] = 1 - exp(ref-cur)
      weights[t] = scale * (-item.advantage + kl_coeff * (1.0 - std::exp(ref[t] - cur[t])));
    }
    policy.accumulate_grad(s.context, s.tokens, weights, out.grad);
  }
  return out;
}

}  // namespace vlmreward
