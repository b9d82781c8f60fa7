#pragma once

// Prompt templates. Slots use Python str.format syntax: "{name}" is replaced,
// "{{" and "}}" render as literal braces.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vlmreward/error.hpp"

namespace vlmreward::prompts {

// clang-format off
inline constexpr std::string_view k_mcqa_rubric_system = R"PROMPT(You are a physics expert. Solve step by step. Format your response exactly as:
<think>step-by-step reasoning</think>
<answer>A or B or C or D</answer>
<unit>physical unit of the answer, or 'dimensionless' if none</unit>
<principle>the governing physics principle or law applied</principle>)PROMPT";

inline constexpr std::string_view k_oe_rubric_system = R"PROMPT(You are a physics expert. Solve step by step. Format your response exactly as:
<think>step-by-step reasoning</think>
<answer>your numerical or descriptive answer</answer>
<unit>physical unit of the answer, or 'dimensionless' if none</unit>
<principle>the governing physics principle or law applied</principle>)PROMPT";

inline constexpr std::string_view k_oe_system = R"PROMPT(A conversation between User and Assistant. The user asks a question, and the Assistant solves it. The assistant first thinks about the reasoning process in the mind and then provides the user with the answer. The reasoning process and answer are enclosed within <think> </think> and <answer> </answer> tags, respectively, i.e., <think> reasoning process here </think><answer> answer here </answer>)PROMPT";

inline constexpr std::string_view k_mcqa_system = R"PROMPT(A conversation between User and Assistant. The user asks a question, and the Assistant solves it. The assistant first thinks about the reasoning process in the mind and then provides the user with the answer. The reasoning process and answer are enclosed within <think> </think> and <answer> </answer> tags, respectively, i.e., <think> reasoning process here </think><answer> answer here </answer>
The answer should be one of the provided options. You should only output the final answer as A, B, C, or D enclosed within <answer> </answer> tags and after the <think> </think> tags.)PROMPT";

inline constexpr std::string_view k_label_mapping = R"PROMPT(You are a physics expert.

Map the following physics principle description to ONE category.

Categories:
{CATEGORIES}

Rules:
- Choose the closest matching concept
- Ignore wording differences
- Be strict: output must be one of the categories
- If invalid or unclear -> return none

Input:
{raw}

Subfield: {subfield}

Return ONLY the category name.)PROMPT";

inline constexpr std::string_view k_ontology_cluster = R"PROMPT(You are a physics expert building a clean ontology.

Below is a list of raw physics principle descriptions.
They contain redundancy and variation.

Your task:
Cluster them into canonical physics principles.

Rules:
- Merge similar concepts (e.g. Snell's law, law of refraction)
- Keep categories general but meaningful
- Aim for 15-25 total categories
- Use short snake_case names
- Assign every item to ONE category
- Ignore invalid or refusal responses (e.g., I cannot assist)

Input:
{batch}

Return ONLY JSON:
{{
  category_name: [item1, item2]
}})PROMPT";

inline constexpr std::string_view k_unit_extract = R"PROMPT(You are a physics expert.

Given a physics problem, identify:

1. The main physical principle used
2. The type of the final answer (unit type)

Be concise but accurate.

Subfield: {subfield}

Question:
{question}

Options:
{options}

Return ONLY JSON:
{{
  principle: ...,
  unit_type: ...
}})PROMPT";

inline constexpr std::string_view k_mcqa_judge = R"PROMPT(You are an expert judge tasked with determining if two answers convey the same meaning or information, even if they use different wording.

Compare the LLM Response with the Ground Truth Answer and determine if they are equivalent in meaning.

Guidelines:
- Focus on the core content and meaning, not exact wording
- Consider abbreviations, shortened forms, and partial matches as potentially equivalent
- If the LLM Response contains the key information from the Ground Truth Answer, consider them equivalent
- If the LLM Response contradicts or provides different information than the Ground Truth Answer, they are not equivalent
- The LLM Response may contain lengthy explanations, reasoning, or additional context - this is acceptable
- Look for the final answer or conclusion, which may appear at the end of a longer response
- Extract the key answer from within explanatory text, preambles, or step-by-step reasoning

Examples:
- LLM: Point C | Ground Truth: Point C is positioned farthest -> True
- LLM: D | Ground Truth: Point B -> False
- LLM: Increases | Ground Truth: The value increases over time -> True
- LLM: After analyzing the graph and considering all data points, I can conclude that the answer is Point C | Ground Truth: Point C -> True
- LLM: Let me think through this step by step. First, we examine the positions... Second, we compare the distances... Therefore, the answer must be Point C. | Ground Truth: Point C is positioned farthest -> True
- LLM: This is a complex question. While Point B seems close, and Point D has merit, upon careful consideration the correct answer is actually Point C, which is positioned farthest from the origin. | Ground Truth: Point C -> True
- LLM: The answer is Point A because it is the closest. | Ground Truth: Point D is the nearest -> False
- LLM: C | Ground Truth: The correct answer is C: ... -> True

Respond with only True if the answers are equivalent in meaning, or False if they are not)PROMPT";

// Training-time OE rubric judge. Reconstructed from the four judged
// dimensions; the reply layout is fixed so it can be parsed line by line.
inline constexpr std::string_view kRubricJudgeVersion = "oe-rubric-judge-v1";

inline constexpr std::string_view k_oe_rubric_judge = R"PROMPT(You are an expert physics grader. You will be shown a physics question, the ground-truth answer, unit and principle, and a model's structured response. Evaluate the response on four dimensions:

1. Correctness (0, 1 or 2): 2 = fully correct (correct reasoning and answer), 1 = partially correct, 0 = incorrect.
2. Principle (0 or 1): 1 if the correct physics law or principle was applied, else 0.
3. Unit (0 or 1): 1 if the stated unit is correct, else 0.
4. Reasoning (0, 1 or 2): 2 = valid step-by-step derivation, 1 = partial reasoning, 0 = no reasoning.

Do not award full correctness credit (2) if the reasoning is invalid.

Respond with exactly these four lines and nothing else:
Correctness: <0|1|2>
Principle: <0|1>
Unit: <0|1>
Reasoning: <0|1|2>)PROMPT";

inline constexpr std::string_view k_oe_rubric_judge_user = R"PROMPT(Question:
{question}

Ground Truth Answer: {gold_answer}
Ground Truth Unit: {gold_unit}
Ground Truth Principle: {gold_principle}

Model Reasoning:
{think}

Model Answer: {answer}
Model Unit: {unit}
Model Principle: {principle})PROMPT";

inline constexpr std::string_view k_oe_accuracy_judge = R"PROMPT(You are an expert physics grader. Compare the model's final answer with the ground-truth answer and score its correctness on a 0/1/2 scale: 2 = fully correct, 1 = partially correct, 0 = incorrect.

Respond with exactly one line and nothing else:
Correctness: <0|1|2>)PROMPT";

inline constexpr std::string_view k_oe_accuracy_judge_user = R"PROMPT(Question:
{question}

Ground Truth Answer: {gold_answer}

Model Answer: {answer})PROMPT";

inline constexpr std::string_view k_mcqa_judge_user = R"PROMPT(LLM Response: {response}
Ground Truth Answer: {ground_truth})PROMPT";
// clang-format on

inline const std::map<std::string, std::string_view, std::less<>>& templates() {
  static const std::map<std::string, std::string_view, std::less<>> kTemplates = {
      {"mcqa_system", k_mcqa_system},
      {"oe_system", k_oe_system},
      {"mcqa_rubric_system", k_mcqa_rubric_system},
      {"oe_rubric_system", k_oe_rubric_system},
      {"label_mapping", k_label_mapping},
      {"ontology_cluster", k_ontology_cluster},
      {"unit_extract", k_unit_extract},
      {"mcqa_judge", k_mcqa_judge},
      {"mcqa_judge_user", k_mcqa_judge_user},
      {"oe_rubric_judge", k_oe_rubric_judge},
      {"oe_rubric_judge_user", k_oe_rubric_judge_user},
      {"oe_accuracy_judge", k_oe_accuracy_judge},
      {"oe_accuracy_judge_user", k_oe_accuracy_judge_user},
  };
  return kTemplates;
}

using Slots = std::map<std::string, std::string, std::less<>>;

// Slot names referenced by a template, in order of first appearance.
inline std::vector<std::string> slot_names(std::string_view tmpl) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        ++i;
        continue;
      }
      const auto end = tmpl.find('}', i);
      if (end == std::string_view::npos) break;
      std::string name(tmpl.substr(i + 1, end - i - 1));
      bool seen = false;
      for (const auto& n : out) seen = seen || n == name;
      if (!seen) out.push_back(std::move(name));
      i = end;
    }
  }
  return out;
}

inline std::string format_template(std::string_view tmpl, const Slots& slots) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      out.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
      out.push_back('}');
      ++i;
    } else if (c == '{') {
      const auto end = tmpl.find('}', i);
      if (end == std::string_view::npos) throw ContractError("unterminated slot in template");
      const auto name = tmpl.substr(i + 1, end - i - 1);
      const auto it = slots.find(name);
      if (it == slots.end()) {
        throw ContractError("missing prompt slot '" + std::string(name) + "'");
      }
      out += it->second;
      i = end;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

inline std::string render(std::string_view template_id, const Slots& slots = {}) {
  const auto it = templates().find(template_id);
  if (it == templates().end()) {
    throw ContractError("unknown prompt template '" + std::string(template_id) + "'");
  }
  return format_template(it->second, slots);
}

}  // namespace vlmreward::prompts
