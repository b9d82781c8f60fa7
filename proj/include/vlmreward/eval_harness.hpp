#pragma once

// Scores completions against gold labels and aggregates accuracy reports
// per domain and per reasoning type.
//
// Completions file: JSON lines of {"problem_id": ..., "text": ...}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/dataset_io.hpp"
#include "vlmreward/error.hpp"
#include "vlmreward/judge.hpp"
#include "vlmreward/parallel.hpp"
#include "vlmreward/render.hpp"
#include "vlmreward/rule_rewards.hpp"
#include "vlmreward/structured_output.hpp"

namespace vlmreward {

struct CompletionRecord {
  std::string problem_id;
  std::string text;
};

inline std::vector<CompletionRecord> parse_completions(std::istream& in, std::string_view source = "<input>") {
  std::vector<CompletionRecord> out;
  std::vector<std::string> errors;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (text::trim(line).empty()) continue;
    const auto where = std::string(source) + ":" + std::to_string(lineno) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("problem_id") || !j.at("problem_id").is_string()) {
        errors.push_back(where + "missing string field 'problem_id'");
        continue;
      }
      if (!j.contains("text") || !j.at("text").is_string()) {
        errors.push_back(where + "missing string field 'text'");
        continue;
      }
      out.push_back({j.at("problem_id").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::parse_error&) {
      errors.push_back(where + "invalid JSON");
    }
  }
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " invalid completion line(s)";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  return out;
}

inline std::vector<CompletionRecord> load_completions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open completions file " + path.string());
  return parse_completions(in, path.string());
}

inline void write_completions(std::ostream& out, const std::vector<CompletionRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["problem_id"] = r.problem_id;
    j["text"] = r.text;
    out << j.dump() << '\n';
  }
}

// Pairs every problem with its completion (in problem order). Missing,
// unknown or duplicated ids are all listed in one ValidationError.
inline std::vector<const CompletionRecord*> match_completions(const std::vector<Problem>& problems,
                                                              const std::vector<CompletionRecord>& completions) {
  if (problems.empty()) throw ValidationError("no problems to evaluate");
  if (completions.empty()) throw ValidationError("no completions to evaluate");
  std::map<std::string, const CompletionRecord*> by_id;
  std::vector<std::string> duplicated;
  for (const auto& c : completions) {
    if (!by_id.emplace(c.problem_id, &c).second) duplicated.push_back(c.problem_id);
  }
  std::vector<std::string> missing;
  std::set<std::string> known;
  std::vector<const CompletionRecord*> out;
  for (const auto& p : problems) {
    known.insert(p.id);
    auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      missing.push_back(p.id);
    } else {
      out.push_back(it->second);
    }
  }
  std::vector<std::string> unknown;
  for (const auto& [id, _] : by_id) {
    if (!known.count(id)) unknown.push_back(id);
  }
  if (!missing.empty() || !unknown.empty() || !duplicated.empty()) {
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
      return s;
    };
    std::string msg = "completions do not match problems";
    if (!missing.empty()) msg += "\n  missing completions for: " + list(missing);
    if (!unknown.empty()) msg += "\n  completions for unknown problems: " + list(unknown);
    if (!duplicated.empty()) msg += "\n  duplicated completions for: " + list(duplicated);
    throw ValidationError(msg);
  }
  return out;
}

// --- records -----------------------------------------------------------------------

struct EvalRecord {
  std::string problem_id;
  ParsedResponse parsed;
  int answer_correct = 0;
  int unit_correct = 0;
  int principle_correct = 0;
};

enum class EvalMode { kOffline, kJudge };

struct EvalOptions {
  EvalMode mode = EvalMode::kOffline;
  std::size_t jobs = 1;
  const Stopwords* stopwords = nullptr;
  const UnitAliases* aliases = nullptr;
};

// MCQ answers by exact letter match; OE answers by a semantic-equivalence
// judge call (the rule-based offline judge in offline mode). Units and
// principles use the rule-reward matchers in both modes.
inline std::vector<EvalRecord> evaluate(const std::vector<Problem>& problems,
                                        const std::vector<CompletionRecord>& completions,
                                        const EvalOptions& opts = {}, const JudgeClient* judge = nullptr) {
  const auto matched = match_completions(problems, completions);
  std::unique_ptr<JudgeClient> offline;
  if (opts.mode == EvalMode::kOffline) {
    JudgeConfig cfg;
    cfg.n_judges = 1;
    offline = std::make_unique<JudgeClient>(std::make_shared<OfflineJudge>(), cfg);
    judge = offline.get();
  } else if (judge == nullptr) {
    throw ContractError("judge-mode evaluation needs a judge client");
  }
  const auto& stopwords = opts.stopwords ? *opts.stopwords : Stopwords::builtin();
  std::vector<EvalRecord> out(problems.size());
  parallel_for(problems.size(), opts.jobs, [&](std::size_t i) {
    const auto& p = problems[i];
    EvalRecord r;
    r.problem_id = p.id;
    r.parsed = parse_structured_response(matched[i]->text);
    if (p.gold.format == AnswerFormat::kMcq) {
      r.answer_correct = mcq_accuracy_reward(r.parsed, p.gold) == 1.0;
    } else {
      const auto answer = r.parsed.answer ? *r.parsed.answer : matched[i]->text;
      r.answer_correct = !text::trim(answer).empty() && judge_mcq_equivalence(answer, p.gold.answer, *judge);
    }
    r.unit_correct = unit_consistency_reward(r.parsed.content(Tag::kUnit), p.gold.unit, opts.aliases) == 1.0;
    r.principle_correct =
        principle_overlap_reward(r.parsed.content(Tag::kPrinciple), p.gold.principle, stopwords) == 1.0;
    out[i] = std::move(r);
  });
  return out;
}

inline nlohmann::ordered_json to_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["problem_id"] = r.problem_id;
  j["answer_correct"] = r.answer_correct;
  j["unit_correct"] = r.unit_correct;
  j["principle_correct"] = r.principle_correct;
  j["tags_present"] = r.parsed.tags_present().size();
  return j;
}

// --- reports -----------------------------------------------------------------------

struct Cell {
  std::size_t correct = 0;
  std::size_t count = 0;
  double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count); }
};

struct Report {
  Cell overall;
  std::map<Domain, Cell> domains;                  // only domains with problems
  std::map<ReasoningType, Cell> reasoning_types;   // only labeled types with problems
  Cell unit;
  Cell principle;
};

// Answer accuracy per cell. Aggregation is a pure count reduction, so it
// does not depend on record order.
inline Report aggregate(const std::vector<EvalRecord>& records, const std::vector<Problem>& problems) {
  if (records.empty()) throw ContractError("aggregate needs at least one record");
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;
  Report rep;
  for (const auto& r : records) {
    const auto it = by_id.find(r.problem_id);
    if (it == by_id.end()) throw ValidationError("record for unknown problem '" + r.problem_id + "'");
    const auto& p = *it->second;
    const auto a = static_cast<std::size_t>(r.answer_correct != 0);
    auto add = [a](Cell& c) {
      c.correct += a;
      ++c.count;
    };
    add(rep.overall);
    add(rep.domains[p.domain]);
    if (p.reasoning_type) add(rep.reasoning_types[*p.reasoning_type]);
    rep.unit.correct += static_cast<std::size_t>(r.unit_correct != 0);
    ++rep.unit.count;
    rep.principle.correct += static_cast<std::size_t>(r.principle_correct != 0);
    ++rep.principle.count;
  }
  return rep;
}

namespace detail {

inline nlohmann::ordered_json cell_json(const Cell& c) {
  nlohmann::ordered_json j;
  j["accuracy"] = c.accuracy();
  j["correct"] = c.correct;
  j["count"] = c.count;
  return j;
}

inline Cell cell_from_json(const nlohmann::json& j) {
  return {j.at("correct").get<std::size_t>(), j.at("count").get<std::size_t>()};
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const Report& r) {
  nlohmann::ordered_json j;
  j["overall"] = detail::cell_json(r.overall);
  nlohmann::ordered_json d;
  for (auto dom : kAllDomains) {
    const auto it = r.domains.find(dom);
    d[std::string(domain_name(dom))] = it == r.domains.end() ? nlohmann::ordered_json(nullptr) : detail::cell_json(it->second);
  }
  j["domains"] = std::move(d);
  nlohmann::ordered_json t;
  for (auto rt : kAllReasoningTypes) {
    const auto it = r.reasoning_types.find(rt);
    t[std::string(reasoning_type_name(rt))] =
        it == r.reasoning_types.end() ? nlohmann::ordered_json(nullptr) : detail::cell_json(it->second);
  }
  j["reasoning_types"] = std::move(t);
  j["unit"] = detail::cell_json(r.unit);
  j["principle"] = detail::cell_json(r.principle);
  return j;
}

inline Report report_from_json(const nlohmann::json& j) {
  try {
    Report r;
    r.overall = detail::cell_from_json(j.at("overall"));
    for (auto dom : kAllDomains) {
      const auto& c = j.at("domains").at(std::string(domain_name(dom)));
      if (!c.is_null()) r.domains[dom] = detail::cell_from_json(c);
    }
    for (auto rt : kAllReasoningTypes) {
      const auto& c = j.at("reasoning_types").at(std::string(reasoning_type_name(rt)));
      if (!c.is_null()) r.reasoning_types[rt] = detail::cell_from_json(c);
    }
    r.unit = detail::cell_from_json(j.at("unit"));
    r.principle = detail::cell_from_json(j.at("principle"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

// correct/count rounded half-to-even at 3 decimals, computed exactly.
inline std::string format_ratio(std::size_t correct, std::size_t count) {
  if (count == 0) return "-";
  const std::uint64_t num = static_cast<std::uint64_t>(correct) * 1000;
  std::uint64_t q = num / count;
  const std::uint64_t rem = num % count;
  if (2 * rem > count || (2 * rem == count && (q % 2 == 1))) ++q;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%llu.%03llu", static_cast<unsigned long long>(q / 1000),
                static_cast<unsigned long long>(q % 1000));
  return buf;
}

// Rounded half-to-even at 3 decimals in the current floating-point mode.
inline std::string format_fixed3(double v) {
  if (!std::isfinite(v)) return "-";
  const double r = std::nearbyint(v * 1000.0) / 1000.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", r == 0.0 ? 0.0 : r);
  return buf;
}

namespace detail {

inline std::string aligned_table(const std::vector<std::string>& header,
                                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[c])) << cells[c];
      }
    }
    out << '\n';
  };
  emit(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  emit(rule);
  for (const auto& r : rows) emit(r);
  return out.str();
}

}  // namespace detail

// Table-1 layout: label, overall, then the six domains. Absent cells print "-".
inline std::string domain_table(const std::vector<std::pair<std::string, Report>>& rows) {
  std::vector<std::string> header = {"Method", "Overall"};
  for (auto d : kAllDomains) header.emplace_back(domain_short_name(d));
  std::vector<std::vector<std::string>> body;
  for (const auto& [label, rep] : rows) {
    std::vector<std::string> r = {label, format_ratio(rep.overall.correct, rep.overall.count)};
    for (auto d : kAllDomains) {
      const auto it = rep.domains.find(d);
      r.push_back(it == rep.domains.end() ? "-" : format_ratio(it->second.correct, it->second.count));
    }
    body.push_back(std::move(r));
  }
  return detail::aligned_table(header, body);
}

inline std::string report_text(const Report& rep, const std::string& label = "run") {
  std::string out = domain_table({{label, rep}});
  if (!rep.reasoning_types.empty()) {
    out += '\n';
    std::vector<std::vector<std::string>> body;
    for (auto rt : kAllReasoningTypes) {
      const auto it = rep.reasoning_types.find(rt);
      body.push_back({std::string(reasoning_type_name(rt)),
                      it == rep.reasoning_types.end() ? "-" : format_ratio(it->second.correct, it->second.count),
                      it == rep.reasoning_types.end() ? "0" : std::to_string(it->second.count)});
    }
    out += detail::aligned_table({"Reasoning type", "Accuracy", "Count"}, body);
  }
  out += "\nunit " + format_ratio(rep.unit.correct, rep.unit.count) + "  principle " +
         format_ratio(rep.principle.correct, rep.principle.count) + "  n " + std::to_string(rep.overall.count) +
         '\n';
  return out;
}

inline RgbImage domain_bar_chart(const Report& rep, std::string_view title = "accuracy by domain") {
  std::vector<render::Bar> bars = {{"Overall", rep.overall.accuracy()}};
  for (auto d : kAllDomains) {
    const auto it = rep.domains.find(d);
    if (it != rep.domains.end()) bars.push_back({std::string(domain_short_name(d)), it->second.accuracy()});
  }
  return render::bar_chart(bars, title);
}

// --- averaging runs ------------------------------------------------------------------

struct MeanCell {
  double mean = 0.0;
  double std = 0.0;  // population, over the runs that have the cell
  std::size_t runs = 0;
};

struct MeanReport {
  std::size_t runs = 0;
  MeanCell overall;
  std::map<Domain, MeanCell> domains;
  std::map<ReasoningType, MeanCell> reasoning_types;
  MeanCell unit;
  MeanCell principle;
};

namespace detail {

inline MeanCell mean_cell(const std::vector<double>& v) {
  MeanCell c;
  c.runs = v.size();
  if (v.empty()) return c;
  for (double x : v) c.mean += x;
  c.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - c.mean) * (x - c.mean);
  c.std = std::sqrt(ss / static_cast<double>(v.size()));
  return c;
}

inline nlohmann::ordered_json mean_cell_json(const MeanCell& c) {
  nlohmann::ordered_json j;
  j["mean"] = c.mean;
  j["std"] = c.std;
  j["runs"] = c.runs;
  return j;
}

}  // namespace detail

// Cell-wise mean accuracy across runs; a cell absent from every run stays
// absent.
inline MeanReport average_reports(const std::vector<Report>& reports) {
  if (reports.empty()) throw ContractError("average_reports needs at least one report");
  MeanReport m;
  m.runs = reports.size();
  std::vector<double> overall, unit, principle;
  std::map<Domain, std::vector<double>> dom;
  std::map<ReasoningType, std::vector<double>> rt;
  for (const auto& r : reports) {
    overall.push_back(r.overall.accuracy());
    unit.push_back(r.unit.accuracy());
    principle.push_back(r.principle.accuracy());
    for (const auto& [d, c] : r.domains) dom[d].push_back(c.accuracy());
    for (const auto& [t, c] : r.reasoning_types) rt[t].push_back(c.accuracy());
  }
  m.overall = detail::mean_cell(overall);
  m.unit = detail::mean_cell(unit);
  m.principle = detail::mean_cell(principle);
  for (const auto& [d, v] : dom) m.domains[d] = detail::mean_cell(v);
  for (const auto& [t, v] : rt) m.reasoning_types[t] = detail::mean_cell(v);
  return m;
}

inline nlohmann::ordered_json to_json(const MeanReport& m) {
  nlohmann::ordered_json j;
  j["runs"] = m.runs;
  j["overall"] = detail::mean_cell_json(m.overall);
  nlohmann::ordered_json d;
  for (auto dom : kAllDomains) {
    const auto it = m.domains.find(dom);
    d[std::string(domain_name(dom))] =
        it == m.domains.end() ? nlohmann::ordered_json(nullptr) : detail::mean_cell_json(it->second);
  }
  j["domains"] = std::move(d);
  nlohmann::ordered_json t;
  for (auto r : kAllReasoningTypes) {
    const auto it = m.reasoning_types.find(r);
    t[std::string(reasoning_type_name(r))] =
        it == m.reasoning_types.end() ? nlohmann::ordered_json(nullptr) : detail::mean_cell_json(it->second);
  }
  j["reasoning_types"] = std::move(t);
  j["unit"] = detail::mean_cell_json(m.unit);
  j["principle"] = detail::mean_cell_json(m.principle);
  return j;
}

inline std::string mean_report_text(const MeanReport& m, const std::string& label = "mean") {
  std::vector<std::string> header = {"Method", "Overall"};
  for (auto d : kAllDomains) header.emplace_back(domain_short_name(d));
  std::vector<std::string> mean_row = {label, format_fixed3(m.overall.mean)};
  std::vector<std::string> std_row = {"std", format_fixed3(m.overall.std)};
  for (auto d : kAllDomains) {
    const auto it = m.domains.find(d);
    mean_row.push_back(it == m.domains.end() ? "-" : format_fixed3(it->second.mean));
    std_row.push_back(it == m.domains.end() ? "-" : format_fixed3(it->second.std));
  }
  return detail::aligned_table(header, {mean_row, std_row}) + "runs " + std::to_string(m.runs) + '\n';
}

}  // namespace vlmreward
