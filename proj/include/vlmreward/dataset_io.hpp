#pragma once

// Problem records and their JSON-lines serialization.
//
// One problem per line:
//   {"id": "mech-0001", "question": "...", "options": ["...", "...", "...", "..."],
//    "image_path": "images/mech-0001.png", "format": "MCQ", "answer": "B",
//    "unit": "m/s", "principle": "conservation of energy",
//    "domain": "Mechanics", "subfield": "Kinematics",
//    "reasoning_type": "Spatial Relation"}
//
// Required: id, question, image_path, format, answer, domain, subfield.
// "options" is required for MCQ (exactly four) and may be omitted for OE.
// "unit", "principle" and "reasoning_type" are optional. Unknown keys are
// ignored.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/error.hpp"
#include "vlmreward/rule_rewards.hpp"
#include "vlmreward/text.hpp"

namespace vlmreward {

enum class Domain { kMechanics, kElectromagnetism, kThermodynamics, kWaveAcoustics, kOptics, kModernPhysics };

// Report column order: Mech., E&M, Thermo., Wave/Ac., Optics, Mod. Phys.
inline constexpr std::array<Domain, 6> kAllDomains = {Domain::kMechanics,      Domain::kElectromagnetism,
                                                      Domain::kThermodynamics, Domain::kWaveAcoustics,
                                                      Domain::kOptics,         Domain::kModernPhysics};

inline std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::kMechanics: return "Mechanics";
    case Domain::kElectromagnetism: return "Electromagnetism";
    case Domain::kThermodynamics: return "Thermodynamics";
    case Domain::kWaveAcoustics: return "Wave/Acoustics";
    case Domain::kOptics: return "Optics";
    case Domain::kModernPhysics: return "Modern Physics";
  }
  return "";
}

inline std::string_view domain_short_name(Domain d) {
  switch (d) {
    case Domain::kMechanics: return "Mech.";
    case Domain::kElectromagnetism: return "E&M";
    case Domain::kThermodynamics: return "Thermo.";
    case Domain::kWaveAcoustics: return "Wave/Ac.";
    case Domain::kOptics: return "Optics";
    case Domain::kModernPhysics: return "Mod. Phys.";
  }
  return "";
}

// Case-insensitive; accepts "Waves/Acoustics" as used by the PhyX category
// table.
inline std::optional<Domain> parse_domain(std::string_view s) {
  const auto n = text::normalize_spacing(s);
  for (auto d : kAllDomains) {
    if (n == text::to_lower(domain_name(d))) return d;
  }
  if (n == "waves/acoustics") return Domain::kWaveAcoustics;
  return std::nullopt;
}

enum class ReasoningType {
  kPhysicalModelGrounding,
  kSpatialRelation,
  kMultiFormula,
  kImplicitCondition,
  kNumerical,
  kPredictive
};

inline constexpr std::array<ReasoningType, 6> kAllReasoningTypes = {
    ReasoningType::kPhysicalModelGrounding, ReasoningType::kSpatialRelation,
    ReasoningType::kMultiFormula,           ReasoningType::kImplicitCondition,
    ReasoningType::kNumerical,              ReasoningType::kPredictive};

inline std::string_view reasoning_type_name(ReasoningType r) {
  switch (r) {
    case ReasoningType::kPhysicalModelGrounding: return "Physical Model Grounding";
    case ReasoningType::kSpatialRelation: return "Spatial Relation";
    case ReasoningType::kMultiFormula: return "Multi-Formula";
    case ReasoningType::kImplicitCondition: return "Implicit Condition";
    case ReasoningType::kNumerical: return "Numerical";
    case ReasoningType::kPredictive: return "Predictive";
  }
  return "";
}

// Case-insensitive; a trailing " Reasoning" is accepted.
inline std::optional<ReasoningType> parse_reasoning_type(std::string_view s) {
  auto n = text::normalize_spacing(s);
  constexpr std::string_view kSuffix = " reasoning";
  if (n.size() > kSuffix.size() && n.ends_with(kSuffix)) n.resize(n.size() - kSuffix.size());
  for (auto r : kAllReasoningTypes) {
    if (n == text::to_lower(reasoning_type_name(r))) return r;
  }
  return std::nullopt;
}

struct Problem {
  std::string id;
  std::string question;
  std::vector<std::string> options;  // empty for OE
  std::string image_path;
  GoldLabels gold;
  Domain domain = Domain::kMechanics;
  std::string subfield;
  std::optional<ReasoningType> reasoning_type;

  AnswerFormat format() const { return gold.format; }
};

inline std::optional<AnswerFormat> parse_format(std::string_view s) {
  const auto n = text::normalize_spacing(s);
  if (n == "mcq") return AnswerFormat::kMcq;
  if (n == "oe") return AnswerFormat::kOe;
  return std::nullopt;
}

namespace detail {

inline std::string required_string(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing required field '") + key + "'");
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

inline std::string optional_string(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace detail

// Parses and validates one JSON object. Throws ValidationError.
inline Problem problem_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("problem must be a JSON object");
  Problem p;
  p.id = detail::required_string(j, "id");
  if (text::trim(p.id).empty()) throw ValidationError("field 'id' must not be empty");
  p.question = detail::required_string(j, "question");
  p.image_path = detail::required_string(j, "image_path");
  const auto format = detail::required_string(j, "format");
  const auto f = parse_format(format);
  if (!f) throw ValidationError("unknown format '" + format + "' (expected MCQ or OE)");
  p.gold.format = *f;
  p.gold.answer = detail::required_string(j, "answer");
  p.gold.unit = detail::optional_string(j, "unit");
  p.gold.principle = detail::optional_string(j, "principle");
  const auto domain = detail::required_string(j, "domain");
  const auto d = parse_domain(domain);
  if (!d) throw ValidationError("unknown domain '" + domain + "'");
  p.domain = *d;
  p.subfield = detail::required_string(j, "subfield");
  if (const auto rt = detail::optional_string(j, "reasoning_type"); !rt.empty()) {
    const auto r = parse_reasoning_type(rt);
    if (!r) throw ValidationError("unknown reasoning_type '" + rt + "'");
    p.reasoning_type = *r;
  }
  if (const auto it = j.find("options"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("field 'options' must be an array of strings");
    for (const auto& o : *it) {
      if (!o.is_string()) throw ValidationError("field 'options' must be an array of strings");
      p.options.push_back(o.get<std::string>());
    }
    if (p.options.size() != 4) {
      throw ValidationError("expected 4 options, got " + std::to_string(p.options.size()));
    }
  }
  if (p.gold.format == AnswerFormat::kMcq) {
    if (p.options.empty()) throw ValidationError("MCQ problem needs 4 options");
    if (!is_mcq_letter(text::trim(p.gold.answer))) {
      throw ValidationError("MCQ answer must be one of A-D, got '" + p.gold.answer + "'");
    }
  }
  return p;
}

inline nlohmann::ordered_json to_json(const Problem& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["question"] = p.question;
  if (!p.options.empty()) j["options"] = p.options;
  j["image_path"] = p.image_path;
  j["format"] = std::string(to_string(p.gold.format));
  j["answer"] = p.gold.answer;
  if (!p.gold.unit.empty()) j["unit"] = p.gold.unit;
  if (!p.gold.principle.empty()) j["principle"] = p.gold.principle;
  j["domain"] = std::string(domain_name(p.domain));
  j["subfield"] = p.subfield;
  if (p.reasoning_type) j["reasoning_type"] = std::string(reasoning_type_name(*p.reasoning_type));
  return j;
}

// Parses a whole JSON-lines stream. Every bad line is reported (with its
// 1-based line number) in a single ValidationError; nothing is returned
// unless all lines are valid. Blank lines are skipped.
inline std::vector<Problem> parse_problems(std::istream& in, std::string_view source = "<input>") {
  std::vector<Problem> out;
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto p = problem_from_json(j);
      if (auto [it, inserted] = seen.emplace(p.id, lineno); !inserted) {
        throw ValidationError("duplicate id '" + p.id + "' (first seen on line " +
                              std::to_string(it->second) + ")");
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::parse_error&) {
      errors.push_back(std::string(source) + ":" + std::to_string(lineno) + ": invalid JSON");
    } catch (const ValidationError& e) {
      errors.push_back(std::string(source) + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << errors.size() << " invalid problem line" << (errors.size() == 1 ? "" : "s");
    for (const auto& e : errors) msg << "\n  " << e;
    throw ValidationError(msg.str());
  }
  return out;
}

inline std::vector<Problem> load_problems(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open problem file " + path.string());
  return parse_problems(in, path.string());
}

inline void write_problems(std::ostream& out, const std::vector<Problem>& problems) {
  for (const auto& p : problems) out << to_json(p).dump() << '\n';
}

inline void write_problems(const std::filesystem::path& path, const std::vector<Problem>& problems) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write problem file " + path.string());
  write_problems(out, problems);
}

inline std::map<Domain, std::size_t> domain_counts(const std::vector<Problem>& problems) {
  std::map<Domain, std::size_t> counts;
  for (auto d : kAllDomains) counts[d] = 0;
  for (const auto& p : problems) ++counts[p.domain];
  return counts;
}

// Image path resolved against the directory of the problem file when relative.
inline std::filesystem::path resolve_image_path(const Problem& p, const std::filesystem::path& dataset_dir) {
  std::filesystem::path img(p.image_path);
  return img.is_absolute() ? img : dataset_dir / img;
}

}  // namespace vlmreward
