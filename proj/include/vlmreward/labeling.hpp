#pragma once

// Three-stage unit labeling with a judge model:
//   1. label_units      - extract a raw unit label per problem (unit_extract prompt)
//   2. cluster_ontology - batch the distinct raw labels through the ontology
//                         prompt and merge the batch outputs
//   3. normalize_labels - map every raw label to one ontology cluster or
//                         "none" (label_mapping prompt)
//
// Stage outputs are plain values; LabelRun persists them as JSON artifacts
// in a run directory with a manifest, and resumes from what is already
// there. No artifact carries timestamps, so stub-judge runs are
// reproducible byte for byte.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/dataset_io.hpp"
#include "vlmreward/error.hpp"
#include "vlmreward/hash.hpp"
#include "vlmreward/judge.hpp"
#include "vlmreward/logging.hpp"
#include "vlmreward/parallel.hpp"
#include "vlmreward/prompts.hpp"
#include "vlmreward/text.hpp"
#include "vlmreward/unit_ontology.hpp"

namespace vlmreward {

// --- stage 1 ----------------------------------------------------------------------

struct RawUnitLabel {
  std::string problem_id;
  std::string label;      // raw unit type; empty when the call failed
  std::string principle;  // principle named alongside, when given
  std::string reply;      // judge reply verbatim
  std::string prompt_sha256;
  std::string model;
  std::string status;  // "ok", "unparsed" or "error"
  std::string error;

  bool ok() const { return status == "ok"; }
};

namespace detail {

inline std::string_view strip_code_fence(std::string_view s) {
  s = text::trim(s);
  if (s.starts_with("```")) {
    const auto nl = s.find('\n');
    s = nl == std::string_view::npos ? std::string_view{} : s.substr(nl + 1);
    if (const auto end = s.rfind("```"); end != std::string_view::npos) s = s.substr(0, end);
  }
  return text::trim(s);
}

inline std::optional<nlohmann::json> json_object_in(std::string_view reply) {
  const auto s = strip_code_fence(reply);
  const auto open = s.find('{');
  const auto close = s.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(s.substr(open, close - open + 1));
    if (j.is_object()) return j;
  } catch (const nlohmann::json::parse_error&) {
  }
  return std::nullopt;
}

// Value of a "key: value" line, tolerating quotes and a trailing comma.
inline std::optional<std::string> loose_field(std::string_view reply, std::string_view key) {
  std::size_t pos = 0;
  while (pos < reply.size()) {
    auto end = reply.find('\n', pos);
    if (end == std::string_view::npos) end = reply.size();
    auto line = text::trim(reply.substr(pos, end - pos));
    pos = end + 1;
    while (!line.empty() && (line.front() == '"' || line.front() == '\'')) line.remove_prefix(1);
    if (!text::to_lower(line).starts_with(key)) continue;
    line.remove_prefix(key.size());
    while (!line.empty() && (line.front() == '"' || line.front() == '\'')) line.remove_prefix(1);
    line = text::trim(line);
    if (line.empty() || line.front() != ':') continue;
    line = text::trim(line.substr(1));
    while (!line.empty() && (line.back() == ',' || line.back() == '"' || line.back() == '\'')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == '"' || line.front() == '\'')) line.remove_prefix(1);
    return std::string(text::trim(line));
  }
  return std::nullopt;
}

inline std::string json_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

}  // namespace detail

struct UnitExtraction {
  std::string unit_type;
  std::string principle;
};

// Reads {"principle": ..., "unit_type": ...} (strict JSON or the loose
// key: value layout of the prompt). A reply with neither field is taken
// verbatim as the unit label. Empty replies do not parse.
inline std::optional<UnitExtraction> parse_unit_extraction(std::string_view reply) {
  if (text::trim(reply).empty()) return std::nullopt;
  if (const auto j = detail::json_object_in(reply); j && j->contains("unit_type")) {
    return UnitExtraction{std::string(text::trim(detail::json_text(j->at("unit_type")))),
                          j->contains("principle") ? detail::json_text(j->at("principle")) : ""};
  }
  if (auto unit = detail::loose_field(reply, "unit_type")) {
    return UnitExtraction{*unit, detail::loose_field(reply, "principle").value_or("")};
  }
  return UnitExtraction{std::string(text::trim(reply)), ""};
}

inline std::string options_block(const Problem& p) {
  if (p.options.empty()) return "(open-ended, no options)";
  std::string out;
  for (std::size_t i = 0; i < p.options.size(); ++i) {
    if (!out.empty()) out += '\n';
    out += static_cast<char>('A' + i);
    out += ". " + p.options[i];
  }
  return out;
}

inline ChatRequest unit_extract_request(const Problem& p, const JudgeConfig& cfg) {
  ChatRequest req;
  req.model = cfg.model_name;
  req.messages = {{"user", prompts::render("unit_extract", {{"subfield", p.subfield},
                                                            {"question", p.question},
                                                            {"options", options_block(p)}})}};
  req.temperature = cfg.equivalence_temperature;
  req.hints.task = JudgeTask::kUnitExtract;
  req.hints.question = p.question;
  req.hints.subfield = p.subfield;
  req.hints.gold_unit = p.gold.unit;
  req.hints.gold_principle = p.gold.principle;
  return req;
}

// One raw label per problem. Transport failures are recorded per problem
// (status "error") and do not stop the run. Entries in `previous` with
// status "ok" are reused without a judge call.
inline std::vector<RawUnitLabel> label_units(const std::vector<Problem>& problems, const JudgeClient& client,
                                             const std::vector<RawUnitLabel>& previous = {},
                                             std::size_t jobs = 1) {
  std::map<std::string, const RawUnitLabel*> done;
  for (const auto& r : previous) {
    if (r.ok()) done[r.problem_id] = &r;
  }
  std::vector<RawUnitLabel> out(problems.size());
  parallel_for(problems.size(), jobs, [&](std::size_t i) {
    const auto& p = problems[i];
    if (auto it = done.find(p.id); it != done.end()) {
      out[i] = *it->second;
      return;
    }
    const auto req = unit_extract_request(p, client.config());
    RawUnitLabel r;
    r.problem_id = p.id;
    r.prompt_sha256 = req.prompt_hash();
    r.model = req.model;
    std::string last_reply;
    try {
      const auto parsed = client.call(req, [&](std::string_view reply) {
        last_reply = std::string(reply);
        return parse_unit_extraction(reply);
      });
      r.reply = last_reply;
      if (parsed) {
        r.label = parsed->unit_type;
        r.principle = parsed->principle;
        r.status = "ok";
      } else {
        r.status = "unparsed";
      }
    } catch (const TransportError& e) {
      r.status = "error";
      r.error = e.what();
    }
    out[i] = std::move(r);
  });
  return out;
}

// Problems that ship without a gold principle take the one extracted in
// stage 1. Existing principles are kept. Returns the number filled.
inline std::size_t fill_missing_principles(std::vector<Problem>& problems, const std::vector<RawUnitLabel>& labels) {
  std::map<std::string, const RawUnitLabel*> by_id;
  for (const auto& l : labels) by_id[l.problem_id] = &l;
  std::size_t filled = 0;
  for (auto& p : problems) {
    if (!text::trim(p.gold.principle).empty()) continue;
    const auto it = by_id.find(p.id);
    if (it == by_id.end() || !it->second->ok() || text::trim(it->second->principle).empty()) continue;
    p.gold.principle = std::string(text::trim(it->second->principle));
    ++filled;
  }
  return filled;
}

inline nlohmann::ordered_json to_json(const RawUnitLabel& r) {
  nlohmann::ordered_json j;
  j["problem_id"] = r.problem_id;
  j["label"] = r.label;
  j["principle"] = r.principle;
  j["status"] = r.status;
  j["reply"] = r.reply;
  j["prompt_sha256"] = r.prompt_sha256;
  j["model"] = r.model;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline RawUnitLabel raw_label_from_json(const nlohmann::json& j) {
  RawUnitLabel r;
  r.problem_id = j.at("problem_id").get<std::string>();
  r.label = j.value("label", "");
  r.principle = j.value("principle", "");
  r.status = j.at("status").get<std::string>();
  r.reply = j.value("reply", "");
  r.prompt_sha256 = j.value("prompt_sha256", "");
  r.model = j.value("model", "");
  r.error = j.value("error", "");
  return r;
}

// --- stage 2 ----------------------------------------------------------------------

inline constexpr std::size_t kDefaultOntologyBatch = 50;

struct OntologyBuild {
  UnitOntology ontology;
  std::vector<std::size_t> flagged_batches;  // replies still not JSON after retries
  std::vector<std::string> unassigned;       // labels no cluster claimed
};

// Distinct non-empty labels in first-seen order (trimmed, compared
// case-insensitively).
inline std::vector<std::string> distinct_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& l : labels) {
    const auto t = std::string(text::trim(l));
    if (t.empty() || text::iequals(t, kNoneCategory)) continue;
    if (seen.insert(text::normalize_spacing(t)).second) out.push_back(t);
  }
  return out;
}

// Category name -> member items, or nullopt when the reply is not a JSON
// object of string arrays.
inline std::optional<std::map<std::string, std::vector<std::string>>> parse_ontology_reply(
    std::string_view reply) {
  const auto j = detail::json_object_in(reply);
  if (!j) return std::nullopt;
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [name, items] : j->items()) {
    if (!items.is_array()) return std::nullopt;
    auto& dst = out[name];
    for (const auto& it : items) {
      if (!it.is_string()) return std::nullopt;
      dst.push_back(it.get<std::string>());
    }
  }
  return out;
}

namespace detail {

// Merge key for category names: snake_case with a plural "s" dropped.
inline std::string category_key(std::string_view name) {
  auto k = snake_case(name);
  if (k.size() > 3 && k.back() == 's' && k[k.size() - 2] != 's') k.pop_back();
  return k;
}

}  // namespace detail

inline ChatRequest ontology_request(const std::vector<std::string>& batch, std::size_t batch_index,
                                    const JudgeConfig& cfg) {
  std::string list;
  for (const auto& item : batch) list += "- " + item + "\n";
  if (!list.empty()) list.pop_back();
  ChatRequest req;
  req.model = cfg.model_name;
  req.messages = {{"user", prompts::render("ontology_cluster", {{"batch", list}})}};
  req.temperature = cfg.equivalence_temperature;
  req.call_index = static_cast<int>(batch_index);
  req.hints.task = JudgeTask::kOntology;
  req.hints.batch = batch;
  return req;
}

// Clusters the distinct raw labels. Categories with the same merge key are
// merged across batches; a label claimed by several categories stays in the
// first. Labels the judge drops (e.g. refusals it was told to ignore) are
// listed as unassigned.
inline OntologyBuild cluster_ontology(const std::vector<std::string>& raw_labels, const JudgeClient& client,
                                      std::size_t batch_size = kDefaultOntologyBatch,
                                      std::string version = "clustered") {
  const auto labels = distinct_labels(raw_labels);
  if (labels.empty()) throw ContractError("cluster_ontology needs at least one raw label");
  if (batch_size == 0) throw ContractError("ontology batch size must be positive");

  std::map<std::string, std::string> by_norm;  // normalized -> original label
  for (const auto& l : labels) by_norm.emplace(text::normalize_spacing(l), l);

  OntologyBuild out;
  std::vector<UnitCluster> clusters;
  std::map<std::string, std::size_t> by_key;
  std::set<std::string> assigned;
  for (std::size_t b = 0; b * batch_size < labels.size(); ++b) {
    const std::vector<std::string> batch(labels.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                                         labels.begin() + static_cast<std::ptrdiff_t>(
                                                              std::min(labels.size(), (b + 1) * batch_size)));
    const auto reply = client.call(ontology_request(batch, b, client.config()), parse_ontology_reply);
    if (!reply) {
      log_warning("ontology batch " + std::to_string(b) + " flagged for manual review");
      out.flagged_batches.push_back(b);
      continue;
    }
    for (const auto& [name, items] : *reply) {
      const auto key = detail::category_key(name);
      if (key.empty() || key == kNoneCategory) continue;
      auto [it, inserted] = by_key.emplace(key, clusters.size());
      if (inserted) clusters.push_back({name, {}, std::nullopt});
      auto& cluster = clusters[it->second];
      for (const auto& item : items) {
        const auto src = by_norm.find(text::normalize_spacing(item));
        if (src == by_norm.end()) {
          log_warning("ontology reply names unknown item '" + item + "'; dropped");
          continue;
        }
        if (assigned.insert(src->first).second) cluster.members.push_back(src->second);
      }
    }
  }
  std::erase_if(clusters, [](const UnitCluster& c) { return c.members.empty(); });
  for (const auto& l : labels) {
    if (!assigned.count(text::normalize_spacing(l))) out.unassigned.push_back(l);
  }
  out.ontology = UnitOntology(std::move(clusters), std::move(version));
  return out;
}

// --- stage 3 ----------------------------------------------------------------------

struct UnitAssignment {
  std::string problem_id;
  std::string raw_label;
  std::string category;  // cluster name or "none"
  std::string status;    // "canonical", "mapped", "none" or "unparsed"
};

// Strips quoting and list decoration from a one-line category reply and
// resolves it against the ontology ("none" passes through).
inline std::optional<std::string> parse_mapping_reply(std::string_view reply, const UnitOntology& ontology) {
  auto s = detail::strip_code_fence(reply);
  auto is_deco = [](char c) { return c == '"' || c == '\'' || c == '`' || c == '*' || c == '-' || c == '.'; };
  while (!s.empty() && (is_deco(s.front()) || text::is_space(s.front()))) s.remove_prefix(1);
  while (!s.empty() && (is_deco(s.back()) || text::is_space(s.back()))) s.remove_suffix(1);
  if (text::iequals(s, kNoneCategory)) return std::string(kNoneCategory);
  if (auto n = ontology.find_name(s)) return n;
  const auto key = detail::category_key(s);
  for (const auto& name : ontology.names()) {
    if (detail::category_key(name) == key) return name;
  }
  return std::nullopt;
}

inline ChatRequest mapping_request(const std::string& raw, const std::string& subfield,
                                   const UnitOntology& ontology, const JudgeConfig& cfg) {
  std::string cats;
  for (const auto& name : ontology.names()) cats += name + "\n";
  if (!cats.empty()) cats.pop_back();
  ChatRequest req;
  req.model = cfg.model_name;
  req.messages = {{"user", prompts::render("label_mapping",
                                           {{"CATEGORIES", cats}, {"raw", raw}, {"subfield", subfield}})}};
  req.temperature = cfg.equivalence_temperature;
  req.hints.task = JudgeTask::kMapping;
  req.hints.raw_label = raw;
  req.hints.subfield = subfield;
  req.hints.categories = ontology.as_map();
  return req;
}

// One category per labeled problem. Labels that already name a cluster map
// to it without a judge call; empty labels and failed calls become "none".
inline std::vector<UnitAssignment> normalize_labels(const std::vector<RawUnitLabel>& raw,
                                                    const std::vector<Problem>& problems,
                                                    const UnitOntology& ontology, const JudgeClient& client,
                                                    std::size_t jobs = 1) {
  if (ontology.size() == 0) throw ContractError("normalize_labels needs a non-empty ontology");
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;
  std::vector<UnitAssignment> out(raw.size());
  parallel_for(raw.size(), jobs, [&](std::size_t i) {
    const auto& r = raw[i];
    UnitAssignment a{r.problem_id, r.label, std::string(kNoneCategory), "none"};
    const auto label = text::trim(r.label);
    if (label.empty() || text::iequals(label, kNoneCategory)) {
      out[i] = std::move(a);
      return;
    }
    if (auto name = ontology.find_name(label)) {
      a.category = *name;
      a.status = "canonical";
      out[i] = std::move(a);
      return;
    }
    const auto it = by_id.find(r.problem_id);
    const std::string subfield = it == by_id.end() ? "" : it->second->subfield;
    std::optional<std::string> mapped;
    try {
      mapped = client.call(mapping_request(std::string(label), subfield, ontology, client.config()),
                           [&](std::string_view reply) { return parse_mapping_reply(reply, ontology); });
    } catch (const TransportError& e) {
      log_warning("mapping call for '" + r.problem_id + "' failed: " + e.what());
    }
    if (!mapped) {
      a.status = "unparsed";
    } else if (*mapped != kNoneCategory) {
      a.category = *mapped;
      a.status = "mapped";
    }
    out[i] = std::move(a);
  });
  return out;
}

// Problems per category (plus "none"); the counts sum to assignments.size().
inline std::map<std::string, std::size_t> category_counts(const std::vector<UnitAssignment>& assignments,
                                                          const UnitOntology& ontology) {
  std::map<std::string, std::size_t> counts;
  for (const auto& name : ontology.names()) counts[name] = 0;
  counts[std::string(kNoneCategory)] = 0;
  for (const auto& a : assignments) ++counts[a.category];
  return counts;
}

inline nlohmann::ordered_json to_json(const UnitAssignment& a) {
  nlohmann::ordered_json j;
  j["problem_id"] = a.problem_id;
  j["raw_label"] = a.raw_label;
  j["category"] = a.category;
  j["status"] = a.status;
  return j;
}

// --- run directory ----------------------------------------------------------------

// <dir>/manifest.json, units.json, ontology.json, assignments.json and the
// judge response cache under <dir>/cache.
class LabelRun {
 public:
  static constexpr std::string_view kFormat = "vlmreward-label-run";

  explicit LabelRun(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path cache_dir() const { return dir_ / "cache"; }

  std::vector<RawUnitLabel> load_units() const {
    std::vector<RawUnitLabel> out;
    const auto path = dir_ / "units.json";
    if (!std::filesystem::exists(path)) return out;
    const auto doc = read(path);
    for (const auto& j : doc.at("labels")) out.push_back(raw_label_from_json(j));
    return out;
  }

  std::optional<UnitOntology> load_ontology() const {
    const auto path = dir_ / "ontology.json";
    if (!std::filesystem::exists(path)) return std::nullopt;
    return ontology_from_json(read(path).at("ontology"));
  }

  void save_units(const std::vector<RawUnitLabel>& labels, const JudgeConfig& cfg) {
    nlohmann::ordered_json j;
    auto arr = nlohmann::ordered_json::array();
    std::size_t ok = 0;
    for (const auto& r : labels) {
      arr.push_back(to_json(r));
      ok += r.ok();
    }
    j["labels"] = std::move(arr);
    write(dir_ / "units.json", j);
    stage("units", cfg, {{"file", "units.json"}, {"count", labels.size()}, {"ok", ok},
                         {"template_sha256", sha256_hex(prompts::templates().at("unit_extract"))}});
  }

  void save_ontology(const OntologyBuild& build, const JudgeConfig& cfg) {
    nlohmann::ordered_json j;
    j["ontology"] = to_json(build.ontology);
    j["flagged_batches"] = build.flagged_batches;
    j["unassigned"] = build.unassigned;
    write(dir_ / "ontology.json", j);
    stage("ontology", cfg, {{"file", "ontology.json"}, {"clusters", build.ontology.size()},
                            {"flagged_batches", build.flagged_batches.size()},
                            {"template_sha256", sha256_hex(prompts::templates().at("ontology_cluster"))}});
  }

  void save_assignments(const std::vector<UnitAssignment>& assignments, const UnitOntology& ontology,
                        const JudgeConfig& cfg) {
    nlohmann::ordered_json j;
    j["ontology_version"] = ontology.version();
    auto arr = nlohmann::ordered_json::array();
    for (const auto& a : assignments) arr.push_back(to_json(a));
    j["assignments"] = std::move(arr);
    nlohmann::ordered_json counts;
    for (const auto& [name, n] : category_counts(assignments, ontology)) counts[name] = n;
    j["counts"] = std::move(counts);
    write(dir_ / "assignments.json", j);
    stage("mapping", cfg, {{"file", "assignments.json"}, {"count", assignments.size()},
                           {"template_sha256", sha256_hex(prompts::templates().at("label_mapping"))}});
  }

 private:
  static nlohmann::json read(const std::filesystem::path& path) {
    std::ifstream in(path);
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path.string() + " is not valid JSON: " + e.what());
    }
  }

  static void write(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw ValidationError("cannot write " + path.string());
      out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
  }

  void stage(const std::string& name, const JudgeConfig& cfg, nlohmann::ordered_json info) {
    const auto path = dir_ / "manifest.json";
    nlohmann::ordered_json m;
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      m = nlohmann::ordered_json::parse(in);
    } else {
      m["format"] = kFormat;
      m["version"] = 1;
      m["stages"] = nlohmann::ordered_json::object();
    }
    info["model"] = cfg.model_name;
    m["stages"][name] = std::move(info);
    write(path, m);
  }

  std::filesystem::path dir_;
};

}  // namespace vlmreward
