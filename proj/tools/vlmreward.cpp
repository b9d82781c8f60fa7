// vlmreward: command-line entry point.
//
//   vlmreward score      --problems P --completions C --reward R [--captures-dir D] [--out F]
//   vlmreward attn       --captures M --image I --out DIR
//   vlmreward train-toy  --config F --out DIR
//   vlmreward eval       --problems P --completions C --out DIR [--mode offline|judge]
//   vlmreward label      --problems P --out DIR [--ontology curated-v1|clustered]
//   vlmreward report     REPORT.json... --out DIR
//
// Machine-readable results go to stdout (or --out files); diagnostics go to
// stderr. Exit status is 0 only when the command succeeded.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vlmreward/attention_grounding.hpp"
#include "vlmreward/capture_io.hpp"
#include "vlmreward/composite.hpp"
#include "vlmreward/dataset_io.hpp"
#include "vlmreward/error.hpp"
#include "vlmreward/eval_harness.hpp"
#include "vlmreward/image_io.hpp"
#include "vlmreward/judge.hpp"
#include "vlmreward/judge_http.hpp"
#include "vlmreward/labeling.hpp"
#include "vlmreward/parallel.hpp"
#include "vlmreward/render.hpp"
#include "vlmreward/scoring.hpp"
#include "vlmreward/toy_trainer.hpp"
#include "vlmreward/unit_ontology.hpp"

namespace fs = std::filesystem;
using namespace vlmreward;

namespace {

struct JudgeOptions {
  std::string backend = "offline";
  std::string url = JudgeConfig{}.endpoint_url;
  std::string model = JudgeConfig{}.model_name;
  int n_judges = 3;
  double temperature = 0.7;
  int timeout_ms = 60000;
  int max_retries = 2;
  int max_in_flight = 8;
  std::string cache_dir;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--judge", backend, "Judge backend: offline (rule-based, no network) or http")
        ->check(CLI::IsMember({"offline", "http"}));
    cmd->add_option("--judge-url", url, "OpenAI-compatible endpoint (key from VLMREWARD_JUDGE_API_KEY or OPENAI_API_KEY)");
    cmd->add_option("--judge-model", model, "Judge model name");
    cmd->add_option("--n-judges", n_judges, "Jury size (odd)");
    cmd->add_option("--judge-temperature", temperature, "Sampling temperature for jury calls");
    cmd->add_option("--judge-timeout-ms", timeout_ms, "Per-request timeout");
    cmd->add_option("--judge-retries", max_retries, "Retries after a failed call");
    cmd->add_option("--judge-in-flight", max_in_flight, "Maximum concurrent judge requests");
    cmd->add_option("--cache-dir", cache_dir, "Judge response cache directory");
  }

  JudgeConfig config() const {
    JudgeConfig cfg;
    cfg.endpoint_url = url;
    cfg.model_name = model;
    cfg.n_judges = n_judges;
    cfg.temperature = temperature;
    cfg.timeout = std::chrono::milliseconds(timeout_ms);
    cfg.max_retries = max_retries;
    cfg.max_in_flight = max_in_flight;
    return cfg;
  }

  std::unique_ptr<JudgeClient> client(const std::string& default_cache = "") const {
    const auto cfg = config();
    std::shared_ptr<ChatBackend> chat;
    if (backend == "http") {
      chat = std::make_shared<HttpJudgeBackend>(cfg);
    } else {
      chat = std::make_shared<OfflineJudge>();
    }
    std::shared_ptr<ResponseCache> cache;
    const auto dir = cache_dir.empty() ? default_cache : cache_dir;
    if (!dir.empty()) cache = std::make_shared<ResponseCache>(dir);
    return std::make_unique<JudgeClient>(chat, cfg, cache);
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValidationError("cannot create output directory " + dir.string());
}

// --- score --------------------------------------------------------------------------

struct ScoreArgs {
  std::string problems;
  std::string completions;
  std::string reward = "Fmt";
  std::string captures_dir;
  std::string out;
  int white_threshold = kDefaultWhiteThreshold;
  bool no_fill = false;
};

int cmd_score(const ScoreArgs& a, const JudgeOptions& j, std::size_t jobs) {
  const auto sel = RewardSelection::parse(a.reward);
  const auto problems = load_problems(a.problems);
  const auto completions = load_completions(a.completions);
  const auto matched = match_completions(problems, completions);
  if (sel.uses(RewardTerm::kAttention) && a.captures_dir.empty()) {
    throw ValidationError("reward '" + a.reward + "' needs --captures-dir");
  }
  bool judge_needed = false;
  for (const auto& p : problems) judge_needed = judge_needed || needs_judge(p, sel);
  std::unique_ptr<JudgeClient> judge;
  if (judge_needed) judge = j.client();
  const auto dataset_dir = fs::path(a.problems).parent_path();

  std::vector<RewardBreakdown> out(problems.size());
  // Jury calls already fan out; scoring across problems uses the job bound.
  parallel_for(problems.size(), jobs, [&](std::size_t i) {
    const auto& p = problems[i];
    std::optional<double> r_attn;
    if (!a.captures_dir.empty()) {
      const auto manifest = fs::path(a.captures_dir) / (p.id + ".json");
      if (fs::exists(manifest)) {
        const auto captures = read_captures(manifest);
        const auto image = read_png(resolve_image_path(p, dataset_dir));
        GroundingOptions opts;
        opts.white_threshold = a.white_threshold;
        opts.fill_whitespace = !a.no_fill;
        r_attn = attn_reward_for_rollout(captures, image, opts).asm_value;
      } else if (sel.uses(RewardTerm::kAttention)) {
        throw ValidationError("no capture manifest for problem '" + p.id + "' at " + manifest.string());
      }
    }
    ScoringContext ctx;
    ctx.judge = judge.get();
    out[i] = score_completion(p, Completion(matched[i]->text), sel, ctx, r_attn);
  });

  std::ostringstream lines;
  for (const auto& b : out) {
    auto jb = to_json(b);
    jb["reward"] = sel.name();
    lines << jb.dump() << '\n';
  }
  if (a.out.empty()) {
    std::cout << lines.str();
  } else {
    write_text(a.out, lines.str());
  }
  return 0;
}

// --- attn ---------------------------------------------------------------------------

struct AttnArgs {
  std::string captures;
  std::string image;
  std::string out;
  int white_threshold = kDefaultWhiteThreshold;
  bool no_fill = false;
  bool no_heatmaps = false;
};

int cmd_attn(const AttnArgs& a, std::size_t jobs) {
  const auto captures = read_captures(a.captures);
  const auto image = read_png(a.image);
  GroundingOptions opts;
  opts.white_threshold = a.white_threshold;
  opts.fill_whitespace = !a.no_fill;
  opts.jobs = jobs;
  const auto scores = attn_reward_for_rollout(captures, image, opts);

  nlohmann::ordered_json j;
  j["asm"] = scores.asm_value;
  j["entropy"] = scores.entropy;
  j["per_token"] = scores.per_token;
  j["white_threshold"] = a.white_threshold;
  j["fill_whitespace"] = !a.no_fill;
  j["tokens"] = scores.per_token.size();

  if (!a.out.empty()) {
    const fs::path out(a.out);
    prepare_dir(out);
    if (!a.no_heatmaps) {
      std::size_t k = 0;
      for (const auto& c : captures) {
        const auto heads = prepare_heads(c);
        for (auto pos : scored_positions(c)) {
          char name[32];
          std::snprintf(name, sizeof(name), "token_%04zu.png", k++);
          write_png(out / name, render::overlay(image, token_pixel_map(heads, c, pos)));
        }
      }
      write_png(out / "cumulative.png", render::overlay(image, render::rescale01(scores.cumulative)));
    }
    write_text(out / "scores.json", j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

// --- train-toy ------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::string task;
  std::string reward;
  bool quiet = false;
};

int cmd_train_toy(const TrainArgs& a, std::size_t jobs) {
  nlohmann::json raw = nlohmann::json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ValidationError("cannot open config " + a.config);
    try {
      raw = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("config " + a.config + " is not valid JSON: " + e.what());
    }
  }
  if (a.seed) raw["seed"] = *a.seed;
  if (a.steps) raw["steps"] = *a.steps;
  if (!a.task.empty()) raw["task"] = a.task;
  if (!a.reward.empty()) raw["reward"] = a.reward;
  const auto cfg = toy_config_from_json(raw);

  const fs::path out(a.out);
  prepare_dir(out);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  std::ofstream history(out / "history.jsonl", std::ios::trunc);
  const auto records = run_toy(cfg, jobs, [&](const StepRecord& r) {
    history << to_json(r).dump() << '\n';
    if (!a.quiet && (r.step % 50 == 0)) {
      std::cerr << "step " << r.step << " reward " << r.mean_reward << " format " << r.format << " accuracy "
                << r.accuracy << '\n';
    }
  });
  history.close();

  std::vector<render::Series> comps = {{"reward", {}}, {"format", {}}, {"accuracy", {}}, {"rubric", {}}};
  if (cfg.task == ToyTaskKind::kGrounding) comps.push_back({"attention", {}});
  render::Series tokens{"tokens", {}};
  render::Series kl{"kl", {}};
  for (const auto& r : records) {
    comps[0].values.push_back(r.mean_reward);
    comps[1].values.push_back(r.format);
    comps[2].values.push_back(r.accuracy);
    comps[3].values.push_back(r.rubric);
    if (comps.size() > 4) comps[4].values.push_back(r.attention);
    tokens.values.push_back(r.mean_tokens);
    kl.values.push_back(r.kl);
  }
  write_png(out / "rewards.png", render::line_plot(comps, "reward components per step"));
  write_png(out / "tokens.png", render::line_plot({tokens}, "mean completion tokens per step"));
  write_png(out / "kl.png", render::line_plot({kl}, "kl estimate per step"));

  nlohmann::ordered_json summary;
  summary["steps"] = records.size();
  summary["final"] = records.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(to_json(records.back()));
  summary["history"] = (out / "history.jsonl").string();
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// --- eval -----------------------------------------------------------------------------

struct EvalArgs {
  std::string problems;
  std::string completions;
  std::string out;
  std::string mode = "offline";
  std::string label = "run";
};

int cmd_eval(const EvalArgs& a, const JudgeOptions& j, std::size_t jobs) {
  const auto problems = load_problems(a.problems);
  const auto completions = load_completions(a.completions);
  EvalOptions opts;
  opts.mode = a.mode == "judge" ? EvalMode::kJudge : EvalMode::kOffline;
  opts.jobs = jobs;
  std::unique_ptr<JudgeClient> judge;
  if (opts.mode == EvalMode::kJudge) {
    auto jo = j;
    jo.n_judges = 1;
    judge = jo.client();
  }
  const auto records = evaluate(problems, completions, opts, judge.get());
  const auto report = aggregate(records, problems);
  const auto json = to_json(report);
  if (!a.out.empty()) {
    const fs::path out(a.out);
    prepare_dir(out);
    std::ostringstream lines;
    for (const auto& r : records) lines << to_json(r).dump() << '\n';
    write_text(out / "records.jsonl", lines.str());
    write_text(out / "report.json", json.dump(2) + "\n");
    write_text(out / "report.txt", report_text(report, a.label));
    write_png(out / "domains.png", domain_bar_chart(report));
  }
  std::cout << json.dump(2) << '\n';
  return 0;
}

// --- label ----------------------------------------------------------------------------

struct LabelArgs {
  std::string problems;
  std::string out;
  std::string ontology = "curated-v1";
  std::size_t batch_size = kDefaultOntologyBatch;
};

int cmd_label(const LabelArgs& a, const JudgeOptions& j, std::size_t jobs) {
  auto problems = load_problems(a.problems);
  LabelRun run(a.out);
  const auto client = j.client(run.cache_dir().string());
  const auto cfg = client->config();

  auto units = label_units(problems, *client, run.load_units(), jobs);
  run.save_units(units, cfg);
  std::size_t failed = 0;
  for (const auto& u : units) failed += !u.ok();
  if (failed > 0) std::cerr << failed << " problem(s) without a raw label; rerun to resume\n";

  UnitOntology ontology;
  if (a.ontology == "curated-v1") {
    ontology = UnitOntology::curated_v1();
    run.save_ontology({ontology, {}, {}}, cfg);
  } else if (auto existing = run.load_ontology(); existing && existing->version() != "curated-v1") {
    ontology = *existing;
  } else {
    std::vector<std::string> labels;
    for (const auto& u : units) {
      if (u.ok()) labels.push_back(u.label);
    }
    auto build = cluster_ontology(labels, *client, a.batch_size);
    if (!build.flagged_batches.empty()) {
      std::cerr << build.flagged_batches.size() << " ontology batch(es) flagged for manual review\n";
    }
    run.save_ontology(build, cfg);
    ontology = build.ontology;
  }

  const auto assignments = normalize_labels(units, problems, ontology, *client, jobs);
  run.save_assignments(assignments, ontology, cfg);
  const auto principles_filled = fill_missing_principles(problems, units);
  write_problems(run.dir() / "problems.labeled.jsonl", problems);

  nlohmann::ordered_json summary;
  summary["run_dir"] = run.dir().string();
  summary["problems"] = problems.size();
  summary["labeled"] = units.size() - failed;
  summary["principles_filled"] = principles_filled;
  summary["ontology_version"] = ontology.version();
  nlohmann::ordered_json counts;
  for (const auto& [name, n] : category_counts(assignments, ontology)) counts[name] = n;
  summary["counts"] = std::move(counts);
  std::cout << summary.dump(2) << '\n';
  return failed == 0 ? 0 : 3;
}

// --- report ---------------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> reports;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  std::vector<Report> reports;
  for (const auto& path : a.reports) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open report " + path);
    try {
      reports.push_back(report_from_json(nlohmann::json::parse(in)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path + " is not valid JSON: " + e.what());
    }
  }
  const auto mean = average_reports(reports);
  const auto json = to_json(mean);
  if (!a.out.empty()) {
    const fs::path out(a.out);
    prepare_dir(out);
    write_text(out / "mean.json", json.dump(2) + "\n");
    write_text(out / "mean.txt", mean_report_text(mean));
  }
  std::cout << json.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward engineering toolkit for GRPO post-training of vision-language models"};
  app.require_subcommand(1);
  std::size_t jobs = 1;
  app.add_option("--jobs,-j", jobs, "Worker threads for per-item parallel work")->check(CLI::PositiveNumber);

  JudgeOptions judge;

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Per-completion reward breakdowns as JSON lines");
  s->add_option("--problems", score.problems, "Problems JSONL")->required()->check(CLI::ExistingFile);
  s->add_option("--completions", score.completions, "Completions JSONL")->required()->check(CLI::ExistingFile);
  s->add_option("--reward", score.reward, "Fmt, Fmt+Acc, Rubric, ASM, Fmt+Acc+ASM or e.g. 'fmt + 0.5*acc + asm'");
  s->add_option("--captures-dir", score.captures_dir, "Directory of <problem_id>.json capture manifests");
  s->add_option("--white-threshold", score.white_threshold, "Background threshold")->check(CLI::Range(0, 255));
  s->add_flag("--no-fill", score.no_fill, "Skip whitespace hole filling");
  s->add_option("--out", score.out, "Output JSONL (default: stdout)");
  judge.add_to(s);

  AttnArgs attn;
  auto* at = app.add_subcommand("attn", "Attention grounding scores and heatmaps for one rollout");
  at->add_option("--captures", attn.captures, "Capture manifest")->required()->check(CLI::ExistingFile);
  at->add_option("--image", attn.image, "PNG image")->required()->check(CLI::ExistingFile);
  at->add_option("--out", attn.out, "Output directory for scores.json and heatmaps");
  at->add_option("--white-threshold", attn.white_threshold, "Background threshold")->check(CLI::Range(0, 255));
  at->add_flag("--no-fill", attn.no_fill, "Skip whitespace hole filling");
  at->add_flag("--no-heatmaps", attn.no_heatmaps, "Write scores only");

  TrainArgs train;
  auto* tr = app.add_subcommand("train-toy", "Desk-scale GRPO run on a synthetic task");
  tr->add_option("--config", train.config, "Run config JSON (seed required)");
  tr->add_option("--out", train.out, "Output directory")->required();
  tr->add_option("--seed", train.seed, "Override the config seed");
  tr->add_option("--steps", train.steps, "Override the number of steps");
  tr->add_option("--task", train.task, "tag_emission, parity_mcq or grounding");
  tr->add_option("--reward", train.reward, "Reward condition");
  tr->add_flag("--quiet", train.quiet, "No progress lines on stderr");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score completions and aggregate a per-domain report");
  e->add_option("--problems", ev.problems, "Problems JSONL")->required()->check(CLI::ExistingFile);
  e->add_option("--completions", ev.completions, "Completions JSONL")->required()->check(CLI::ExistingFile);
  e->add_option("--mode", ev.mode, "offline (no network) or judge")->check(CLI::IsMember({"offline", "judge"}));
  e->add_option("--label", ev.label, "Row label in the text table");
  e->add_option("--out", ev.out, "Output directory for records, report and chart");
  judge.add_to(e);

  LabelArgs label;
  auto* l = app.add_subcommand("label", "Unit labeling pipeline (resumable run directory)");
  l->add_option("--problems", label.problems, "Problems JSONL")->required()->check(CLI::ExistingFile);
  l->add_option("--out", label.out, "Run directory")->required();
  l->add_option("--ontology", label.ontology, "curated-v1 (built in) or clustered (judge-built)")
      ->check(CLI::IsMember({"curated-v1", "clustered"}));
  l->add_option("--batch-size", label.batch_size, "Labels per ontology batch")->check(CLI::PositiveNumber);
  judge.add_to(l);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Mean table over several report JSONs");
  r->add_option("reports", report.reports, "Report JSON files")->required()->check(CLI::ExistingFile);
  r->add_option("--out", report.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (s->parsed()) return cmd_score(score, judge, jobs);
    if (at->parsed()) return cmd_attn(attn, jobs);
    if (tr->parsed()) return cmd_train_toy(train, jobs);
    if (e->parsed()) return cmd_eval(ev, judge, jobs);
    if (l->parsed()) return cmd_label(label, judge, jobs);
    if (r->parsed()) return cmd_report(report);
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const ContractError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const NumericError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 4;
  } catch (const TransportError& err) {
    std::cerr << "error: judge transport: " << err.what() << '\n';
    return 5;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}
