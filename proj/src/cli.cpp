#include "promptopt/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CheckpointError*>(&e)) return 4;
  if (dynamic_cast<const BackendError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  return 1;
}

json parse_config_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": invalid JSON: " + e.what());
  }
}

MockOracleSpec parse_mock_oracle(const json& doc) {
  MockOracleSpec spec;
  if (!doc.contains("mock_oracle")) return spec;
  const auto& m = doc.at("mock_oracle");
  if (m.contains("harmful_markers"))
    spec.harmful_markers = m.at("harmful_markers").get<std::vector<std::string>>();
  if (m.contains("helpful_markers"))
    spec.helpful_markers = m.at("helpful_markers").get<std::vector<std::string>>();
  if (m.contains("fail_map"))
    for (const auto& [id, markers] : m.at("fail_map").items())
      spec.fail_map[id] = markers.get<std::vector<std::string>>();
  if (m.contains("pass_grade")) spec.pass_grade = m.at("pass_grade").get<double>();
  if (m.contains("fail_grade")) spec.fail_grade = m.at("fail_grade").get<double>();
  if (spec.pass_grade <= spec.fail_grade || spec.pass_grade > 100.0 || spec.fail_grade < 0.0)
    throw ConfigError("mock_oracle: pass_grade must exceed fail_grade, both in [0,100]");
  return spec;
}

std::shared_ptr<ModelBackend> build_backend(const std::string& slot, const json& spec,
                                            const json& doc, const std::vector<Example>& examples,
                                            const TranscriptSink& transcript) {
  const std::string kind = spec.contains("kind") ? spec.at("kind").get<std::string>() : "null";
  if (kind == "null" || kind == "none" || kind == "rule") return nullptr;
  if (kind == "mock") {
    if (slot == "task") return std::make_shared<MockTaskBackend>(parse_mock_oracle(doc), examples);
    if (slot == "grader") {
      MockOracleSpec oracle = parse_mock_oracle(doc);
      double pass = spec.contains("pass_grade") ? spec.at("pass_grade").get<double>()
                                                : oracle.pass_grade;
      double fail = spec.contains("fail_grade") ? spec.at("fail_grade").get<double>()
                                                : oracle.fail_grade;
      return std::make_shared<MockGraderBackend>(pass, fail);
    }
    throw ConfigError("backends." + slot + ": kind \"mock\" is only valid for task and grader");
  }
  if (kind == "scripted") {
    auto backend = std::make_shared<ScriptedBackend>(
        spec.contains("name") ? spec.at("name").get<std::string>() : slot + "-scripted");
    if (spec.contains("queue"))
      for (const auto& item : spec.at("queue")) backend->push_response(item.get<std::string>());
    if (spec.contains("rules"))
      for (const auto& rule : spec.at("rules"))
        backend->add_rule({rule.at("match").get<std::vector<std::string>>(),
                           rule.at("response").get<std::string>()});
    if (spec.contains("default"))
      backend->set_default_response(spec.at("default").get<std::string>());
    return backend;
  }
  if (kind == "http") {
    HttpBackendConfig cfg;
    cfg.name = spec.contains("name") ? spec.at("name").get<std::string>() : slot + "-http";
    if (!spec.contains("model") || !spec.contains("base_url"))
      throw ConfigError("backends." + slot + ": http backend needs \"model\" and \"base_url\"");
    cfg.model = spec.at("model").get<std::string>();
    cfg.base_url = spec.at("base_url").get<std::string>();
    if (spec.contains("path")) cfg.path = spec.at("path").get<std::string>();
    if (spec.contains("api_key_env")) cfg.api_key_env = spec.at("api_key_env").get<std::string>();
    if (spec.contains("max_attempts")) cfg.max_attempts = spec.at("max_attempts").get<int>();
    if (spec.contains("retry_base_ms")) cfg.retry_base_ms = spec.at("retry_base_ms").get<int>();
    if (spec.contains("unsupported_params"))
      cfg.unsupported_params = spec.at("unsupported_params").get<std::vector<std::string>>();
    return std::make_shared<HttpChatBackend>(cfg, nullptr, nullptr, transcript);
  }
  throw ConfigError("backends." + slot + ": unknown kind \"" + kind + "\"");
}

void write_manifest(const fs::path& run_dir, const json& manifest) {
  write_file_atomic((run_dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

json read_manifest(const fs::path& run_dir) {
  const fs::path path = run_dir / "manifest.json";
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(read_file(path.string()));
  } catch (const json::exception&) {
    return json::object();
  }
}

struct RunDirSinks {
  std::ofstream log;
  fs::path run_dir;

  explicit RunDirSinks(const fs::path& dir)
      : log(dir / "run.log", std::ios::app | std::ios::binary), run_dir(dir) {
    if (!log) throw DataError("cannot open run log in " + dir.string());
  }

  RunHooks hooks(const std::string& run_id, const std::string& dataset_path,
                 std::optional<int> stop_after) {
    RunHooks h;
    h.run_id = run_id;
    h.dataset_path = dataset_path;
    h.stop_after = stop_after;
    h.log_event = [this](const json& event) {
      log << event.dump() << "\n";
      log.flush();
    };
    h.on_checkpoint = [this](const RunState& state) {
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%04d.json", state.iteration);
      save_checkpoint_file(state, (run_dir / "checkpoints" / name).string());
      save_checkpoint_file(state, (run_dir / "checkpoint.json").string());
    };
    return h;
  }
};

void write_report_files(const fs::path& run_dir, const RunReport& rep) {
  write_file_atomic((run_dir / "report.json").string(), rep.report.dump(2) + "\n");
  write_file_atomic((run_dir / "report.csv").string(), rep.csv);
}

void finalize_manifest(const fs::path& run_dir, const RunReport& rep) {
  json manifest = read_manifest(run_dir);
  manifest["status"] = rep.interrupted ? "interrupted" : "completed";
  manifest["stop_reason"] = rep.stop_reason;
  manifest["finished_at"] = iso8601_now();
  std::uint64_t total = 0;
  for (const auto& [name, count] : rep.state.call_counts) total += count;
  manifest["total_calls"] = total;
  write_manifest(run_dir, manifest);
}

}  // namespace

void apply_overrides(json& doc, const OptimizeArgs& args) {
  if (args.text_only) doc["multimodal"] = false;
  if (args.no_prioritize_weak) doc["prioritize_weak"] = false;
  if (args.no_structured_reasoning) doc["structured_reasoning"] = false;
  if (args.max_concurrency.has_value()) doc["max_concurrency"] = *args.max_concurrency;
  if (args.seed.has_value()) doc["seed"] = *args.seed;
}

Backends make_backends(const json& config_doc, const std::vector<Example>& examples,
                       TranscriptSink transcript) {
  if (!config_doc.contains("backends"))
    throw ConfigError("config: missing \"backends\" section");
  const auto& section = config_doc.at("backends");
  Backends backends;
  if (!section.contains("task")) throw ConfigError("backends.task: required");
  if (!section.contains("grader")) throw ConfigError("backends.grader: required");
  backends.task = build_backend("task", section.at("task"), config_doc, examples, transcript);
  backends.grader =
      build_backend("grader", section.at("grader"), config_doc, examples, transcript);
  if (section.contains("optimizer"))
    backends.optimizer =
        build_backend("optimizer", section.at("optimizer"), config_doc, examples, transcript);
  if (section.contains("parser"))
    backends.parser =
        build_backend("parser", section.at("parser"), config_doc, examples, transcript);
  if (!backends.task) throw ConfigError("backends.task: must not be null");
  if (!backends.grader) throw ConfigError("backends.grader: must not be null");
  return backends;
}

std::string derive_run_id(const json& config_doc, const std::string& dataset_path) {
  return "run-" + fnv1a64_hex(config_doc.dump() + "\n" + dataset_path).substr(0, 12);
}

int cmd_optimize(const OptimizeArgs& args) {
  try {
    json doc = parse_config_file(args.config_path);
    apply_overrides(doc, args);
    OptimizerConfig cfg = OptimizerConfig::from_json(doc);
    auto issues = cfg.validate();
    if (!issues.empty()) {
      for (const auto& issue : issues) std::cerr << "config error: " << issue << "\n";
      return 2;
    }
    const auto examples = load_dataset(args.dataset_path);

    const std::string run_id =
        args.run_id.empty() ? derive_run_id(cfg.raw, args.dataset_path) : args.run_id;
    const fs::path run_dir = fs::path(args.out_dir) / run_id;
    if (fs::exists(run_dir) && !args.force) {
      std::cerr << "run directory already exists: " << run_dir.string()
                << " (use --force to overwrite)\n";
      return 2;
    }
    fs::remove_all(run_dir);
    fs::create_directories(run_dir / "checkpoints");

    RunDirSinks sinks(run_dir);
    Backends backends = make_backends(doc, examples, sinks.hooks(run_id, "", {}).log_event);

    json manifest{{"run_id", run_id},
                  {"dataset_path", args.dataset_path},
                  {"config", cfg.to_json()},
                  {"backends", json::object()},
                  {"started_at", iso8601_now()},
                  {"status", "running"}};
    for (ModelBackend* b : backends.all()) manifest["backends"][b->name()] = true;
    write_manifest(run_dir, manifest);

    RunHooks hooks = sinks.hooks(run_id, args.dataset_path, args.stop_after);
    RunReport rep = run(cfg, examples, backends, hooks);
    if (rep.interrupted) {
      finalize_manifest(run_dir, rep);
      std::cout << "interrupted after iteration " << rep.state.iteration
                << "; resume with: promptopt resume " << (run_dir / "checkpoint.json").string()
                << "\n";
      return 0;
    }
    write_report_files(run_dir, rep);
    finalize_manifest(run_dir, rep);
    std::cout << "stop reason: " << rep.stop_reason << "\n"
              << "best dev score: " << fmt_double(rep.state.best_dev_score) << "\n"
              << "test accuracy: " << fmt_double(rep.test_accuracy) << "\n"
              << "run directory: " << run_dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_resume(const ResumeArgs& args) {
  try {
    RunState state = load_checkpoint_file(args.checkpoint_path);
    fs::path run_dir = fs::path(args.checkpoint_path).parent_path();
    if (run_dir.filename() == "checkpoints") run_dir = run_dir.parent_path();

    const fs::path latest_path = run_dir / "checkpoint.json";
    if (fs::exists(latest_path)) {
      RunState latest = load_checkpoint_file(latest_path.string());
      if (latest.finalized) {
        std::cout << "run already stopped (" << latest.stop_reason << "); nothing to resume\n";
        return 0;
      }
    }
    if (state.finalized) {
      std::cout << "run already stopped (" << state.stop_reason << "); nothing to resume\n";
      return 0;
    }

    const auto examples = load_dataset(state.dataset_path);
    RunDirSinks sinks(run_dir);
    Backends backends =
        make_backends(state.config.raw, examples, sinks.hooks(state.run_id, "", {}).log_event);
    RunHooks hooks = sinks.hooks(state.run_id, state.dataset_path, {});
    RunReport rep = run(state.config, examples, backends, hooks, std::move(state));
    write_report_files(run_dir, rep);
    finalize_manifest(run_dir, rep);
    std::cout << "stop reason: " << rep.stop_reason << "\n"
              << "test accuracy: " << fmt_double(rep.test_accuracy) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_evaluate(const EvaluateArgs& args) {
  try {
    json doc = parse_config_file(args.config_path);
    OptimizerConfig cfg = OptimizerConfig::from_json(doc);
    std::string prompt = read_file(args.prompt_file);
    if (collapse_ws(prompt).empty())
      throw ConfigError("prompt file is empty: " + args.prompt_file);
    const auto examples = load_dataset(args.dataset_path);
    const DatasetSplits splits =
        sample_splits(examples, cfg.sample_fraction, cfg.dev_fraction, cfg.seed);
    const std::vector<Example>* split = nullptr;
    if (args.split == "train")
      split = &splits.train;
    else if (args.split == "dev")
      split = &splits.dev;
    else if (args.split == "test")
      split = &splits.test;
    else
      throw ConfigError("unknown split \"" + args.split + "\" (expected train, dev, or test)");

    Backends backends = make_backends(doc, examples);
    const auto results =
        evaluate_prompt(prompt, *split, *backends.task, *backends.grader, cfg.eval_options());
    std::cout << "accuracy," << fmt_double(accuracy(results)) << "\n";
    std::cout << "example_id,grade,correct\n";
    for (const auto& r : results)
      std::cout << r.example_id << "," << fmt_double(r.grade) << "," << (r.correct ? "1" : "0")
                << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_report(const ReportArgs& args) {
  try {
    const fs::path log_path = fs::path(args.run_dir) / "run.log";
    if (!fs::exists(log_path))
      throw CheckpointError("run log not found: " + log_path.string());

    std::vector<json> events;
    bool truncated = false;
    {
      std::ifstream in(log_path);
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        try {
          events.push_back(json::parse(line));
        } catch (const json::exception&) {
          std::cerr << "warning: run log truncated or corrupt at line " << lineno
                    << "; emitting partial report\n";
          truncated = true;
          break;
        }
      }
    }

    std::cout << "# Iterations\n";
    std::cout << "iteration,dev_acc,reward,drift,calls,operator,accepted,event\n";
    for (const auto& e : events) {
      if (e.value("type", "") != "iteration") continue;
      std::cout << e.at("iteration").get<int>() << ","
                << fmt_double(e.at("dev_acc").get<double>()) << ","
                << fmt_double(e.at("reward").get<double>()) << ","
                << fmt_double(e.at("drift").get<double>()) << ","
                << e.at("calls").get<std::uint64_t>() << "," << e.value("operator", "") << ","
                << (e.at("accepted").get<bool>() ? "1" : "0") << "," << e.value("event", "")
                << "\n";
    }

    std::cout << "\n# Attribution\n";
    for (const auto& e : events) {
      if (e.value("type", "") != "attribution") continue;
      std::cout << "iteration " << e.at("iteration").get<int>() << ":\n";
      for (const auto& u : e.at("units"))
        std::cout << "  s=" << fmt_double(u.at("s").get<double>())
                  << " s~=" << fmt_double(u.at("s_tilde").get<double>())
                  << " history=" << u.at("history").get<int>() << " " << u.at("fingerprint")
                  << " \"" << u.at("preview").get<std::string>() << "\"\n";
    }

    std::cout << "\n# Events\n";
    for (const auto& e : events) {
      const std::string type = e.value("type", "");
      if (type == "protective")
        std::cout << "iteration " << e.at("iteration").get<int>() << ": protective rollback (drift "
                  << fmt_double(e.at("drift").get<double>()) << ")\n";
      else if (type == "no-live-arms")
        std::cout << "iteration " << e.at("iteration").get<int>() << ": all arms eliminated\n";
      else if (type == "stop")
        std::cout << "iteration " << e.at("iteration").get<int>() << ": stop ("
                  << e.at("reason").get<std::string>() << ")\n";
    }

    std::cout << "\n# Calls\n";
    bool have_final = false;
    for (const auto& e : events) {
      if (e.value("type", "") != "final") continue;
      have_final = true;
      std::uint64_t total = 0;
      for (const auto& [name, count] : e.at("calls").items()) {
        std::cout << name << "," << count.get<std::uint64_t>() << "\n";
        total += count.get<std::uint64_t>();
      }
      std::cout << "total," << total << "\n";
    }
    if (!have_final) std::cout << "(run not finalized)\n";
    if (truncated) std::cout << "\n(partial report: run log truncated)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Iterative prompt optimization with unit-level attribution and bandit edits"};
  app.require_subcommand(1);

  OptimizeArgs opt_args;
  auto* optimize = app.add_subcommand("optimize", "Run a new optimization");
  optimize->add_option("config", opt_args.config_path, "Config file (JSON)")->required();
  optimize->add_option("dataset", opt_args.dataset_path, "Dataset file (JSONL)")->required();
  optimize->add_option("--out", opt_args.out_dir, "Output directory for runs");
  optimize->add_option("--run-id", opt_args.run_id, "Run id (derived from inputs when omitted)");
  optimize->add_flag("--force", opt_args.force, "Overwrite an existing run directory");
  int stop_after = 0;
  auto* stop_after_opt = optimize->add_option(
      "--stop-after", stop_after, "Pause after N iterations (resume later); debugging aid");
  int max_concurrency = 0;
  auto* conc_opt =
      optimize->add_option("--max-concurrency", max_concurrency, "Concurrent model calls");
  std::uint64_t seed = 0;
  auto* seed_opt = optimize->add_option("--seed", seed, "Override the config seed");
  optimize->add_flag("--no-prioritize-weak", opt_args.no_prioritize_weak,
                     "Drop the weak-unit ranking from the optimizer meta-prompt");
  optimize->add_flag("--no-structured-reasoning", opt_args.no_structured_reasoning,
                     "Drop the reasoning scaffold from the optimizer meta-prompt");
  optimize->add_flag("--text-only", opt_args.text_only, "Strip image payloads from all requests");

  ResumeArgs resume_args;
  auto* resume = app.add_subcommand("resume", "Continue a run from a checkpoint");
  resume->add_option("checkpoint", resume_args.checkpoint_path, "Checkpoint file")->required();

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score a prompt file on a dataset split");
  evaluate->add_option("config", eval_args.config_path, "Config file (JSON)")->required();
  evaluate->add_option("dataset", eval_args.dataset_path, "Dataset file (JSONL)")->required();
  evaluate->add_option("--prompt-file", eval_args.prompt_file, "Prompt to evaluate")->required();
  evaluate->add_option("--split", eval_args.split, "train, dev, or test");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Summarize a run directory");
  report->add_option("run_dir", report_args.run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*optimize) {
    if (*stop_after_opt) opt_args.stop_after = stop_after;
    if (*conc_opt) opt_args.max_concurrency = max_concurrency;
    if (*seed_opt) opt_args.seed = seed;
    return cmd_optimize(opt_args);
  }
  if (*resume) return cmd_resume(resume_args);
  if (*evaluate) return cmd_evaluate(eval_args);
  if (*report) return cmd_report(report_args);
  return 1;
}

}  // namespace popt
