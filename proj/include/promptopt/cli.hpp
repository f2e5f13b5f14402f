#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptopt/optimizer.hpp"

namespace popt {

struct OptimizeArgs {
  std::string config_path;
  std::string dataset_path;
  std::string out_dir = "runs";
  std::string run_id;  // derived from config + dataset when empty
  bool force = false;
  std::optional<int> stop_after;  // debugging aid: pause after N iterations
  std::optional<int> max_concurrency;
  std::optional<std::uint64_t> seed;
  bool no_prioritize_weak = false;
  bool no_structured_reasoning = false;
  bool text_only = false;  // strip image payloads from every request
};

struct ResumeArgs {
  std::string checkpoint_path;
};

struct EvaluateArgs {
  std::string config_path;
  std::string dataset_path;
  std::string prompt_file;
  std::string split = "test";
};

struct ReportArgs {
  std::string run_dir;
};

/// Applies CLI overrides onto the parsed config document so they survive
/// into checkpoints and resumed runs.
void apply_overrides(nlohmann::json& doc, const OptimizeArgs& args);

/// Builds the backend bundle described by the config's "backends" section.
Backends make_backends(const nlohmann::json& config_doc, const std::vector<Example>& examples,
                       TranscriptSink transcript = nullptr);

std::string derive_run_id(const nlohmann::json& config_doc, const std::string& dataset_path);

// Exit codes: 0 success, 2 config error, 3 backend error, 4 checkpoint error.
int cmd_optimize(const OptimizeArgs& args);
int cmd_resume(const ResumeArgs& args);
int cmd_evaluate(const EvaluateArgs& args);
int cmd_report(const ReportArgs& args);

int cli_main(int argc, char** argv);

}  // namespace popt
