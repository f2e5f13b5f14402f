#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptopt/attributor.hpp"
#include "promptopt/backends.hpp"
#include "promptopt/corpus.hpp"
#include "promptopt/harness.hpp"
#include "promptopt/meta_prompt.hpp"
#include "promptopt/segmenter.hpp"
#include "promptopt/selector.hpp"

namespace popt {

struct OptimizerConfig {
  std::string task_prompt;

  int max_iterations = 20;       // hard cap on outer iterations
  int patience = 3;              // consecutive-iteration window for stop rules
  double min_reward = 0.005;     // rewards at or below this count as no improvement
  double drift_threshold = 0.10;
  int m = 4;                     // actionable-set size

  AttributionParams attribution;
  double exploration_c = 1.4142135623730951;
  int t_max = 100;               // global cap on bandit pulls

  double correctness_threshold = 60.0;
  bool multimodal = false;
  MetaFlags meta_flags;
  std::uint64_t seed = 0;

  double sample_fraction = 0.03;
  double dev_fraction = 0.5;
  int error_batch_cap = 16;      // most failing train examples fed to occlusion
  int max_concurrency = 8;

  GenerationParams generation;
  SegmenterOptions segmenter;

  nlohmann::json raw;  // full config document, snapshotted for resume

  /// Field-by-field validation messages; empty means valid.
  std::vector<std::string> validate() const;

  static OptimizerConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  EvalOptions eval_options() const {
    return EvalOptions{generation, multimodal, correctness_threshold, max_concurrency};
  }
};

/// Retention bookkeeping for one iteration: how many previously solved
/// examples survived the current prompt.
struct DriftRecord {
  int iteration = 0;
  int solved_prev = 0;
  int newly_failed = 0;
  double retention = 1.0;
  double drift = 0.0;
};

/// retention = (|solved_prev| - |newly failed|) / |solved_prev| (1 when the
/// previous solved set is empty); drift = 1 - retention.
DriftRecord drift_metrics(const std::set<std::string>& solved_prev,
                          const std::vector<EvalResult>& current, int iteration);

/// Mean drift across records.
double global_drift(const std::vector<DriftRecord>& records);

struct IterationRow {
  int iteration = 0;
  double dev_acc = 0.0;
  double reward = 0.0;
  double drift = 0.0;
  std::uint64_t calls = 0;  // backend calls spent in this iteration
  std::string op;
  std::string unit_fingerprint;
  bool accepted = false;
  bool aborted = false;
  std::string event;
};

/// Complete resumable optimizer state. save/load round-trips every field,
/// so a resumed run continues the exact trajectory.
struct RunState {
  std::string run_id;
  int iteration = 0;
  std::string current_prompt;
  std::string best_prompt;
  double best_dev_score = 0.0;
  double current_dev_score = 0.0;
  double initial_dev_score = 0.0;
  AttributionState attribution;
  BanditState bandit;
  std::vector<DriftRecord> drift_records;
  std::vector<IterationRow> rows;
  std::set<std::string> solved_prev;
  std::string rng_state;
  std::map<std::string, std::uint64_t> call_counts;
  int consecutive_no_improve = 0;
  int consecutive_drift_exceed = 0;
  std::string last_arm_key;
  bool stopped = false;
  std::string stop_reason;
  double test_accuracy = 0.0;  // set once the best prompt has been scored on test
  bool finalized = false;
  std::string last_eval_prompt;            // train-eval cache key
  std::vector<EvalResult> last_eval_results;
  OptimizerConfig config;
  std::string dataset_path;
};

/// Stop rules in priority order: iteration cap, no-improvement patience,
/// drift patience, exhausted pull budget. Returns the rule name that fired.
std::optional<std::string> should_stop(const RunState& state, const OptimizerConfig& config);

/// Reverts the current prompt to the best checkpoint, eliminates the arm
/// behind the offending edit, and counts the exceedance.
void protective_action(RunState& state);

struct Backends {
  std::shared_ptr<ModelBackend> task;
  std::shared_ptr<ModelBackend> grader;
  std::shared_ptr<ModelBackend> optimizer;  // may be null: rule fallbacks only
  std::shared_ptr<ModelBackend> parser;     // may be null: rule segmentation

  std::vector<ModelBackend*> all() const;
  std::map<std::string, std::uint64_t> call_counts() const;
  std::uint64_t total_calls() const;
};

struct RunHooks {
  std::function<void(const nlohmann::json&)> log_event;   // run-log line sink
  std::function<void(const RunState&)> on_checkpoint;     // called once per iteration
  std::optional<int> stop_after;  // session-only early exit for tests/debugging
  std::string run_id;             // recorded into fresh states for checkpoints
  std::string dataset_path;
};

struct RunReport {
  bool interrupted = false;  // stop_after hit before any stop rule fired
  std::string stop_reason;
  double test_accuracy = 0.0;
  RunState state;
  nlohmann::json report;
  std::string csv;
};

/// The outer optimization loop: evaluate, segment, attribute, pull one arm,
/// edit, score on dev, guard drift, checkpoint, stop. Deterministic under
/// mock backends and a fixed seed.
RunReport run(const OptimizerConfig& config, const std::vector<Example>& examples,
              const Backends& backends, const RunHooks& hooks,
              std::optional<RunState> resume_from = std::nullopt);

// --- checkpoint serialization -------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json save_checkpoint(const RunState& state);
RunState load_checkpoint(const nlohmann::json& doc);
void save_checkpoint_file(const RunState& state, const std::string& path);
RunState load_checkpoint_file(const std::string& path);

// --- final report ---------------------------------------------------------

nlohmann::json build_report(const RunState& state, double test_accuracy);
std::string report_csv(const RunState& state);

}  // namespace popt
