#include "promptopt/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

std::vector<std::string> OptimizerConfig::validate() const {
  std::vector<std::string> issues;
  auto check = [&](bool ok, const char* field, const std::string& msg) {
    if (!ok) issues.push_back(std::string(field) + ": " + msg);
  };
  check(!collapse_ws(task_prompt).empty(), "task_prompt", "must be non-empty");
  check(max_iterations >= 1, "max_iterations", "must be >= 1");
  check(patience >= 1, "patience", "must be >= 1");
  check(min_reward > 0.0 && min_reward < 1.0, "min_reward", "must be in (0,1)");
  check(drift_threshold > 0.0 && drift_threshold < 1.0, "drift_threshold", "must be in (0,1)");
  check(m >= 1, "m", "must be >= 1");
  check(attribution.lambda >= 0.0 && attribution.lambda <= 1.0, "lambda", "must be in [0,1]");
  check(attribution.alpha >= 0.0 && attribution.alpha <= 1.0, "alpha", "must be in [0,1]");
  check(attribution.gamma > 0.0 && attribution.gamma < 1.0, "gamma", "must be in (0,1)");
  check(exploration_c >= 0.0, "exploration_c", "must be >= 0");
  check(t_max >= 1, "t_max", "must be >= 1");
  check(correctness_threshold >= 0.0 && correctness_threshold <= 100.0, "correctness_threshold",
        "must be in [0,100]");
  check(sample_fraction > 0.0 && sample_fraction < 1.0, "sample_fraction", "must be in (0,1)");
  check(dev_fraction > 0.0 && dev_fraction < 1.0, "dev_fraction", "must be in (0,1)");
  check(error_batch_cap >= 1, "error_batch_cap", "must be >= 1");
  check(max_concurrency >= 1, "max_concurrency", "must be >= 1");
  check(generation.max_tokens >= 1, "generation.max_tokens", "must be >= 1");
  check(segmenter.min_unit_chars >= 1, "min_unit_chars", "must be >= 1");
  check(segmenter.max_unit_chars > segmenter.min_unit_chars, "max_unit_chars",
        "must exceed min_unit_chars");
  return issues;
}

OptimizerConfig OptimizerConfig::from_json(const json& doc) {
  OptimizerConfig cfg;
  auto get = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    return doc.contains(key) ? doc.at(key).get<T>() : fallback;
  };
  if (doc.contains("task_prompt"))
    cfg.task_prompt = doc.at("task_prompt").get<std::string>();
  else if (doc.contains("task_prompt_file"))
    cfg.task_prompt = read_file(doc.at("task_prompt_file").get<std::string>());
  cfg.max_iterations = get("max_iterations", cfg.max_iterations);
  cfg.patience = get("patience", cfg.patience);
  cfg.min_reward = get("min_reward", cfg.min_reward);
  cfg.drift_threshold = get("drift_threshold", cfg.drift_threshold);
  cfg.m = get("m", cfg.m);
  cfg.attribution.lambda = get("lambda", cfg.attribution.lambda);
  cfg.attribution.alpha = get("alpha", cfg.attribution.alpha);
  cfg.attribution.gamma = get("gamma", cfg.attribution.gamma);
  cfg.exploration_c = get("exploration_c", cfg.exploration_c);
  cfg.t_max = get("t_max", cfg.t_max);
  cfg.correctness_threshold = get("correctness_threshold", cfg.correctness_threshold);
  cfg.multimodal = get("multimodal", cfg.multimodal);
  cfg.meta_flags.prioritize_weak = get("prioritize_weak", cfg.meta_flags.prioritize_weak);
  cfg.meta_flags.structured_reasoning =
      get("structured_reasoning", cfg.meta_flags.structured_reasoning);
  cfg.seed = get("seed", cfg.seed);
  cfg.sample_fraction = get("sample_fraction", cfg.sample_fraction);
  cfg.dev_fraction = get("dev_fraction", cfg.dev_fraction);
  cfg.error_batch_cap = get("error_batch_cap", cfg.error_batch_cap);
  cfg.max_concurrency = get("max_concurrency", cfg.max_concurrency);
  if (doc.contains("generation")) {
    const auto& g = doc.at("generation");
    auto gget = [&](const char* key, auto fallback) {
      using T = decltype(fallback);
      return g.contains(key) ? g.at(key).get<T>() : fallback;
    };
    cfg.generation.temperature = gget("temperature", cfg.generation.temperature);
    cfg.generation.top_p = gget("top_p", cfg.generation.top_p);
    cfg.generation.presence_penalty = gget("presence_penalty", cfg.generation.presence_penalty);
    cfg.generation.frequency_penalty = gget("frequency_penalty", cfg.generation.frequency_penalty);
    cfg.generation.max_tokens = gget("max_tokens", cfg.generation.max_tokens);
  }
  cfg.segmenter.min_unit_chars = get("min_unit_chars", cfg.segmenter.min_unit_chars);
  cfg.segmenter.max_unit_chars = get("max_unit_chars", cfg.segmenter.max_unit_chars);
  cfg.raw = doc;
  if (!cfg.task_prompt.empty()) cfg.raw["task_prompt"] = cfg.task_prompt;
  return cfg;
}

json OptimizerConfig::to_json() const {
  json doc;
  doc["task_prompt"] = task_prompt;
  doc["max_iterations"] = max_iterations;
  doc["patience"] = patience;
  doc["min_reward"] = min_reward;
  doc["drift_threshold"] = drift_threshold;
  doc["m"] = m;
  doc["lambda"] = attribution.lambda;
  doc["alpha"] = attribution.alpha;
  doc["gamma"] = attribution.gamma;
  doc["exploration_c"] = exploration_c;
  doc["t_max"] = t_max;
  doc["correctness_threshold"] = correctness_threshold;
  doc["multimodal"] = multimodal;
  doc["prioritize_weak"] = meta_flags.prioritize_weak;
  doc["structured_reasoning"] = meta_flags.structured_reasoning;
  doc["seed"] = seed;
  doc["sample_fraction"] = sample_fraction;
  doc["dev_fraction"] = dev_fraction;
  doc["error_batch_cap"] = error_batch_cap;
  doc["max_concurrency"] = max_concurrency;
  doc["generation"] = {{"temperature", generation.temperature},
                       {"top_p", generation.top_p},
                       {"presence_penalty", generation.presence_penalty},
                       {"frequency_penalty", generation.frequency_penalty},
                       {"max_tokens", generation.max_tokens}};
  doc["min_unit_chars"] = segmenter.min_unit_chars;
  doc["max_unit_chars"] = segmenter.max_unit_chars;
  return doc;
}

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

DriftRecord drift_metrics(const std::set<std::string>& solved_prev,
                          const std::vector<EvalResult>& current, int iteration) {
  std::map<std::string, bool> correct_now;
  for (const auto& r : current) correct_now[r.example_id] = r.correct;

  int newly_failed = 0;
  for (const auto& id : solved_prev) {
    auto it = correct_now.find(id);
    if (it == correct_now.end())
      throw DataError("drift_metrics: current results are missing example \"" + id + "\"");
    if (!it->second) ++newly_failed;
  }
  DriftRecord rec;
  rec.iteration = iteration;
  rec.solved_prev = static_cast<int>(solved_prev.size());
  rec.newly_failed = newly_failed;
  rec.retention = solved_prev.empty()
                      ? 1.0
                      : static_cast<double>(rec.solved_prev - newly_failed) /
                            static_cast<double>(rec.solved_prev);
  rec.drift = 1.0 - rec.retention;
  return rec;
}

double global_drift(const std::vector<DriftRecord>& records) {
  if (records.empty()) throw std::invalid_argument("global_drift: no records");
  double sum = 0.0;
  for (const auto& r : records) sum += r.drift;
  return sum / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Stop rules and protective action
// ---------------------------------------------------------------------------

std::optional<std::string> should_stop(const RunState& state, const OptimizerConfig& config) {
  if (state.iteration >= config.max_iterations) return "iteration-limit";
  if (state.consecutive_no_improve >= config.patience) return "no-improvement";
  if (state.consecutive_drift_exceed >= config.patience) return "drift-risk";
  if (state.bandit.total_pulls >= config.t_max) return "pull-budget";
  return std::nullopt;
}

void protective_action(RunState& state) {
  state.current_prompt = state.best_prompt;
  state.current_dev_score = state.best_dev_score;
  if (!state.last_arm_key.empty()) {
    auto it = state.bandit.arms.find(state.last_arm_key);
    if (it != state.bandit.arms.end()) it->second.eliminated = true;
  }
  state.consecutive_drift_exceed += 1;
}

// ---------------------------------------------------------------------------
// Backends bundle
// ---------------------------------------------------------------------------

std::vector<ModelBackend*> Backends::all() const {
  std::vector<ModelBackend*> out;
  for (const auto& b : {task, grader, optimizer, parser})
    if (b) out.push_back(b.get());
  return out;
}

std::map<std::string, std::uint64_t> Backends::call_counts() const {
  std::map<std::string, std::uint64_t> counts;
  for (ModelBackend* b : all()) counts[b->name()] += b->call_count();
  return counts;
}

std::uint64_t Backends::total_calls() const {
  std::uint64_t total = 0;
  for (ModelBackend* b : all()) total += b->call_count();
  return total;
}

// ---------------------------------------------------------------------------
// The outer loop
// ---------------------------------------------------------------------------

namespace {

json arm_json(const Arm& arm) {
  return {{"unit_fingerprint", arm.unit_fingerprint},
          {"operator", op_name(arm.op)},
          {"unit_index", arm.unit_index}};
}

}  // namespace

RunReport run(const OptimizerConfig& config_in, const std::vector<Example>& examples,
              const Backends& backends, const RunHooks& hooks,
              std::optional<RunState> resume_from) {
  RunState state;
  if (resume_from.has_value()) {
    state = std::move(*resume_from);
    for (ModelBackend* b : backends.all()) {
      auto it = state.call_counts.find(b->name());
      if (it != state.call_counts.end()) b->set_call_count(it->second);
    }
  } else {
    auto issues = config_in.validate();
    if (!issues.empty()) {
      std::string joined;
      for (const auto& i : issues) joined += (joined.empty() ? "" : "; ") + i;
      throw ConfigError("invalid configuration: " + joined);
    }
    state.config = config_in;
    state.current_prompt = config_in.task_prompt;
    state.best_prompt = config_in.task_prompt;
    state.attribution.params = config_in.attribution;
    state.bandit.exploration_c = config_in.exploration_c;
    state.bandit.t_max = config_in.t_max;
    state.rng_state = rng_to_string(std::mt19937_64(config_in.seed));
    state.run_id = hooks.run_id;
    state.dataset_path = hooks.dataset_path;
  }
  const OptimizerConfig& cfg = state.config;
  const EvalOptions eopts = cfg.eval_options();
  ModelBackend& task = *backends.task;
  ModelBackend& grader_backend = *backends.grader;

  auto log = [&](const json& event) {
    if (hooks.log_event) hooks.log_event(event);
  };
  auto checkpoint = [&] {
    if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  };
  auto make_report = [&](bool interrupted) {
    RunReport rep;
    rep.interrupted = interrupted;
    rep.stop_reason = state.stop_reason;
    rep.test_accuracy = state.test_accuracy;
    if (!interrupted) {
      rep.report = build_report(state, state.test_accuracy);
      rep.csv = report_csv(state);
    }
    rep.state = std::move(state);
    return rep;
  };

  if (state.finalized) return make_report(false);

  const DatasetSplits splits =
      sample_splits(examples, cfg.sample_fraction, cfg.dev_fraction, cfg.seed);

  if (!resume_from.has_value()) {
    state.current_dev_score =
        accuracy(evaluate_prompt(state.current_prompt, splits.dev, task, grader_backend, eopts));
    state.best_dev_score = state.current_dev_score;
    state.initial_dev_score = state.current_dev_score;
    state.call_counts = backends.call_counts();
    log({{"type", "init"},
         {"dev_acc", state.current_dev_score},
         {"train_size", splits.train.size()},
         {"dev_size", splits.dev.size()},
         {"test_size", splits.test.size()}});
  }

  while (!state.stopped) {
    const int t = state.iteration + 1;
    const std::uint64_t calls_start = backends.total_calls();

    auto train_eval = [&] {
      if (state.last_eval_prompt != state.current_prompt || state.last_eval_results.empty()) {
        state.last_eval_results =
            evaluate_prompt(state.current_prompt, splits.train, task, grader_backend, eopts);
        state.last_eval_prompt = state.current_prompt;
      }
      return state.last_eval_results;
    };
    std::vector<EvalResult> train_results = train_eval();

    DriftRecord drift = drift_metrics(state.solved_prev, train_results, t);
    state.drift_records.push_back(drift);
    std::string event;
    if (drift.drift > cfg.drift_threshold) {
      protective_action(state);
      event = "protective-rollback";
      log({{"type", "protective"},
           {"iteration", t},
           {"drift", drift.drift},
           {"arm", state.last_arm_key}});
      train_results = train_eval();  // prompt may have been reverted
    } else {
      state.consecutive_drift_exceed = 0;
    }
    state.solved_prev = correct_ids(train_results);

    Segmentation seg = segment(state.current_prompt, cfg.segmenter, backends.parser.get());

    std::vector<Example> failing;
    for (std::size_t i = 0; i < train_results.size(); ++i) {
      if (train_results[i].correct) continue;
      failing.push_back(splits.train[i]);
      if (static_cast<int>(failing.size()) >= cfg.error_batch_cap) break;
    }

    if (!failing.empty()) {
      auto deltas = occlusion_deltas(seg, failing, task, grader_backend, eopts);
      update_scores(state.attribution, deltas, t);
    }
    auto blended = blend_history(state.attribution, t);
    ActionableSet actionable = select_actionable(blended, seg, cfg.m);

    {
      json units = json::array();
      std::set<std::string> seen;
      for (const auto& u : seg.units) {
        if (!seen.insert(u.fingerprint).second) continue;
        const auto it = state.attribution.units.find(u.fingerprint);
        units.push_back({{"fingerprint", u.fingerprint},
                         {"preview", collapse_ws(u.text).substr(0, 60)},
                         {"s", it == state.attribution.units.end() ? 0.0 : it->second.raw},
                         {"s_tilde", it == state.attribution.units.end() ? 0.0 : it->second.blended},
                         {"history", it == state.attribution.units.end()
                                         ? 0
                                         : static_cast<int>(it->second.history.size())}});
      }
      log({{"type", "attribution"}, {"iteration", t}, {"units", units}});
    }

    build_arms(actionable, state.bandit);

    double r = 0.0;
    bool accepted = false;
    bool aborted = false;
    std::string op_str;
    std::string unit_fp;
    try {
      const Arm picked = ucb_choose(state.bandit);
      const std::string key = arm_key(picked.unit_fingerprint, picked.op);
      op_str = op_name(picked.op);
      unit_fp = picked.unit_fingerprint;

      EditContext ctx;
      for (const auto& u : seg.units)
        if (u.fingerprint == picked.unit_fingerprint) {
          ctx.unit_index = u.index;
          ctx.unit_text = u.text;
          ctx.unit_kind = u.kind;
          break;
        }
      ctx.op = picked.op;
      if (auto it = blended.find(picked.unit_fingerprint); it != blended.end())
        ctx.blended_score = it->second;
      ctx.actionable = actionable.units;
      for (std::size_t i = 0; i < actionable.units.size(); ++i)
        if (actionable.units[i].fingerprint == picked.unit_fingerprint) {
          ctx.reason = "This unit ranks #" + std::to_string(i + 1) + " of " +
                       std::to_string(actionable.units.size()) +
                       " actionable units for recent training failures.";
          break;
        }

      EditResult edit = apply_edit(seg, picked, backends.optimizer.get(), ctx, cfg.meta_flags,
                                   cfg.multimodal, cfg.generation);
      if (edit.aborted) {
        update_arm(state.bandit, key, 0.0);
        state.bandit.arms.at(key).eliminated = true;
        aborted = true;
      } else {
        r = reward(state.current_prompt, edit.prompt, splits.dev, task, grader_backend, eopts,
                   state.current_dev_score);
        update_arm(state.bandit, key, r);
        if (r > 0.0) {
          if (!edit.new_fingerprint.empty() && edit.new_fingerprint != edit.old_fingerprint)
            transfer_history(state.attribution, edit.old_fingerprint, edit.new_fingerprint);
          record_history(state.attribution, edit.history_fingerprint, t, r);
          state.current_prompt = edit.prompt;
          state.current_dev_score += r;
          if (state.current_dev_score > state.best_dev_score) {
            state.best_prompt = state.current_prompt;
            state.best_dev_score = state.current_dev_score;
          }
          accepted = true;
        } else {
          record_history(state.attribution, edit.old_fingerprint, t, r);
        }
      }
      state.last_arm_key = key;
      const Arm& after = state.bandit.arms.at(key);
      log({{"type", "pull"},
           {"iteration", t},
           {"arm", arm_json(after)},
           {"reward", r},
           {"mean_reward", after.mean_reward},
           {"pulls", after.pulls},
           {"eliminated", after.eliminated},
           {"aborted", aborted}});
    } catch (const NoLiveArms&) {
      event += event.empty() ? "all-arms-eliminated" : ";all-arms-eliminated";
      log({{"type", "no-live-arms"}, {"iteration", t}});
    }

    if (r <= cfg.min_reward)
      state.consecutive_no_improve += 1;
    else
      state.consecutive_no_improve = 0;

    state.iteration = t;
    IterationRow row;
    row.iteration = t;
    row.dev_acc = state.current_dev_score;
    row.reward = r;
    row.drift = drift.drift;
    row.calls = backends.total_calls() - calls_start;
    row.op = op_str;
    row.unit_fingerprint = unit_fp;
    row.accepted = accepted;
    row.aborted = aborted;
    row.event = event;
    state.rows.push_back(row);
    state.call_counts = backends.call_counts();

    log({{"type", "iteration"},
         {"iteration", t},
         {"dev_acc", row.dev_acc},
         {"reward", row.reward},
         {"drift", row.drift},
         {"retention", drift.retention},
         {"calls", row.calls},
         {"operator", row.op},
         {"unit_fingerprint", row.unit_fingerprint},
         {"accepted", row.accepted},
         {"aborted", row.aborted},
         {"event", row.event}});

    if (auto reason = should_stop(state, cfg)) {
      state.stopped = true;
      state.stop_reason = *reason;
      log({{"type", "stop"}, {"iteration", t}, {"reason", *reason}});
      checkpoint();
      break;
    }
    checkpoint();
    if (hooks.stop_after.has_value() && t >= *hooks.stop_after) return make_report(true);
  }

  const auto test_results =
      evaluate_prompt(state.best_prompt, splits.test, task, grader_backend, eopts);
  state.test_accuracy = accuracy(test_results);
  state.call_counts = backends.call_counts();
  state.finalized = true;
  log({{"type", "final"},
       {"test_accuracy", state.test_accuracy},
       {"best_dev_score", state.best_dev_score},
       {"stop_reason", state.stop_reason},
       {"calls", state.call_counts},
       {"global_drift",
        state.drift_records.empty() ? 0.0 : global_drift(state.drift_records)}});
  checkpoint();
  return make_report(false);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

json state_to_json(const RunState& s) {
  json units = json::object();
  for (const auto& [fp, score] : s.attribution.units) {
    json history = json::array();
    for (const auto& h : score.history) history.push_back({h.iteration, h.delta});
    units[fp] = {{"raw", score.raw}, {"blended", score.blended}, {"history", history}};
  }
  json arms = json::object();
  for (const auto& [key, arm] : s.bandit.arms)
    arms[key] = {{"unit_fingerprint", arm.unit_fingerprint}, {"operator", op_name(arm.op)},
                 {"mean_reward", arm.mean_reward},           {"pulls", arm.pulls},
                 {"eliminated", arm.eliminated},             {"unit_index", arm.unit_index}};
  json drift = json::array();
  for (const auto& d : s.drift_records)
    drift.push_back({{"iteration", d.iteration},
                     {"solved_prev", d.solved_prev},
                     {"newly_failed", d.newly_failed},
                     {"retention", d.retention},
                     {"drift", d.drift}});
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"iteration", r.iteration},
                    {"dev_acc", r.dev_acc},
                    {"reward", r.reward},
                    {"drift", r.drift},
                    {"calls", r.calls},
                    {"operator", r.op},
                    {"unit_fingerprint", r.unit_fingerprint},
                    {"accepted", r.accepted},
                    {"aborted", r.aborted},
                    {"event", r.event}});
  json evals = json::array();
  for (const auto& e : s.last_eval_results)
    evals.push_back({{"example_id", e.example_id},
                     {"raw_output", e.raw_output},
                     {"grade", e.grade},
                     {"correct", e.correct}});

  return json{{"run_id", s.run_id},
              {"iteration", s.iteration},
              {"current_prompt", s.current_prompt},
              {"best_prompt", s.best_prompt},
              {"best_dev_score", s.best_dev_score},
              {"current_dev_score", s.current_dev_score},
              {"initial_dev_score", s.initial_dev_score},
              {"attribution",
               {{"lambda", s.attribution.params.lambda},
                {"alpha", s.attribution.params.alpha},
                {"gamma", s.attribution.params.gamma},
                {"units", units}}},
              {"bandit",
               {{"exploration_c", s.bandit.exploration_c},
                {"t_max", s.bandit.t_max},
                {"total_pulls", s.bandit.total_pulls},
                {"arms", arms},
                {"live", json(s.bandit.live)}}},
              {"drift_records", drift},
              {"rows", rows},
              {"solved_prev", json(s.solved_prev)},
              {"rng_state", s.rng_state},
              {"call_counts", json(s.call_counts)},
              {"consecutive_no_improve", s.consecutive_no_improve},
              {"consecutive_drift_exceed", s.consecutive_drift_exceed},
              {"last_arm_key", s.last_arm_key},
              {"stopped", s.stopped},
              {"stop_reason", s.stop_reason},
              {"test_accuracy", s.test_accuracy},
              {"finalized", s.finalized},
              {"last_eval_prompt", s.last_eval_prompt},
              {"last_eval_results", evals},
              {"config", s.config.to_json()},
              {"config_raw", s.config.raw},
              {"dataset_path", s.dataset_path}};
}

RunState state_from_json(const json& j) {
  RunState s;
  s.run_id = j.at("run_id").get<std::string>();
  s.iteration = j.at("iteration").get<int>();
  s.current_prompt = j.at("current_prompt").get<std::string>();
  s.best_prompt = j.at("best_prompt").get<std::string>();
  s.best_dev_score = j.at("best_dev_score").get<double>();
  s.current_dev_score = j.at("current_dev_score").get<double>();
  s.initial_dev_score = j.at("initial_dev_score").get<double>();
  const auto& attr = j.at("attribution");
  s.attribution.params.lambda = attr.at("lambda").get<double>();
  s.attribution.params.alpha = attr.at("alpha").get<double>();
  s.attribution.params.gamma = attr.at("gamma").get<double>();
  for (const auto& [fp, entry] : attr.at("units").items()) {
    UnitScore score;
    score.raw = entry.at("raw").get<double>();
    score.blended = entry.at("blended").get<double>();
    for (const auto& h : entry.at("history"))
      score.history.push_back({h.at(0).get<int>(), h.at(1).get<double>()});
    s.attribution.units[fp] = std::move(score);
  }
  const auto& bandit = j.at("bandit");
  s.bandit.exploration_c = bandit.at("exploration_c").get<double>();
  s.bandit.t_max = bandit.at("t_max").get<int>();
  s.bandit.total_pulls = bandit.at("total_pulls").get<int>();
  for (const auto& [key, entry] : bandit.at("arms").items()) {
    Arm arm;
    arm.unit_fingerprint = entry.at("unit_fingerprint").get<std::string>();
    arm.op = op_from_name(entry.at("operator").get<std::string>());
    arm.mean_reward = entry.at("mean_reward").get<double>();
    arm.pulls = entry.at("pulls").get<int>();
    arm.eliminated = entry.at("eliminated").get<bool>();
    arm.unit_index = entry.at("unit_index").get<int>();
    s.bandit.arms[key] = std::move(arm);
  }
  for (const auto& key : bandit.at("live")) s.bandit.live.insert(key.get<std::string>());
  for (const auto& d : j.at("drift_records")) {
    DriftRecord rec;
    rec.iteration = d.at("iteration").get<int>();
    rec.solved_prev = d.at("solved_prev").get<int>();
    rec.newly_failed = d.at("newly_failed").get<int>();
    rec.retention = d.at("retention").get<double>();
    rec.drift = d.at("drift").get<double>();
    s.drift_records.push_back(rec);
  }
  for (const auto& r : j.at("rows")) {
    IterationRow row;
    row.iteration = r.at("iteration").get<int>();
    row.dev_acc = r.at("dev_acc").get<double>();
    row.reward = r.at("reward").get<double>();
    row.drift = r.at("drift").get<double>();
    row.calls = r.at("calls").get<std::uint64_t>();
    row.op = r.at("operator").get<std::string>();
    row.unit_fingerprint = r.at("unit_fingerprint").get<std::string>();
    row.accepted = r.at("accepted").get<bool>();
    row.aborted = r.at("aborted").get<bool>();
    row.event = r.at("event").get<std::string>();
    s.rows.push_back(std::move(row));
  }
  for (const auto& id : j.at("solved_prev")) s.solved_prev.insert(id.get<std::string>());
  s.rng_state = j.at("rng_state").get<std::string>();
  for (const auto& [name, count] : j.at("call_counts").items())
    s.call_counts[name] = count.get<std::uint64_t>();
  s.consecutive_no_improve = j.at("consecutive_no_improve").get<int>();
  s.consecutive_drift_exceed = j.at("consecutive_drift_exceed").get<int>();
  s.last_arm_key = j.at("last_arm_key").get<std::string>();
  s.stopped = j.at("stopped").get<bool>();
  s.stop_reason = j.at("stop_reason").get<std::string>();
  s.test_accuracy = j.at("test_accuracy").get<double>();
  s.finalized = j.at("finalized").get<bool>();
  s.last_eval_prompt = j.at("last_eval_prompt").get<std::string>();
  for (const auto& e : j.at("last_eval_results")) {
    EvalResult res;
    res.example_id = e.at("example_id").get<std::string>();
    res.raw_output = e.at("raw_output").get<std::string>();
    res.grade = e.at("grade").get<double>();
    res.correct = e.at("correct").get<bool>();
    s.last_eval_results.push_back(std::move(res));
  }
  s.config = OptimizerConfig::from_json(j.at("config"));
  if (j.contains("config_raw") && !j.at("config_raw").is_null()) s.config.raw = j.at("config_raw");
  s.dataset_path = j.at("dataset_path").get<std::string>();
  return s;
}

}  // namespace

json save_checkpoint(const RunState& state) {
  json body = state_to_json(state);
  const std::string payload = body.dump();
  return json{{"format_version", kCheckpointFormatVersion},
              {"checksum", fnv1a64_hex(payload)},
              {"state", std::move(body)}};
}

RunState load_checkpoint(const json& doc) {
  if (!doc.contains("format_version") || !doc.at("format_version").is_number_integer())
    throw CheckpointError("checkpoint: missing format_version");
  const int version = doc.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  if (!doc.contains("checksum") || !doc.contains("state"))
    throw CheckpointError("checkpoint: missing checksum or state");
  const std::string payload = doc.at("state").dump();
  if (fnv1a64_hex(payload) != doc.at("checksum").get<std::string>())
    throw CheckpointError("checkpoint: checksum mismatch (file corrupted?)");
  try {
    return state_from_json(doc.at("state"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed state: ") + e.what());
  }
}

void save_checkpoint_file(const RunState& state, const std::string& path) {
  write_file_atomic(path, save_checkpoint(state).dump());
}

RunState load_checkpoint_file(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + path + ": invalid JSON: " + e.what());
  }
  return load_checkpoint(doc);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

json build_report(const RunState& state, double test_accuracy) {
  json iterations = json::array();
  std::uint64_t loop_calls = 0;
  for (const auto& r : state.rows) {
    loop_calls += r.calls;
    iterations.push_back({{"iteration", r.iteration},
                          {"dev_acc", r.dev_acc},
                          {"reward", r.reward},
                          {"drift", r.drift},
                          {"calls", r.calls},
                          {"operator", r.op},
                          {"unit_fingerprint", r.unit_fingerprint},
                          {"accepted", r.accepted},
                          {"aborted", r.aborted},
                          {"event", r.event}});
  }
  std::uint64_t total = 0;
  for (const auto& [name, count] : state.call_counts) total += count;
  return json{{"format_version", 1},
              {"stop_reason", state.stop_reason},
              {"iterations_run", state.iteration},
              {"initial", {{"dev_score", state.initial_dev_score}}},
              {"best",
               {{"prompt", state.best_prompt},
                {"dev_score", state.best_dev_score},
                {"test_accuracy", test_accuracy}}},
              {"global_drift",
               state.drift_records.empty() ? 0.0 : global_drift(state.drift_records)},
              {"iterations", iterations},
              {"calls",
               {{"per_backend", json(state.call_counts)},
                {"loop", loop_calls},
                {"total", total}}}};
}

std::string report_csv(const RunState& state) {
  std::string csv = "iteration,dev_acc,reward,drift,calls\n";
  for (const auto& r : state.rows) {
    csv += std::to_string(r.iteration);
    csv += ",";
    csv += fmt_double(r.dev_acc);
    csv += ",";
    csv += fmt_double(r.reward);
    csv += ",";
    csv += fmt_double(r.drift);
    csv += ",";
    csv += std::to_string(r.calls);
    csv += "\n";
  }
  return csv;
}

}  // namespace popt
