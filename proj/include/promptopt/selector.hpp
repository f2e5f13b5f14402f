#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "promptopt/attributor.hpp"
#include "promptopt/harness.hpp"
#include "promptopt/meta_prompt.hpp"
#include "promptopt/segmenter.hpp"

namespace popt {

/// One edit candidate: a (unit, operator) pair with its running statistics.
struct Arm {
  std::string unit_fingerprint;
  EditOperator op = EditOperator::Replace;
  double mean_reward = 0.0;  // defined once pulls >= 1
  int pulls = 0;
  bool eliminated = false;
  int unit_index = 0;  // position of the unit in the current segmentation
};

std::string arm_key(const std::string& fingerprint, EditOperator op);

/// Arms over the current actionable set plus parked statistics for units
/// that fell out of it. total_pulls always equals the sum of arm pulls.
struct BanditState {
  std::map<std::string, Arm> arms;  // keyed by arm_key
  std::set<std::string> live;       // arms eligible for selection
  double exploration_c = 1.4142135623730951;
  int t_max = 100;
  int total_pulls = 0;
};

/// Ensures an arm exists for every (actionable unit, operator) pair; arms of
/// units that left the actionable set are parked with their stats intact.
void build_arms(const ActionableSet& actionable, BanditState& bandit);

/// Warm start first (any live arm with zero pulls, lowest unit index then
/// operator order), then the UCB rule mean + c * sqrt(ln t / max(1, n)).
/// Throws NoLiveArms when every live arm is eliminated.
const Arm& ucb_choose(const BanditState& bandit);

struct EditResult {
  bool aborted = false;        // optimizer returned empty text
  std::string prompt;          // candidate prompt (newline-joined units)
  std::string old_fingerprint;
  std::string new_fingerprint;  // differs from old when the unit text changed
  std::string history_fingerprint;  // where this edit's outcome is recorded
  std::string new_unit_text;
};

/// Applies the arm's operator to its unit. Delete and Reorder fall back to
/// pure rules without an optimizer backend; Replace, Insert, and Refine need
/// model text and abort when it is empty or the backend is absent.
EditResult apply_edit(const Segmentation& segmentation, const Arm& arm,
                      ModelBackend* optimizer_backend, const EditContext& context,
                      const MetaFlags& flags, bool multimodal,
                      const GenerationParams& params = {});

/// Dev-split accuracy difference new - old in [-1, 1]. Pass the cached old
/// score when it is already known for this iteration.
double reward(const std::string& old_prompt, const std::string& new_prompt,
              const std::vector<Example>& dev, ModelBackend& task_backend, ModelBackend& grader,
              const EvalOptions& options, std::optional<double> cached_old_score = std::nullopt);

/// Records one pull: running mean, pull counts, and elimination of arms
/// whose mean reward is non-positive.
void update_arm(BanditState& bandit, const std::string& key, double r);

}  // namespace popt
