#pragma once

#include <map>
#include <string>
#include <vector>

#include "promptopt/backends.hpp"
#include "promptopt/corpus.hpp"
#include "promptopt/harness.hpp"
#include "promptopt/segmenter.hpp"

namespace popt {

/// A past edit outcome for a unit: the iteration it happened in and the
/// signed dev-accuracy change it produced.
struct HistoryEntry {
  int iteration = 0;
  double delta = 0.0;
};

struct UnitScore {
  double raw = 0.0;      // smoothed occlusion score; in [-1, 0] under 0-1 loss
  double blended = 0.0;  // history-blended actionability
  std::vector<HistoryEntry> history;
};

struct AttributionParams {
  double lambda = 0.5;  // smoothing of the occlusion recurrence
  double alpha = 0.7;   // weight on fresh blame vs. edit history
  double gamma = 0.9;   // temporal decay of history entries
};

/// Per-fingerprint attribution scores. Entries survive prompt edits; an
/// edited unit inherits its predecessor's history via transfer_history.
struct AttributionState {
  std::map<std::string, UnitScore> units;
  AttributionParams params;
};

struct ActionableUnit {
  std::string fingerprint;
  double actionability = 0.0;
  int unit_index = 0;
  std::string preview;
};

/// Top-m units most worth editing, sorted by actionability descending with
/// ties broken by lower unit index.
struct ActionableSet {
  std::vector<ActionableUnit> units;
};

/// Reassembles the prompt with unit k replaced by the neutral mask token.
std::string occlude(const Segmentation& segmentation, int k);

/// Per-unit counterfactual deltas over a batch of failing examples:
/// mean of [loss(occluded) - loss(full)] under 0-1 grader loss, so each
/// value lies in [-1, 0]. A unit whose batch fails twice is omitted.
std::map<std::string, double> occlusion_deltas(const Segmentation& segmentation,
                                               const std::vector<Example>& failing,
                                               ModelBackend& task_backend, ModelBackend& grader,
                                               const EvalOptions& options);

/// Smoothing recurrence: raw <- lambda * raw_prev + (1 - lambda) * delta.
/// Unseen fingerprints start from zero; units without a delta are untouched.
void update_scores(AttributionState& state, const std::map<std::string, double>& deltas, int t);

/// Actionability a = -raw blended with decayed history:
/// blended = alpha * a + (1 - alpha) * mean(delta * gamma^(t - tau)); with
/// empty history the blend is a itself. Returns fingerprint -> blended and
/// stores it on the state.
std::map<std::string, double> blend_history(AttributionState& state, int t);

/// Top-min(m, K) units of the segmentation by blended score; fingerprints
/// missing from the map score 0.
ActionableSet select_actionable(const std::map<std::string, double>& blended,
                                const Segmentation& segmentation, int m);

void record_history(AttributionState& state, const std::string& fingerprint, int iteration,
                    double delta);

/// Moves a unit's history (not its raw score) to its post-edit fingerprint.
void transfer_history(AttributionState& state, const std::string& old_fingerprint,
                      const std::string& new_fingerprint);

}  // namespace popt
