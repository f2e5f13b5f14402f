#include "promptopt/attributor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

std::string occlude(const Segmentation& segmentation, int k) {
  const auto& units = segmentation.units;
  if (k < 0 || k >= static_cast<int>(units.size()))
    throw std::invalid_argument("occlude: unit index " + std::to_string(k) + " out of range");
  std::string out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i) out += "\n";
    out += (static_cast<int>(i) == k) ? mask_token() : units[i].text;
  }
  return out;
}

namespace {

// 0-1 loss of one example under the given prompt: 1 when the graded output
// is incorrect.
int loss01(const std::string& prompt, const Example& ex, ModelBackend& task, ModelBackend& grader,
           const EvalOptions& options) {
  ModelRequest req;
  req.system_prompt = prompt;
  req.user_input = ex.input_text;
  req.params = options.params;
  if (options.multimodal)
    for (const auto& path : ex.image_paths) req.image_payloads.push_back(encode_image(path));
  std::string raw = task.complete(req);
  double g = grade(grader, ex.input_text, ex.target, raw);
  return g >= options.correctness_threshold ? 0 : 1;
}

}  // namespace

std::map<std::string, double> occlusion_deltas(const Segmentation& segmentation,
                                               const std::vector<Example>& failing,
                                               ModelBackend& task_backend, ModelBackend& grader,
                                               const EvalOptions& options) {
  std::map<std::string, double> deltas;
  if (failing.empty()) return deltas;

  // First occurrence wins when two units share a fingerprint.
  std::set<std::string> seen;
  std::vector<int> unit_indices;
  for (const auto& u : segmentation.units)
    if (seen.insert(u.fingerprint).second) unit_indices.push_back(u.index);

  for (int k : unit_indices) {
    const std::string occluded = occlude(segmentation, k);
    const std::string& fp = segmentation.units[static_cast<std::size_t>(k)].fingerprint;
    bool done = false;
    for (int attempt = 0; attempt < 2 && !done; ++attempt) {
      std::vector<int> losses(failing.size(), 1);
      try {
        parallel_for(failing.size(), options.max_concurrency, [&](std::size_t i) {
          losses[i] = loss01(occluded, failing[i], task_backend, grader, options);
        });
        double sum = 0.0;
        // Every example in the batch fails under the full prompt, so the
        // baseline loss term is exactly 1.
        for (int loss : losses) sum += static_cast<double>(loss) - 1.0;
        deltas[fp] = sum / static_cast<double>(failing.size());
        done = true;
      } catch (const std::exception&) {
        // retried once; on the second failure the unit's delta stays missing
      }
    }
  }
  return deltas;
}

void update_scores(AttributionState& state, const std::map<std::string, double>& deltas, int t) {
  if (t < 1) throw std::invalid_argument("update_scores: iteration must be >= 1");
  const double lambda = state.params.lambda;
  for (const auto& [fp, delta] : deltas) {
    UnitScore& score = state.units[fp];  // default-constructs raw = 0 for new units
    score.raw = lambda * score.raw + (1.0 - lambda) * delta;
  }
}

std::map<std::string, double> blend_history(AttributionState& state, int t) {
  const double alpha = state.params.alpha;
  const double gamma = state.params.gamma;
  std::map<std::string, double> out;
  for (auto& [fp, score] : state.units) {
    const double actionability = -score.raw;
    double blended = actionability;
    if (!score.history.empty()) {
      double acc = 0.0;
      for (const auto& entry : score.history) {
        if (entry.iteration >= t)
          throw std::invalid_argument("blend_history: history entry at iteration " +
                                      std::to_string(entry.iteration) + " is not older than t=" +
                                      std::to_string(t));
        acc += entry.delta * std::pow(gamma, static_cast<double>(t - entry.iteration));
      }
      blended = alpha * actionability +
                (1.0 - alpha) * acc / static_cast<double>(score.history.size());
    }
    score.blended = blended;
    out[fp] = blended;
  }
  return out;
}

ActionableSet select_actionable(const std::map<std::string, double>& blended,
                                const Segmentation& segmentation, int m) {
  if (m < 1) throw std::invalid_argument("select_actionable: m must be >= 1");
  std::vector<ActionableUnit> candidates;
  for (const auto& u : segmentation.units) {
    bool seen = false;
    for (const auto& c : candidates)
      if (c.fingerprint == u.fingerprint) {
        seen = true;
        break;
      }
    if (seen) continue;
    ActionableUnit a;
    a.fingerprint = u.fingerprint;
    auto it = blended.find(u.fingerprint);
    a.actionability = it == blended.end() ? 0.0 : it->second;
    a.unit_index = u.index;
    a.preview = collapse_ws(u.text).substr(0, 60);
    candidates.push_back(std::move(a));
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const ActionableUnit& a, const ActionableUnit& b) {
                     if (a.actionability != b.actionability)
                       return a.actionability > b.actionability;
                     return a.unit_index < b.unit_index;
                   });
  if (candidates.size() > static_cast<std::size_t>(m))
    candidates.resize(static_cast<std::size_t>(m));
  return ActionableSet{std::move(candidates)};
}

void record_history(AttributionState& state, const std::string& fingerprint, int iteration,
                    double delta) {
  if (iteration < 1) throw std::invalid_argument("record_history: iteration must be >= 1");
  auto& history = state.units[fingerprint].history;
  HistoryEntry entry{iteration, delta};
  auto pos = std::upper_bound(history.begin(), history.end(), entry,
                              [](const HistoryEntry& a, const HistoryEntry& b) {
                                return a.iteration < b.iteration;
                              });
  history.insert(pos, entry);
}

void transfer_history(AttributionState& state, const std::string& old_fingerprint,
                      const std::string& new_fingerprint) {
  if (old_fingerprint == new_fingerprint) return;
  auto it = state.units.find(old_fingerprint);
  if (it == state.units.end()) return;
  auto& dest = state.units[new_fingerprint].history;
  for (const auto& entry : it->second.history) {
    auto pos = std::upper_bound(dest.begin(), dest.end(), entry,
                                [](const HistoryEntry& a, const HistoryEntry& b) {
                                  return a.iteration < b.iteration;
                                });
    dest.insert(pos, entry);
  }
  it->second.history.clear();
}

}  // namespace popt
