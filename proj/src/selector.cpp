#include "promptopt/selector.hpp"

#include <algorithm>
#include <cmath>

#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

std::string arm_key(const std::string& fingerprint, EditOperator op) {
  return fingerprint + "|" + op_name(op);
}

void build_arms(const ActionableSet& actionable, BanditState& bandit) {
  if (actionable.units.empty()) throw std::invalid_argument("build_arms: empty actionable set");
  bandit.live.clear();
  for (const auto& unit : actionable.units) {
    for (EditOperator op : all_operators()) {
      const std::string key = arm_key(unit.fingerprint, op);
      auto [it, inserted] = bandit.arms.try_emplace(key);
      if (inserted) {
        it->second.unit_fingerprint = unit.fingerprint;
        it->second.op = op;
      }
      it->second.unit_index = unit.unit_index;
      bandit.live.insert(key);
    }
  }
}

namespace {

int op_rank(EditOperator op) { return static_cast<int>(op); }

bool ordered_before(const Arm& a, const Arm& b) {
  if (a.unit_index != b.unit_index) return a.unit_index < b.unit_index;
  return op_rank(a.op) < op_rank(b.op);
}

}  // namespace

const Arm& ucb_choose(const BanditState& bandit) {
  const Arm* warm = nullptr;
  const Arm* best = nullptr;
  double best_score = 0.0;
  for (const auto& key : bandit.live) {
    const Arm& arm = bandit.arms.at(key);
    if (arm.eliminated) continue;
    if (arm.pulls == 0) {
      if (warm == nullptr || ordered_before(arm, *warm)) warm = &arm;
      continue;
    }
    if (warm != nullptr) continue;
    const double bonus = bandit.exploration_c *
                         std::sqrt(std::log(static_cast<double>(bandit.total_pulls)) /
                                   static_cast<double>(std::max(1, arm.pulls)));
    const double score = arm.mean_reward + bonus;
    if (best == nullptr || score > best_score ||
        (score == best_score && ordered_before(arm, *best))) {
      best = &arm;
      best_score = score;
    }
  }
  if (warm != nullptr) return *warm;
  if (best == nullptr) throw NoLiveArms("ucb_choose: all live arms are eliminated");
  return *best;
}

namespace {

std::optional<int> parse_first_int(const std::string& text) {
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
    std::size_t j = i;
    while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    return std::stoi(text.substr(i, j - i));
  }
  return std::nullopt;
}

}  // namespace

EditResult apply_edit(const Segmentation& segmentation, const Arm& arm,
                      ModelBackend* optimizer_backend, const EditContext& context,
                      const MetaFlags& flags, bool multimodal, const GenerationParams& params) {
  const auto& units = segmentation.units;
  int k = -1;
  for (const auto& u : units)
    if (u.fingerprint == arm.unit_fingerprint) {
      k = u.index;
      break;
    }
  if (k < 0)
    throw std::invalid_argument("apply_edit: arm's unit is not present in the segmentation");
  const std::size_t ku = static_cast<std::size_t>(k);
  const int count = static_cast<int>(units.size());

  EditResult result;
  result.old_fingerprint = arm.unit_fingerprint;
  result.history_fingerprint = arm.unit_fingerprint;

  auto ask_model = [&]() -> std::string {
    if (optimizer_backend == nullptr) return "";
    ModelRequest req;
    req.user_input = build_meta_prompt(segmentation.source_prompt, context, flags, multimodal);
    req.params = params;
    return trim(optimizer_backend->complete(req));
  };

  std::vector<SemanticUnit> edited = units;
  switch (arm.op) {
    case EditOperator::Delete:
      edited.erase(edited.begin() + static_cast<std::ptrdiff_t>(ku));
      break;
    case EditOperator::Reorder: {
      int dest = (k == count - 1) ? k - 1 : k + 1;  // rule fallback: swap with a neighbor
      if (optimizer_backend != nullptr) {
        if (auto proposed = parse_first_int(ask_model()))
          dest = std::clamp(*proposed, 0, count - 1);
      }
      SemanticUnit moved = edited[ku];
      edited.erase(edited.begin() + static_cast<std::ptrdiff_t>(ku));
      edited.insert(edited.begin() + static_cast<std::ptrdiff_t>(dest), std::move(moved));
      break;
    }
    case EditOperator::Replace:
    case EditOperator::Refine: {
      const std::string text = ask_model();
      if (text.empty()) {
        result.aborted = true;
        return result;
      }
      edited[ku].text = text;
      edited[ku].fingerprint = unit_fingerprint(text);
      result.new_fingerprint = edited[ku].fingerprint;
      result.history_fingerprint = result.new_fingerprint;
      result.new_unit_text = text;
      break;
    }
    case EditOperator::Insert: {
      const std::string text = ask_model();
      if (text.empty()) {
        result.aborted = true;
        return result;
      }
      SemanticUnit fresh;
      fresh.text = text;
      fresh.kind = edited[ku].kind;
      fresh.fingerprint = unit_fingerprint(text);
      edited.insert(edited.begin() + static_cast<std::ptrdiff_t>(ku) + 1, std::move(fresh));
      result.new_unit_text = text;
      break;
    }
  }

  result.prompt = reconstruct(edited);
  return result;
}

double reward(const std::string& old_prompt, const std::string& new_prompt,
              const std::vector<Example>& dev, ModelBackend& task_backend, ModelBackend& grader,
              const EvalOptions& options, std::optional<double> cached_old_score) {
  if (dev.empty()) throw std::invalid_argument("reward: empty dev split");
  if (new_prompt == old_prompt) return 0.0;
  const double old_acc =
      cached_old_score.has_value()
          ? *cached_old_score
          : accuracy(evaluate_prompt(old_prompt, dev, task_backend, grader, options));
  const double new_acc = accuracy(evaluate_prompt(new_prompt, dev, task_backend, grader, options));
  return new_acc - old_acc;
}

void update_arm(BanditState& bandit, const std::string& key, double r) {
  auto it = bandit.arms.find(key);
  if (it == bandit.arms.end()) throw std::invalid_argument("update_arm: unknown arm " + key);
  Arm& arm = it->second;
  arm.mean_reward =
      (static_cast<double>(arm.pulls) * arm.mean_reward + r) / static_cast<double>(arm.pulls + 1);
  arm.pulls += 1;
  bandit.total_pulls += 1;
  if (arm.mean_reward <= 0.0) arm.eliminated = true;
}

}  // namespace popt
