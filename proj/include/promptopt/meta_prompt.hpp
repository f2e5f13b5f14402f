#pragma once

#include <string>
#include <vector>

#include "promptopt/attributor.hpp"
#include "promptopt/segmenter.hpp"

namespace popt {

enum class EditOperator { Replace = 0, Insert, Delete, Reorder, Refine };

const char* op_name(EditOperator op);
EditOperator op_from_name(const std::string& name);
const std::vector<EditOperator>& all_operators();

/// Meta-prompt component toggles; each drops its section entirely when off.
struct MetaFlags {
  bool prioritize_weak = true;      // ranked weak-unit section
  bool structured_reasoning = true;  // step-wise analysis scaffold
};

/// Everything the optimizer model needs to know about one edit.
struct EditContext {
  int unit_index = 0;
  std::string unit_text;
  UnitKind unit_kind = UnitKind::Sentence;
  EditOperator op = EditOperator::Replace;
  double blended_score = 0.0;
  std::vector<ActionableUnit> actionable;  // for the weak-unit ranking
  std::string reason;
};

/// Builds the instruction sent to the optimizer model: the full previous
/// candidate, the quoted target unit with its operation, the reason section,
/// the optional weak-unit ranking and reasoning scaffold, the output-format
/// contract, and (last, when multimodal) the task-modality annotation.
std::string build_meta_prompt(const std::string& prev_prompt, const EditContext& context,
                              const MetaFlags& flags, bool multimodal);

}  // namespace popt
