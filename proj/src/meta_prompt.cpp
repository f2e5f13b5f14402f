#include "promptopt/meta_prompt.hpp"

#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

const char* op_name(EditOperator op) {
  switch (op) {
    case EditOperator::Replace: return "Replace";
    case EditOperator::Insert: return "Insert";
    case EditOperator::Delete: return "Delete";
    case EditOperator::Reorder: return "Reorder";
    case EditOperator::Refine: return "Refine";
  }
  return "Replace";
}

EditOperator op_from_name(const std::string& name) {
  for (EditOperator op : all_operators())
    if (name == op_name(op)) return op;
  throw std::invalid_argument("unknown edit operator: " + name);
}

const std::vector<EditOperator>& all_operators() {
  static const std::vector<EditOperator> ops = {EditOperator::Replace, EditOperator::Insert,
                                                EditOperator::Delete, EditOperator::Reorder,
                                                EditOperator::Refine};
  return ops;
}

namespace {

const char* op_instruction(EditOperator op) {
  switch (op) {
    case EditOperator::Replace:
      return "Write a replacement for the target unit that fixes the observed failures. "
             "Reply with the replacement text only.";
    case EditOperator::Insert:
      return "Write one new instruction to insert immediately after the target unit. "
             "Reply with the new instruction text only.";
    case EditOperator::Delete:
      return "The target unit will be removed. No text is needed.";
    case EditOperator::Reorder:
      return "Reply with only the 0-based position (a single integer) where the target unit "
             "should be moved.";
    case EditOperator::Refine:
      return "Rewrite the target unit with clearer, more precise wording while preserving its "
             "intent. Reply with the refined text only.";
  }
  return "";
}

}  // namespace

std::string build_meta_prompt(const std::string& prev_prompt, const EditContext& context,
                              const MetaFlags& flags, bool multimodal) {
  if (!contains_normalized(prev_prompt, context.unit_text))
    throw std::invalid_argument("build_meta_prompt: target unit not found in the prompt");

  std::string out;
  out += "You are optimizing a task prompt for a language model. Apply one focused edit.\n";
  out += "\n## Current prompt\n<<<PROMPT\n";
  out += prev_prompt;
  out += "\nPROMPT>>>\n";

  out += "\n## Edit target\n";
  out += "Unit ";
  out += std::to_string(context.unit_index);
  out += " (";
  out += kind_name(context.unit_kind);
  out += "):\n\"";
  out += context.unit_text;
  out += "\"\n\nOperation: ";
  out += op_name(context.op);
  out += "\nInstruction: ";
  out += op_instruction(context.op);
  out += "\n";

  out += "\n## Why this unit\n";
  if (!context.reason.empty()) {
    out += context.reason;
    out += "\n";
  }
  out += "Actionability score: ";
  out += fmt_double(context.blended_score);
  out += "\n";

  if (flags.prioritize_weak && !context.actionable.empty()) {
    out += "\n## Weakest units\n";
    out += "Most actionable first:\n";
    int rank = 1;
    for (const auto& unit : context.actionable) {
      out += std::to_string(rank++);
      out += ". [score=";
      out += fmt_double(unit.actionability);
      out += "] \"";
      out += unit.preview;
      out += "\"\n";
    }
  }

  if (flags.structured_reasoning) {
    out += "\n## Analysis steps\n";
    out += "1. Re-read the current prompt and the edit target.\n";
    out += "2. Identify why the target unit leads to wrong or imprecise answers.\n";
    out += "3. Draft the minimal edit that fixes those failures without disturbing the rest.\n";
    out += "4. Check the draft against the other units for contradictions.\n";
  }

  out += "\n## Output format\n";
  out += "Reply with only the text requested by the instruction above. No commentary.\n";

  if (multimodal) {
    out += "\nNote: this task is multimodal; each input pairs the question text with one or "
           "more images. Keep instructions about reading the images intact.\n";
  }
  return out;
}

}  // namespace popt
