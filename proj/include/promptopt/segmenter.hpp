#pragma once

#include <string>
#include <vector>

#include "promptopt/backends.hpp"

namespace popt {

enum class UnitKind { Header, ListItem, Sentence, DelimiterBlock };

const char* kind_name(UnitKind kind);
UnitKind kind_from_name(const std::string& name);

/// An ordered functional segment of a prompt. The fingerprint is a pure
/// function of the whitespace-collapsed text and identifies the unit across
/// iterations even when the surrounding prompt changes.
struct SemanticUnit {
  int index = 0;
  std::string text;  // trimmed, may contain interior newlines
  UnitKind kind = UnitKind::Sentence;
  std::string fingerprint;
};

struct Segmentation {
  std::vector<SemanticUnit> units;
  std::string source_prompt;
};

struct SegmenterOptions {
  int min_unit_chars = 12;
  int max_unit_chars = 400;
};

std::string unit_fingerprint(const std::string& text);

/// The neutral token substituted for an occluded unit. Refinement treats it
/// as atomic so that masked prompts re-segment to the same unit count.
const std::string& mask_token();

/// Stage one: splits at blank lines, headers, list items, horizontal rules,
/// and sentence boundaries (terminal punctuation + whitespace + capital or
/// digit). Indices run from 0 in document order.
std::vector<SemanticUnit> rule_split(const std::string& prompt);

/// Stage two: merges fragments shorter than min_unit_chars into a neighbor
/// and splits units longer than max_unit_chars at a clause boundary. When a
/// parser backend is supplied, its proposed unit list is used instead, but
/// only if the whitespace-normalized reconstruction still matches.
std::vector<SemanticUnit> refine(std::vector<SemanticUnit> units,
                                 const SegmenterOptions& options = {},
                                 ModelBackend* parser = nullptr);

/// refine(rule_split(prompt)); deterministic with the rule fallback.
Segmentation segment(const std::string& prompt, const SegmenterOptions& options = {},
                     ModelBackend* parser = nullptr);

/// Joins unit texts with single newlines (how candidates are reassembled).
std::string reconstruct(const std::vector<SemanticUnit>& units);

}  // namespace popt
