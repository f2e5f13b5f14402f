#include "promptopt/segmenter.hpp"

#include <cctype>
#include <cmath>
#include <iostream>
#include <optional>

#include "json.hpp"
#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

const char* kind_name(UnitKind kind) {
  switch (kind) {
    case UnitKind::Header: return "header";
    case UnitKind::ListItem: return "list_item";
    case UnitKind::Sentence: return "sentence";
    case UnitKind::DelimiterBlock: return "delimiter_block";
  }
  return "sentence";
}

UnitKind kind_from_name(const std::string& name) {
  if (name == "header") return UnitKind::Header;
  if (name == "list_item") return UnitKind::ListItem;
  if (name == "delimiter_block") return UnitKind::DelimiterBlock;
  return UnitKind::Sentence;
}

std::string unit_fingerprint(const std::string& text) { return fnv1a64_hex(collapse_ws(text)); }

const std::string& mask_token() {
  static const std::string token = "[…]";
  return token;
}

namespace {

bool is_hrule(const std::string& t) {
  std::string compact;
  for (char c : t)
    if (c != ' ') compact.push_back(c);
  if (compact.size() < 3) return false;
  char first = compact[0];
  if (first != '-' && first != '*' && first != '_') return false;
  for (char c : compact)
    if (c != first) return false;
  return true;
}

bool is_header(const std::string& t) {
  if (t.size() >= 2 && t[0] == '#') {
    std::size_t i = 0;
    while (i < t.size() && t[i] == '#') ++i;
    return i <= 6 && i < t.size() && t[i] == ' ';
  }
  // Bold-only lines like "**Key Notes:**"
  return t.size() > 4 && t.rfind("**", 0) == 0 && t.compare(t.size() - 2, 2, "**") == 0;
}

bool is_list_start(const std::string& t) {
  if (t.size() >= 2 && (t[0] == '-' || t[0] == '*' || t[0] == '+') && t[1] == ' ') return true;
  std::size_t i = 0;
  while (i < t.size() && i < 4 && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  return i > 0 && i + 1 < t.size() && (t[i] == '.' || t[i] == ')') && t[i + 1] == ' ';
}

bool is_closer(char c) { return c == ')' || c == '"' || c == '\'' || c == ']'; }

std::vector<std::string> sentence_split(const std::string& text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < n && is_closer(text[j])) ++j;
    std::size_t k = j;
    while (k < n && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
    if (k > j && k < n &&
        (std::isupper(static_cast<unsigned char>(text[k])) ||
         std::isdigit(static_cast<unsigned char>(text[k])))) {
      std::string piece = trim(text.substr(start, j - start));
      if (!piece.empty()) out.push_back(std::move(piece));
      start = k;
      i = k - 1;
    }
  }
  std::string tail = trim(text.substr(start));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

UnitKind classify_text(const std::string& text) {
  std::string first_line = text;
  if (auto nl = first_line.find('\n'); nl != std::string::npos) first_line.resize(nl);
  first_line = trim(first_line);
  if (is_hrule(first_line)) return UnitKind::DelimiterBlock;
  if (is_header(first_line)) return UnitKind::Header;
  if (is_list_start(first_line)) return UnitKind::ListItem;
  return UnitKind::Sentence;
}

void finalize(std::vector<SemanticUnit>& units) {
  for (std::size_t i = 0; i < units.size(); ++i) {
    units[i].index = static_cast<int>(i);
    units[i].fingerprint = unit_fingerprint(units[i].text);
  }
}

std::string join_units(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Best split point for an over-long unit: a clause separator (",;:") nearest
// the midpoint, falling back to plain whitespace; both halves must satisfy
// the minimum length or the cut is not taken.
std::optional<std::pair<std::string, std::string>> find_clause_cut(const std::string& text,
                                                                   const SegmenterOptions& opt) {
  const std::size_t n = text.size();
  const double mid = static_cast<double>(n) / 2.0;
  auto consider = [&](std::size_t left_end, std::size_t right_begin)
      -> std::optional<std::pair<std::string, std::string>> {
    std::string left = trim(text.substr(0, left_end));
    std::string right = trim(text.substr(right_begin));
    if (static_cast<int>(left.size()) < opt.min_unit_chars ||
        static_cast<int>(right.size()) < opt.min_unit_chars)
      return std::nullopt;
    return std::make_pair(std::move(left), std::move(right));
  };

  double best_dist = -1.0;
  std::optional<std::pair<std::string, std::string>> best;
  for (std::size_t p = 0; p + 1 < n; ++p) {
    char c = text[p];
    if ((c == ',' || c == ';' || c == ':') &&
        std::isspace(static_cast<unsigned char>(text[p + 1]))) {
      auto cand = consider(p + 1, p + 1);
      if (!cand) continue;
      double dist = std::abs(static_cast<double>(p + 1) - mid);
      if (best_dist < 0 || dist < best_dist) {
        best_dist = dist;
        best = std::move(cand);
      }
    }
  }
  if (best) return best;
  for (std::size_t p = 1; p + 1 < n; ++p) {
    if (!std::isspace(static_cast<unsigned char>(text[p]))) continue;
    auto cand = consider(p, p + 1);
    if (!cand) continue;
    double dist = std::abs(static_cast<double>(p) - mid);
    if (best_dist < 0 || dist < best_dist) {
      best_dist = dist;
      best = std::move(cand);
    }
  }
  return best;
}

std::vector<std::string> parser_proposal(ModelBackend& parser,
                                         const std::vector<SemanticUnit>& units) {
  std::string prompt =
      "Refine the segmentation of a task prompt. Merge fragments that are too short and split "
      "run-on clauses. Preserve every word and the original order.\n"
      "Reply with a JSON array of unit strings and nothing else.\n\nUnits:\n";
  for (const auto& u : units) {
    prompt += std::to_string(u.index + 1);
    prompt += ". ";
    prompt += u.text;
    prompt += "\n";
  }
  ModelRequest req;
  req.user_input = prompt;
  std::string reply = parser.complete(req);
  std::vector<std::string> out;
  try {
    auto parsed = nlohmann::json::parse(trim(reply));
    if (!parsed.is_array()) return {};
    for (const auto& item : parsed) {
      if (!item.is_string()) return {};
      out.push_back(item.get<std::string>());
    }
  } catch (const nlohmann::json::exception&) {
    return {};
  }
  return out;
}

}  // namespace

std::vector<SemanticUnit> rule_split(const std::string& prompt) {
  if (collapse_ws(prompt).empty()) throw std::invalid_argument("rule_split: empty prompt");

  std::vector<SemanticUnit> units;
  std::vector<std::string> paragraph;
  std::vector<std::string> item;

  auto push_unit = [&](UnitKind kind, std::string text) {
    SemanticUnit u;
    u.kind = kind;
    u.text = std::move(text);
    units.push_back(std::move(u));
  };
  auto flush_item = [&] {
    if (item.empty()) return;
    push_unit(UnitKind::ListItem, join_units(item, "\n"));
    item.clear();
  };
  auto flush_paragraph = [&] {
    if (paragraph.empty()) return;
    for (auto& s : sentence_split(join_units(paragraph, "\n")))
      push_unit(UnitKind::Sentence, std::move(s));
    paragraph.clear();
  };

  for (const auto& raw_line : split_lines(prompt)) {
    std::string t = trim(raw_line);
    if (t.empty()) {
      flush_paragraph();
      flush_item();
      continue;
    }
    if (is_hrule(t)) {
      flush_paragraph();
      flush_item();
      push_unit(UnitKind::DelimiterBlock, std::move(t));
      continue;
    }
    if (is_header(t)) {
      flush_paragraph();
      flush_item();
      push_unit(UnitKind::Header, std::move(t));
      continue;
    }
    if (is_list_start(t)) {
      flush_paragraph();
      flush_item();
      item.push_back(std::move(t));
      continue;
    }
    if (!item.empty()) {
      item.push_back(std::move(t));  // continuation line of a list item
      continue;
    }
    paragraph.push_back(std::move(t));
  }
  flush_paragraph();
  flush_item();

  finalize(units);
  return units;
}

std::vector<SemanticUnit> refine(std::vector<SemanticUnit> units, const SegmenterOptions& options,
                                 ModelBackend* parser) {
  if (units.empty()) throw std::invalid_argument("refine: no units");

  if (parser != nullptr) {
    auto proposal = parser_proposal(*parser, units);
    bool ok = !proposal.empty();
    for (const auto& text : proposal)
      if (trim(text).empty()) ok = false;
    if (ok) {
      std::string orig, prop;
      for (const auto& u : units) orig += u.text + "\n";
      for (const auto& t : proposal) prop += t + "\n";
      ok = collapse_ws(orig) == collapse_ws(prop);
    }
    if (ok) {
      std::vector<SemanticUnit> accepted;
      for (auto& text : proposal) {
        SemanticUnit u;
        u.text = trim(text);
        u.kind = classify_text(u.text);
        accepted.push_back(std::move(u));
      }
      units = std::move(accepted);
    } else {
      std::cerr << "segmenter: parser proposal rejected (reconstruction mismatch); "
                   "using rule refinement\n";
    }
  }

  // Merge fragments below the minimum into a neighbor. The mask token stays
  // atomic: it is never merged and never absorbs a neighbor.
  std::size_t i = 0;
  while (units.size() > 1 && i < units.size()) {
    if (static_cast<int>(units[i].text.size()) >= options.min_unit_chars ||
        units[i].text == mask_token()) {
      ++i;
      continue;
    }
    const bool prev_ok = i > 0 && units[i - 1].text != mask_token();
    const bool next_ok = i + 1 < units.size() && units[i + 1].text != mask_token();
    if (prev_ok) {
      units[i - 1].text += " " + units[i].text;
      units.erase(units.begin() + static_cast<std::ptrdiff_t>(i));
    } else if (next_ok) {
      units[i + 1].text = units[i].text + " " + units[i + 1].text;
      units.erase(units.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }

  // Split run-ons above the maximum at clause boundaries.
  for (std::size_t k = 0; k < units.size(); ++k) {
    while (static_cast<int>(units[k].text.size()) > options.max_unit_chars) {
      auto cut = find_clause_cut(units[k].text, options);
      if (!cut) break;
      units[k].text = cut->first;
      SemanticUnit rest;
      rest.kind = units[k].kind;
      rest.text = cut->second;
      units.insert(units.begin() + static_cast<std::ptrdiff_t>(k) + 1, std::move(rest));
    }
  }

  finalize(units);
  return units;
}

Segmentation segment(const std::string& prompt, const SegmenterOptions& options,
                     ModelBackend* parser) {
  Segmentation seg;
  seg.units = refine(rule_split(prompt), options, parser);
  seg.source_prompt = prompt;
  return seg;
}

std::string reconstruct(const std::vector<SemanticUnit>& units) {
  std::string out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i) out += "\n";
    out += units[i].text;
  }
  return out;
}

}  // namespace popt
