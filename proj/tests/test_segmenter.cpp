#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "promptopt/segmenter.hpp"
#include "promptopt/util.hpp"
#include "testutil.hpp"

using namespace popt;

namespace {

// The text-counting prompt used across tests: two numbered rules, an example
// block under a bold header, and key notes as bullets.
const char* kCountingPrompt =
    "1. Ensure the generated text strictly matches one of the specified target options without "
    "introducing any unlisted alternatives.\n"
    "2. Avoid redundant phrasing and maintain precision in alignment with the scoring rules.\n"
    "\n"
    "**Optimized Example:**\n"
    "\n"
    "Question: How many times does the character 'e' appear in the picture?\n"
    "Image description: An billboard showing \"Times Square\"\n"
    "Answer: ['2', 'two', 'twice']\n"
    "\n"
    "**Key Notes:**\n"
    "\n"
    "- The output must strictly adhere to the specified format and options.\n"
    "- Examples should be concise, precise, and directly aligned with the task requirements.\n"
    "- Avoid introducing any additional explanations or unlisted alternatives in the output.\n";

std::vector<std::string> texts(const std::vector<SemanticUnit>& units) {
  std::vector<std::string> out;
  for (const auto& u : units) out.push_back(u.text);
  return out;
}

bool reconstructs(const std::string& prompt, const std::vector<SemanticUnit>& units) {
  return collapse_ws(reconstruct(units)) == collapse_ws(prompt);
}

}  // namespace

TEST_CASE("rule_split separates sentences at terminal punctuation") {
  auto units = rule_split("Do X. Then do Y.");
  REQUIRE(units.size() == 2);
  CHECK(units[0].text == "Do X.");
  CHECK(units[1].text == "Then do Y.");
  CHECK(units[0].kind == UnitKind::Sentence);
  CHECK(units[0].index == 0);
  CHECK(units[1].index == 1);
}

TEST_CASE("rule_split recognizes numbered lists") {
  auto units = rule_split("1. A\n2. B\n3. C");
  REQUIRE(units.size() == 3);
  for (const auto& u : units) CHECK(u.kind == UnitKind::ListItem);
  CHECK(units[1].text == "2. B");
}

TEST_CASE("rule_split recognizes bold headers above bullets") {
  auto units = rule_split("**Key Notes:**\n- p\n- q");
  REQUIRE(units.size() == 3);
  CHECK(units[0].kind == UnitKind::Header);
  CHECK(units[1].kind == UnitKind::ListItem);
  CHECK(units[2].kind == UnitKind::ListItem);
}

TEST_CASE("rule_split recognizes horizontal rules and markdown headers") {
  auto units = rule_split("# Title\n\nBody sentence here.\n\n---\n\nMore text.");
  REQUIRE(units.size() == 4);
  CHECK(units[0].kind == UnitKind::Header);
  CHECK(units[1].kind == UnitKind::Sentence);
  CHECK(units[2].kind == UnitKind::DelimiterBlock);
  CHECK(units[3].kind == UnitKind::Sentence);
}

TEST_CASE("rule_split rejects an empty prompt") {
  CHECK_THROWS_AS(rule_split("   \n \t"), std::invalid_argument);
}

TEST_CASE("refine merges fragments below the minimum size") {
  std::vector<SemanticUnit> units = rule_split("OK. Proceed with the full analysis.");
  REQUIRE(units.size() == 2);
  SegmenterOptions opt;
  opt.min_unit_chars = 8;
  auto refined = refine(units, opt);
  REQUIRE(refined.size() == 1);
  CHECK(refined[0].text == "OK. Proceed with the full analysis.");
}

TEST_CASE("refine splits an over-long clause at a comma boundary") {
  std::string clause;
  while (clause.size() < 290) clause += "keep extending the clause with more words ";
  clause += "and now it continues,";  // comma near the midpoint
  while (clause.size() < 600) clause += " trailing words that run the clause onward";
  REQUIRE(clause.size() >= 600);

  SegmenterOptions opt;
  opt.max_unit_chars = 300;
  std::vector<SemanticUnit> unit(1);
  unit[0].text = clause;
  unit[0].kind = UnitKind::Sentence;
  auto refined = refine(unit, opt);
  REQUIRE(refined.size() >= 2);
  for (const auto& u : refined) CHECK(u.text.size() <= 300);
  CHECK(reconstructs(clause, refined));
  CHECK(refined[0].text.back() == ',');
}

TEST_CASE("refine rejects a parser proposal that drops text") {
  ScriptedBackend parser("parser");
  parser.push_response(R"(["Proceed with the full analysis."])");  // deletes a unit
  auto units = rule_split("All good here. Proceed with the full analysis.");
  auto refined = refine(units, {}, &parser);
  REQUIRE(refined.size() == 2);
  CHECK(refined[0].text == "All good here.");
}

TEST_CASE("refine accepts a parser proposal that preserves content") {
  ScriptedBackend parser("parser");
  parser.push_response(R"(["All good here. Proceed with the full analysis."])");
  auto units = rule_split("All good here. Proceed with the full analysis.");
  auto refined = refine(units, {}, &parser);
  REQUIRE(refined.size() == 1);
  CHECK(refined[0].text == "All good here. Proceed with the full analysis.");
}

TEST_CASE("segment covers the counting prompt's structure") {
  auto seg = segment(kCountingPrompt);
  CHECK(seg.units.size() >= 6);
  int headers = 0, items = 0, sentences = 0;
  for (const auto& u : seg.units) {
    if (u.kind == UnitKind::Header) ++headers;
    if (u.kind == UnitKind::ListItem) ++items;
    if (u.kind == UnitKind::Sentence) ++sentences;
  }
  CHECK(headers == 2);
  CHECK(items == 5);
  CHECK(sentences >= 1);
  CHECK(reconstructs(kCountingPrompt, seg.units));
}

TEST_CASE("segment of a single sentence yields one unit") {
  auto seg = segment("Answer the question precisely.");
  REQUIRE(seg.units.size() == 1);
  CHECK(seg.units[0].text == "Answer the question precisely.");
}

TEST_CASE("segment is deterministic under the rule fallback") {
  auto a = segment(kCountingPrompt);
  auto b = segment(kCountingPrompt);
  REQUIRE(a.units.size() == b.units.size());
  for (std::size_t i = 0; i < a.units.size(); ++i) {
    CHECK(a.units[i].text == b.units[i].text);
    CHECK(a.units[i].fingerprint == b.units[i].fingerprint);
  }
}

TEST_CASE("reconstruction is lossless over a random structured corpus") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::string prompt = testutil::random_structured_prompt(rng);
    auto seg = segment(prompt);
    CHECK(reconstructs(prompt, seg.units));
    for (std::size_t i = 0; i < seg.units.size(); ++i)
      CHECK(seg.units[i].index == static_cast<int>(i));
  }
}

TEST_CASE("refine is idempotent under the rule fallback") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    std::string prompt = testutil::random_structured_prompt(rng);
    auto once = refine(rule_split(prompt));
    auto twice = refine(once);
    CHECK(texts(once) == texts(twice));
  }
}

TEST_CASE("fingerprints hash the whitespace-collapsed text") {
  // Independent FNV-1a recomputation over the normalized text.
  auto fnv = [](const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016lx", h);
    return std::string(buf);
  };
  CHECK(unit_fingerprint("Do  X.\n") == fnv("Do X."));
  CHECK(unit_fingerprint("Do X.") == unit_fingerprint("  Do \t X. "));
  CHECK(unit_fingerprint("Do X.") != unit_fingerprint("do x."));  // case preserved
}
