#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "promptopt/backends.hpp"
#include "promptopt/corpus.hpp"

namespace testutil {

/// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    auto base = std::filesystem::temp_directory_path();
    path = base / ("promptopt_test_" + std::to_string(::getpid()) + "_" +
                   std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name, const std::string& content) const {
    auto p = path / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p.string();
  }
};

inline std::vector<popt::Example> make_examples(int n, const std::string& prefix = "ex") {
  std::vector<popt::Example> out;
  for (int i = 0; i < n; ++i) {
    popt::Example ex;
    ex.id = prefix + std::to_string(i);
    ex.input_text = "Question " + std::to_string(i) + "?";
    ex.target = "Answer " + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::string examples_to_jsonl(const std::vector<popt::Example>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::json rec{{"id", ex.id}, {"input", ex.input_text}, {"target", ex.target}};
    if (!ex.image_paths.empty()) rec["images"] = ex.image_paths;
    out += rec.dump() + "\n";
  }
  return out;
}

/// Structured prompt with headers, paragraphs, lists, and rules; every block
/// carries enough text to survive refinement untouched.
inline std::string random_structured_prompt(std::mt19937_64& rng) {
  static const std::vector<std::string> words = {
      "carefully", "verify",  "the",      "result",   "before",  "answering", "provide",
      "numbers",   "exactly", "as",       "shown",    "avoid",   "extra",     "commentary",
      "match",     "format",  "options",  "precise",  "output",  "analyze",   "question",
      "context",   "compute", "solution", "validate", "explain", "required",  "steps"};
  auto word = [&] { return words[rng() % words.size()]; };
  auto sentence = [&] {
    std::string s = word();
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    int extra = 4 + static_cast<int>(rng() % 8);
    for (int i = 0; i < extra; ++i) s += " " + word();
    return s + ".";
  };

  std::string prompt;
  int blocks = 2 + static_cast<int>(rng() % 5);
  for (int b = 0; b < blocks; ++b) {
    if (b) prompt += "\n\n";
    switch (rng() % 5) {
      case 0:
        prompt += (rng() % 2) ? "## Guidance for " + word() + " " + word()
                              : "**" + word() + " " + word() + ":**";
        break;
      case 1:
        prompt += "---";
        break;
      case 2: {
        int items = 2 + static_cast<int>(rng() % 3);
        for (int i = 0; i < items; ++i) {
          if (i) prompt += "\n";
          prompt += "- " + sentence();
        }
        break;
      }
      case 3: {
        int items = 2 + static_cast<int>(rng() % 3);
        for (int i = 0; i < items; ++i) {
          if (i) prompt += "\n";
          prompt += std::to_string(i + 1) + ". " + sentence();
        }
        break;
      }
      default: {
        int sentences = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < sentences; ++i) {
          if (i) prompt += " ";
          prompt += sentence();
        }
        break;
      }
    }
  }
  return prompt;
}

}  // namespace testutil
