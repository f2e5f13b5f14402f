#pragma once

#include <set>
#include <string>
#include <vector>

#include "promptopt/backends.hpp"
#include "promptopt/corpus.hpp"

namespace popt {

struct EvalOptions {
  GenerationParams params;
  bool multimodal = false;
  double correctness_threshold = 60.0;
  int max_concurrency = 8;
};

/// Runs the prompt over the split (one task call plus one grader call per
/// example, fanned out up to max_concurrency) and returns graded results in
/// split order. Failures are aggregated and reported with example ids.
std::vector<EvalResult> evaluate_prompt(const std::string& prompt,
                                        const std::vector<Example>& split,
                                        ModelBackend& task_backend, ModelBackend& grader,
                                        const EvalOptions& options);

std::set<std::string> correct_ids(const std::vector<EvalResult>& results);

}  // namespace popt
