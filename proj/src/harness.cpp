#include "promptopt/harness.hpp"

#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

std::vector<EvalResult> evaluate_prompt(const std::string& prompt,
                                        const std::vector<Example>& split,
                                        ModelBackend& task_backend, ModelBackend& grader,
                                        const EvalOptions& options) {
  if (split.empty()) throw std::invalid_argument("evaluate_prompt: empty split");
  std::vector<EvalResult> results(split.size());
  std::vector<std::string> errors(split.size());

  parallel_for(split.size(), options.max_concurrency, [&](std::size_t i) {
    const Example& ex = split[i];
    try {
      ModelRequest req;
      req.system_prompt = prompt;
      req.user_input = ex.input_text;
      req.params = options.params;
      if (options.multimodal)
        for (const auto& path : ex.image_paths) req.image_payloads.push_back(encode_image(path));
      std::string raw = task_backend.complete(req);
      double g = grade(grader, ex.input_text, ex.target, raw);
      results[i] = EvalResult{ex.id, std::move(raw), g, g >= options.correctness_threshold};
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::string failed;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (!errors[i].empty()) failed += (failed.empty() ? "" : ", ") + split[i].id;
  if (!failed.empty()) {
    std::string first;
    for (const auto& e : errors)
      if (!e.empty()) {
        first = e;
        break;
      }
    throw BackendError("evaluation failed for examples [" + failed + "]: " + first);
  }
  return results;
}

std::set<std::string> correct_ids(const std::vector<EvalResult>& results) {
  std::set<std::string> ids;
  for (const auto& r : results)
    if (r.correct) ids.insert(r.example_id);
  return ids;
}

}  // namespace popt
