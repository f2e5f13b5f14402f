#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace popt {

/// One benchmark item: an input, optional image attachments, and the
/// reference answer used for grading.
struct Example {
  std::string id;
  std::string input_text;
  std::vector<std::string> image_paths;  // resolved, readable at load time
  std::string target;
};

struct DatasetSplits {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::uint64_t seed = 0;
};

/// Graded model output for a single example.
struct EvalResult {
  std::string example_id;
  std::string raw_output;
  double grade = 0.0;  // 0..100
  bool correct = false;
};

/// Loads a JSONL dataset: one record per line with keys
/// id, input, images (optional array), target. Relative image paths are
/// resolved against the dataset file's directory and must exist.
std::vector<Example> load_dataset(const std::string& path);

/// Draws round(N * sample_fraction) examples with the given seed, carves
/// dev_fraction of them into dev (rest train), and leaves everything
/// unsampled as test. Deterministic for a fixed seed.
DatasetSplits sample_splits(const std::vector<Example>& examples, double sample_fraction,
                            double dev_fraction, std::uint64_t seed);

/// Mean grade / 100 over the results.
double accuracy(const std::vector<EvalResult>& results);

}  // namespace popt
