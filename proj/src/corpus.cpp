#include "promptopt/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Example> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("dataset file not found: " + path);
  const fs::path base = fs::path(path).parent_path();

  std::vector<Example> out;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(lineno) + ": invalid JSON (" + e.what() +
                      ")");
    }
    auto need_string = [&](const char* key) -> std::string {
      if (!rec.contains(key) || !rec[key].is_string())
        throw DataError("dataset line " + std::to_string(lineno) + ": missing string field \"" +
                        key + "\"");
      return rec[key].get<std::string>();
    };
    Example ex;
    ex.id = need_string("id");
    ex.input_text = need_string("input");
    ex.target = need_string("target");
    if (rec.contains("images")) {
      if (!rec["images"].is_array())
        throw DataError("dataset line " + std::to_string(lineno) + ": \"images\" must be an array");
      for (const auto& item : rec["images"]) {
        if (!item.is_string())
          throw DataError("dataset line " + std::to_string(lineno) +
                          ": \"images\" entries must be strings");
        fs::path p(item.get<std::string>());
        if (p.is_relative()) p = base / p;
        if (!fs::exists(p))
          throw DataError("dataset line " + std::to_string(lineno) + ": image not found: " +
                          p.string());
        ex.image_paths.push_back(p.string());
      }
    }
    if (!seen_ids.insert(ex.id).second)
      throw DataError("dataset line " + std::to_string(lineno) + ": duplicate id \"" + ex.id +
                      "\"");
    out.push_back(std::move(ex));
  }
  return out;
}

DatasetSplits sample_splits(const std::vector<Example>& examples, double sample_fraction,
                            double dev_fraction, std::uint64_t seed) {
  if (!(sample_fraction > 0.0 && sample_fraction < 1.0))
    throw std::invalid_argument("sample_splits: sample_fraction must be in (0,1)");
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0))
    throw std::invalid_argument("sample_splits: dev_fraction must be in (0,1)");

  const std::size_t n = examples.size();
  const auto sample_count =
      static_cast<std::size_t>(std::max(0ll, round_half_up(static_cast<double>(n) * sample_fraction)));
  if (sample_count == 0)
    throw std::invalid_argument("sample_splits: sampled subset is empty (N=" + std::to_string(n) +
                                ", sample_fraction=" + fmt_double(sample_fraction) + ")");
  const auto dev_count = static_cast<std::size_t>(
      std::max(0ll, round_half_up(static_cast<double>(sample_count) * dev_fraction)));
  const std::size_t train_count = sample_count - dev_count;
  if (dev_count == 0) throw std::invalid_argument("sample_splits: dev split is empty");
  if (train_count == 0) throw std::invalid_argument("sample_splits: train split is empty");
  if (sample_count == n) throw std::invalid_argument("sample_splits: test split is empty");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first sample_count slots become the draw.
  for (std::size_t i = 0; i < sample_count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }

  std::vector<std::size_t> dev_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(dev_count));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(dev_count),
                                     idx.begin() + static_cast<std::ptrdiff_t>(sample_count));
  std::sort(dev_idx.begin(), dev_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  std::vector<bool> sampled(n, false);
  for (std::size_t i = 0; i < sample_count; ++i) sampled[idx[i]] = true;

  DatasetSplits splits;
  splits.seed = seed;
  for (std::size_t i : train_idx) splits.train.push_back(examples[i]);
  for (std::size_t i : dev_idx) splits.dev.push_back(examples[i]);
  for (std::size_t i = 0; i < n; ++i)
    if (!sampled[i]) splits.test.push_back(examples[i]);
  return splits;
}

double accuracy(const std::vector<EvalResult>& results) {
  if (results.empty()) throw std::invalid_argument("accuracy: empty result list");
  double sum = 0.0;
  for (const auto& r : results) sum += r.grade;
  return sum / static_cast<double>(results.size()) / 100.0;
}

}  // namespace popt
