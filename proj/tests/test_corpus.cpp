#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "promptopt/corpus.hpp"
#include "promptopt/errors.hpp"
#include "testutil.hpp"

using namespace popt;

TEST_CASE("load_dataset reads well-formed records in file order") {
  testutil::TempDir dir;
  auto path = dir.file("data.jsonl",
                       R"({"id":"a","input":"one","target":"1"})"
                       "\n"
                       R"({"id":"b","input":"two","target":"2"})"
                       "\n"
                       R"({"id":"c","input":"three","target":"3"})"
                       "\n");
  auto examples = load_dataset(path);
  REQUIRE(examples.size() == 3);
  CHECK(examples[0].id == "a");
  CHECK(examples[1].input_text == "two");
  CHECK(examples[2].target == "3");
}

TEST_CASE("load_dataset reports the line of a malformed record") {
  testutil::TempDir dir;
  auto path = dir.file("data.jsonl",
                       R"({"id":"a","input":"one","target":"1"})"
                       "\n"
                       R"({"id":"b","input":"two"})"
                       "\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("line 2"), DataError);
}

TEST_CASE("load_dataset rejects duplicate ids") {
  testutil::TempDir dir;
  auto path = dir.file("data.jsonl",
                       R"({"id":"a","input":"one","target":"1"})"
                       "\n"
                       R"({"id":"a","input":"two","target":"2"})"
                       "\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("duplicate id"), DataError);
}

TEST_CASE("load_dataset names a missing image path") {
  testutil::TempDir dir;
  auto path = dir.file("data.jsonl",
                       R"({"id":"a","input":"one","images":["a.png"],"target":"1"})"
                       "\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("a.png"), DataError);
}

TEST_CASE("load_dataset resolves image paths relative to the dataset file") {
  testutil::TempDir dir;
  dir.file("imgs/dot.png", std::string("\x01\x02\x03", 3));
  auto path = dir.file("data.jsonl",
                       R"({"id":"a","input":"one","images":["imgs/dot.png"],"target":"1"})"
                       "\n");
  auto examples = load_dataset(path);
  REQUIRE(examples.size() == 1);
  REQUIRE(examples[0].image_paths.size() == 1);
  CHECK(std::filesystem::exists(examples[0].image_paths[0]));
}

TEST_CASE("sample_splits matches the documented sizes for a 3% draw") {
  auto examples = testutil::make_examples(200);
  auto splits = sample_splits(examples, 0.03, 0.5, 42);
  CHECK(splits.train.size() == 3);
  CHECK(splits.dev.size() == 3);
  CHECK(splits.test.size() == 194);
}

TEST_CASE("sample_splits is deterministic for a fixed seed") {
  auto examples = testutil::make_examples(100);
  auto a = sample_splits(examples, 0.04, 0.5, 7);
  auto b = sample_splits(examples, 0.04, 0.5, 7);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
  for (std::size_t i = 0; i < a.dev.size(); ++i) CHECK(a.dev[i].id == b.dev[i].id);
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].id == b.test[i].id);

  auto c = sample_splits(examples, 0.04, 0.5, 8);
  bool same = c.dev.size() == a.dev.size();
  if (same)
    for (std::size_t i = 0; i < a.dev.size(); ++i) same = same && c.dev[i].id == a.dev[i].id;
  CHECK_FALSE(same);  // a different seed draws a different subset
}

TEST_CASE("sample_splits rejects degenerate sizes and bad fractions") {
  auto examples = testutil::make_examples(10);
  CHECK_THROWS_AS(sample_splits(examples, 0.03, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_splits(examples, 0.0, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_splits(examples, 1.0, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_splits(examples, 0.5, 1.5, 1), std::invalid_argument);
}

TEST_CASE("splits are disjoint and cover the dataset") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 20 + static_cast<int>(rng() % 200);
    double sample_fraction = 0.1 + 0.5 * (static_cast<double>(rng() % 1000) / 1000.0);
    auto examples = testutil::make_examples(n);
    DatasetSplits splits;
    try {
      splits = sample_splits(examples, sample_fraction, 0.5, rng());
    } catch (const std::invalid_argument&) {
      continue;  // degenerate draws are allowed to error
    }
    std::set<std::string> ids;
    for (const auto& part : {splits.train, splits.dev, splits.test})
      for (const auto& ex : part) CHECK(ids.insert(ex.id).second);
    CHECK(ids.size() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("accuracy is the mean grade over 100") {
  auto results = [](std::vector<double> grades) {
    std::vector<EvalResult> out;
    for (double g : grades) out.push_back({"id", "raw", g, g >= 60.0});
    return out;
  };
  CHECK(accuracy(results({100, 100, 0, 0})) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(accuracy(results({95.40})) == doctest::Approx(0.954).epsilon(1e-12));
  CHECK(accuracy(results({60, 80, 100})) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(accuracy({}), std::invalid_argument);
}

TEST_CASE("accuracy is invariant under permutation") {
  std::mt19937_64 rng(5);
  std::vector<EvalResult> results;
  for (int i = 0; i < 40; ++i) {
    double g = static_cast<double>(rng() % 5) * 25.0;  // representable sums
    results.push_back({"id" + std::to_string(i), "", g, g >= 60.0});
  }
  double base = accuracy(results);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(results.begin(), results.end(), rng);
    CHECK(accuracy(results) == base);
  }
}
