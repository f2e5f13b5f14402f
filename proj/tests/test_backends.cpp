#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>

#include "promptopt/backends.hpp"
#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"
#include "testutil.hpp"

using namespace popt;

namespace {

MockOracleSpec spec_with_marker() {
  MockOracleSpec spec;
  spec.harmful_markers = {"UNIT_BAD"};
  spec.fail_map["ex0"] = {"UNIT_BAD"};
  spec.fail_map["ex1"] = {"UNIT_BAD"};
  return spec;
}

}  // namespace

TEST_CASE("mock oracle fails exactly when a mapped marker is in the prompt") {
  auto examples = testutil::make_examples(3);
  MockTaskBackend backend(spec_with_marker(), examples);

  ModelRequest req;
  req.system_prompt = "Do the thing. UNIT_BAD applies.";
  req.user_input = examples[0].input_text;
  CHECK(backend.complete(req) == "WRONG_ANSWER(ex0)");

  req.system_prompt = "Do the thing.";
  CHECK(backend.complete(req) == examples[0].target);

  req.system_prompt = "Do the thing. UNIT_BAD applies.";
  req.user_input = examples[2].input_text;  // ex2 is not in the fail map
  CHECK(backend.complete(req) == examples[2].target);
}

TEST_CASE("mock oracle helpful markers fail when absent") {
  auto examples = testutil::make_examples(1);
  MockOracleSpec spec;
  spec.helpful_markers = {"USE_STEPS"};
  spec.fail_map["ex0"] = {"USE_STEPS"};
  MockTaskBackend backend(spec, examples);

  ModelRequest req;
  req.user_input = examples[0].input_text;
  req.system_prompt = "Answer briefly.";
  CHECK(backend.complete(req) == "WRONG_ANSWER(ex0)");
  req.system_prompt = "Answer briefly. USE_STEPS.";
  CHECK(backend.complete(req) == examples[0].target);
}

TEST_CASE("mock oracle is deterministic across repeated calls") {
  auto examples = testutil::make_examples(2);
  MockTaskBackend a(spec_with_marker(), examples);
  MockTaskBackend b(spec_with_marker(), examples);
  ModelRequest req;
  req.system_prompt = "p with UNIT_BAD";
  req.user_input = examples[1].input_text;
  CHECK(a.complete(req) == b.complete(req));
  CHECK(a.complete(req) == a.complete(req));
}

TEST_CASE("call counter counts completed and failed calls once each") {
  auto examples = testutil::make_examples(1);
  MockTaskBackend ok(spec_with_marker(), examples);
  ModelRequest req;
  req.user_input = examples[0].input_text;
  for (int i = 0; i < 5; ++i) ok.complete(req);
  CHECK(ok.call_count() == 5);

  HttpBackendConfig cfg;
  cfg.max_attempts = 2;
  cfg.retry_base_ms = 0;
  HttpChatBackend failing(
      cfg, [](const std::string&, const std::string&,
              const auto&) -> TransportResponse { throw std::runtime_error("down"); },
      [](int) {});
  CHECK_THROWS_AS(failing.complete(req), BackendError);
  CHECK(failing.call_count() == 1);
}

TEST_CASE("counter increments are atomic under concurrent calls") {
  auto examples = testutil::make_examples(1);
  MockTaskBackend backend(spec_with_marker(), examples);
  ModelRequest req;
  req.user_input = examples[0].input_text;
  parallel_for(200, 8, [&](std::size_t) { backend.complete(req); });
  CHECK(backend.call_count() == 200);
}

TEST_CASE("http backend retries transient failures with backoff") {
  std::atomic<int> attempts{0};
  std::vector<int> sleeps;
  HttpBackendConfig cfg;
  cfg.max_attempts = 3;
  cfg.retry_base_ms = 100;
  const std::string reply =
      R"({"choices":[{"message":{"content":"it worked"}}]})";
  HttpChatBackend backend(
      cfg,
      [&](const std::string&, const std::string&, const auto&) -> TransportResponse {
        if (attempts.fetch_add(1) < 2) throw std::runtime_error("connection reset");
        return {200, reply};
      },
      [&](int ms) { sleeps.push_back(ms); });

  ModelRequest req;
  req.user_input = "hello";
  CHECK(backend.complete(req) == "it worked");
  CHECK(attempts.load() == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0] == 100);
  CHECK(sleeps[1] == 200);
  CHECK(backend.call_count() == 1);
}

TEST_CASE("http backend exhausts its retry budget") {
  HttpBackendConfig cfg;
  cfg.max_attempts = 3;
  cfg.retry_base_ms = 0;
  int attempts = 0;
  HttpChatBackend backend(
      cfg,
      [&](const std::string&, const std::string&, const auto&) -> TransportResponse {
        ++attempts;
        return {503, "unavailable"};
      },
      [](int) {});
  ModelRequest req;
  CHECK_THROWS_WITH_AS(backend.complete(req), doctest::Contains("retry budget"), BackendError);
  CHECK(attempts == 3);
}

TEST_CASE("http backend fails fast on authentication errors") {
  HttpBackendConfig cfg;
  cfg.max_attempts = 3;
  cfg.retry_base_ms = 0;
  int attempts = 0;
  HttpChatBackend backend(
      cfg,
      [&](const std::string&, const std::string&, const auto&) -> TransportResponse {
        ++attempts;
        return {401, "no"};
      },
      [](int) {});
  ModelRequest req;
  CHECK_THROWS_WITH_AS(backend.complete(req), doctest::Contains("authentication"), BackendError);
  CHECK(attempts == 1);
}

TEST_CASE("http backend requires configured credentials") {
  HttpBackendConfig cfg;
  cfg.api_key_env = "POPT_TEST_MISSING_KEY";
  HttpChatBackend backend(
      cfg, [](const std::string&, const std::string&, const auto&) -> TransportResponse {
        return {200, "{}"};
      });
  ModelRequest req;
  CHECK_THROWS_WITH_AS(backend.complete(req), doctest::Contains("credentials"), BackendError);
}

TEST_CASE("http request body carries image payloads and omits unsupported params") {
  HttpBackendConfig cfg;
  cfg.model = "m1";
  cfg.unsupported_params = {"presence_penalty", "frequency_penalty"};
  HttpChatBackend backend(
      cfg, [](const std::string&, const std::string&, const auto&) -> TransportResponse {
        return {200, "{}"};
      });
  ModelRequest req;
  req.system_prompt = "sys";
  req.user_input = "ask";
  req.image_payloads.push_back({"image/png", "AQID"});
  auto body = backend.build_request_body(req);
  CHECK_FALSE(body.contains("presence_penalty"));
  CHECK_FALSE(body.contains("frequency_penalty"));
  CHECK(body.contains("temperature"));
  auto content = body["messages"][1]["content"];
  REQUIRE(content.is_array());
  CHECK(content[1]["image_url"]["url"] == "data:image/png;base64,AQID");
}

TEST_CASE("encode_image produces standard base64 with the right media type") {
  testutil::TempDir dir;
  auto path = dir.file("three.png", std::string("\x01\x02\x03", 3));
  auto payload = encode_image(path);
  CHECK(payload.media_type == "image/png");
  CHECK(payload.base64_data == "AQID");

  auto empty = encode_image(dir.file("empty.jpeg", ""));
  CHECK(empty.media_type == "image/jpeg");
  CHECK(empty.base64_data.empty());

  CHECK_THROWS_WITH_AS(encode_image(dir.file("x.tiff", "abc")), doctest::Contains(".tiff"),
                       DataError);
}

TEST_CASE("base64 round-trips arbitrary bytes") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::string bytes;
    auto len = rng() % 200;
    for (std::uint64_t i = 0; i < len; ++i) bytes.push_back(static_cast<char>(rng() & 0xff));
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
}

TEST_CASE("render_grader_prompt substitutes the three placeholders literally") {
  auto rendered = render_grader_prompt("T", "G", "O");
  CHECK(rendered.find("Question description:\nT") != std::string::npos);
  CHECK(rendered.find("Reference answer:\nG") != std::string::npos);
  CHECK(rendered.find("Answer:\nO") != std::string::npos);

  auto with_empty = render_grader_prompt("task", "gold", "");
  CHECK(with_empty.find("Answer:\n\n") != std::string::npos);

  auto braces = render_grader_prompt("task", "{target}", "out");
  CHECK(braces.find("Reference answer:\n{target}") != std::string::npos);
}

TEST_CASE("mock grader scores by exact match against the reference") {
  MockGraderBackend grader;
  CHECK(grade(grader, "2+2?", "4", "4") == 100.0);
  CHECK(grade(grader, "2+2?", "4", "5") == 0.0);
  MockGraderBackend partial(80.0, 15.0);
  CHECK(grade(partial, "q", "gold", "gold") == 80.0);
  CHECK(grade(partial, "q", "gold", "off") == 15.0);
}

TEST_CASE("grade parses the first in-range number from a scripted reply") {
  ScriptedBackend grader;
  grader.push_response("Score: 87/100.");
  CHECK(grade(grader, "q", "g", "o") == 87.0);

  grader.push_response("I would rate this 350 out of 350, i.e. 72.5 points normalized.");
  CHECK(grade(grader, "q", "g", "o") == 72.5);
}

TEST_CASE("grade re-asks once before giving up") {
  ScriptedBackend grader;
  grader.push_response("no numbers here");
  grader.push_response("62");
  CHECK(grade(grader, "q", "g", "o") == 62.0);
  CHECK(grader.call_count() == 2);

  ScriptedBackend hopeless;
  hopeless.push_response("nothing");
  hopeless.push_response("still nothing");
  CHECK_THROWS_WITH_AS(grade(hopeless, "q", "g", "o"), doctest::Contains("no parseable"),
                       BackendError);
}
