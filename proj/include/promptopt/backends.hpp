#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptopt/corpus.hpp"

namespace popt {

/// Decoding parameters sent with every model call; defaults are fixed so
/// that candidate quality, not sampling luck, drives the optimization.
struct GenerationParams {
  double temperature = 1.0;
  double top_p = 1.0;
  double presence_penalty = 0.0;
  double frequency_penalty = 0.0;
  int max_tokens = 2048;
};

struct ImagePayload {
  std::string media_type;   // e.g. "image/png"
  std::string base64_data;  // standard base64 of the file bytes
};

struct ModelRequest {
  std::string system_prompt;  // the candidate prompt
  std::string user_input;     // the example input
  std::vector<ImagePayload> image_payloads;
  GenerationParams params;
};

/// Line-delimited sink for request/response transcripts.
using TranscriptSink = std::function<void(const nlohmann::json&)>;

/// Uniform interface over task, optimizer, grader, and parser models.
/// Call counting happens here: exactly one increment per completed or
/// failed call, so per-backend totals support end-of-run cost reports.
class ModelBackend {
 public:
  explicit ModelBackend(std::string name) : name_(std::move(name)) {}
  virtual ~ModelBackend() = default;

  const std::string& name() const { return name_; }
  std::uint64_t call_count() const { return calls_.load(); }
  void set_call_count(std::uint64_t v) { calls_.store(v); }

  std::string complete(const ModelRequest& request) {
    struct Count {
      std::atomic<std::uint64_t>& c;
      ~Count() { c.fetch_add(1); }
    } guard{calls_};
    return complete_impl(request);
  }

 protected:
  virtual std::string complete_impl(const ModelRequest& request) = 0;

 private:
  std::string name_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Deterministic offline oracle. An example fails iff any marker mapped to
/// its id is "active": harmful markers are active when present in the
/// prompt, helpful markers when absent. Failure yields a fixed wrong
/// answer; success echoes the example's target verbatim.
struct MockOracleSpec {
  std::vector<std::string> harmful_markers;
  std::vector<std::string> helpful_markers;
  std::map<std::string, std::vector<std::string>> fail_map;  // example id -> markers
  double pass_grade = 100.0;
  double fail_grade = 0.0;
};

class MockTaskBackend : public ModelBackend {
 public:
  MockTaskBackend(MockOracleSpec spec, const std::vector<Example>& examples);

  /// True when the example would fail under this prompt. Exposed so tests
  /// can brute-force the oracle optimum independently of the engine.
  bool fails(const std::string& example_id, const std::string& prompt) const;

  void set_capture(bool on) { capture_ = on; }
  std::vector<ModelRequest> captured() const;

 protected:
  std::string complete_impl(const ModelRequest& request) override;

 private:
  MockOracleSpec spec_;
  std::map<std::string, std::pair<std::string, std::string>> by_input_;  // input -> (id, target)
  bool capture_ = false;
  mutable std::mutex mutex_;
  std::vector<ModelRequest> captured_;
};

/// Grades by exact match against the reference answer embedded in the
/// rendered grader prompt; replies with pass_grade or fail_grade as text.
class MockGraderBackend : public ModelBackend {
 public:
  MockGraderBackend(double pass_grade = 100.0, double fail_grade = 0.0)
      : ModelBackend("mock-grader"), pass_grade_(pass_grade), fail_grade_(fail_grade) {}

 protected:
  std::string complete_impl(const ModelRequest& request) override;

 private:
  double pass_grade_;
  double fail_grade_;
};

/// Fixed responses for offline tests: an optional FIFO queue consumed
/// first, then substring-match rules, then a default response.
class ScriptedBackend : public ModelBackend {
 public:
  struct Rule {
    std::vector<std::string> match_all;  // all substrings must occur in the request
    std::string response;
  };

  explicit ScriptedBackend(std::string name = "scripted") : ModelBackend(std::move(name)) {}

  void push_response(std::string text);
  void add_rule(Rule rule) { rules_.push_back(std::move(rule)); }
  void set_default_response(std::string text) { default_ = std::move(text); }

 protected:
  std::string complete_impl(const ModelRequest& request) override;

 private:
  std::mutex mutex_;
  std::deque<std::string> queue_;
  std::vector<Rule> rules_;
  std::string default_;
};

struct HttpBackendConfig {
  std::string name = "http";
  std::string model;
  std::string base_url;                        // e.g. "https://api.example.com"
  std::string path = "/v1/chat/completions";
  std::string api_key_env;                     // env var holding the bearer token
  int max_attempts = 3;
  int retry_base_ms = 200;
  std::vector<std::string> unsupported_params;  // omitted from the wire request
};

struct TransportResponse {
  int status = 0;
  std::string body;
};

/// POST json body to path; throws on transport-level failure.
using Transport = std::function<TransportResponse(
    const std::string& path, const std::string& body,
    const std::vector<std::pair<std::string, std::string>>& headers)>;
using Sleeper = std::function<void(int ms)>;

/// Chat-completions client with exponential backoff on transient failures.
/// The transport and sleeper are injectable so retry behavior is testable
/// without a network.
class HttpChatBackend : public ModelBackend {
 public:
  HttpChatBackend(HttpBackendConfig config, Transport transport = nullptr,
                  Sleeper sleeper = nullptr, TranscriptSink transcript = nullptr);

  nlohmann::json build_request_body(const ModelRequest& request) const;

 protected:
  std::string complete_impl(const ModelRequest& request) override;

 private:
  HttpBackendConfig config_;
  Transport transport_;
  Sleeper sleeper_;
  TranscriptSink transcript_;
};

/// Real transport backed by cpp-httplib.
Transport make_http_transport(const std::string& base_url);

std::string base64_encode(const unsigned char* data, std::size_t len);
inline std::string base64_encode(const std::string& bytes) {
  return base64_encode(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
}
std::string base64_decode(const std::string& encoded);

/// Reads the file and returns its media type (from the extension: png,
/// jpg/jpeg, webp) plus base64 payload.
ImagePayload encode_image(const std::string& path);

/// Fills the grading template with the task, reference answer, and model
/// output. Substitution is literal; the result contains nothing else.
std::string render_grader_prompt(const std::string& task, const std::string& target,
                                 const std::string& output);

/// First numeric token in [0,100] found in the reply, if any.
std::optional<double> parse_grade(const std::string& reply);

/// Renders the grader prompt, queries the grader, and parses the score.
/// One structured re-ask if the first reply has no usable number.
double grade(ModelBackend& grader, const std::string& task, const std::string& target,
             const std::string& output);

}  // namespace popt
