#include "promptopt/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "promptopt/errors.hpp"
#include "promptopt/util.hpp"

namespace popt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Mock oracle
// ---------------------------------------------------------------------------

MockTaskBackend::MockTaskBackend(MockOracleSpec spec, const std::vector<Example>& examples)
    : ModelBackend("mock-task"), spec_(std::move(spec)) {
  for (const auto& ex : examples) by_input_[ex.input_text] = {ex.id, ex.target};
}

bool MockTaskBackend::fails(const std::string& example_id, const std::string& prompt) const {
  auto it = spec_.fail_map.find(example_id);
  if (it == spec_.fail_map.end()) return false;
  auto is_helpful = [&](const std::string& m) {
    return std::find(spec_.helpful_markers.begin(), spec_.helpful_markers.end(), m) !=
           spec_.helpful_markers.end();
  };
  for (const auto& marker : it->second) {
    const bool present = prompt.find(marker) != std::string::npos;
    if (is_helpful(marker) ? !present : present) return true;
  }
  return false;
}

std::string MockTaskBackend::complete_impl(const ModelRequest& request) {
  if (capture_) {
    std::lock_guard<std::mutex> lock(mutex_);
    captured_.push_back(request);
  }
  auto it = by_input_.find(request.user_input);
  if (it == by_input_.end()) return "UNKNOWN_INPUT";
  const auto& [id, target] = it->second;
  if (fails(id, request.system_prompt)) return "WRONG_ANSWER(" + id + ")";
  return target;
}

std::vector<ModelRequest> MockTaskBackend::captured() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return captured_;
}

// ---------------------------------------------------------------------------
// Grader template and mock grader
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kGraderHead =
    "You are a professional question-answering assessment expert. You will be given a question "
    "description (including the question itself and the answer requirements), a standard answer, "
    "and an answer; you will use this to evaluate the quality of the answer.";
constexpr const char* kGraderTail =
    "Try to learn and understand the task description, and score the specific answer generated "
    "based on the task description and the reference answer to reflect whether the answer "
    "perfectly meets the question requirements in terms of steps and results, with a maximum "
    "score of 100.";
}  // namespace

std::string render_grader_prompt(const std::string& task, const std::string& target,
                                 const std::string& output) {
  std::string out;
  out.reserve(512 + task.size() + target.size() + output.size());
  out += kGraderHead;
  out += "\n\nQuestion description:\n";
  out += task;
  out += "\n\nReference answer:\n";
  out += target;
  out += "\n\nAnswer:\n";
  out += output;
  out += "\n\n";
  out += kGraderTail;
  return out;
}

std::string MockGraderBackend::complete_impl(const ModelRequest& request) {
  const std::string& text = request.user_input;
  const std::string ref_key = "\n\nReference answer:\n";
  const std::string ans_key = "\n\nAnswer:\n";
  const std::string tail_key = std::string("\n\n") + kGraderTail;

  std::size_t ref_pos = text.find(ref_key);
  std::size_t tail_pos = text.rfind(tail_key);
  if (ref_pos == std::string::npos || tail_pos == std::string::npos)
    throw BackendError("mock grader: unrecognized grader prompt layout");
  std::size_t ans_pos = text.find(ans_key, ref_pos + ref_key.size());
  if (ans_pos == std::string::npos || ans_pos > tail_pos)
    throw BackendError("mock grader: unrecognized grader prompt layout");

  std::string target = text.substr(ref_pos + ref_key.size(), ans_pos - ref_pos - ref_key.size());
  std::string output = text.substr(ans_pos + ans_key.size(), tail_pos - ans_pos - ans_key.size());
  return fmt_double(output == target ? pass_grade_ : fail_grade_);
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

void ScriptedBackend::push_response(std::string text) {
  std::lock_guard<std::mutex> lock(mutex_);
  queue_.push_back(std::move(text));
}

std::string ScriptedBackend::complete_impl(const ModelRequest& request) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!queue_.empty()) {
    std::string r = std::move(queue_.front());
    queue_.pop_front();
    return r;
  }
  const std::string haystack = request.system_prompt + "\n" + request.user_input;
  for (const auto& rule : rules_) {
    bool all = true;
    for (const auto& needle : rule.match_all)
      if (haystack.find(needle) == std::string::npos) {
        all = false;
        break;
      }
    if (all) return rule.response;
  }
  return default_;
}

// ---------------------------------------------------------------------------
// HTTP chat-completions backend
// ---------------------------------------------------------------------------

HttpChatBackend::HttpChatBackend(HttpBackendConfig config, Transport transport, Sleeper sleeper,
                                 TranscriptSink transcript)
    : ModelBackend(config.name),
      config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      transcript_(std::move(transcript)) {
  if (!transport_) transport_ = make_http_transport(config_.base_url);
  if (!sleeper_) sleeper_ = [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

json HttpChatBackend::build_request_body(const ModelRequest& request) const {
  json body;
  body["model"] = config_.model;
  json messages = json::array();
  if (!request.system_prompt.empty())
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  if (request.image_payloads.empty()) {
    messages.push_back({{"role", "user"}, {"content", request.user_input}});
  } else {
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", request.user_input}});
    for (const auto& img : request.image_payloads) {
      parts.push_back(
          {{"type", "image_url"},
           {"image_url", {{"url", "data:" + img.media_type + ";base64," + img.base64_data}}}});
    }
    messages.push_back({{"role", "user"}, {"content", parts}});
  }
  body["messages"] = messages;
  body["temperature"] = request.params.temperature;
  body["top_p"] = request.params.top_p;
  body["presence_penalty"] = request.params.presence_penalty;
  body["frequency_penalty"] = request.params.frequency_penalty;
  body["max_tokens"] = request.params.max_tokens;
  for (const auto& key : config_.unsupported_params) {
    if (body.contains(key)) {
      body.erase(key);
      if (transcript_)
        transcript_({{"backend", name()}, {"event", "param_omitted"}, {"param", key}});
    }
  }
  return body;
}

std::string HttpChatBackend::complete_impl(const ModelRequest& request) {
  std::vector<std::pair<std::string, std::string>> headers = {
      {"Content-Type", "application/json"}};
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw BackendError("backend " + name() + ": credentials missing (set " +
                         config_.api_key_env + ")");
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = build_request_body(request).dump();

  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    bool transient = false;
    try {
      TransportResponse resp = transport_(config_.path, body, headers);
      if (transcript_)
        transcript_({{"backend", name()},
                     {"event", "attempt"},
                     {"attempt", attempt},
                     {"status", resp.status}});
      if (resp.status == 200) {
        json parsed;
        try {
          parsed = json::parse(resp.body);
          const auto& content = parsed.at("choices").at(0).at("message").at("content");
          if (content.is_string()) return content.get<std::string>();
          if (content.is_array()) {  // some providers return content parts
            std::string joined;
            for (const auto& part : content)
              if (part.contains("text")) joined += part["text"].get<std::string>();
            return joined;
          }
        } catch (const json::exception& e) {
          throw BackendError("backend " + name() + ": response schema unrecognized: " + e.what());
        }
        throw BackendError("backend " + name() + ": response schema unrecognized");
      }
      if (resp.status == 401 || resp.status == 403)
        throw BackendError("backend " + name() + ": authentication failed (HTTP " +
                           std::to_string(resp.status) + ")");
      if (resp.status == 408 || resp.status == 429 || resp.status >= 500) {
        transient = true;
        last_error = "HTTP " + std::to_string(resp.status);
      } else {
        throw BackendError("backend " + name() + ": HTTP " + std::to_string(resp.status) + ": " +
                           resp.body.substr(0, 200));
      }
    } catch (const BackendError&) {
      throw;
    } catch (const std::exception& e) {  // transport-level failure
      transient = true;
      last_error = e.what();
      if (transcript_)
        transcript_({{"backend", name()},
                     {"event", "attempt"},
                     {"attempt", attempt},
                     {"error", last_error}});
    }
    if (transient && attempt < config_.max_attempts) {
      sleeper_(config_.retry_base_ms * (1 << (attempt - 1)));
      continue;
    }
  }
  throw BackendError("backend " + name() + ": retry budget exhausted after " +
                     std::to_string(config_.max_attempts) + " attempts (" + last_error + ")");
}

// ---------------------------------------------------------------------------
// base64 / images
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kB64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned int v = static_cast<unsigned int>(data[i]) << 16;
    if (i + 1 < len) v |= static_cast<unsigned int>(data[i + 1]) << 8;
    if (i + 2 < len) v |= static_cast<unsigned int>(data[i + 2]);
    out.push_back(kB64Alphabet[(v >> 18) & 0x3f]);
    out.push_back(kB64Alphabet[(v >> 12) & 0x3f]);
    out.push_back(i + 1 < len ? kB64Alphabet[(v >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[v & 0x3f] : '=');
  }
  return out;
}

std::string base64_decode(const std::string& encoded) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  int buffer = 0, bits = 0;
  for (char c : encoded) {
    if (c == '=' || std::isspace(static_cast<unsigned char>(c))) continue;
    int v = value_of(c);
    if (v < 0) throw DataError("base64: invalid character");
    buffer = (buffer << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buffer >> bits) & 0xff));
    }
  }
  return out;
}

ImagePayload encode_image(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::string media;
  if (ext == ".png")
    media = "image/png";
  else if (ext == ".jpg" || ext == ".jpeg")
    media = "image/jpeg";
  else if (ext == ".webp")
    media = "image/webp";
  else
    throw DataError("encode_image: unknown extension \"" + ext + "\" for " + path);
  const std::string bytes = read_file(path);
  return ImagePayload{media, base64_encode(bytes)};
}

// ---------------------------------------------------------------------------
// Grading
// ---------------------------------------------------------------------------

std::optional<double> parse_grade(const std::string& reply) {
  const std::size_t n = reply.size();
  std::size_t i = 0;
  while (i < n) {
    char c = reply[i];
    bool starts_number = std::isdigit(static_cast<unsigned char>(c)) ||
                         ((c == '+' || c == '-') && i + 1 < n &&
                          std::isdigit(static_cast<unsigned char>(reply[i + 1])));
    if (!starts_number) {
      ++i;
      continue;
    }
    std::size_t j = i;
    if (reply[j] == '+' || reply[j] == '-') ++j;
    while (j < n && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j < n && reply[j] == '.' && j + 1 < n &&
        std::isdigit(static_cast<unsigned char>(reply[j + 1]))) {
      ++j;
      while (j < n && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    }
    double v = std::strtod(reply.substr(i, j - i).c_str(), nullptr);
    if (v >= 0.0 && v <= 100.0) return v;
    i = j;  // out of range: keep scanning
  }
  return std::nullopt;
}

double grade(ModelBackend& grader, const std::string& task, const std::string& target,
             const std::string& output) {
  ModelRequest req;
  req.user_input = render_grader_prompt(task, target, output);
  std::string reply = grader.complete(req);
  auto parsed = parse_grade(reply);
  if (!parsed) {
    ModelRequest retry = req;
    retry.user_input += "\n\nReply with only a single number between 0 and 100.";
    reply = grader.complete(retry);
    parsed = parse_grade(reply);
  }
  if (!parsed)
    throw BackendError("grader " + grader.name() + ": no parseable score in reply: " +
                       reply.substr(0, 120));
  return *parsed;
}

}  // namespace popt
