#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>

#include "bfad/common.hpp"
#include "bfad/extraction.hpp"
#include "bfad/registry.hpp"

namespace bfad {

inline constexpr std::string_view kSystemPrompt =
    "You are tasked with analyzing PHP scripts. Your objective is to classify the provided PHP code as either a "
    "WebShell or a legitimate script. A WebShell is typically a malicious script intended to exploit the server by "
    "executing unauthorized commands or providing backdoor access.";

inline constexpr std::string_view kUserInstruction =
    "Analyze the provided PHP code to determine whether it constitutes a WebShell or a legitimate script. Provide "
    "your verdict as WebShell or benign.";

inline constexpr std::string_view kNoExamples = "(none)";

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::size_t estimated_tokens = 0;
};

/// A labeled example shown to the model.
struct Demonstration {
  std::string code;
  Label label;
};

/// `code`, a newline, then "Verdict: WebShell" or "Verdict: benign".
std::string render_demonstration(const Demonstration& demo);

/// Fills the user template:
///
///   <instruction>
///
///   [Critical Code]
///   <critical windows>
///
///   [Source Code]
///   <backfill, then global_snippets>
///
///   [Examples]
///   <demonstration or "(none)">
///
///   Output:
///
/// Throws std::invalid_argument ("nothing to analyze") when both the view and
/// global_snippets are empty.
PromptBundle build_prompt(const ExtractedView& view, const std::optional<Demonstration>& demonstration,
                          std::string_view global_snippets = {},
                          const TokenEstimator& estimator = default_token_estimator());

/// Text of the [Critical Code] slot of a rendered user prompt.
std::string_view critical_code_section(std::string_view user_text);

enum class VerdictLabel { Webshell, Benign, Unparseable };

std::string_view to_string(VerdictLabel label);

/// Case-insensitive keyword rule. When both "webshell" and "benign" appear,
/// whichever occurs last wins.
VerdictLabel parse_verdict(std::string_view response_text);

struct Verdict {
  VerdictLabel label = VerdictLabel::Unparseable;
  std::string raw_response;
  std::int64_t latency_ms = 0;
  std::string model_id;
  std::string error;  // set when the request failed
};

struct LlmConfig {
  std::string endpoint_url = "http://127.0.0.1:8000/v1";
  std::string model_id = "gpt-4";
  std::string api_key_env_var = "OPENAI_API_KEY";
  double temperature = 0.0;
  std::size_t max_output_tokens = 256;
  double request_timeout_s = 60.0;
  std::size_t max_retries = 3;
  std::size_t max_concurrent_requests = 4;
  std::chrono::milliseconds retry_initial_delay{500};
  std::chrono::milliseconds retry_max_delay{8000};

  void validate() const;
};

class LlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Connection failures, timeouts, or retryable statuses that outlived the retry budget.
class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// HTTP 401 / 403.
class AuthError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// The endpoint answered, but not with a usable chat-completion body.
class ProtocolError : public LlmError {
 public:
  using LlmError::LlmError;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string model_id() const = 0;

  /// Thread-safe. Throws LlmError subclasses on failure.
  virtual Verdict classify(const PromptBundle& bundle) = 0;
};

/// Chat-completions client: POST {endpoint}/chat/completions with a system and
/// a user message. Retries transport errors, 429 and 5xx with exponential
/// backoff and jitter; never has more than max_concurrent_requests in flight.
class ChatCompletionsClient final : public Classifier {
 public:
  explicit ChatCompletionsClient(LlmConfig config);

  std::string model_id() const override { return config_.model_id; }
  Verdict classify(const PromptBundle& bundle) override;

  const LlmConfig& config() const { return config_; }

 private:
  LlmConfig config_;
  std::counting_semaphore<> slots_;
};

/// Delay before retry number `attempt` (0-based), before jitter.
std::chrono::milliseconds backoff_delay(const LlmConfig& config, std::size_t attempt);

/// Counts call-shaped registry names (`name(`, not `$name`, `->name`,
/// `::name`) in a code fragment.
std::size_t count_registry_calls(std::string_view code, const CriticalFunctionRegistry& registry);

/// Offline classifier: answers "WebShell" when the [Critical Code] slot holds
/// at least `threshold` registry calls, "benign" otherwise.
class CriticalCallCountStub final : public Classifier {
 public:
  explicit CriticalCallCountStub(CriticalFunctionRegistry registry, std::size_t threshold = 3);

  std::string model_id() const override { return "stub-critical-count"; }
  Verdict classify(const PromptBundle& bundle) override;

 private:
  CriticalFunctionRegistry registry_;
  std::size_t threshold_;
};

}  // namespace bfad
