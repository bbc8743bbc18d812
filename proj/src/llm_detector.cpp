#include "bfad/llm_detector.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_util.hpp"

namespace bfad {
namespace {

constexpr std::string_view kCriticalHeader = "[Critical Code]\n";
constexpr std::string_view kSourceHeader = "\n\n[Source Code]\n";

bool is_ident_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

double jitter_factor() {
  thread_local std::mt19937 rng(std::random_device{}());
  std::uniform_real_distribution<double> dist(0.75, 1.0);
  return dist(rng);
}

std::optional<std::chrono::milliseconds> retry_after(const httplib::Result& res) {
  if (!res || !res->has_header("Retry-After")) return std::nullopt;
  const std::string value = res->get_header_value("Retry-After");
  char* end = nullptr;
  double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000.0));
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

std::string next_request_id() {
  static std::atomic<std::uint64_t> counter{0};
  return "bfad-" + std::to_string(counter.fetch_add(1) + 1);
}

}  // namespace

std::string render_demonstration(const Demonstration& demo) {
  std::string out = demo.code;
  if (!out.empty() && out.back() != '\n') out += '\n';
  out += demo.label == Label::Webshell ? "Verdict: WebShell" : "Verdict: benign";
  return out;
}

PromptBundle build_prompt(const ExtractedView& view, const std::optional<Demonstration>& demonstration,
                          std::string_view global_snippets, const TokenEstimator& estimator) {
  if (view.rendered_text.empty() && global_snippets.empty()) {
    throw std::invalid_argument("nothing to analyze");
  }
  std::string source = view.backfill_text;
  if (!global_snippets.empty()) {
    if (!source.empty()) source += kOmissionMarker;
    source += global_snippets;
  }

  PromptBundle bundle;
  bundle.system_text = std::string(kSystemPrompt);
  std::string& u = bundle.user_text;
  u.reserve(kUserInstruction.size() + view.critical_text.size() + source.size() + 128);
  u += kUserInstruction;
  u += "\n\n";
  u += kCriticalHeader;
  u += view.critical_text;
  u += kSourceHeader;
  u += source;
  u += "\n\n[Examples]\n";
  u += demonstration ? render_demonstration(*demonstration) : std::string(kNoExamples);
  u += "\n\nOutput:";
  bundle.estimated_tokens = estimator(bundle.system_text) + estimator(bundle.user_text);
  return bundle;
}

std::string_view critical_code_section(std::string_view user_text) {
  auto begin = user_text.find(kCriticalHeader);
  if (begin == std::string_view::npos) return {};
  begin += kCriticalHeader.size();
  auto end = user_text.find(kSourceHeader, begin);
  if (end == std::string_view::npos) end = user_text.size();
  return user_text.substr(begin, end - begin);
}

std::string_view to_string(VerdictLabel label) {
  switch (label) {
    case VerdictLabel::Webshell: return "webshell";
    case VerdictLabel::Benign: return "benign";
    case VerdictLabel::Unparseable: return "unparseable";
  }
  return "unparseable";
}

VerdictLabel parse_verdict(std::string_view response_text) {
  const std::string lowered = to_lower_ascii(response_text);
  const auto w = lowered.rfind("webshell");
  const auto b = lowered.rfind("benign");
  const bool has_w = w != std::string::npos;
  const bool has_b = b != std::string::npos;
  if (has_w && has_b) return w > b ? VerdictLabel::Webshell : VerdictLabel::Benign;
  if (has_w) return VerdictLabel::Webshell;
  if (has_b) return VerdictLabel::Benign;
  return VerdictLabel::Unparseable;
}

void LlmConfig::validate() const {
  if (endpoint_url.empty()) throw std::invalid_argument("llm endpoint_url is empty");
  detail::split_endpoint(endpoint_url);
  if (model_id.empty()) throw std::invalid_argument("llm model_id is empty");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_output_tokens == 0) throw std::invalid_argument("max_output_tokens must be positive");
  if (!(request_timeout_s > 0.0)) throw std::invalid_argument("request_timeout_s must be positive");
  if (max_concurrent_requests == 0) throw std::invalid_argument("max_concurrent_requests must be positive");
}

std::chrono::milliseconds backoff_delay(const LlmConfig& config, std::size_t attempt) {
  auto delay = config.retry_initial_delay;
  for (std::size_t i = 0; i < attempt && delay < config.retry_max_delay; ++i) delay *= 2;
  return std::min(delay, config.retry_max_delay);
}

ChatCompletionsClient::ChatCompletionsClient(LlmConfig config)
    : config_(std::move(config)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_concurrent_requests))) {
  config_.validate();
}

Verdict ChatCompletionsClient::classify(const PromptBundle& bundle) {
  const auto parts = detail::split_endpoint(config_.endpoint_url);
  const std::string path = parts.path_prefix + "/chat/completions";
  const nlohmann::json body = {
      {"model", config_.model_id},
      {"temperature", config_.temperature},
      {"max_tokens", config_.max_output_tokens},
      {"messages",
       {{{"role", "system"}, {"content", bundle.system_text}}, {{"role", "user"}, {"content", bundle.user_text}}}},
  };
  const std::string payload = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  const std::string request_id = next_request_id();

  httplib::Headers headers{{"X-Request-Id", request_id}};
  if (auto key = detail::env_or_empty(config_.api_key_env_var); !key.empty()) {
    headers.emplace("Authorization", "Bearer " + key);
  }
  const auto timeout = std::chrono::duration<double>(config_.request_timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);

  const auto started = std::chrono::steady_clock::now();
  std::string last_failure;
  for (std::size_t attempt = 0;; ++attempt) {
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      SlotGuard slot(slots_);
      httplib::Client client(parts.scheme_host_port);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      res = client.Post(path, headers, payload, "application/json");
    }

    std::optional<std::chrono::milliseconds> server_delay;
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
    } else if (res->status == 429 || res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      server_delay = retry_after(res);
    } else if (res->status != 200) {
      throw ProtocolError("unexpected HTTP status " + std::to_string(res->status));
    } else {
      Verdict verdict;
      verdict.model_id = config_.model_id;
      try {
        auto j = nlohmann::json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw ProtocolError("response message content is not a string");
        verdict.raw_response = content.get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed chat-completion response: ") + e.what());
      }
      verdict.label = parse_verdict(verdict.raw_response);
      verdict.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - started)
                               .count();
      return verdict;
    }

    if (attempt >= config_.max_retries) {
      throw TransportError(last_failure + " after " + std::to_string(attempt + 1) + " attempt(s) [" + request_id +
                           "]");
    }
    auto delay = std::chrono::duration_cast<std::chrono::milliseconds>(backoff_delay(config_, attempt) *
                                                                       jitter_factor());
    if (server_delay) delay = std::min(std::max(delay, *server_delay), config_.retry_max_delay);
    std::this_thread::sleep_for(delay);
  }
}

std::size_t count_registry_calls(std::string_view code, const CriticalFunctionRegistry& registry) {
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < code.size()) {
    if (!is_ident_char(code[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < code.size() && is_ident_char(code[j])) ++j;
    const bool variable = i > 0 && code[i - 1] == '$';
    const bool member = i >= 2 && ((code[i - 2] == '-' && code[i - 1] == '>') || (code[i - 2] == ':' && code[i - 1] == ':'));
    if (!variable && !member && registry.lookup(code.substr(i, j - i))) {
      std::size_t k = j;
      while (k < code.size() && std::isspace(static_cast<unsigned char>(code[k]))) ++k;
      if (k < code.size() && code[k] == '(') ++count;
    }
    i = j;
  }
  return count;
}

CriticalCallCountStub::CriticalCallCountStub(CriticalFunctionRegistry registry, std::size_t threshold)
    : registry_(std::move(registry)), threshold_(threshold) {}

Verdict CriticalCallCountStub::classify(const PromptBundle& bundle) {
  const std::size_t calls = count_registry_calls(critical_code_section(bundle.user_text), registry_);
  Verdict verdict;
  verdict.model_id = model_id();
  verdict.raw_response = calls >= threshold_ ? "Verdict: WebShell" : "Verdict: benign";
  verdict.label = parse_verdict(verdict.raw_response);
  return verdict;
}

}  // namespace bfad
