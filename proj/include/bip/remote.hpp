// SPDX-License-Identifier: Apache-2.0
//
// Remote LM scoring client: renders a policy query into the versioned prompt
// template, asks an HTTP endpoint for one log-score per candidate action and
// softmaxes them. Supports the plain /score protocol and the common
// completions-with-logprobs shape (echo + logprobs).
#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include "bip/policy.hpp"

namespace bip {

/// Network-level failure that survived all retries.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The endpoint answered, but not in the expected shape.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// One POST. Implementations throw TransportError when no response arrives.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& base_url, const std::string& path, const std::string& body) = 0;
};

/// cpp-httplib client, one connection per request. http:// only.
std::shared_ptr<HttpTransport> make_http_transport(double timeout_seconds = 30.0);

enum class ResponseFormat { Score, Completions };

struct RemoteConfig {
  /// Base URL, e.g. http://localhost:8000 or http://host:8000/v1.
  std::string endpoint;
  ResponseFormat format = ResponseFormat::Score;
  /// Sent as "model" in completions requests.
  std::string model;
  /// Prompt template text; empty means the builtin score_prompt_v1.
  std::string template_text;
  /// Divide each candidate's summed log-probability by its token count.
  bool length_normalize = false;
  int max_retries = 3;
  int backoff_ms = 200;
  int max_in_flight = 8;
};

struct RenderedQuery {
  std::string context;
  std::vector<std::string> candidates;
};

/// Natural-language form of an action, e.g. "walk to the kitchen".
std::string action_text(const AgentAction& action);

/// Fills the template placeholders from the query; '#' comment lines are
/// dropped. Candidates are rendered with a leading space.
RenderedQuery render_query(const std::string& template_text, const PolicyQuery& query, const WorldModel& world);

/// {"log_scores": [...]} with exactly n finite numbers.
std::vector<double> parse_score_response(const std::string& body, std::size_t n);

/// Completions response with echoed prompts: per choice, sums token_logprobs
/// of tokens whose text_offset is at or beyond context_length.
std::vector<double> parse_completions_response(const std::string& body, std::size_t context_length, std::size_t n,
                                               bool length_normalize);

class RemotePolicy final : public PolicyModel {
 public:
  RemotePolicy(RemoteConfig config, std::shared_ptr<HttpTransport> transport);

  PolicyOutput score(const PolicyQuery& query, const WorldModel& world) const override;
  std::string descriptor() const override;

  /// HTTP requests issued so far (including retries).
  std::uint64_t request_count() const { return requests_.load(); }
  std::size_t cache_size() const;
  const std::string& template_hash() const { return template_hash_; }

 private:
  std::vector<double> fetch(const RenderedQuery& rq) const;

  RemoteConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::string template_text_;
  std::string template_hash_;
  mutable std::atomic<std::uint64_t> requests_{0};
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, ActionDistribution> cache_;
  mutable std::counting_semaphore<> in_flight_;
};

}  // namespace bip
