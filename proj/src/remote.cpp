// SPDX-License-Identifier: Apache-2.0
#include "bip/remote.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "bip/builtin_data.hpp"
#include "bip/serialization.hpp"

namespace bip {
namespace {

std::string humanize(std::string id) {
  std::replace(id.begin(), id.end(), '_', ' ');
  return id;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
}

// "http://host:port/prefix" -> ("http://host:port", "/prefix")
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw StructuralError("endpoint must be an absolute URL: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(double timeout) : timeout_(timeout) {}

  HttpResponse post(const std::string& base_url, const std::string& path, const std::string& body) override {
    httplib::Client client(base_url);
    const auto secs = static_cast<time_t>(timeout_);
    const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(path, body, "application/json");
    if (!res) throw TransportError("POST " + base_url + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  double timeout_;
};

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(double timeout_seconds) {
  return std::make_shared<HttplibTransport>(timeout_seconds);
}

std::string action_text(const AgentAction& action) {
  switch (action.kind) {
    case ActionKind::WalkTo: return "walk to the " + humanize(action.target);
    case ActionKind::Open: return "open the " + humanize(action.target);
    case ActionKind::Grab: return "grab the " + humanize(action.target);
    case ActionKind::Stay: return "stay where they are";
  }
  return "";
}

RenderedQuery render_query(const std::string& template_text, const PolicyQuery& query, const WorldModel& world) {
  std::string text;
  std::istringstream in(template_text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] == '#') continue;
    text += line + "\n";
  }
  while (!text.empty() && text.back() == '\n') text.pop_back();

  std::vector<std::string> rooms;
  for (const auto& r : world.rooms()) rooms.push_back(humanize(r));

  std::vector<std::string> visible;
  const auto obs = observe(query.state, world);
  for (const auto& [c, open] : obs.visible_container_states) {
    visible.push_back("the " + humanize(c) + (open ? " (open)" : " (closed)"));
  }
  for (const auto& [item, loc] : obs.visible_placements) {
    visible.push_back("the " + humanize(item) + (world.is_container(loc) ? " in the " : " on the ") + humanize(loc));
  }

  std::vector<std::string> beliefs;
  for (const auto& [item, ib] : query.belief.per_item) {
    std::vector<std::string> locs;
    for (const auto& l : ib.candidates) locs.push_back("the " + humanize(l));
    beliefs.push_back("the " + humanize(item) + " at " + join(locs, " or "));
  }

  replace_all(text, "{{rooms}}", join(rooms, ", "));
  replace_all(text, "{{room}}", humanize(query.state.agent_room));
  replace_all(text, "{{holding}}",
              query.state.agent_holding ? "the " + humanize(*query.state.agent_holding) : std::string("nothing"));
  replace_all(text, "{{visible}}", visible.empty() ? "nothing of note" : join(visible, ", "));
  replace_all(text, "{{belief}}", beliefs.empty() ? "nothing" : join(beliefs, "; "));
  replace_all(text, "{{goal}}", humanize(query.goal));

  RenderedQuery rq{std::move(text), {}};
  for (const auto& a : query.candidates) rq.candidates.push_back(" " + action_text(a));
  return rq;
}

std::vector<double> parse_score_response(const std::string& body, std::size_t n) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("score response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("log_scores") || !j["log_scores"].is_array())
    throw ProtocolError("score response lacks a log_scores array");
  const auto& arr = j["log_scores"];
  if (arr.size() != n)
    throw ProtocolError("score response has " + std::to_string(arr.size()) + " scores for " + std::to_string(n) +
                        " candidates");
  std::vector<double> out;
  for (const auto& v : arr) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) throw ProtocolError("non-numeric log score");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<double> parse_completions_response(const std::string& body, std::size_t context_length, std::size_t n,
                                               bool length_normalize) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("completions response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array())
    throw ProtocolError("completions response lacks choices");
  const auto& choices = j["choices"];
  if (choices.size() != n)
    throw ProtocolError("completions response has " + std::to_string(choices.size()) + " choices for " +
                        std::to_string(n) + " candidates");
  std::vector<double> out(n, 0.0);
  std::vector<bool> filled(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    const auto& choice = choices[c];
    const std::size_t index = choice.contains("index") ? choice["index"].get<std::size_t>() : c;
    if (index >= n || filled[index]) throw ProtocolError("completions choice index out of range or repeated");
    if (!choice.contains("logprobs") || !choice["logprobs"].is_object())
      throw ProtocolError("completions choice lacks logprobs (is echo+logprobs supported?)");
    const auto& lp = choice["logprobs"];
    if (!lp.contains("token_logprobs") || !lp.contains("text_offset"))
      throw ProtocolError("logprobs lacks token_logprobs or text_offset");
    const auto& tl = lp["token_logprobs"];
    const auto& off = lp["text_offset"];
    if (!tl.is_array() || !off.is_array() || tl.size() != off.size())
      throw ProtocolError("token_logprobs and text_offset differ in length");
    double total = 0.0;
    std::size_t tokens = 0;
    for (std::size_t t = 0; t < tl.size(); ++t) {
      if (off[t].get<std::size_t>() < context_length) continue;
      if (!tl[t].is_number()) throw ProtocolError("missing log-probability for a continuation token");
      total += tl[t].get<double>();
      ++tokens;
    }
    if (tokens == 0) throw ProtocolError("no continuation tokens in choice " + std::to_string(index));
    out[index] = length_normalize ? total / static_cast<double>(tokens) : total;
    filled[index] = true;
  }
  return out;
}

RemotePolicy::RemotePolicy(RemoteConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      in_flight_(std::max(1, config_.max_in_flight)) {
  if (config_.endpoint.empty()) throw StructuralError("remote policy needs an endpoint");
  split_url(config_.endpoint);
  if (!transport_) throw StructuralError("remote policy needs a transport");
  template_text_ = config_.template_text.empty() ? std::string(builtin::score_prompt_template()) : config_.template_text;
  template_hash_ = to_hex(fnv1a(template_text_));
}

std::size_t RemotePolicy::cache_size() const {
  std::lock_guard lock(cache_mutex_);
  return cache_.size();
}

std::string RemotePolicy::descriptor() const {
  return "remote{endpoint=" + config_.endpoint + ",template=" + template_hash_ +
         (config_.format == ResponseFormat::Completions ? ",format=completions" : "") +
         (config_.length_normalize ? ",length_normalize" : "") + "}";
}

std::vector<double> RemotePolicy::fetch(const RenderedQuery& rq) const {
  const auto [base, prefix] = split_url(config_.endpoint);
  std::string path;
  std::string body;
  if (config_.format == ResponseFormat::Score) {
    path = prefix + "/score";
    body = json{{"context", rq.context}, {"candidates", rq.candidates}}.dump();
  } else {
    path = prefix + "/completions";
    json prompts = json::array();
    for (const auto& c : rq.candidates) prompts.push_back(rq.context + c);
    json req{{"prompt", prompts}, {"max_tokens", 0}, {"echo", true}, {"logprobs", 0}, {"temperature", 0}};
    if (!config_.model.empty()) req["model"] = config_.model;
    body = req.dump();
  }

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
    HttpResponse res;
    try {
      in_flight_.acquire();
      ++requests_;
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      res = transport_->post(base, path, body);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    if (retryable_status(res.status)) {
      last_error = "HTTP " + std::to_string(res.status) + " from " + config_.endpoint;
      continue;
    }
    if (res.status != 200) throw ProtocolError("HTTP " + std::to_string(res.status) + " from " + config_.endpoint);
    return config_.format == ResponseFormat::Score
               ? parse_score_response(res.body, rq.candidates.size())
               : parse_completions_response(res.body, rq.context.size(), rq.candidates.size(), config_.length_normalize);
  }
  throw TransportError("giving up after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

PolicyOutput RemotePolicy::score(const PolicyQuery& query, const WorldModel& world) const {
  validate_query(query);
  const auto key = template_hash_ + "/" + query_key(query, world);
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return {it->second, std::nullopt};
  }
  const auto scores = fetch(render_query(template_text_, query, world));
  ActionDistribution dist{boltzmann(scores, 1.0)};
  {
    std::lock_guard lock(cache_mutex_);
    cache_[key] = dist;
  }
  return {std::move(dist), std::nullopt};
}

}  // namespace bip
