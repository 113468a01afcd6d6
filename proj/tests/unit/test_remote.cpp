#include <doctest.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "bip/builtin_data.hpp"
#include "bip/remote.hpp"
#include "bip/serialization.hpp"
#include "helpers.hpp"

using namespace bip;
using bip::testing::fixture_state;
using bip::testing::fixture_world;

namespace {

class ScriptedTransport final : public HttpTransport {
 public:
  using Handler = std::function<HttpResponse(const std::string&, const std::string&, const std::string&)>;
  explicit ScriptedTransport(Handler h) : handler_(std::move(h)) {}
  HttpResponse post(const std::string& base, const std::string& path, const std::string& body) override {
    ++calls;
    return handler_(base, path, body);
  }
  std::atomic<int> calls{0};

 private:
  Handler handler_;
};

PolicyQuery two_way_query(const WorldModel& world) {
  // bedroom: walk hallway, open wardrobe, grab keys, stay -> 4 candidates
  auto s = transition(fixture_state(world), AgentAction::walk_to("bedroom"), world);
  auto b = update_belief(init_belief(world, world.items()), observe(s, world), world);
  return make_query(s, b, "keys", world);
}

std::string scores_body(const std::vector<double>& v) { return json{{"log_scores", v}}.dump(); }

RemoteConfig fast_config(const std::string& endpoint) {
  RemoteConfig c;
  c.endpoint = endpoint;
  c.backoff_ms = 1;
  return c;
}

}  // namespace

TEST_CASE("score responses are softmaxed") {
  const auto world = fixture_world();
  const auto q = two_way_query(world);
  const auto n = q.candidates.size();
  auto equal = std::make_shared<ScriptedTransport>(
      [&](const std::string&, const std::string&, const std::string&) { return HttpResponse{200, scores_body(std::vector<double>(n, 0.0))}; });
  RemotePolicy p(fast_config("http://localhost:1"), equal);
  for (double x : p.score(q, world).dist.probs) CHECK(x == doctest::Approx(1.0 / static_cast<double>(n)));

  std::vector<double> s(n, -1e9);
  s[0] = std::log(2.0);
  s[1] = 0.0;
  auto ratio = std::make_shared<ScriptedTransport>(
      [&](const std::string&, const std::string&, const std::string&) { return HttpResponse{200, scores_body(s)}; });
  RemotePolicy r(fast_config("http://localhost:1"), ratio);
  const auto d = r.score(q, world).dist.probs;
  CHECK(d[0] == doctest::Approx(2.0 / 3.0));
  CHECK(d[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("second identical call is served from cache") {
  const auto world = fixture_world();
  const auto q = two_way_query(world);
  auto t = std::make_shared<ScriptedTransport>([&](const std::string&, const std::string&, const std::string&) {
    return HttpResponse{200, scores_body(std::vector<double>(q.candidates.size(), 0.0))};
  });
  RemotePolicy p(fast_config("http://localhost:1"), t);
  p.score(q, world);
  const auto before = p.request_count();
  p.score(q, world);
  CHECK(p.request_count() == before);
  CHECK(p.cache_size() == 1);
}

TEST_CASE("transport failures are retried with a bound") {
  const auto world = fixture_world();
  const auto q = two_way_query(world);
  int fails_left = 2;
  auto flaky = std::make_shared<ScriptedTransport>([&](const std::string&, const std::string&, const std::string&) {
    if (fails_left-- > 0) throw TransportError("connection refused");
    return HttpResponse{200, scores_body(std::vector<double>(q.candidates.size(), 0.0))};
  });
  RemotePolicy p(fast_config("http://localhost:1"), flaky);
  CHECK_NOTHROW(p.score(q, world));
  CHECK(flaky->calls == 3);

  auto down = std::make_shared<ScriptedTransport>(
      [&](const std::string&, const std::string&, const std::string&) -> HttpResponse { throw TransportError("down"); });
  RemotePolicy d(fast_config("http://localhost:1"), down);
  CHECK_THROWS_AS(d.score(q, world), TransportError);
  CHECK(down->calls == 4);

  auto busy = std::make_shared<ScriptedTransport>(
      [&](const std::string&, const std::string&, const std::string&) { return HttpResponse{503, "busy"}; });
  RemotePolicy b(fast_config("http://localhost:1"), busy);
  CHECK_THROWS_AS(b.score(q, world), TransportError);
  CHECK(busy->calls == 4);
}

TEST_CASE("malformed responses are protocol errors") {
  const auto world = fixture_world();
  const auto q = two_way_query(world);
  for (const auto& [status, body] : std::vector<std::pair<int, std::string>>{
           {404, "nope"}, {200, "not json"}, {200, "{\"log_scores\": [0]}"}, {200, "{\"scores\": [0,0,0,0]}"},
           {200, "{\"log_scores\": [0, 0, \"x\", 0]}"}}) {
    auto t = std::make_shared<ScriptedTransport>(
        [&](const std::string&, const std::string&, const std::string&) { return HttpResponse{status, body}; });
    RemotePolicy p(fast_config("http://localhost:1"), t);
    CHECK_THROWS_AS(p.score(q, world), ProtocolError);
    CHECK(t->calls == 1);
  }
}

TEST_CASE("requests carry the rendered context and candidates") {
  const auto world = fixture_world();
  const auto q = two_way_query(world);
  std::string seen_base, seen_path;
  json seen_body;
  auto t = std::make_shared<ScriptedTransport>([&](const std::string& base, const std::string& path, const std::string& body) {
    seen_base = base;
    seen_path = path;
    seen_body = json::parse(body);
    return HttpResponse{200, scores_body(std::vector<double>(q.candidates.size(), 0.0))};
  });
  RemotePolicy p(fast_config("http://example.test:8000/v1/"), t);
  p.score(q, world);
  CHECK(seen_base == "http://example.test:8000");
  CHECK(seen_path == "/v1/score");
  const auto rq = render_query(std::string(builtin::score_prompt_template()), q, world);
  CHECK(seen_body.at("context") == rq.context);
  CHECK(seen_body.at("candidates") == rq.candidates);
}

TEST_CASE("prompt rendering") {
  const auto world = fixture_world();
  const auto q = two_way_query(world);
  const auto rq = render_query("# comment\nRooms: {{rooms}}. In {{room}}, holding {{holding}}. Goal {{goal}}.", q, world);
  CHECK(rq.context == "Rooms: bedroom, hallway, kitchen. In bedroom, holding nothing. Goal keys.");
  REQUIRE(rq.candidates.size() == q.candidates.size());
  CHECK(rq.candidates.front() == " walk to the hallway");
  CHECK(rq.candidates.back() == " stay where they are");
  const auto builtin_rq = render_query(std::string(builtin::score_prompt_template()), q, world);
  CHECK(builtin_rq.context.find("{{") == std::string::npos);
  CHECK(builtin_rq.context.find("keys") != std::string::npos);
  CHECK(action_text(AgentAction::open("wine_cask")) == "open the wine cask");
}

TEST_CASE("completions adapter") {
  // Context "ab" (2 chars); tokens at offsets 0,1 belong to the context.
  const std::string body = R"({"choices": [
    {"index": 1, "logprobs": {"token_logprobs": [null, -0.5, -1.0, -2.0], "text_offset": [0, 1, 2, 4]}},
    {"index": 0, "logprobs": {"token_logprobs": [null, -0.5, -0.25], "text_offset": [0, 1, 2]}}]})";
  const auto s = parse_completions_response(body, 2, 2, false);
  CHECK(s == std::vector<double>{-0.25, -3.0});
  const auto n = parse_completions_response(body, 2, 2, true);
  CHECK(n == std::vector<double>{-0.25, -1.5});
  CHECK_THROWS_AS(parse_completions_response(body, 2, 3, false), ProtocolError);
  CHECK_THROWS_AS(parse_completions_response(R"({"choices": [{"index": 0}]})", 2, 1, false), ProtocolError);
  CHECK_THROWS_AS(parse_completions_response("[]", 2, 1, false), ProtocolError);
}

TEST_CASE("live http server: score protocol, completions and in-flight bound") {
  httplib::Server server;
  std::atomic<int> active{0}, peak{0}, hits{0};
  server.Post("/api/score", [&](const httplib::Request& req, httplib::Response& res) {
    const int now = ++active;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    ++hits;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    const auto body = json::parse(req.body);
    std::vector<double> scores;
    for (const auto& c : body.at("candidates")) scores.push_back(-static_cast<double>(c.get<std::string>().size()));
    res.set_content(json{{"log_scores", scores}}.dump(), "application/json");
    --active;
  });
  server.Post("/api/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    json choices = json::array();
    int i = 0;
    for (const auto& prompt : body.at("prompt")) {
      const auto text = prompt.get<std::string>();
      // one token per character, each -0.1
      json lp = json::array(), off = json::array();
      for (std::size_t k = 0; k < text.size(); ++k) {
        lp.push_back(k == 0 ? json(nullptr) : json(-0.1));
        off.push_back(k);
      }
      choices.push_back({{"index", i++}, {"text", text}, {"logprobs", {{"token_logprobs", lp}, {"text_offset", off}}}});
    }
    res.set_content(json{{"choices", choices}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto world = fixture_world();
  const std::string endpoint = "http://127.0.0.1:" + std::to_string(port) + "/api";
  {
    RemoteConfig cfg = fast_config(endpoint);
    cfg.max_in_flight = 2;
    RemotePolicy p(cfg, make_http_transport(5.0));
    // distinct queries: each goal in each of a few states
    std::vector<PolicyQuery> queries;
    const auto h = fixture_state(world);
    const auto b = update_belief(init_belief(world, world.items()), observe(h, world), world);
    for (const auto& s : {h, transition(h, AgentAction::walk_to("kitchen"), world),
                          transition(h, AgentAction::walk_to("bedroom"), world)}) {
      for (const auto& g : world.items()) queries.push_back(make_query(s, b, g, world));
    }
    std::vector<std::thread> pool;
    for (const auto& q : queries) pool.emplace_back([&, q] { p.score(q, world); });
    for (auto& t : pool) t.join();
    CHECK(peak.load() <= 2);
    CHECK(hits.load() == static_cast<int>(queries.size()));
    // shorter action strings score higher: " grab the keys" beats " stay where they are"
    const auto d = p.score(two_way_query(world), world).dist.probs;
    CHECK(d[2] > d.back());
  }
  {
    RemoteConfig cfg = fast_config(endpoint);
    cfg.format = ResponseFormat::Completions;
    cfg.model = "tiny";
    RemotePolicy p(cfg, make_http_transport(5.0));
    const auto q = two_way_query(world);
    const auto d = p.score(q, world).dist.probs;
    double sum = 0.0;
    for (double x : d) sum += x;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  {
    RemotePolicy missing(fast_config("http://127.0.0.1:" + std::to_string(port) + "/nowhere"), make_http_transport(5.0));
    CHECK_THROWS_AS(missing.score(two_way_query(world), world), ProtocolError);
  }
  server.stop();
  th.join();

  RemotePolicy refused(fast_config("http://127.0.0.1:" + std::to_string(port)), make_http_transport(0.5));
  CHECK_THROWS_AS(refused.score(two_way_query(world), world), TransportError);
}
