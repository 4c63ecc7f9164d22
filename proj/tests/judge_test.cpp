#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

// Eigen (via the spotkit headers) must precede httplib: resolv.h, pulled in
// by httplib, defines a `_res` macro that collides with Eigen internals.
#include "spotkit/atomic_io.hpp"
#include "spotkit/judge.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

using namespace spot;
using namespace spot::diag;

namespace {

std::string data_path(const std::string& name) {
    return std::string(SPOT_TEST_DATA_DIR) + "/" + name;
}

BoundaryPair sample_pair() {
    BoundaryPair p;
    p.previous_span = "Since the first train departs at 30 minutes, the second arrives later.";
    p.next_span = "The fourth train arrives 20 minutes after the third train leaves.";
    p.trace_id = "t1";
    return p;
}

}  // namespace

TEST_CASE("judge prompts match the golden files byte for byte") {
    CHECK(judge_system_prompt() == io::read_file(data_path("judge_system_prompt.golden.txt")));
    CHECK(judge_user_template() == io::read_file(data_path("judge_user_template.golden.txt")));
}

TEST_CASE("render_judge_prompt: fills every bracketed field") {
    const std::string rendered =
        render_judge_prompt("Q?", "TRACE", "PREV", "NEXT", "42");
    CHECK(rendered.find("[PROBLEM]\nQ?") != std::string::npos);
    CHECK(rendered.find("[COMPRESSED_TRACE]\nTRACE") != std::string::npos);
    CHECK(rendered.find("[PREVIOUS_SPAN]\nPREV") != std::string::npos);
    CHECK(rendered.find("[NEXT_SPAN]\nNEXT") != std::string::npos);
    CHECK(rendered.find("[FINAL_ANSWER]\n42") != std::string::npos);
    CHECK(rendered.find("{question}") == std::string::npos);
    CHECK(rendered.find("{compressed_trace}") == std::string::npos);
    CHECK(rendered.find("{step_before}") == std::string::npos);
    CHECK(rendered.find("{step_after}") == std::string::npos);
    CHECK(rendered.find("{final_answer}") == std::string::npos);

    // Everything outside the placeholders is the template, byte for byte.
    std::string expected = judge_user_template();
    auto sub = [&](const std::string& key, const std::string& value) {
        const auto pos = expected.find(key);
        REQUIRE(pos != std::string::npos);
        expected.replace(pos, key.size(), value);
    };
    sub("{question}", "Q?");
    sub("{compressed_trace}", "TRACE");
    sub("{step_before}", "PREV");
    sub("{step_after}", "NEXT");
    sub("{final_answer}", "42");
    CHECK(rendered == expected);
}

TEST_CASE("fixture transport: paper examples parse; violations become failures") {
    JudgeClientConfig cfg;
    cfg.fixture_path = data_path("judge_fixture_small.jsonl");
    const auto client = JudgeClient::from_config(cfg);
    CHECK(client.fixture_mode());

    // Reply 0: the positive boundary example (5, 5, confidence 0.9).
    auto v = client.judge_boundary(sample_pair(), "question", "trace", "145", 0);
    REQUIRE(v.has_value());
    CHECK(v->local_continuity == 5);
    CHECK(v->pause_utilization == 5);
    CHECK(v->confidence == doctest::Approx(0.9));
    CHECK(v->error_type == "none");
    CHECK(!v->missing_step.empty());

    // Reply 1: score 6 violates the schema; the retry replays the same
    // canned reply, so the boundary records a judge failure.
    v = client.judge_boundary(sample_pair(), "q", "t", "2", 1);
    CHECK_FALSE(v.has_value());

    // Reply 2: the negative example (utilization 1, continuity 5, 0.90).
    v = client.judge_boundary(sample_pair(), "q", "t", "2", 2);
    REQUIRE(v.has_value());
    CHECK(v->local_continuity == 5);
    CHECK(v->pause_utilization == 1);
    CHECK(v->confidence == doctest::Approx(0.90));

    // Reply 3: prose instead of JSON.
    v = client.judge_boundary(sample_pair(), "q", "t", "2", 3);
    CHECK_FALSE(v.has_value());

    // Exhausted fixture is a hard failure signal (nullopt after retry).
    v = client.judge_boundary(sample_pair(), "q", "t", "2", 4);
    CHECK_FALSE(v.has_value());
}

TEST_CASE("fixture aggregate over the 20-boundary file matches hand arithmetic") {
    JudgeClientConfig cfg;
    cfg.fixture_path = data_path("judge_fixture_20.jsonl");
    const auto client = JudgeClient::from_config(cfg);
    std::vector<std::optional<JudgeVerdict>> verdicts;
    for (std::size_t i = 0; i < 20; ++i) {
        verdicts.push_back(client.judge_boundary(sample_pair(), "q", "t", "a", i));
    }
    const auto agg = aggregate_judgments(verdicts);
    CHECK(agg.valid == 20);
    CHECK(agg.failures == 0);
    CHECK(agg.mean_local == 4.0);
    CHECK(agg.mean_util == 4.0);
    CHECK(agg.joint_at_4 == 0.6);
}

TEST_CASE("live transport: round trip against an in-process endpoint") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    std::string seen_system;
    std::string seen_user;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        seen_system = body["messages"][0]["content"];
        seen_user = body["messages"][1]["content"];
        const nlohmann::json verdict = {
            {"local_continuity", 4}, {"pause_utilization", 5},   {"rationale", "jump"},
            {"missing_step", ""},    {"error_type", "minor_gap"}, {"confidence", 0.7},
        };
        const nlohmann::json reply = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", verdict.dump()}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    while (!server.is_running()) std::this_thread::yield();

    JudgeClientConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model = "test-judge";
    cfg.api_key = "sk-test";
    const auto client = JudgeClient::from_config(cfg);
    CHECK_FALSE(client.fixture_mode());

    const auto v = client.judge_boundary(sample_pair(), "the problem", "the trace", "9", 0);
    server.stop();
    server_thread.join();

    REQUIRE(v.has_value());
    CHECK(v->local_continuity == 4);
    CHECK(v->pause_utilization == 5);
    CHECK(v->error_type == "minor_gap");
    CHECK(hits == 1);
    CHECK(seen_auth == "Bearer sk-test");
    CHECK(seen_system == judge_system_prompt());
    CHECK(seen_user.find("[PROBLEM]\nthe problem") != std::string::npos);
    CHECK(seen_user.find("[FINAL_ANSWER]\n9") != std::string::npos);
}

TEST_CASE("live transport: transport failure after retry records judge failure") {
    JudgeClientConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";  // nothing listens here
    cfg.model = "x";
    cfg.timeout_seconds = 1;
    const auto client = JudgeClient::from_config(cfg);
    const auto v = client.judge_boundary(sample_pair(), "q", "t", "a", 0);
    CHECK_FALSE(v.has_value());
}

TEST_CASE("apply_judge_env: all-absent forces fixture mode") {
    // The test environment must not carry judge variables.
    REQUIRE(std::getenv("JUDGE_ENDPOINT") == nullptr);
    REQUIRE(std::getenv("JUDGE_MODEL") == nullptr);
    REQUIRE(std::getenv("JUDGE_API_KEY") == nullptr);
    JudgeClientConfig base;
    base.endpoint = "http://should-be-cleared.example/api";
    base.fixture_path = "fixture.jsonl";
    const auto resolved = apply_judge_env(base);
    CHECK(resolved.endpoint.empty());
    CHECK(resolved.fixture_path == "fixture.jsonl");

    ::setenv("JUDGE_ENDPOINT", "http://live.example/v1/chat/completions", 1);
    const auto live = apply_judge_env(base);
    CHECK(live.endpoint == "http://live.example/v1/chat/completions");
    ::unsetenv("JUDGE_ENDPOINT");
}
