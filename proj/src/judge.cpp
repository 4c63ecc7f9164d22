#include "spotkit/judge.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace spot::diag {

using nlohmann::json;

const std::string& judge_system_prompt() {
    static const std::string prompt =
        "You are an evaluator of compressed reasoning quality around externally inserted "
        "<pause> markers.\n"
        "Your role is to assess local continuity and pause utilization only.\n"
        "Do not solve the problem. Do not rewrite the reasoning. Do not assume hidden steps "
        "beyond the provided text.\n"
        "Return only a valid JSON object.";
    return prompt;
}

const std::string& judge_user_template() {
    static const std::string tmpl = R"(You will evaluate one compressed reasoning instance.

Scoring rubric (1-5):

1) local_continuity
5: NEXT_SPAN follows smoothly from PREVIOUS_SPAN; variable tracking is consistent; no contradictions.
4: Minor gap, but the intended bridge is clear and recoverable from the provided text.
3: Noticeable gap; at least one important bridge is ambiguous.
2: Major gap; NEXT_SPAN does not follow without substantial missing reasoning.
1: Contradictory, incoherent, or non-sequitur transition.

2) pause_utilization
5: Clear evidence that NEXT_SPAN uses an intermediate conclusion not explicitly stated in PREVIOUS_SPAN (a meaningful "jump" across <pause>).
4: Some evidence of an unstated intermediate conclusion; the jump is plausible from context.
3: Weak/ambiguous evidence; NEXT_SPAN could be derived without relying on an unstated intermediate result.
2: Little evidence of a jump; NEXT_SPAN is mostly a straightforward continuation or minor rewrite.
1: No evidence of utilization; <pause> appears unnecessary (e.g., repetition, filler, or restating the same point).

Constraints:
- Judge strictly from provided text.
- Do not credit unobserved "implicit" steps unless trivially inferable.
- Penalize restart/repetition/filler behavior when it harms coherence.
- Keep rationale concise and specific.

Return ONLY JSON with exactly this schema:
{
  "local_continuity": 1,
  "pause_utilization": 1,
  "rationale": "",
  "missing_step": "",
  "error_type": "none",
  "confidence": 0.0
}

Where:
- rationale: short explanation for assigned scores (<= 80 words).
- missing_step: brief missing bridge if any, else "".
- error_type: one of
  ["none", "minor_gap", "major_gap", "contradiction", "restart", "repetition", "irrelevant", "format_issue", "insufficient_context"].
- confidence: real number in [0,1].

[PROBLEM]
{question}

[COMPRESSED_TRACE]
{compressed_trace}

[PREVIOUS_SPAN]
{step_before}

[NEXT_SPAN]
{step_after}

[FINAL_ANSWER]
{final_answer}
)";
    return tmpl;
}

namespace {

void replace_all(std::string& text, const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
}

}  // namespace

std::string render_judge_prompt(const std::string& question, const std::string& compressed_trace,
                                const std::string& previous_span, const std::string& next_span,
                                const std::string& final_answer) {
    std::string out = judge_user_template();
    replace_all(out, "{question}", question);
    replace_all(out, "{compressed_trace}", compressed_trace);
    replace_all(out, "{step_before}", previous_span);
    replace_all(out, "{step_after}", next_span);
    replace_all(out, "{final_answer}", final_answer);
    return out;
}

namespace {

class FixtureTransport : public JudgeTransport {
public:
    explicit FixtureTransport(const std::string& path) {
        std::ifstream in(path);
        if (!in) fail(ErrorCode::io, "cannot open judge fixture: " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json record = json::parse(line, nullptr, false);
            if (record.is_discarded() || !record.is_object() || !record.contains("reply") ||
                !record["reply"].is_string()) {
                fail(ErrorCode::parse, path + ": fixture line " + std::to_string(line_no) +
                                           " must be {\"reply\": \"...\"}");
            }
            replies_.push_back(record["reply"].get<std::string>());
        }
    }

    std::string complete(const std::string&, const std::string&, std::size_t request_index,
                         int) override {
        if (request_index >= replies_.size()) {
            fail(ErrorCode::invalid_argument,
                 "judge fixture exhausted at request " + std::to_string(request_index));
        }
        // Retries replay the same canned reply.
        return replies_[request_index];
    }

private:
    std::vector<std::string> replies_;
};

class HttpTransport : public JudgeTransport {
public:
    explicit HttpTransport(JudgeClientConfig config) : cfg_(std::move(config)) {
        const std::string& url = cfg_.endpoint;
        const std::size_t scheme = url.find("://");
        if (scheme == std::string::npos) {
            fail(ErrorCode::invalid_argument, "judge endpoint must be a full URL: " + url);
        }
        const std::size_t path_start = url.find('/', scheme + 3);
        if (path_start == std::string::npos) {
            base_ = url;
            path_ = "/";
        } else {
            base_ = url.substr(0, path_start);
            path_ = url.substr(path_start);
        }
    }

    std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                         std::size_t, int) override {
        httplib::Client client(base_);
        client.set_read_timeout(cfg_.timeout_seconds, 0);
        client.set_connection_timeout(cfg_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!cfg_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + cfg_.api_key);
        }
        const json body = {
            {"model", cfg_.model},
            {"temperature", 0},
            {"messages",
             json::array({{{"role", "system"}, {"content", system_prompt}},
                          {{"role", "user"}, {"content", user_prompt}}})},
        };
        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res) {
            fail(ErrorCode::io, "judge request failed: " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            fail(ErrorCode::io, "judge endpoint returned status " + std::to_string(res->status));
        }
        const json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty() ||
            !reply["choices"][0].contains("message") ||
            !reply["choices"][0]["message"].contains("content")) {
            fail(ErrorCode::parse, "judge endpoint reply is not chat-completion JSON");
        }
        return reply["choices"][0]["message"]["content"].get<std::string>();
    }

private:
    JudgeClientConfig cfg_;
    std::string base_;
    std::string path_;
};

}  // namespace

JudgeClient JudgeClient::from_config(const JudgeClientConfig& config) {
    JudgeClient client;
    if (!config.endpoint.empty()) {
        client.transport_ = std::make_shared<HttpTransport>(config);
        client.fixture_mode_ = false;
    } else if (!config.fixture_path.empty()) {
        client.transport_ = std::make_shared<FixtureTransport>(config.fixture_path);
        client.fixture_mode_ = true;
    } else {
        fail(ErrorCode::invalid_argument,
             "judge: no endpoint configured and no fixture path for offline mode");
    }
    return client;
}

JudgeClient JudgeClient::with_transport(std::shared_ptr<JudgeTransport> transport) {
    JudgeClient client;
    client.transport_ = std::move(transport);
    client.fixture_mode_ = true;
    return client;
}

std::optional<JudgeVerdict> JudgeClient::judge_boundary(const BoundaryPair& pair,
                                                        const std::string& problem,
                                                        const std::string& compressed_trace,
                                                        const std::string& final_answer,
                                                        std::size_t request_index) const {
    const std::string user = render_judge_prompt(problem, compressed_trace, pair.previous_span,
                                                 pair.next_span, final_answer);
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            const std::string raw =
                transport_->complete(judge_system_prompt(), user, request_index, attempt);
            return parse_verdict(raw);
        } catch (const Error&) {
            if (attempt == 1) return std::nullopt;
        }
    }
    return std::nullopt;
}

JudgeClientConfig apply_judge_env(JudgeClientConfig base) {
    const char* endpoint = std::getenv("JUDGE_ENDPOINT");
    const char* model = std::getenv("JUDGE_MODEL");
    const char* key = std::getenv("JUDGE_API_KEY");
    if (!endpoint && !model && !key) {
        base.endpoint.clear();  // all absent: fixture mode
        return base;
    }
    if (endpoint) base.endpoint = endpoint;
    if (model) base.model = model;
    if (key) base.api_key = key;
    return base;
}

}  // namespace spot::diag
