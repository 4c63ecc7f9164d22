#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spotkit/diagnostics.hpp"

namespace spot::diag {

// Exact prompt text sent to the judge endpoint.
const std::string& judge_system_prompt();
const std::string& judge_user_template();

// Fills the user template's bracketed fields.
std::string render_judge_prompt(const std::string& question, const std::string& compressed_trace,
                                const std::string& previous_span, const std::string& next_span,
                                const std::string& final_answer);

// Chat-completion transport. Implementations return the raw reply content
// for one (system, user) exchange; `attempt` distinguishes retries.
class JudgeTransport {
public:
    virtual ~JudgeTransport() = default;
    virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                                 std::size_t request_index, int attempt) = 0;
};

struct JudgeClientConfig {
    std::string endpoint;   // e.g. http://host:port/v1/chat/completions
    std::string model;
    std::string api_key;
    std::string fixture_path;  // replayed replies for hermetic runs
    int max_concurrency = 1;
    int timeout_seconds = 30;
};

class JudgeClient {
public:
    // Live when an endpoint is configured, fixture otherwise. With neither
    // endpoint nor fixture path the construction fails.
    static JudgeClient from_config(const JudgeClientConfig& config);
    static JudgeClient with_transport(std::shared_ptr<JudgeTransport> transport);

    bool fixture_mode() const { return fixture_mode_; }

    // Renders the prompt, queries the transport, and parses the strict JSON
    // reply. Schema violations and transport failures are retried once, then
    // recorded as a judge failure (nullopt).
    std::optional<JudgeVerdict> judge_boundary(const BoundaryPair& pair,
                                               const std::string& problem,
                                               const std::string& compressed_trace,
                                               const std::string& final_answer,
                                               std::size_t request_index) const;

private:
    JudgeClient() = default;
    std::shared_ptr<JudgeTransport> transport_;
    bool fixture_mode_ = false;
};

// Reads JUDGE_ENDPOINT / JUDGE_MODEL / JUDGE_API_KEY over `base`; when all
// three are absent the client stays in fixture mode.
JudgeClientConfig apply_judge_env(JudgeClientConfig base);

}  // namespace spot::diag
