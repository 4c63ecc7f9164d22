#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spotkit/backbone.hpp"
#include "spotkit/text_spans.hpp"

namespace spot::control {

enum class PolicyKind { span_interval, token_interval, none };

struct InsertionPolicy {
    PolicyKind kind = PolicyKind::span_interval;
    int n_spans = 3;        // spans between pauses for span_interval
    int token_interval = 32;

    void validate() const;
};

PolicyKind policy_kind_from_string(const std::string& s);
std::string policy_kind_to_string(PolicyKind k);

// Span-interval schedule: 1-based positions after which a pause goes, i.e.
// after spans N, 2N, ... with no insertion after the final span. Token and
// none policies have no span-space plan (empty).
std::vector<std::size_t> plan_insertions(const std::vector<spans::Span>& span_list,
                                         const InsertionPolicy& policy);

struct GenerationStats {
    std::size_t generated_tokens = 0;  // #L: tokens of the full response
    std::size_t explicit_spans = 0;
    std::size_t pauses_inserted = 0;
    bool truncated = false;
};

struct PauseGenerationResult {
    std::string response_text;  // decoded generation, <think> onward
    std::vector<int> tokens;    // generated tokens including forced ones
    GenerationStats stats;
    bool answered_correctly = false;  // filled by callers that check answers
};

// Streams a generation for `question`, forcing <pause> tokens inside the
// reasoning region according to the policy. The prompt ends with <think>, so
// the region is open from the first generated token; insertion stops once
// </think> (or the end) is produced.
PauseGenerationResult generate_with_pauses(const std::string& question,
                                           const model::Backbone& backbone,
                                           const InsertionPolicy& policy,
                                           const model::GenerationParams& params);

// Extracts the final answer ("Answer: ..." tail) from a response; empty when
// absent.
std::string extract_answer(const std::string& response_text);

}  // namespace spot::control
