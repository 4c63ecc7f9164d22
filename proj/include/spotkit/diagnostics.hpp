#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spotkit/backbone.hpp"
#include "spotkit/common.hpp"
#include "spotkit/frozen_head.hpp"
#include "spotkit/tokenizer.hpp"

namespace spot::diag {

// Unique token ids of a span after removing special tokens and trivial
// formatting tokens (pieces that are entirely whitespace or punctuation).
std::set<int> span_vocab(const std::string& span_text, const model::ToyTokenizer& tokenizer);

// Normalized top-K coverage: |T_K(h) ∩ V(S)| / min(K, |V(S)|).
// Returns nullopt when the filtered span vocabulary is empty (such spans are
// excluded from averages).
std::optional<double> coverage(const Vector& pause_state, const std::string& span_text,
                               const model::ToyTokenizer& tokenizer,
                               const head::HeadWeights& head, int k = 20);

struct BoundaryPair {
    std::string previous_span;
    std::string next_span;
    std::size_t pause_ordinal = 0;
    std::string trace_id;
};

// One pair per <pause> marker that has a non-empty paragraph on both sides;
// markers at the region edges yield no pair.
std::vector<BoundaryPair> extract_boundary_pairs(const std::string& response_text);

struct JudgeVerdict {
    int local_continuity = 0;
    int pause_utilization = 0;
    std::string rationale;
    std::string missing_step;
    std::string error_type;
    double confidence = 0.0;
};

struct JudgeAggregate {
    double mean_local = 0.0;
    double mean_util = 0.0;
    double joint_at_4 = 0.0;
    std::size_t valid = 0;
    std::size_t failures = 0;
};

// Means over valid verdicts plus the fraction with both scores >= 4.
// Judge failures are excluded from the means and counted separately.
JudgeAggregate aggregate_judgments(const std::vector<std::optional<JudgeVerdict>>& verdicts);

// Strict schema validation of a raw judge reply. Throws on violations.
JudgeVerdict parse_verdict(const std::string& raw_json);

}  // namespace spot::diag
