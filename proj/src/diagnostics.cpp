#include "spotkit/diagnostics.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "spotkit/text_spans.hpp"

namespace spot::diag {

using nlohmann::json;

namespace {

bool is_formatting_piece(const std::string& piece) {
    for (char c : piece) {
        const auto uc = static_cast<unsigned char>(c);
        if (!std::isspace(uc) && !std::ispunct(uc)) return false;
    }
    return true;
}

}  // namespace

std::set<int> span_vocab(const std::string& span_text, const model::ToyTokenizer& tokenizer) {
    std::set<int> vocab;
    for (int id : tokenizer.encode(span_text)) {
        if (tokenizer.is_special(id)) continue;
        if (is_formatting_piece(tokenizer.piece(id))) continue;
        vocab.insert(id);
    }
    return vocab;
}

std::optional<double> coverage(const Vector& pause_state, const std::string& span_text,
                               const model::ToyTokenizer& tokenizer,
                               const head::HeadWeights& head, int k) {
    const std::set<int> vs = span_vocab(span_text, tokenizer);
    if (vs.empty()) return std::nullopt;
    const std::vector<int> top = head::top_k_tokens(pause_state, head, k);
    std::size_t overlap = 0;
    for (int id : top) {
        if (vs.count(id) > 0) ++overlap;
    }
    const double denom = static_cast<double>(std::min<std::size_t>(
        static_cast<std::size_t>(k), vs.size()));
    return static_cast<double>(overlap) / denom;
}

std::vector<BoundaryPair> extract_boundary_pairs(const std::string& response_text) {
    const auto region = spans::extract_reasoning_region(response_text);
    const auto span_list = spans::segment_spans(region.body);
    std::vector<BoundaryPair> pairs;
    std::size_t ordinal = 0;
    for (std::size_t i = 0; i < span_list.size(); ++i) {
        if (!spans::is_pause_marker(span_list[i])) continue;
        const std::size_t this_ordinal = ordinal++;
        if (i == 0 || i + 1 >= span_list.size()) continue;
        if (spans::is_pause_marker(span_list[i - 1]) || spans::is_pause_marker(span_list[i + 1])) {
            continue;
        }
        BoundaryPair p;
        p.previous_span = span_list[i - 1].text;
        p.next_span = span_list[i + 1].text;
        p.pause_ordinal = this_ordinal;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

JudgeVerdict parse_verdict(const std::string& raw_json) {
    json v = json::parse(raw_json, nullptr, false);
    if (v.is_discarded() || !v.is_object()) {
        fail(ErrorCode::parse, "judge reply is not a JSON object");
    }
    static const std::set<std::string> kErrorTypes = {
        "none",       "minor_gap",  "major_gap",    "contradiction",       "restart",
        "repetition", "irrelevant", "format_issue", "insufficient_context"};
    JudgeVerdict out;
    auto require_int = [&](const char* key) {
        if (!v.contains(key) || !v[key].is_number_integer()) {
            fail(ErrorCode::parse, std::string("judge reply missing integer field ") + key);
        }
        return v[key].get<int>();
    };
    out.local_continuity = require_int("local_continuity");
    out.pause_utilization = require_int("pause_utilization");
    if (out.local_continuity < 1 || out.local_continuity > 5 ||
        out.pause_utilization < 1 || out.pause_utilization > 5) {
        fail(ErrorCode::parse, "judge scores must lie in 1..5");
    }
    if (!v.contains("rationale") || !v["rationale"].is_string() ||
        !v.contains("missing_step") || !v["missing_step"].is_string()) {
        fail(ErrorCode::parse, "judge reply missing rationale/missing_step strings");
    }
    out.rationale = v["rationale"].get<std::string>();
    out.missing_step = v["missing_step"].get<std::string>();
    if (!v.contains("error_type") || !v["error_type"].is_string()) {
        fail(ErrorCode::parse, "judge reply missing error_type");
    }
    out.error_type = v["error_type"].get<std::string>();
    if (kErrorTypes.count(out.error_type) == 0) {
        fail(ErrorCode::parse, "judge error_type outside the closed list: " + out.error_type);
    }
    if (!v.contains("confidence") || !v["confidence"].is_number()) {
        fail(ErrorCode::parse, "judge reply missing numeric confidence");
    }
    out.confidence = v["confidence"].get<double>();
    if (out.confidence < 0.0 || out.confidence > 1.0) {
        fail(ErrorCode::parse, "judge confidence must lie in [0, 1]");
    }
    return out;
}

JudgeAggregate aggregate_judgments(const std::vector<std::optional<JudgeVerdict>>& verdicts) {
    JudgeAggregate agg;
    double local_sum = 0.0;
    double util_sum = 0.0;
    std::size_t joint = 0;
    for (const auto& v : verdicts) {
        if (!v) {
            ++agg.failures;
            continue;
        }
        ++agg.valid;
        local_sum += v->local_continuity;
        util_sum += v->pause_utilization;
        if (v->local_continuity >= 4 && v->pause_utilization >= 4) ++joint;
    }
    if (agg.valid == 0) {
        fail(ErrorCode::invalid_argument, "aggregate_judgments: no valid verdicts");
    }
    agg.mean_local = local_sum / static_cast<double>(agg.valid);
    agg.mean_util = util_sum / static_cast<double>(agg.valid);
    agg.joint_at_4 = static_cast<double>(joint) / static_cast<double>(agg.valid);
    return agg;
}

}  // namespace spot::diag
