#include "spotkit/inference.hpp"

#include <algorithm>

#include "spotkit/training.hpp"

namespace spot::control {

void InsertionPolicy::validate() const {
    if (n_spans < 1) fail(ErrorCode::invalid_argument, "policy: n_spans must be >= 1");
    if (token_interval < 1) fail(ErrorCode::invalid_argument, "policy: token_interval must be >= 1");
}

PolicyKind policy_kind_from_string(const std::string& s) {
    if (s == "span") return PolicyKind::span_interval;
    if (s == "token") return PolicyKind::token_interval;
    if (s == "none") return PolicyKind::none;
    fail(ErrorCode::invalid_argument, "unknown policy kind: " + s + " (expected span|token|none)");
}

std::string policy_kind_to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::span_interval: return "span";
        case PolicyKind::token_interval: return "token";
        case PolicyKind::none: return "none";
    }
    return "none";
}

std::vector<std::size_t> plan_insertions(const std::vector<spans::Span>& span_list,
                                         const InsertionPolicy& policy) {
    policy.validate();
    std::vector<std::size_t> positions;
    if (policy.kind != PolicyKind::span_interval) return positions;
    const std::size_t n = static_cast<std::size_t>(policy.n_spans);
    for (std::size_t k = n; k < span_list.size(); k += n) {
        positions.push_back(k);  // after the k-th span, never after the last
    }
    return positions;
}

namespace {

bool whitespace_piece(const std::string& piece) {
    return !piece.empty() &&
           piece.find_first_not_of(" \t\n\r") == std::string::npos;
}

int count_newlines(const std::string& piece) {
    return static_cast<int>(std::count(piece.begin(), piece.end(), '\n'));
}

}  // namespace

PauseGenerationResult generate_with_pauses(const std::string& question,
                                           const model::Backbone& backbone,
                                           const InsertionPolicy& policy,
                                           const model::GenerationParams& params) {
    policy.validate();
    params.validate();
    const model::ToyTokenizer& tk = backbone.tokenizer();
    const int pause = tk.pause_id();
    const int nl = tk.encode("\n").at(0);
    const int think_close = tk.think_close_id();
    const int eos = tk.eos_id();

    std::vector<int> prompt = tk.encode(train::build_prompt_text(question));
    prompt.push_back(tk.think_open_id());

    PauseGenerationResult result;
    Rng rng(params.seed);
    model::DecodeState st = backbone.decode_begin();
    for (std::size_t i = 0; i + 1 < prompt.size(); ++i) backbone.decode_step(st, prompt[i]);
    const Vector* logits = &backbone.decode_step(st, prompt.back());

    bool in_region = true;
    bool span_open = false;          // current span has content
    int run_newlines = 0;            // newlines in the trailing whitespace run
    bool boundary_hit = false;       // a span boundary just completed
    int spans_since_pause = 0;
    int tokens_since_pause = 0;
    bool want_token_insert = false;
    bool last_piece_whitespace = false;

    auto capacity_left = [&]() {
        return backbone.config().max_seq - static_cast<int>(st.tokens.size());
    };
    auto emit_forced = [&](int id) {
        result.tokens.push_back(id);
        logits = &backbone.decode_step(st, id);
    };
    auto track_piece = [&](const std::string& piece) {
        if (whitespace_piece(piece)) {
            run_newlines += count_newlines(piece);
            if (run_newlines >= 2 && span_open) {
                span_open = false;
                ++spans_since_pause;
                boundary_hit = true;
            }
            last_piece_whitespace = true;
        } else {
            run_newlines = 0;
            span_open = true;
            last_piece_whitespace = false;
        }
    };

    while (static_cast<int>(result.tokens.size()) < params.max_tokens) {
        if (capacity_left() <= 0) {
            result.stats.truncated = true;
            break;
        }
        // Span-interval insertion at a completed boundary. The next sampled
        // token decides whether the region actually continues; a close tag
        // right here means the boundary was terminal and no pause goes in.
        if (in_region && policy.kind == PolicyKind::span_interval && boundary_hit) {
            boundary_hit = false;
            if (spans_since_pause >= policy.n_spans && capacity_left() >= 4) {
                const int cand = backbone.sample_token(*logits, params, rng);
                if (cand == think_close || cand == eos) {
                    result.tokens.push_back(cand);
                    if (cand == eos) break;
                    in_region = false;
                    track_piece(tk.piece(cand));
                    logits = &backbone.decode_step(st, cand);
                    continue;
                }
                // Discard the lookahead draw and force the pause marker.
                emit_forced(pause);
                emit_forced(nl);
                emit_forced(nl);
                ++result.stats.pauses_inserted;
                spans_since_pause = 0;
                tokens_since_pause = 0;
                run_newlines = 2;
                span_open = false;
                last_piece_whitespace = true;
                continue;
            }
        }
        // Token-interval insertion, deferred to whitespace.
        if (in_region && policy.kind == PolicyKind::token_interval && want_token_insert &&
            last_piece_whitespace && capacity_left() >= 6) {
            emit_forced(nl);
            emit_forced(nl);
            emit_forced(pause);
            emit_forced(nl);
            emit_forced(nl);
            ++result.stats.pauses_inserted;
            tokens_since_pause = 0;
            want_token_insert = false;
            run_newlines = 2;
            span_open = false;
            last_piece_whitespace = true;
            continue;
        }

        const int next = backbone.sample_token(*logits, params, rng);
        result.tokens.push_back(next);
        if (next == eos) break;
        if (next == think_close) {
            in_region = false;
        } else if (in_region) {
            ++tokens_since_pause;
            if (policy.kind == PolicyKind::token_interval &&
                tokens_since_pause >= policy.token_interval) {
                want_token_insert = true;
            }
        }
        track_piece(tk.piece(next));
        if (static_cast<int>(result.tokens.size()) >= params.max_tokens) {
            result.stats.truncated = true;
            break;
        }
        if (capacity_left() <= 0) {
            result.stats.truncated = true;
            break;
        }
        logits = &backbone.decode_step(st, next);
    }
    if (static_cast<int>(result.tokens.size()) >= params.max_tokens) result.stats.truncated = true;

    result.response_text = spans::kThinkOpen + tk.decode(result.tokens);
    // #L is the tokenizer length of the full response (reasoning plus final
    // answer); the terminal <eos> carries no text. Re-encoding keeps the
    // count well-defined even when raw samples place tokens back to back.
    result.stats.generated_tokens = tk.encode(result.response_text).size();

    const auto region = spans::extract_reasoning_region(result.response_text);
    std::size_t explicit_count = 0;
    for (const auto& s : spans::segment_spans(region.body)) {
        if (!spans::is_pause_marker(s)) ++explicit_count;
    }
    result.stats.explicit_spans = explicit_count;
    return result;
}

std::string extract_answer(const std::string& response_text) {
    const std::string key = "Answer:";
    const std::size_t pos = response_text.rfind(key);
    if (pos == std::string::npos) return "";
    return spans::trim(response_text.substr(pos + key.size()));
}

}  // namespace spot::control
