#include <doctest.h>

#include "spotkit/corpus.hpp"
#include "spotkit/inference.hpp"
#include "spotkit/text_spans.hpp"
#include "spotkit/training.hpp"

using namespace spot;
using namespace spot::control;

namespace {

model::Backbone tiny_model(std::uint64_t seed = 7) {
    model::BackboneConfig cfg;
    cfg.d = 16;
    cfg.n_heads = 2;
    cfg.n_blocks = 2;
    cfg.d_ff = 32;
    cfg.max_seq = 320;
    cfg.init_seed = seed;
    return model::Backbone(cfg, model::ToyTokenizer::with_default_lexicon());
}

std::vector<spans::Span> fake_spans(std::size_t n) {
    std::vector<spans::Span> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i].index = i;
    return out;
}

}  // namespace

TEST_CASE("plan_insertions: arithmetic schedule") {
    InsertionPolicy p;
    p.kind = PolicyKind::span_interval;

    p.n_spans = 3;
    CHECK(plan_insertions(fake_spans(7), p) == std::vector<std::size_t>{3, 6});
    CHECK(plan_insertions(fake_spans(2), p).empty());
    // No insertion after the final span.
    CHECK(plan_insertions(fake_spans(6), p) == std::vector<std::size_t>{3});

    p.n_spans = 1;
    CHECK(plan_insertions(fake_spans(5), p) == std::vector<std::size_t>{1, 2, 3, 4});

    p.kind = PolicyKind::none;
    CHECK(plan_insertions(fake_spans(9), p).empty());

    p.kind = PolicyKind::span_interval;
    p.n_spans = 0;
    CHECK_THROWS_AS(plan_insertions(fake_spans(3), p), Error);
}

TEST_CASE("policy kind string round trip") {
    CHECK(policy_kind_from_string("span") == PolicyKind::span_interval);
    CHECK(policy_kind_from_string("token") == PolicyKind::token_interval);
    CHECK(policy_kind_from_string("none") == PolicyKind::none);
    CHECK_THROWS_AS(policy_kind_from_string("weird"), Error);
    CHECK(policy_kind_to_string(PolicyKind::token_interval) == "token");
}

TEST_CASE("generate_with_pauses: none policy equals plain generation") {
    const auto m = tiny_model();
    const std::string question = "Tom has 3 apples. How many apples does Tom have now?";
    model::GenerationParams params;
    params.max_tokens = 48;
    params.seed = 1234;

    InsertionPolicy none;
    none.kind = PolicyKind::none;
    const auto driven = generate_with_pauses(question, m, none, params);

    std::vector<int> prompt = m.tokenizer().encode(train::build_prompt_text(question));
    prompt.push_back(m.tokenizer().think_open_id());
    const auto plain = m.generate(prompt, params);
    CHECK(driven.tokens == plain.tokens);
    CHECK(driven.stats.pauses_inserted == 0);
}

TEST_CASE("generate_with_pauses: pauses only inside the reasoning region") {
    const auto m = tiny_model(11);
    model::GenerationParams params;
    params.max_tokens = 200;
    InsertionPolicy p;
    p.kind = PolicyKind::span_interval;
    p.n_spans = 1;

    Rng seeds(5);
    for (int trial = 0; trial < 6; ++trial) {
        params.seed = seeds.raw();
        const auto r = generate_with_pauses("Anna has 5 pears. How many pears does Anna have now?",
                                            m, p, params);
        const auto region = spans::extract_reasoning_region(r.response_text);
        CHECK(region.suffix.find("<pause>") == std::string::npos);
        CHECK(region.prefix.find("<pause>") == std::string::npos);
        // Token accounting: #L equals the tokenizer length of the response.
        CHECK(m.tokenizer().encode(r.response_text).size() == r.stats.generated_tokens);
    }
}

TEST_CASE("generate_with_pauses: schedule invariance on the produced output") {
    const auto m = tiny_model(13);
    model::GenerationParams params;
    params.max_tokens = 220;
    InsertionPolicy p;
    p.kind = PolicyKind::span_interval;

    Rng seeds(17);
    for (int n_spans : {1, 2, 3}) {
        p.n_spans = n_spans;
        for (int trial = 0; trial < 4; ++trial) {
            params.seed = seeds.raw();
            const auto r = generate_with_pauses(
                "Ben has 9 coins. How many coins does Ben have now?", m, p, params);
            if (r.stats.truncated) continue;  // an unfinished tail may cut a schedule slot short
            const auto region = spans::extract_reasoning_region(r.response_text);
            const auto all = spans::segment_spans(region.body);

            // Realized pause positions, counted in explicit spans.
            std::vector<std::size_t> realized;
            std::size_t explicit_count = 0;
            for (const auto& s : all) {
                if (spans::is_pause_marker(s)) {
                    realized.push_back(explicit_count);
                } else {
                    ++explicit_count;
                }
            }
            std::vector<spans::Span> explicit_spans(explicit_count);
            const auto planned = plan_insertions(explicit_spans, p);
            CHECK(realized == planned);
            CHECK(r.stats.pauses_inserted == realized.size());
            CHECK(r.stats.explicit_spans == explicit_count);
        }
    }
}

TEST_CASE("generate_with_pauses: token-interval policy inserts standalone markers") {
    const auto m = tiny_model(19);
    model::GenerationParams params;
    params.max_tokens = 150;
    params.seed = 23;
    InsertionPolicy p;
    p.kind = PolicyKind::token_interval;
    p.token_interval = 10;
    const auto r = generate_with_pauses("Ivy has 4 books. How many books does Ivy have now?", m,
                                        p, params);
    const auto region = spans::extract_reasoning_region(r.response_text);
    std::size_t markers = 0;
    for (const auto& s : spans::segment_spans(region.body)) {
        if (spans::is_pause_marker(s)) ++markers;
    }
    CHECK(markers == r.stats.pauses_inserted);
    CHECK(region.suffix.find("<pause>") == std::string::npos);
}

TEST_CASE("generate_with_pauses: deterministic per (policy, seed)") {
    const auto m = tiny_model(29);
    model::GenerationParams params;
    params.max_tokens = 120;
    params.seed = 31;
    InsertionPolicy p;
    p.kind = PolicyKind::span_interval;
    p.n_spans = 2;
    const std::string q = "Grace has 7 shells. How many shells does Grace have now?";
    const auto r1 = generate_with_pauses(q, m, p, params);
    const auto r2 = generate_with_pauses(q, m, p, params);
    CHECK(r1.tokens == r2.tokens);
    CHECK(r1.response_text == r2.response_text);
    CHECK(r1.stats.generated_tokens == r2.stats.generated_tokens);
}

TEST_CASE("extract_answer") {
    CHECK(extract_answer("<think>x</think>\nAnswer: 42") == "42");
    CHECK(extract_answer("<think>x</think>\nAnswer:   17  ") == "17");
    CHECK(extract_answer("no final line") == "");
    // The last occurrence wins.
    CHECK(extract_answer("Answer: 1 <think>y</think>\nAnswer: 2") == "2");
}
