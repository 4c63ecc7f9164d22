#include <doctest.h>

#include <algorithm>
#include <set>

#include "spotkit/diagnostics.hpp"

using namespace spot;
using namespace spot::diag;

namespace {

head::HeadWeights identity_head(int v) {
    // W = I (on the leading block) so logits equal the hidden state; one
    // coordinate per token makes top-K fully controllable from the state.
    head::HeadWeights h;
    h.W = Matrix::Identity(v, v);
    h.E = Matrix::Identity(v, v);
    return h;
}

Vector state_favoring(const std::vector<int>& ids, int v) {
    Vector s = Vector::Zero(v);
    double boost = 100.0;
    for (int id : ids) {
        s[id] = boost;
        boost -= 1.0;  // keep a strict order among the favoured ids
    }
    return s;
}

}  // namespace

TEST_CASE("span_vocab: dedup, special filtering, formatting filtering") {
    const auto tk = model::ToyTokenizer::with_default_lexicon();
    const auto a = span_vocab("3 3 3", tk);
    CHECK(a == std::set<int>{tk.encode("3")[0]});

    CHECK(span_vocab("<pause>", tk).empty());
    CHECK(span_vocab(" \n.,?", tk).empty());

    const auto b = span_vocab("Tom , apples", tk);
    CHECK(b == std::set<int>{tk.encode("Tom")[0], tk.encode("apples")[0]});
}

TEST_CASE("coverage: closed-form cases against the formula") {
    const auto tk = model::ToyTokenizer::with_default_lexicon();
    const int v = tk.vocab_size();
    const auto h = identity_head(v);

    // Full containment: top-K covers all of V(S), |V(S)| <= K.
    const std::string span = "Tom has 12 apples";  // V(S): Tom, has, 12, apples
    const auto vs = span_vocab(span, tk);
    REQUIRE(vs.size() == 4);
    const Vector full = state_favoring(std::vector<int>(vs.begin(), vs.end()), v);
    CHECK(*coverage(full, span, tk, h, 20) == doctest::Approx(1.0));

    // Disjoint: zero coverage.
    std::vector<int> other;
    for (int id = 0; id < v && other.size() < 20; ++id) {
        if (vs.count(id) == 0 && !tk.is_special(id)) other.push_back(id);
    }
    const Vector disjoint = state_favoring(other, v);
    CHECK(*coverage(disjoint, span, tk, h, 20) == doctest::Approx(0.0));

    // Undefined when the filtered span vocabulary is empty.
    CHECK_FALSE(coverage(full, "<pause> .", tk, h, 20).has_value());
}

TEST_CASE("coverage: brute-force intersection oracle on random sets") {
    const auto tk = model::ToyTokenizer::with_default_lexicon();
    const int v = tk.vocab_size();
    const auto h = identity_head(v);
    Rng rng(404);

    const char* words[] = {"Tom", "Anna", "apples", "coins", "Start", "result",
                           "1",   "2",    "3",      "4",     "5",     "has"};
    for (int trial = 0; trial < 40; ++trial) {
        // Random span from word pool.
        std::string span;
        const int len = 1 + static_cast<int>(rng.below(6));
        for (int i = 0; i < len; ++i) {
            if (i) span += " ";
            span += words[rng.below(12)];
        }
        // Random top-K preference over the vocabulary.
        const int k = 1 + static_cast<int>(rng.below(20));
        std::vector<int> favored;
        std::set<int> seen;
        while (static_cast<int>(favored.size()) < k) {
            const int id = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
            if (seen.insert(id).second) favored.push_back(id);
        }
        const Vector state = state_favoring(favored, v);
        const auto got = coverage(state, span, tk, h, k);
        REQUIRE(got.has_value());

        // Oracle: explicit intersection count over the top-k ids.
        const auto vs = span_vocab(span, tk);
        const auto topk = head::top_k_tokens(state, h, k);
        std::size_t inter = 0;
        for (int id : topk) {
            if (vs.count(id)) ++inter;
        }
        const double expect =
            double(inter) / double(std::min<std::size_t>(static_cast<std::size_t>(k), vs.size()));
        CHECK(*got == doctest::Approx(expect).epsilon(1e-15));
        CHECK(*got >= 0.0);
        CHECK(*got <= 1.0);
    }
}

TEST_CASE("coverage: duplicate tokens in the span are set-semantic") {
    const auto tk = model::ToyTokenizer::with_default_lexicon();
    const int v = tk.vocab_size();
    const auto h = identity_head(v);
    const Vector s = state_favoring({tk.encode("Tom")[0]}, v);
    CHECK(*coverage(s, "Tom", tk, h, 5) == *coverage(s, "Tom Tom Tom", tk, h, 5));
}

TEST_CASE("extract_boundary_pairs: spec examples") {
    auto pairs = extract_boundary_pairs("A\n\n<pause>\n\nB");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].previous_span == "A");
    CHECK(pairs[0].next_span == "B");

    CHECK(extract_boundary_pairs("<pause>\n\nB").empty());
    CHECK(extract_boundary_pairs("A\n\n<pause>").empty());

    pairs = extract_boundary_pairs("P1\n\n<pause>\n\nP2\n\n<pause>\n\nP3");
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].previous_span == "P1");
    CHECK(pairs[0].next_span == "P2");
    CHECK(pairs[0].pause_ordinal == 0);
    CHECK(pairs[1].previous_span == "P2");
    CHECK(pairs[1].next_span == "P3");
    CHECK(pairs[1].pause_ordinal == 1);
}

TEST_CASE("extract_boundary_pairs: think region and adjacent markers") {
    // Pairs come from the reasoning region only; the answer tail is outside.
    const auto pairs =
        extract_boundary_pairs("<think>A\n\n<pause>\n\nB</think>\nAnswer: 3");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].previous_span == "A");
    CHECK(pairs[0].next_span == "B");

    // Adjacent pause markers yield no pair between themselves.
    CHECK(extract_boundary_pairs("A\n\n<pause>\n\n<pause>\n\nB").empty());
}

TEST_CASE("parse_verdict: valid record and violations") {
    const auto v = parse_verdict(
        R"({"local_continuity":5,"pause_utilization":4,"rationale":"ok","missing_step":"",)"
        R"("error_type":"none","confidence":0.9})");
    CHECK(v.local_continuity == 5);
    CHECK(v.pause_utilization == 4);
    CHECK(v.confidence == doctest::Approx(0.9));

    // Score out of range.
    CHECK_THROWS_AS(parse_verdict(R"({"local_continuity":6,"pause_utilization":4,)"
                                  R"("rationale":"","missing_step":"","error_type":"none",)"
                                  R"("confidence":0.5})"),
                    Error);
    // Unknown error type.
    CHECK_THROWS_AS(parse_verdict(R"({"local_continuity":3,"pause_utilization":3,)"
                                  R"("rationale":"","missing_step":"","error_type":"wat",)"
                                  R"("confidence":0.5})"),
                    Error);
    // Not JSON at all.
    CHECK_THROWS_AS(parse_verdict("the model replied in prose"), Error);
    // Confidence outside [0, 1].
    CHECK_THROWS_AS(parse_verdict(R"({"local_continuity":3,"pause_utilization":3,)"
                                  R"("rationale":"","missing_step":"","error_type":"none",)"
                                  R"("confidence":1.5})"),
                    Error);
}

TEST_CASE("aggregate_judgments: means, joint@4, failures") {
    auto verdict = [](int local, int util) {
        JudgeVerdict v;
        v.local_continuity = local;
        v.pause_utilization = util;
        v.error_type = "none";
        return std::optional<JudgeVerdict>(v);
    };

    // [(5,5),(3,3)] -> means (4,4), joint 0.5.
    auto agg = aggregate_judgments({verdict(5, 5), verdict(3, 3)});
    CHECK(agg.mean_local == doctest::Approx(4.0));
    CHECK(agg.mean_util == doctest::Approx(4.0));
    CHECK(agg.joint_at_4 == doctest::Approx(0.5));

    // All (4,4) -> joint 1.
    agg = aggregate_judgments({verdict(4, 4), verdict(4, 4), verdict(4, 4)});
    CHECK(agg.joint_at_4 == doctest::Approx(1.0));

    // [(5,2),(2,5)] -> joint 0 (conjunction required).
    agg = aggregate_judgments({verdict(5, 2), verdict(2, 5)});
    CHECK(agg.joint_at_4 == doctest::Approx(0.0));

    // Failures excluded from means, counted separately.
    agg = aggregate_judgments({verdict(5, 5), std::nullopt, verdict(1, 1)});
    CHECK(agg.valid == 2);
    CHECK(agg.failures == 1);
    CHECK(agg.mean_local == doctest::Approx(3.0));

    CHECK_THROWS_AS(aggregate_judgments({std::nullopt}), Error);
}

TEST_CASE("joint@4 never exceeds the individual threshold fractions") {
    Rng rng(808);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::optional<JudgeVerdict>> verdicts;
        const int n = 1 + static_cast<int>(rng.below(12));
        int local_ge4 = 0;
        int util_ge4 = 0;
        for (int i = 0; i < n; ++i) {
            JudgeVerdict v;
            v.local_continuity = 1 + static_cast<int>(rng.below(5));
            v.pause_utilization = 1 + static_cast<int>(rng.below(5));
            v.error_type = "none";
            if (v.local_continuity >= 4) ++local_ge4;
            if (v.pause_utilization >= 4) ++util_ge4;
            verdicts.emplace_back(v);
        }
        const auto agg = aggregate_judgments(verdicts);
        CHECK(agg.joint_at_4 <= double(local_ge4) / n + 1e-12);
        CHECK(agg.joint_at_4 <= double(util_ge4) / n + 1e-12);
    }
}
