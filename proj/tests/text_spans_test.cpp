#include <doctest.h>

#include "spotkit/common.hpp"
#include "spotkit/text_spans.hpp"

using namespace spot;
using spans::extract_reasoning_region;
using spans::segment_spans;

TEST_CASE("extract_reasoning_region: tagged input") {
    const auto r = extract_reasoning_region("<think>A</think>X");
    CHECK(r.body == "A");
    CHECK(r.prefix == "");
    CHECK(r.suffix == "X");
    CHECK(r.explicit_tags);
    CHECK(r.reconstruct() == "<think>A</think>X");
}

TEST_CASE("extract_reasoning_region: untagged and empty input") {
    auto r = extract_reasoning_region("plain text");
    CHECK(r.body == "plain text");
    CHECK_FALSE(r.explicit_tags);
    CHECK(r.reconstruct() == "plain text");

    r = extract_reasoning_region("");
    CHECK(r.body == "");
    CHECK_FALSE(r.explicit_tags);
}

TEST_CASE("extract_reasoning_region: close before open is malformed") {
    CHECK_THROWS_AS(extract_reasoning_region("</think>x<think>"), Error);
}

TEST_CASE("extract_reasoning_region: first open tag, last close tag") {
    const auto r = extract_reasoning_region("p<think>a<think>b</think>c</think>s");
    CHECK(r.prefix == "p");
    CHECK(r.body == "a<think>b</think>c");
    CHECK(r.suffix == "s");
    CHECK(r.reconstruct() == "p<think>a<think>b</think>c</think>s");
}

TEST_CASE("extract_reasoning_region: lone close tag treated as untagged") {
    const auto r = extract_reasoning_region("x</think>y");
    CHECK(r.body == "x</think>y");
    CHECK_FALSE(r.explicit_tags);
}

TEST_CASE("segment_spans: canonical and variant delimiters") {
    auto s = segment_spans("A\n\nB");
    REQUIRE(s.size() == 2);
    CHECK(s[0].text == "A");
    CHECK(s[1].text == "B");

    s = segment_spans("A\n \n\n\nB");
    REQUIRE(s.size() == 2);
    CHECK(s[0].text == "A");
    CHECK(s[1].text == "B");

    CHECK(segment_spans("").empty());

    s = segment_spans("A");
    REQUIRE(s.size() == 1);
    CHECK(s[0].text == "A");
}

TEST_CASE("segment_spans: single newline does not delimit") {
    const auto s = segment_spans("line one\nline two");
    REQUIRE(s.size() == 1);
    CHECK(s[0].text == "line one\nline two");
}

TEST_CASE("segment_spans: leading/trailing delimiters drop empty fragments") {
    const auto s = segment_spans("\n\nA\n\nB\n\n");
    REQUIRE(s.size() == 2);
    CHECK(s[0].text == "A");
    CHECK(s[1].text == "B");
}

TEST_CASE("segment_spans: char ranges reconstruct the body") {
    const std::string body = "  first span\n\nsecond\tspan\n \n\nthird";
    const auto s = segment_spans(body);
    REQUIRE(s.size() == 3);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s[i].index == i);
        CHECK(body.substr(s[i].begin, s[i].end - s[i].begin) == s[i].text);
        if (i > 0) CHECK(s[i - 1].end <= s[i].begin);
    }
    // Concatenation of spans plus the consumed delimiters is the body.
    std::string rebuilt = body.substr(0, s[0].begin);
    for (std::size_t i = 0; i < s.size(); ++i) {
        rebuilt += s[i].text;
        const std::size_t next = i + 1 < s.size() ? s[i + 1].begin : body.size();
        rebuilt += body.substr(s[i].end, next - s[i].end);
    }
    CHECK(rebuilt == body);
}

TEST_CASE("segment_spans: count property under canonical delimiters") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.below(8));
        std::string body;
        for (int i = 0; i <= k; ++i) {
            if (i > 0) body += "\n\n";
            body += "span" + std::to_string(i);
        }
        CHECK(segment_spans(body).size() == static_cast<std::size_t>(k) + 1);
    }
}

TEST_CASE("segment_spans: canonical re-join is idempotent") {
    Rng rng(77);
    const char* pieces[] = {"alpha", "beta gamma", "x\ny", "12 + 7 = 19.", "end."};
    for (int trial = 0; trial < 60; ++trial) {
        std::string body;
        const int n = 1 + static_cast<int>(rng.below(5));
        for (int i = 0; i < n; ++i) {
            if (i > 0) {
                body += (rng.below(2) == 0) ? "\n\n" : "\n \n\n";
            }
            body += pieces[rng.below(5)];
        }
        const auto first = segment_spans(body);
        const auto second = segment_spans(spans::join_spans(first));
        REQUIRE(first.size() == second.size());
        for (std::size_t i = 0; i < first.size(); ++i) {
            CHECK(first[i].text == second[i].text);
        }
    }
}
