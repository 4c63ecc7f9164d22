#include "spotkit/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

#include "spotkit/lexicon.hpp"
#include "spotkit/text_spans.hpp"

namespace spot::corpus {

namespace {

using model::lexicon::kItems;
using model::lexicon::kNames;

enum class Op { add_buys, add_finds, sub_gives, sub_loses, mul };

}  // namespace

namespace {

// Reasoning spans draw from several phrasings per operation. The surface
// variety keeps next-token prediction inside a span genuinely uncertain, so
// teacher states carry the span's numbers rather than a fixed template.
std::string step_span(Op op, long a, long b, long r, Rng& rng) {
    const std::string sa = std::to_string(a);
    const std::string sb = std::to_string(b);
    const std::string sr = std::to_string(r);
    const std::uint64_t t = rng.below(5);
    const bool add = op == Op::add_buys || op == Op::add_finds;
    if (add) {
        switch (t) {
            case 0: return sa + " + " + sb + " = " + sr + ".";
            case 1: return sa + " and " + sb + " give " + sr + ".";
            case 2: return "add " + sb + " to " + sa + ": " + sr + ".";
            case 3: return sa + " plus " + sb + " makes " + sr + ".";
            default: return sr + " from " + sa + " + " + sb + ".";
        }
    }
    if (op == Op::mul) {
        switch (t) {
            case 0: return sa + " * " + sb + " = " + sr + ".";
            case 1: return sa + " times " + sb + " makes " + sr + ".";
            case 2: return b == 2 ? "double " + sa + ": " + sr + "."
                                  : sa + " times " + sb + " gives " + sr + ".";
            case 3: return sa + " * " + sb + " gives " + sr + ".";
            default: return sr + " from " + sa + " * " + sb + ".";
        }
    }
    switch (t) {
        case 0: return sa + " - " + sb + " = " + sr + ".";
        case 1: return sa + " minus " + sb + " leaves " + sr + ".";
        case 2: return "take " + sb + " from " + sa + ": " + sr + ".";
        case 3: return sa + " - " + sb + " gives " + sr + ".";
        default: return sr + " from " + sa + " - " + sb + ".";
    }
}

std::string start_span(long x, Rng& rng) {
    const std::string sx = std::to_string(x);
    switch (rng.below(3)) {
        case 0: return "Start with " + sx + ".";
        case 1: return "Begin at " + sx + ".";
        default: return "First take " + sx + ".";
    }
}

std::string final_span(long r, Rng& rng) {
    const std::string sr = std::to_string(r);
    switch (rng.below(3)) {
        case 0: return "So the result is " + sr + ".";
        case 1: return "So we get " + sr + ".";
        default: return "The final count is " + sr + ".";
    }
}

}  // namespace

std::vector<data::Trace> generate_corpus(const CorpusConfig& config) {
    if (config.size < 1) fail(ErrorCode::invalid_argument, "gen-corpus: size must be >= 1");
    if (config.min_steps < 1 || config.max_steps < config.min_steps) {
        fail(ErrorCode::invalid_argument, "gen-corpus: invalid step bounds");
    }
    std::vector<data::Trace> traces;
    traces.reserve(config.size);
    Rng root(config.seed);
    for (std::size_t i = 0; i < config.size; ++i) {
        Rng rng = root.fork(i);
        const std::string name{kNames[rng.below(kNames.size())]};
        const std::string item{kItems[rng.below(kItems.size())]};
        const int steps = config.min_steps +
                          static_cast<int>(rng.below(
                              static_cast<std::uint64_t>(config.max_steps - config.min_steps + 1)));

        // Every intermediate value stays inside the closed number vocabulary.
        const long max_value = model::lexicon::kMaxNumber;
        long value = 2 + static_cast<long>(rng.below(59));  // 2..60
        std::string question = name + " has " + std::to_string(value) + " " + item + ".";
        std::vector<std::string> body_spans;
        body_spans.push_back(start_span(value, rng));

        for (int s = 0; s < steps; ++s) {
            Op op;
            const std::uint64_t roll = rng.below(5);
            if (roll == 0 && value >= 2 && value * 2 <= max_value) {
                op = Op::mul;
            } else if ((roll == 1 || roll == 2) && value >= 2) {
                op = roll == 1 ? Op::sub_gives : Op::sub_loses;
            } else if (value + 2 > max_value) {
                op = Op::sub_gives;
            } else {
                op = (roll % 2 == 0) ? Op::add_buys : Op::add_finds;
            }
            long operand = 0;
            long result = 0;
            switch (op) {
                case Op::add_buys:
                case Op::add_finds: {
                    const long cap = std::min<long>(40, max_value - value);
                    operand = 2 + static_cast<long>(rng.below(
                                      static_cast<std::uint64_t>(cap - 1)));
                    result = value + operand;
                    question += op == Op::add_buys
                                    ? " Then " + name + " buys " + std::to_string(operand) +
                                          " more " + item + "."
                                    : " Then " + name + " finds " + std::to_string(operand) +
                                          " more " + item + ".";
                    body_spans.push_back(step_span(op, value, operand, result, rng));
                    break;
                }
                case Op::sub_gives:
                case Op::sub_loses: {
                    operand = 1 + static_cast<long>(rng.below(
                                      static_cast<std::uint64_t>(std::min<long>(value, 40))));
                    result = value - operand;
                    question += op == Op::sub_gives
                                    ? " Then " + name + " gives away " + std::to_string(operand) +
                                          " " + item + "."
                                    : " Then " + name + " loses " + std::to_string(operand) + " " +
                                          item + ".";
                    body_spans.push_back(step_span(op, value, operand, result, rng));
                    break;
                }
                case Op::mul: {
                    operand = value * 3 <= max_value ? 2 + static_cast<long>(rng.below(2)) : 2;
                    result = value * operand;
                    question += " Then the amount is multiplied by " + std::to_string(operand) + ".";
                    body_spans.push_back(step_span(op, value, operand, result, rng));
                    break;
                }
            }
            value = result;
        }
        question += " How many " + item + " does " + name + " have now?";
        body_spans.push_back(final_span(value, rng));

        std::string body;
        for (std::size_t k = 0; k < body_spans.size(); ++k) {
            if (k > 0) body += spans::kCanonicalDelimiter;
            body += body_spans[k];
        }

        data::Trace t;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "trace-%06zu", i);
        t.id = idbuf;
        t.question = question;
        t.reasoning = std::string(spans::kThinkOpen) + body + spans::kThinkClose;
        t.answer = std::to_string(value);
        traces.push_back(std::move(t));
    }
    return traces;
}

bool answers_match(const std::string& candidate, const std::string& expected) {
    return spans::trim(candidate) == spans::trim(expected);
}

}  // namespace spot::corpus
