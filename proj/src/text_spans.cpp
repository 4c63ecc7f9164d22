#include "spotkit/text_spans.hpp"

#include "spotkit/common.hpp"

namespace spot::spans {

namespace {

bool is_blank_char(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

}  // namespace

std::string ReasoningRegion::reconstruct() const {
    std::string out = prefix;
    if (explicit_tags) out += kThinkOpen;
    out += body;
    if (explicit_tags) out += kThinkClose;
    out += suffix;
    return out;
}

ReasoningRegion extract_reasoning_region(const std::string& text) {
    const std::string open = kThinkOpen;
    const std::string close = kThinkClose;
    const std::size_t first_open = text.find(open);
    const std::size_t last_close = text.rfind(close);

    ReasoningRegion region;
    if (first_open == std::string::npos || last_close == std::string::npos) {
        region.body = text;
        region.explicit_tags = false;
        return region;
    }
    if (last_close < first_open) {
        fail(ErrorCode::parse, "malformed <think> tags: close tag precedes open tag");
    }
    region.prefix = text.substr(0, first_open);
    region.body = text.substr(first_open + open.size(),
                              last_close - (first_open + open.size()));
    region.suffix = text.substr(last_close + close.size());
    region.explicit_tags = true;
    return region;
}

std::vector<Span> segment_spans(const std::string& body) {
    std::vector<Span> spans;
    const std::size_t n = body.size();
    std::size_t i = 0;
    std::size_t frag_begin = 0;
    while (i <= n) {
        if (i == n) {
            if (frag_begin < n) {
                Span s;
                s.begin = frag_begin;
                s.end = n;
                s.text = body.substr(frag_begin, n - frag_begin);
                if (!trim(s.text).empty()) {
                    s.index = spans.size();
                    spans.push_back(std::move(s));
                }
            }
            break;
        }
        if (is_blank_char(body[i])) {
            // Scan the maximal whitespace run and count newlines.
            std::size_t j = i;
            int newlines = 0;
            while (j < n && is_blank_char(body[j])) {
                if (body[j] == '\n') ++newlines;
                ++j;
            }
            if (newlines >= 2) {
                if (frag_begin < i) {
                    Span s;
                    s.begin = frag_begin;
                    s.end = i;
                    s.text = body.substr(frag_begin, i - frag_begin);
                    if (!trim(s.text).empty()) {
                        s.index = spans.size();
                        spans.push_back(std::move(s));
                    }
                }
                frag_begin = j;
            }
            i = j;
        } else {
            ++i;
        }
    }
    return spans;
}

std::string join_spans(const std::vector<Span>& spans) {
    std::string out;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (i > 0) out += kCanonicalDelimiter;
        out += spans[i].text;
    }
    return out;
}

bool is_pause_marker(const Span& span) { return trim(span.text) == kPauseText; }

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_blank_char(s[b])) ++b;
    while (e > b && is_blank_char(s[e - 1])) --e;
    return s.substr(b, e - b);
}

}  // namespace spot::spans
