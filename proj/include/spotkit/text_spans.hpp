#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace spot::spans {

inline constexpr const char* kThinkOpen = "<think>";
inline constexpr const char* kThinkClose = "</think>";
inline constexpr const char* kPauseText = "<pause>";
inline constexpr const char* kCanonicalDelimiter = "\n\n";

// The reasoning segment of a model output. Reconstruction invariant:
// prefix + open-tag (if tagged) + body + close-tag (if tagged) + suffix
// equals the original text byte for byte.
struct ReasoningRegion {
    std::string prefix;
    std::string body;
    std::string suffix;
    bool explicit_tags = false;

    std::string reconstruct() const;
};

// One contiguous reasoning span. char_range is a half-open offset pair
// into the body the span was segmented from.
struct Span {
    std::size_t index = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string text;
};

// Locates the <think>...</think> region: first open tag, last close tag.
// Without both tags the whole input is the body (explicit_tags=false).
// A close tag preceding the open tag is a malformed-tags error.
ReasoningRegion extract_reasoning_region(const std::string& text);

// Splits body into spans on blank-line delimiters. A delimiter is any
// maximal run of spaces/tabs/newlines containing at least two newlines.
// Fragments that trim to empty are dropped. Total function.
std::vector<Span> segment_spans(const std::string& body);

// Joins span texts with the canonical "\n\n" delimiter.
std::string join_spans(const std::vector<Span>& spans);

// True if the trimmed span text is exactly the <pause> marker.
bool is_pause_marker(const Span& span);

std::string trim(const std::string& s);

}  // namespace spot::spans
