#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "spotkit/common.hpp"

namespace spot::data {

// A teacher trace: question x, reasoning y (optionally <think>-delimited),
// and a verifiable final answer.
struct Trace {
    std::string id;
    std::string question;
    std::string reasoning;
    std::string answer;
};

struct DropConfig {
    double drop_probability = 0.3;
    int span_state_cap = 256;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Pause ordinal -> char range [begin, end) of the dropped span in the
// reasoning body.
struct PausePairing {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct SpanDropInstance {
    std::string trace_id;
    std::string question;
    std::string reasoning;  // full teacher reasoning y
    std::string answer;
    std::vector<std::size_t> dropped;  // sorted span indices D
    std::string compressed;            // y-tilde with <pause> substitutions
    std::vector<PausePairing> pairings;
};

// Includes each index in [0, span_count) independently with the configured
// probability. Deterministic given (span_count, seed).
std::set<std::size_t> sample_drop_set(std::size_t span_count, const DropConfig& config);

// Replaces each dropped span with the literal <pause> token text, keeping a
// canonical "\n\n" on each side of a pause and the original delimiters
// elsewhere. Out-of-range indices are an invalid-drop-set error.
SpanDropInstance build_spandrop(const Trace& trace, const std::set<std::size_t>& drop_set);

// Identity below the cap; otherwise a strictly increasing uniform sample of
// exactly `cap` indices from [0, n).
std::vector<std::size_t> subsample_span_positions(std::size_t n, std::size_t cap,
                                                  std::uint64_t seed);

// Line-delimited JSON persistence. Malformed lines raise a parse error
// naming the 1-based line number.
std::vector<Trace> load_traces(const std::string& path);
void save_traces(const std::string& path, const std::vector<Trace>& traces);
std::vector<SpanDropInstance> load_instances(const std::string& path);
void save_instances(const std::string& path, const std::vector<SpanDropInstance>& instances);

std::string trace_to_json_line(const Trace& trace);
std::string instance_to_json_line(const SpanDropInstance& instance);

}  // namespace spot::data
