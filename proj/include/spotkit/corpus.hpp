#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spotkit/spandrop.hpp"

namespace spot::corpus {

struct CorpusConfig {
    std::size_t size = 100;
    int min_steps = 3;
    int max_steps = 6;
    std::uint64_t seed = 0;
};

// Chained add/subtract/multiply word problems with <think>-formatted
// multi-span solutions and exactly checkable answers. Deterministic per seed.
std::vector<data::Trace> generate_corpus(const CorpusConfig& config);

// Exact-match answer check on the canonical answer string after trimming.
bool answers_match(const std::string& candidate, const std::string& expected);

}  // namespace spot::corpus
