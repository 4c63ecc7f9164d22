#include "spotkit/spandrop.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "spotkit/atomic_io.hpp"
#include "spotkit/text_spans.hpp"

namespace spot::data {

using nlohmann::json;

void DropConfig::validate() const {
    if (drop_probability < 0.0 || drop_probability > 1.0) {
        fail(ErrorCode::invalid_argument, "drop_probability must lie in [0, 1]");
    }
    if (span_state_cap < 1) {
        fail(ErrorCode::invalid_argument, "span_state_cap must be >= 1");
    }
}

std::set<std::size_t> sample_drop_set(std::size_t span_count, const DropConfig& config) {
    config.validate();
    if (span_count == 0) {
        fail(ErrorCode::invalid_argument, "sample_drop_set: span_count must be >= 1");
    }
    Rng rng(config.rng_seed);
    std::set<std::size_t> drop;
    for (std::size_t i = 0; i < span_count; ++i) {
        if (rng.uniform() < config.drop_probability) drop.insert(i);
    }
    return drop;
}

SpanDropInstance build_spandrop(const Trace& trace, const std::set<std::size_t>& drop_set) {
    const auto region = spans::extract_reasoning_region(trace.reasoning);
    const auto span_list = spans::segment_spans(region.body);
    for (std::size_t idx : drop_set) {
        if (idx >= span_list.size()) {
            fail(ErrorCode::invalid_argument,
                 "invalid drop set: span index " + std::to_string(idx) +
                     " out of range (spans: " + std::to_string(span_list.size()) + ")");
        }
    }

    SpanDropInstance inst;
    inst.trace_id = trace.id;
    inst.question = trace.question;
    inst.reasoning = trace.reasoning;
    inst.answer = trace.answer;
    inst.dropped.assign(drop_set.begin(), drop_set.end());

    // Rebuild the body piece by piece. Original inter-span delimiters are
    // kept when both neighbours survive; around a pause the delimiter is
    // canonicalized so the compressed text stays segmentable.
    std::string body;
    if (!span_list.empty()) {
        body += region.body.substr(0, span_list.front().begin);
    } else {
        body = region.body;
    }
    for (std::size_t i = 0; i < span_list.size(); ++i) {
        if (i > 0) {
            const bool prev_dropped = drop_set.count(i - 1) > 0;
            const bool cur_dropped = drop_set.count(i) > 0;
            if (prev_dropped || cur_dropped) {
                body += spans::kCanonicalDelimiter;
            } else {
                body += region.body.substr(span_list[i - 1].end,
                                           span_list[i].begin - span_list[i - 1].end);
            }
        }
        if (drop_set.count(i) > 0) {
            body += spans::kPauseText;
            inst.pairings.push_back({span_list[i].begin, span_list[i].end});
        } else {
            body += span_list[i].text;
        }
    }
    if (!span_list.empty()) {
        body += region.body.substr(span_list.back().end);
    }

    spans::ReasoningRegion compressed_region = region;
    compressed_region.body = body;
    inst.compressed = compressed_region.reconstruct();
    return inst;
}

std::vector<std::size_t> subsample_span_positions(std::size_t n, std::size_t cap,
                                                  std::uint64_t seed) {
    if (n == 0 || cap == 0) {
        fail(ErrorCode::invalid_argument, "subsample_span_positions: n and cap must be >= 1");
    }
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    if (n <= cap) return all;

    // Partial Fisher-Yates: the first `cap` slots end up a uniform sample
    // without replacement; sorting restores the original order.
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(all[i], all[j]);
    }
    all.resize(cap);
    std::sort(all.begin(), all.end());
    return all;
}

namespace {

json parse_line(const std::string& line, std::size_t line_no, const std::string& path) {
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
        fail(ErrorCode::parse,
             path + ": malformed JSON on line " + std::to_string(line_no));
    }
    return record;
}

std::string require_string(const json& record, const char* key, std::size_t line_no,
                           const std::string& path) {
    if (!record.contains(key) || !record[key].is_string()) {
        fail(ErrorCode::parse, path + ": line " + std::to_string(line_no) +
                                   " missing string field \"" + key + "\"");
    }
    return record[key].get<std::string>();
}

}  // namespace

std::string trace_to_json_line(const Trace& trace) {
    json record = {{"id", trace.id},
                   {"question", trace.question},
                   {"reasoning", trace.reasoning},
                   {"answer", trace.answer}};
    return record.dump();
}

std::string instance_to_json_line(const SpanDropInstance& inst) {
    json pairings = json::array();
    for (const auto& p : inst.pairings) {
        pairings.push_back({p.begin, p.end});
    }
    json record = {{"id", inst.trace_id},
                   {"question", inst.question},
                   {"reasoning", inst.reasoning},
                   {"answer", inst.answer},
                   {"dropped", inst.dropped},
                   {"compressed", inst.compressed},
                   {"pairings", pairings}};
    return record.dump();
}

std::vector<Trace> load_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open trace file: " + path);
    std::vector<Trace> traces;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json record = parse_line(line, line_no, path);
        Trace t;
        t.id = require_string(record, "id", line_no, path);
        t.question = require_string(record, "question", line_no, path);
        t.reasoning = require_string(record, "reasoning", line_no, path);
        t.answer = require_string(record, "answer", line_no, path);
        if (t.answer.empty()) {
            fail(ErrorCode::parse,
                 path + ": line " + std::to_string(line_no) + " has empty answer");
        }
        traces.push_back(std::move(t));
    }
    return traces;
}

void save_traces(const std::string& path, const std::vector<Trace>& traces) {
    std::string payload;
    for (const auto& t : traces) {
        payload += trace_to_json_line(t);
        payload += '\n';
    }
    io::write_file_atomic(path, payload);
}

std::vector<SpanDropInstance> load_instances(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open instance file: " + path);
    std::vector<SpanDropInstance> instances;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json record = parse_line(line, line_no, path);
        SpanDropInstance inst;
        inst.trace_id = require_string(record, "id", line_no, path);
        inst.question = require_string(record, "question", line_no, path);
        inst.reasoning = require_string(record, "reasoning", line_no, path);
        inst.answer = require_string(record, "answer", line_no, path);
        inst.compressed = require_string(record, "compressed", line_no, path);
        if (!record.contains("dropped") || !record["dropped"].is_array() ||
            !record.contains("pairings") || !record["pairings"].is_array()) {
            fail(ErrorCode::parse, path + ": line " + std::to_string(line_no) +
                                       " missing dropped/pairings arrays");
        }
        for (const auto& v : record["dropped"]) {
            inst.dropped.push_back(v.get<std::size_t>());
        }
        for (const auto& v : record["pairings"]) {
            if (!v.is_array() || v.size() != 2) {
                fail(ErrorCode::parse, path + ": line " + std::to_string(line_no) +
                                           " has a malformed pairing");
            }
            inst.pairings.push_back({v[0].get<std::size_t>(), v[1].get<std::size_t>()});
        }
        instances.push_back(std::move(inst));
    }
    return instances;
}

void save_instances(const std::string& path, const std::vector<SpanDropInstance>& instances) {
    std::string payload;
    for (const auto& inst : instances) {
        payload += instance_to_json_line(inst);
        payload += '\n';
    }
    io::write_file_atomic(path, payload);
}

}  // namespace spot::data
