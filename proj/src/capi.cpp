#include "spot.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "spotkit/atomic_io.hpp"
#include "spotkit/config.hpp"
#include "spotkit/pipeline.hpp"
#include "spotkit/sinkhorn.hpp"
#include "spotkit/text_spans.hpp"

using nlohmann::json;

struct spot_context {
    json doc;                  // configuration document (overrides applied here)
    std::string last_error;
};

namespace {

spot_status status_from(const spot::Error& e) {
    switch (e.code()) {
        case spot::ErrorCode::invalid_argument: return SPOT_ERR_INVALID_ARGUMENT;
        case spot::ErrorCode::io: return SPOT_ERR_IO;
        case spot::ErrorCode::parse: return SPOT_ERR_PARSE;
        case spot::ErrorCode::missing_prerequisite: return SPOT_ERR_MISSING_PREREQUISITE;
        case spot::ErrorCode::numeric: return SPOT_ERR_NUMERIC;
        case spot::ErrorCode::internal: return SPOT_ERR_INTERNAL;
    }
    return SPOT_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
spot_status guarded(spot_context* ctx, Fn&& fn) {
    if (!ctx) return SPOT_ERR_INVALID_ARGUMENT;
    try {
        fn();
        ctx->last_error.clear();
        return SPOT_OK;
    } catch (const spot::Error& e) {
        ctx->last_error = e.what();
        return status_from(e);
    } catch (const std::exception& e) {
        ctx->last_error = e.what();
        return SPOT_ERR_INTERNAL;
    } catch (...) {
        ctx->last_error = "unknown error";
        return SPOT_ERR_INTERNAL;
    }
}

spot::config::RunConfig parse_config(const spot_context* ctx) {
    return spot::config::RunConfig::from_json(ctx->doc);
}

template <typename Fn>
spot_status run_command(spot_context* ctx, char** out_json, Fn&& command) {
    if (out_json) *out_json = nullptr;
    return guarded(ctx, [&] {
        const spot::config::RunConfig cfg = parse_config(ctx);
        const std::string summary = command(cfg);
        if (out_json) *out_json = dup_string(summary);
    });
}

}  // namespace

extern "C" {

const char* spot_version(void) { return "0.1.0"; }

spot_status spot_context_create(const char* config_json, spot_context** out_ctx) {
    if (!out_ctx) return SPOT_ERR_INVALID_ARGUMENT;
    *out_ctx = nullptr;
    auto ctx = new spot_context();
    const spot_status st = guarded(ctx, [&] {
        if (!config_json || config_json[0] == '\0') {
            ctx->doc = spot::config::default_config_json();
        } else {
            json doc = json::parse(config_json, nullptr, false);
            if (doc.is_discarded()) {
                spot::fail(spot::ErrorCode::parse, "configuration is not valid JSON");
            }
            ctx->doc = std::move(doc);
        }
        parse_config(ctx);  // validate eagerly
    });
    if (st != SPOT_OK) {
        delete ctx;
        return st;
    }
    *out_ctx = ctx;
    return SPOT_OK;
}

spot_status spot_context_create_from_file(const char* config_path, spot_context** out_ctx) {
    if (!out_ctx || !config_path) return SPOT_ERR_INVALID_ARGUMENT;
    *out_ctx = nullptr;
    auto ctx = new spot_context();
    const spot_status st = guarded(ctx, [&] {
        const std::string text = spot::io::read_file(config_path);
        json doc = json::parse(text, nullptr, false);
        if (doc.is_discarded()) {
            spot::fail(spot::ErrorCode::parse,
                       std::string(config_path) + " is not valid JSON");
        }
        ctx->doc = std::move(doc);
        parse_config(ctx);
    });
    if (st != SPOT_OK) {
        delete ctx;
        return st;
    }
    *out_ctx = ctx;
    return SPOT_OK;
}

void spot_context_free(spot_context* ctx) { delete ctx; }

const char* spot_context_last_error(const spot_context* ctx) {
    return ctx ? ctx->last_error.c_str() : "null context";
}

spot_status spot_context_set(spot_context* ctx, const char* dotted_key, const char* value_json) {
    if (!dotted_key || !value_json) return SPOT_ERR_INVALID_ARGUMENT;
    return guarded(ctx, [&] {
        json value = json::parse(value_json, nullptr, false);
        if (value.is_discarded()) {
            spot::fail(spot::ErrorCode::parse,
                       std::string("override value for ") + dotted_key + " is not valid JSON");
        }
        json backup = ctx->doc;
        json* node = &ctx->doc;
        std::string key(dotted_key);
        std::size_t start = 0;
        while (true) {
            const std::size_t dot = key.find('.', start);
            const std::string part = key.substr(start, dot - start);
            if (part.empty()) {
                spot::fail(spot::ErrorCode::invalid_argument,
                           "override key has an empty segment: " + key);
            }
            if (dot == std::string::npos) {
                (*node)[part] = std::move(value);
                break;
            }
            node = &(*node)[part];
            start = dot + 1;
        }
        try {
            parse_config(ctx);  // re-validate with the override applied
        } catch (...) {
            ctx->doc = std::move(backup);
            throw;
        }
    });
}

spot_status spot_context_config(const spot_context* ctx, char** out_json) {
    if (!out_json) return SPOT_ERR_INVALID_ARGUMENT;
    *out_json = nullptr;
    return guarded(const_cast<spot_context*>(ctx), [&] {
        const spot::config::RunConfig cfg = parse_config(ctx);
        *out_json = dup_string(cfg.to_json().dump(2));
    });
}

spot_status spot_cmd_gen_corpus(spot_context* ctx, char** out_json) {
    return run_command(ctx, out_json, spot::pipeline::cmd_gen_corpus);
}

spot_status spot_cmd_build_data(spot_context* ctx, char** out_json) {
    return run_command(ctx, out_json, spot::pipeline::cmd_build_data);
}

spot_status spot_cmd_train_stage1(spot_context* ctx, char** out_json) {
    return run_command(ctx, out_json, spot::pipeline::cmd_train_stage1);
}

spot_status spot_cmd_train_stage2(spot_context* ctx, char** out_json) {
    return run_command(ctx, out_json, spot::pipeline::cmd_train_stage2);
}

spot_status spot_cmd_infer(spot_context* ctx, const char* question, char** out_json) {
    return run_command(ctx, out_json, [&](const spot::config::RunConfig& cfg) {
        return spot::pipeline::cmd_infer(cfg, question ? question : "");
    });
}

spot_status spot_cmd_coverage(spot_context* ctx, char** out_json) {
    return run_command(ctx, out_json, spot::pipeline::cmd_coverage);
}

spot_status spot_cmd_judge(spot_context* ctx, char** out_json) {
    return run_command(ctx, out_json, spot::pipeline::cmd_judge);
}

spot_status spot_cmd_eval(spot_context* ctx, char** out_json) {
    return run_command(ctx, out_json, spot::pipeline::cmd_eval);
}

spot_status spot_sinkhorn_value(const double* cost, size_t m, size_t n, const double* a,
                                const double* b, double blur, double scaling, int inner_iters,
                                double delta, double* out_value, double* out_epsilon_final,
                                double* out_plan) {
    if (!cost || m == 0 || n == 0 || !out_value) return SPOT_ERR_INVALID_ARGUMENT;
    try {
        spot::ot::TransportProblem problem;
        problem.cost.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        for (size_t i = 0; i < m; ++i) {
            for (size_t j = 0; j < n; ++j) {
                problem.cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    cost[i * n + j];
            }
        }
        if (a) {
            problem.source = Eigen::Map<const spot::Vector>(a, static_cast<Eigen::Index>(m));
        } else {
            problem.source = spot::Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / double(m));
        }
        if (b) {
            problem.target = Eigen::Map<const spot::Vector>(b, static_cast<Eigen::Index>(n));
        } else {
            problem.target = spot::Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / double(n));
        }
        spot::ot::SinkhornParams params;
        params.blur = blur;
        params.scaling = scaling;
        params.inner_iters = inner_iters;
        params.delta = delta;
        const spot::ot::TransportSolution sol = spot::ot::sinkhorn_value(problem, params);
        *out_value = sol.value;
        if (out_epsilon_final) *out_epsilon_final = sol.epsilon_final;
        if (out_plan) {
            for (size_t i = 0; i < m; ++i) {
                for (size_t j = 0; j < n; ++j) {
                    out_plan[i * n + j] =
                        sol.plan(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                }
            }
        }
        return SPOT_OK;
    } catch (const spot::Error& e) {
        return status_from(e);
    } catch (...) {
        return SPOT_ERR_INTERNAL;
    }
}

spot_status spot_segment_spans(const char* text, char** out_json) {
    if (!text || !out_json) return SPOT_ERR_INVALID_ARGUMENT;
    *out_json = nullptr;
    try {
        json arr = json::array();
        for (const auto& s : spot::spans::segment_spans(text)) {
            arr.push_back({{"index", s.index}, {"begin", s.begin}, {"end", s.end}, {"text", s.text}});
        }
        *out_json = dup_string(arr.dump());
        return SPOT_OK;
    } catch (const spot::Error& e) {
        return status_from(e);
    } catch (...) {
        return SPOT_ERR_INTERNAL;
    }
}

void spot_string_free(char* s) { std::free(s); }

}  // extern "C"
