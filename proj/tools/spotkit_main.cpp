// spotkit - command-line driver for the SPOT pipeline.
//
// The tool is a thin argument-parsing shim over the C API in spot.h: it
// builds a context from --config plus flag overrides, invokes one pipeline
// command, and prints the returned JSON summary.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spot.h"

namespace {

struct ContextDeleter {
    void operator()(spot_context* ctx) const { spot_context_free(ctx); }
};
using ContextPtr = std::unique_ptr<spot_context, ContextDeleter>;

struct Override {
    std::string key;
    std::string value_json;
};

int fail_with(const spot_context* ctx, spot_status status) {
    std::fprintf(stderr, "error (%d): %s\n", static_cast<int>(status),
                 spot_context_last_error(ctx));
    return 1;
}

int print_result(spot_status status, spot_context* ctx, char* out) {
    if (status != SPOT_OK) return fail_with(ctx, status);
    if (out) {
        std::printf("%s\n", out);
        spot_string_free(out);
    }
    return 0;
}

std::string quote_json_string(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            default: out += c;
        }
    }
    out += "\"";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spotkit - span-level pause-of-thought pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> raw_overrides;
    app.add_option("--config", config_path, "JSON configuration file")
        ->envname("SPOTKIT_CONFIG");
    app.add_option("--set", raw_overrides,
                   "Override a config entry, e.g. --set stage1.epochs=3 "
                   "(value is parsed as JSON, bare strings allowed)")
        ->take_all();

    auto* gen_corpus = app.add_subcommand("gen-corpus", "Generate the synthetic trace corpus");
    std::string size_flag, corpus_seed_flag;
    gen_corpus->add_option("--size", size_flag, "Number of traces");
    gen_corpus->add_option("--seed", corpus_seed_flag, "Global seed override");

    auto* build_data = app.add_subcommand("build-data", "Build SpanDrop instances from the corpus");
    std::string drop_p_flag;
    build_data->add_option("--drop-probability", drop_p_flag, "Span drop probability");

    auto* train1 = app.add_subcommand("train-stage1", "Pretrain and run OT-alignment training");
    std::string lambda_flag, epochs_flag;
    train1->add_option("--lambda", lambda_flag, "Alignment weight");
    train1->add_option("--epochs", epochs_flag, "Stage-I epochs");

    auto* train2 = app.add_subcommand("train-stage2", "Rejection-sampled fine-tuning");

    auto* infer = app.add_subcommand("infer", "Generate with external <pause> insertion");
    std::string question;
    std::string policy_flag, n_spans_flag, token_interval_flag, infer_seed_flag;
    std::string temperature_flag, top_p_flag, max_tokens_flag;
    infer->add_option("--question", question, "Single ad-hoc question (skips batch mode)");
    infer->add_option("--policy", policy_flag, "Insertion policy: span|token|none");
    infer->add_option("--n-spans", n_spans_flag, "Spans between pauses (span policy)");
    infer->add_option("--token-interval", token_interval_flag, "Tokens between pauses (token policy)");
    infer->add_option("--seed", infer_seed_flag, "Global seed override");
    infer->add_option("--temperature", temperature_flag, "Sampling temperature");
    infer->add_option("--top-p", top_p_flag, "Nucleus sampling mass");
    infer->add_option("--max-tokens", max_tokens_flag, "Maximum generated tokens");

    auto* coverage = app.add_subcommand("coverage", "Frozen-head top-K coverage report");
    auto* judge = app.add_subcommand("judge", "LLM-as-a-judge evaluation of pause boundaries");
    auto* eval = app.add_subcommand("eval", "Pass@1 and length evaluation");

    CLI11_PARSE(app, argc, argv);

    spot_context* raw_ctx = nullptr;
    spot_status status = config_path.empty()
                             ? spot_context_create(nullptr, &raw_ctx)
                             : spot_context_create_from_file(config_path.c_str(), &raw_ctx);
    if (status != SPOT_OK) {
        std::fprintf(stderr, "error: cannot load configuration%s%s\n",
                     config_path.empty() ? "" : " from ", config_path.c_str());
        spot_context_free(raw_ctx);
        return 1;
    }
    ContextPtr ctx(raw_ctx);

    std::vector<Override> overrides;
    for (const auto& kv : raw_overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects key=value, got \"%s\"\n", kv.c_str());
            return 1;
        }
        overrides.push_back({kv.substr(0, eq), kv.substr(eq + 1)});
    }
    auto add_flag = [&](const std::string& key, const std::string& value, bool is_string = false) {
        if (!value.empty()) {
            overrides.push_back({key, is_string ? quote_json_string(value) : value});
        }
    };
    add_flag("seed", corpus_seed_flag);
    add_flag("corpus.size", size_flag);
    add_flag("drop.drop_probability", drop_p_flag);
    add_flag("stage1.lambda", lambda_flag);
    add_flag("stage1.epochs", epochs_flag);
    add_flag("policy.kind", policy_flag, true);
    add_flag("policy.n_spans", n_spans_flag);
    add_flag("policy.token_interval", token_interval_flag);
    add_flag("seed", infer_seed_flag);
    add_flag("generation.temperature", temperature_flag);
    add_flag("generation.top_p", top_p_flag);
    add_flag("generation.max_tokens", max_tokens_flag);

    for (const auto& ov : overrides) {
        status = spot_context_set(ctx.get(), ov.key.c_str(), ov.value_json.c_str());
        if (status != SPOT_OK) {
            // Bare strings are accepted as a convenience for --set key=value.
            const std::string quoted = quote_json_string(ov.value_json);
            if (spot_context_set(ctx.get(), ov.key.c_str(), quoted.c_str()) != SPOT_OK) {
                return fail_with(ctx.get(), status);
            }
        }
    }

    char* out = nullptr;
    spot_status st = SPOT_ERR_INVALID_ARGUMENT;
    if (gen_corpus->parsed()) {
        st = spot_cmd_gen_corpus(ctx.get(), &out);
    } else if (build_data->parsed()) {
        st = spot_cmd_build_data(ctx.get(), &out);
    } else if (train1->parsed()) {
        st = spot_cmd_train_stage1(ctx.get(), &out);
    } else if (train2->parsed()) {
        st = spot_cmd_train_stage2(ctx.get(), &out);
    } else if (infer->parsed()) {
        st = spot_cmd_infer(ctx.get(), question.empty() ? nullptr : question.c_str(), &out);
    } else if (coverage->parsed()) {
        st = spot_cmd_coverage(ctx.get(), &out);
    } else if (judge->parsed()) {
        st = spot_cmd_judge(ctx.get(), &out);
    } else if (eval->parsed()) {
        st = spot_cmd_eval(ctx.get(), &out);
    }
    return print_result(st, ctx.get(), out);
}
