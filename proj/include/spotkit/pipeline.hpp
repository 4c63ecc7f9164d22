#pragma once

#include <string>

#include "spotkit/config.hpp"

namespace spot::pipeline {

// Each command is idempotent given identical inputs and seed: artifacts are
// written atomically together with a manifest of input/output digests, and a
// JSON summary is returned for the caller to print.

std::string cmd_gen_corpus(const config::RunConfig& cfg);
std::string cmd_build_data(const config::RunConfig& cfg);
std::string cmd_train_stage1(const config::RunConfig& cfg);
std::string cmd_train_stage2(const config::RunConfig& cfg);

// Batch inference over the evaluation question set; with a non-empty
// `question` runs that single prompt instead (no artifact written).
std::string cmd_infer(const config::RunConfig& cfg, const std::string& question = "");

std::string cmd_coverage(const config::RunConfig& cfg);
std::string cmd_judge(const config::RunConfig& cfg);
std::string cmd_eval(const config::RunConfig& cfg);

// Pass@1/#L aggregation used by cmd_eval (exposed for tests).
struct EvalSummary {
    double pass_at_1_mean = 0.0;
    double mean_length = 0.0;
    std::vector<double> per_seed_accuracy;
};
EvalSummary eval_run(const model::Backbone& backbone, const std::vector<data::Trace>& dataset,
                     const std::vector<std::uint64_t>& seeds,
                     const control::InsertionPolicy& policy,
                     const model::GenerationParams& generation);

}  // namespace spot::pipeline
