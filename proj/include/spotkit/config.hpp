#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "spotkit/backbone.hpp"
#include "spotkit/corpus.hpp"
#include "spotkit/inference.hpp"
#include "spotkit/judge.hpp"
#include "spotkit/spandrop.hpp"
#include "spotkit/training.hpp"

namespace spot::config {

struct Paths {
    std::string corpus = "artifacts/corpus.jsonl";
    std::string instances = "artifacts/instances.jsonl";
    std::string checkpoint_base = "artifacts/base.ckpt";
    std::string checkpoint_stage1 = "artifacts/stage1.ckpt";
    std::string checkpoint_stage2 = "artifacts/stage2.ckpt";
    std::string metrics = "artifacts/stage1_metrics.csv";
    std::string stage1_report = "artifacts/stage1_report.json";
    std::string selections = "artifacts/selections.jsonl";
    std::string responses = "artifacts/responses.jsonl";
    std::string reports_dir = "artifacts/reports";
};

struct EvalConfig {
    std::size_t num_questions = 100;
    int num_seeds = 3;
    std::uint64_t question_seed = 777;
};

struct JudgeRunConfig {
    std::string fixture_path;
    int max_concurrency = 1;
    std::size_t max_boundaries = 0;  // 0 = all
    int timeout_seconds = 30;
    std::string model = "judge-model";
};

// One JSON document drives every command; unknown keys are rejected.
struct RunConfig {
    int schema_version = 1;
    std::uint64_t seed = 42;
    Paths paths;
    corpus::CorpusConfig corpus;
    data::DropConfig drop;
    model::BackboneConfig backbone;
    train::StageOneConfig stage1;
    train::RftConfig rft;
    control::InsertionPolicy policy;
    model::GenerationParams generation;
    EvalConfig eval;
    JudgeRunConfig judge;

    static RunConfig from_json(const nlohmann::json& doc);
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;

    // Stable digest of the effective configuration.
    std::string digest() const;
};

nlohmann::json default_config_json();

}  // namespace spot::config
