#include "spotkit/config.hpp"

#include <cstdio>
#include <set>

#include "spotkit/atomic_io.hpp"

namespace spot::config {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(ErrorCode::parse, "config: " + where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (allowed.count(key) == 0) {
            fail(ErrorCode::parse, "config: unknown key \"" + key + "\" in " + where);
        }
    }
}

template <typename T>
void get_to(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) obj.at(key).get_to(out);
}

void get_policy_kind(const json& obj, const char* key, control::PolicyKind& out) {
    if (obj.contains(key)) out = control::policy_kind_from_string(obj.at(key).get<std::string>());
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
    RunConfig cfg;
    check_keys(doc, "root",
               {"schema_version", "seed", "paths", "corpus", "drop", "backbone", "stage1", "rft",
                "policy", "generation", "eval", "judge"});
    get_to(doc, "schema_version", cfg.schema_version);
    if (cfg.schema_version != 1) {
        fail(ErrorCode::parse, "config: unsupported schema_version " +
                                   std::to_string(cfg.schema_version));
    }
    get_to(doc, "seed", cfg.seed);

    if (doc.contains("paths")) {
        const json& p = doc["paths"];
        check_keys(p, "paths",
                   {"corpus", "instances", "checkpoint_base", "checkpoint_stage1",
                    "checkpoint_stage2", "metrics", "stage1_report", "selections", "responses",
                    "reports_dir"});
        get_to(p, "corpus", cfg.paths.corpus);
        get_to(p, "instances", cfg.paths.instances);
        get_to(p, "checkpoint_base", cfg.paths.checkpoint_base);
        get_to(p, "checkpoint_stage1", cfg.paths.checkpoint_stage1);
        get_to(p, "checkpoint_stage2", cfg.paths.checkpoint_stage2);
        get_to(p, "metrics", cfg.paths.metrics);
        get_to(p, "stage1_report", cfg.paths.stage1_report);
        get_to(p, "selections", cfg.paths.selections);
        get_to(p, "responses", cfg.paths.responses);
        get_to(p, "reports_dir", cfg.paths.reports_dir);
    }
    if (doc.contains("corpus")) {
        const json& c = doc["corpus"];
        check_keys(c, "corpus", {"size", "min_steps", "max_steps"});
        get_to(c, "size", cfg.corpus.size);
        get_to(c, "min_steps", cfg.corpus.min_steps);
        get_to(c, "max_steps", cfg.corpus.max_steps);
    }
    if (doc.contains("drop")) {
        const json& d = doc["drop"];
        check_keys(d, "drop", {"drop_probability", "span_state_cap"});
        get_to(d, "drop_probability", cfg.drop.drop_probability);
        get_to(d, "span_state_cap", cfg.drop.span_state_cap);
    }
    if (doc.contains("backbone")) {
        const json& b = doc["backbone"];
        check_keys(b, "backbone",
                   {"d", "n_heads", "n_blocks", "d_ff", "max_seq", "init_std"});
        get_to(b, "d", cfg.backbone.d);
        get_to(b, "n_heads", cfg.backbone.n_heads);
        get_to(b, "n_blocks", cfg.backbone.n_blocks);
        get_to(b, "d_ff", cfg.backbone.d_ff);
        get_to(b, "max_seq", cfg.backbone.max_seq);
        get_to(b, "init_std", cfg.backbone.init_std);
    }
    if (doc.contains("stage1")) {
        const json& s = doc["stage1"];
        check_keys(s, "stage1",
                   {"lambda", "epochs", "pretrain_epochs", "learning_rate",
                    "pretrain_learning_rate", "batch_size", "normalize", "optimizer",
                    "sinkhorn"});
        get_to(s, "lambda", cfg.stage1.lambda);
        get_to(s, "epochs", cfg.stage1.epochs);
        get_to(s, "pretrain_epochs", cfg.stage1.pretrain_epochs);
        get_to(s, "learning_rate", cfg.stage1.learning_rate);
        get_to(s, "pretrain_learning_rate", cfg.stage1.pretrain_learning_rate);
        get_to(s, "batch_size", cfg.stage1.batch_size);
        get_to(s, "normalize", cfg.stage1.normalize);
        if (s.contains("optimizer")) {
            cfg.stage1.optimizer = train::optimizer_from_string(s["optimizer"].get<std::string>());
        }
        if (s.contains("sinkhorn")) {
            const json& k = s["sinkhorn"];
            check_keys(k, "stage1.sinkhorn", {"blur", "scaling", "inner_iters", "delta"});
            get_to(k, "blur", cfg.stage1.sinkhorn.blur);
            get_to(k, "scaling", cfg.stage1.sinkhorn.scaling);
            get_to(k, "inner_iters", cfg.stage1.sinkhorn.inner_iters);
            get_to(k, "delta", cfg.stage1.sinkhorn.delta);
        }
    }
    cfg.stage1.span_state_cap = cfg.drop.span_state_cap;
    if (doc.contains("rft")) {
        const json& r = doc["rft"];
        check_keys(r, "rft",
                   {"span_intervals", "token_interval", "max_questions", "epochs",
                    "learning_rate", "batch_size", "optimizer"});
        get_to(r, "span_intervals", cfg.rft.span_intervals);
        get_to(r, "token_interval", cfg.rft.token_interval);
        get_to(r, "max_questions", cfg.rft.max_questions);
        get_to(r, "epochs", cfg.rft.epochs);
        get_to(r, "learning_rate", cfg.rft.learning_rate);
        get_to(r, "batch_size", cfg.rft.batch_size);
        if (r.contains("optimizer")) {
            cfg.rft.optimizer = train::optimizer_from_string(r["optimizer"].get<std::string>());
        }
    }
    if (doc.contains("policy")) {
        const json& p = doc["policy"];
        check_keys(p, "policy", {"kind", "n_spans", "token_interval"});
        get_policy_kind(p, "kind", cfg.policy.kind);
        get_to(p, "n_spans", cfg.policy.n_spans);
        get_to(p, "token_interval", cfg.policy.token_interval);
    }
    if (doc.contains("generation")) {
        const json& g = doc["generation"];
        check_keys(g, "generation",
                   {"temperature", "top_p", "max_tokens", "greedy", "suppress_pause"});
        get_to(g, "temperature", cfg.generation.temperature);
        get_to(g, "top_p", cfg.generation.top_p);
        get_to(g, "max_tokens", cfg.generation.max_tokens);
        get_to(g, "greedy", cfg.generation.greedy);
        get_to(g, "suppress_pause", cfg.generation.suppress_pause);
    }
    if (doc.contains("eval")) {
        const json& e = doc["eval"];
        check_keys(e, "eval", {"num_questions", "num_seeds", "question_seed"});
        get_to(e, "num_questions", cfg.eval.num_questions);
        get_to(e, "num_seeds", cfg.eval.num_seeds);
        get_to(e, "question_seed", cfg.eval.question_seed);
    }
    if (doc.contains("judge")) {
        const json& j = doc["judge"];
        check_keys(j, "judge",
                   {"fixture_path", "max_concurrency", "max_boundaries", "timeout_seconds",
                    "model"});
        get_to(j, "fixture_path", cfg.judge.fixture_path);
        get_to(j, "max_concurrency", cfg.judge.max_concurrency);
        get_to(j, "max_boundaries", cfg.judge.max_boundaries);
        get_to(j, "timeout_seconds", cfg.judge.timeout_seconds);
        get_to(j, "model", cfg.judge.model);
    }

    // Seeds for nested components derive from the global seed.
    cfg.corpus.seed = Rng(cfg.seed).fork(1).raw();
    cfg.drop.rng_seed = Rng(cfg.seed).fork(2).raw();
    cfg.backbone.init_seed = Rng(cfg.seed).fork(3).raw();
    cfg.stage1.seed = Rng(cfg.seed).fork(4).raw();
    cfg.rft.seed = Rng(cfg.seed).fork(5).raw();
    cfg.generation.seed = Rng(cfg.seed).fork(6).raw();
    cfg.rft.generation = cfg.generation;

    cfg.drop.validate();
    cfg.stage1.validate();
    cfg.policy.validate();
    cfg.generation.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    const std::string text = io::read_file(path);
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) fail(ErrorCode::parse, "config: " + path + " is not valid JSON");
    return from_json(doc);
}

json RunConfig::to_json() const {
    return json{
        {"schema_version", schema_version},
        {"seed", seed},
        {"paths",
         {{"corpus", paths.corpus},
          {"instances", paths.instances},
          {"checkpoint_base", paths.checkpoint_base},
          {"checkpoint_stage1", paths.checkpoint_stage1},
          {"checkpoint_stage2", paths.checkpoint_stage2},
          {"metrics", paths.metrics},
          {"stage1_report", paths.stage1_report},
          {"selections", paths.selections},
          {"responses", paths.responses},
          {"reports_dir", paths.reports_dir}}},
        {"corpus", {{"size", corpus.size}, {"min_steps", corpus.min_steps}, {"max_steps", corpus.max_steps}}},
        {"drop",
         {{"drop_probability", drop.drop_probability}, {"span_state_cap", drop.span_state_cap}}},
        {"backbone",
         {{"d", backbone.d},
          {"n_heads", backbone.n_heads},
          {"n_blocks", backbone.n_blocks},
          {"d_ff", backbone.d_ff},
          {"max_seq", backbone.max_seq},
          {"init_std", backbone.init_std}}},
        {"stage1",
         {{"lambda", stage1.lambda},
          {"epochs", stage1.epochs},
          {"pretrain_epochs", stage1.pretrain_epochs},
          {"learning_rate", stage1.learning_rate},
          {"pretrain_learning_rate", stage1.pretrain_learning_rate},
          {"batch_size", stage1.batch_size},
          {"normalize", stage1.normalize},
          {"optimizer", train::optimizer_to_string(stage1.optimizer)},
          {"sinkhorn",
           {{"blur", stage1.sinkhorn.blur},
            {"scaling", stage1.sinkhorn.scaling},
            {"inner_iters", stage1.sinkhorn.inner_iters},
            {"delta", stage1.sinkhorn.delta}}}}},
        {"rft",
         {{"span_intervals", rft.span_intervals},
          {"token_interval", rft.token_interval},
          {"max_questions", rft.max_questions},
          {"epochs", rft.epochs},
          {"learning_rate", rft.learning_rate},
          {"batch_size", rft.batch_size},
          {"optimizer", train::optimizer_to_string(rft.optimizer)}}},
        {"policy",
         {{"kind", control::policy_kind_to_string(policy.kind)},
          {"n_spans", policy.n_spans},
          {"token_interval", policy.token_interval}}},
        {"generation",
         {{"temperature", generation.temperature},
          {"top_p", generation.top_p},
          {"max_tokens", generation.max_tokens},
          {"greedy", generation.greedy},
          {"suppress_pause", generation.suppress_pause}}},
        {"eval",
         {{"num_questions", eval.num_questions},
          {"num_seeds", eval.num_seeds},
          {"question_seed", eval.question_seed}}},
        {"judge",
         {{"fixture_path", judge.fixture_path},
          {"max_concurrency", judge.max_concurrency},
          {"max_boundaries", judge.max_boundaries},
          {"timeout_seconds", judge.timeout_seconds},
          {"model", judge.model}}},
    };
}

std::string RunConfig::digest() const {
    const std::uint64_t h = fnv1a64(to_json().dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json default_config_json() { return RunConfig{}.to_json(); }

}  // namespace spot::config
