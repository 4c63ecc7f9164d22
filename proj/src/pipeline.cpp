#include "spotkit/pipeline.hpp"

#include <algorithm>
#include <filesystem>

#include "spotkit/atomic_io.hpp"
#include "spotkit/text_spans.hpp"

namespace spot::pipeline {

using nlohmann::json;

namespace {

void require_artifact(const std::string& path, const std::string& producer) {
    if (!io::file_exists(path)) {
        fail(ErrorCode::missing_prerequisite,
             "missing artifact " + path + " (produce it with `" + producer + "`)");
    }
}

// Manifest: traces an artifact back to its exact inputs and configuration.
void write_manifest(const config::RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    json in = json::object();
    for (const auto& p : inputs) in[p] = io::file_digest(p);
    json out = json::object();
    for (const auto& p : outputs) out[p] = io::file_digest(p);
    const json manifest = {{"command", command},
                           {"config_digest", cfg.digest()},
                           {"inputs", in},
                           {"outputs", out}};
    io::write_file_atomic(outputs.front() + ".manifest.json", manifest.dump(2) + "\n");
}

std::string report_path(const config::RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.paths.reports_dir) / name).string();
}

model::Backbone load_model(const std::string& path, const std::string& producer) {
    require_artifact(path, producer);
    return model::Backbone::load_checkpoint(path);
}

// Prefers the most-trained checkpoint available.
model::Backbone load_inference_model(const config::RunConfig& cfg) {
    if (io::file_exists(cfg.paths.checkpoint_stage2)) {
        return model::Backbone::load_checkpoint(cfg.paths.checkpoint_stage2);
    }
    if (io::file_exists(cfg.paths.checkpoint_stage1)) {
        return model::Backbone::load_checkpoint(cfg.paths.checkpoint_stage1);
    }
    require_artifact(cfg.paths.checkpoint_stage1, "spotkit train-stage1");
    fail(ErrorCode::missing_prerequisite, "no checkpoint available");
}

std::vector<data::Trace> eval_questions(const config::RunConfig& cfg) {
    corpus::CorpusConfig cc = cfg.corpus;
    cc.size = cfg.eval.num_questions;
    cc.seed = cfg.eval.question_seed;
    return corpus::generate_corpus(cc);
}

json stats_to_json(const control::GenerationStats& s) {
    return {{"generated_tokens", s.generated_tokens},
            {"explicit_spans", s.explicit_spans},
            {"pauses_inserted", s.pauses_inserted},
            {"truncated", s.truncated}};
}

}  // namespace

std::string cmd_gen_corpus(const config::RunConfig& cfg) {
    const auto traces = corpus::generate_corpus(cfg.corpus);
    data::save_traces(cfg.paths.corpus, traces);
    write_manifest(cfg, "gen-corpus", {}, {cfg.paths.corpus});
    const json summary = {{"command", "gen-corpus"},
                          {"traces", traces.size()},
                          {"path", cfg.paths.corpus}};
    return summary.dump(2);
}

std::string cmd_build_data(const config::RunConfig& cfg) {
    require_artifact(cfg.paths.corpus, "spotkit gen-corpus");
    const auto traces = data::load_traces(cfg.paths.corpus);
    std::vector<data::SpanDropInstance> instances;
    instances.reserve(traces.size());
    std::size_t dropped_total = 0;
    for (const auto& trace : traces) {
        const auto region = spans::extract_reasoning_region(trace.reasoning);
        const auto span_list = spans::segment_spans(region.body);
        if (span_list.empty()) {
            fail(ErrorCode::parse, "trace " + trace.id + " has no reasoning spans");
        }
        data::DropConfig per_trace = cfg.drop;
        per_trace.rng_seed = Rng(cfg.drop.rng_seed).fork(fnv1a64(trace.id)).raw();
        const auto drop_set = data::sample_drop_set(span_list.size(), per_trace);
        dropped_total += drop_set.size();
        instances.push_back(data::build_spandrop(trace, drop_set));
    }
    data::save_instances(cfg.paths.instances, instances);
    write_manifest(cfg, "build-data", {cfg.paths.corpus}, {cfg.paths.instances});
    const json summary = {{"command", "build-data"},
                          {"instances", instances.size()},
                          {"dropped_spans", dropped_total},
                          {"path", cfg.paths.instances}};
    return summary.dump(2);
}

std::string cmd_train_stage1(const config::RunConfig& cfg) {
    require_artifact(cfg.paths.instances, "spotkit build-data");
    const auto instances = data::load_instances(cfg.paths.instances);
    if (instances.empty()) fail(ErrorCode::invalid_argument, "no training instances");

    model::Backbone base(cfg.backbone, model::ToyTokenizer::with_default_lexicon());
    train::pretrain(base, instances, cfg.stage1);
    base.save_checkpoint(cfg.paths.checkpoint_base);

    const model::Backbone teacher = model::clone_frozen_teacher(base);
    model::Backbone student = base;
    const train::StageOneResult result =
        train::stage1_train(student, teacher, instances, cfg.stage1);
    student.save_checkpoint(cfg.paths.checkpoint_stage1);

    std::string csv = "step,L_CE,L_align,coverage,epsilon_final\n";
    char line[160];
    for (const auto& m : result.metrics) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", m.step, m.ce, m.align,
                      m.coverage, m.epsilon_final);
        csv += line;
    }
    io::write_file_atomic(cfg.paths.metrics, csv);

    // Per-epoch alignment means for the trend diagnostics.
    const int steps_per_epoch =
        cfg.stage1.epochs > 0 ? static_cast<int>(result.metrics.size()) / cfg.stage1.epochs : 0;
    auto epoch_mean = [&](int epoch) {
        double sum = 0.0;
        int n = 0;
        for (const auto& m : result.metrics) {
            if (steps_per_epoch > 0 && m.step / steps_per_epoch == epoch) {
                sum += m.align;
                ++n;
            }
        }
        return n > 0 ? sum / n : 0.0;
    };
    const json report = {
        {"command", "train-stage1"},
        {"steps", result.metrics.size()},
        {"baseline_coverage", result.baseline_coverage},
        {"final_coverage", result.final_coverage},
        {"first_epoch_align_mean", epoch_mean(0)},
        {"final_epoch_align_mean", cfg.stage1.epochs > 0 ? epoch_mean(cfg.stage1.epochs - 1) : 0.0},
    };
    io::write_file_atomic(cfg.paths.stage1_report, report.dump(2) + "\n");
    write_manifest(cfg, "train-stage1", {cfg.paths.instances},
                   {cfg.paths.checkpoint_stage1, cfg.paths.checkpoint_base, cfg.paths.metrics,
                    cfg.paths.stage1_report});
    return report.dump(2);
}

std::string cmd_train_stage2(const config::RunConfig& cfg) {
    require_artifact(cfg.paths.checkpoint_stage1, "spotkit train-stage1");
    require_artifact(cfg.paths.corpus, "spotkit gen-corpus");
    model::Backbone student = model::Backbone::load_checkpoint(cfg.paths.checkpoint_stage1);
    const auto traces = data::load_traces(cfg.paths.corpus);
    const model::ToyTokenizer& tk = student.tokenizer();

    std::size_t limit = traces.size();
    if (cfg.rft.max_questions > 0) {
        limit = std::min<std::size_t>(limit, static_cast<std::size_t>(cfg.rft.max_questions));
    }

    std::vector<train::Stage2Target> targets;
    std::string selections;
    Rng seed_rng(cfg.rft.seed);
    std::size_t skipped = 0;
    for (std::size_t qi = 0; qi < limit; ++qi) {
        const data::Trace& trace = traces[qi];
        model::GenerationParams gen = cfg.rft.generation;
        gen.seed = seed_rng.fork(qi).raw();

        control::InsertionPolicy none;
        none.kind = control::PolicyKind::none;
        const auto reference = control::generate_with_pauses(trace.question, student, none, gen);

        std::vector<train::RftCandidate> candidates;
        auto add_candidate = [&](const std::string& pattern,
                                 const control::PauseGenerationResult& r) {
            train::RftCandidate c;
            c.pattern = pattern;
            c.length = r.stats.generated_tokens;
            c.correct = corpus::answers_match(control::extract_answer(r.response_text), trace.answer);
            c.tokens = r.tokens;
            candidates.push_back(std::move(c));
        };
        add_candidate("reference", reference);
        for (std::size_t pi = 0; pi < cfg.rft.span_intervals.size(); ++pi) {
            control::InsertionPolicy p;
            p.kind = control::PolicyKind::span_interval;
            p.n_spans = cfg.rft.span_intervals[pi];
            model::GenerationParams g2 = cfg.rft.generation;
            g2.seed = seed_rng.fork(qi * 97 + pi + 1).raw();
            add_candidate("span" + std::to_string(p.n_spans),
                          control::generate_with_pauses(trace.question, student, p, g2));
        }
        {
            control::InsertionPolicy p;
            p.kind = control::PolicyKind::token_interval;
            p.token_interval = cfg.rft.token_interval;
            model::GenerationParams g2 = cfg.rft.generation;
            g2.seed = seed_rng.fork(qi * 97 + 91).raw();
            add_candidate("token" + std::to_string(p.token_interval),
                          control::generate_with_pauses(trace.question, student, p, g2));
        }

        const auto selection =
            train::rft_select(candidates, reference.stats.generated_tokens);
        json record = {{"id", trace.id},
                       {"skipped", selection.skipped},
                       {"pattern", selection.skipped ? "" : selection.pattern},
                       {"score", selection.skipped ? 0.0 : selection.score}};
        selections += record.dump() + "\n";
        if (selection.skipped) {
            ++skipped;
            continue;
        }
        train::Stage2Target target;
        target.trace_id = trace.id;
        target.prompt = tk.encode(train::build_prompt_text(trace.question));
        target.prompt.push_back(tk.think_open_id());
        target.completion = candidates[selection.chosen_index].tokens;
        targets.push_back(std::move(target));
    }

    io::write_file_atomic(cfg.paths.selections, selections);
    train::stage2_train(student, targets, cfg.rft);
    student.save_checkpoint(cfg.paths.checkpoint_stage2);
    write_manifest(cfg, "train-stage2", {cfg.paths.checkpoint_stage1, cfg.paths.corpus},
                   {cfg.paths.checkpoint_stage2, cfg.paths.selections});
    const json summary = {{"command", "train-stage2"},
                          {"questions", limit},
                          {"selected", targets.size()},
                          {"skipped", skipped}};
    return summary.dump(2);
}

std::string cmd_infer(const config::RunConfig& cfg, const std::string& question) {
    model::Backbone backbone = load_inference_model(cfg);
    if (!question.empty()) {
        const auto r = control::generate_with_pauses(question, backbone, cfg.policy, cfg.generation);
        const json out = {{"command", "infer"},
                          {"question", question},
                          {"response", r.response_text},
                          {"answer", control::extract_answer(r.response_text)},
                          {"stats", stats_to_json(r.stats)}};
        return out.dump(2);
    }
    const auto questions = eval_questions(cfg);
    std::string lines;
    Rng seed_rng(cfg.generation.seed);
    std::size_t total_tokens = 0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        model::GenerationParams gen = cfg.generation;
        gen.seed = seed_rng.fork(i).raw();
        const auto r =
            control::generate_with_pauses(questions[i].question, backbone, cfg.policy, gen);
        total_tokens += r.stats.generated_tokens;
        const json record = {{"id", questions[i].id},
                             {"question", questions[i].question},
                             {"expected_answer", questions[i].answer},
                             {"response", r.response_text},
                             {"answer", control::extract_answer(r.response_text)},
                             {"stats", stats_to_json(r.stats)}};
        lines += record.dump() + "\n";
    }
    io::write_file_atomic(cfg.paths.responses, lines);
    write_manifest(cfg, "infer", {}, {cfg.paths.responses});
    const json summary = {{"command", "infer"},
                          {"responses", questions.size()},
                          {"mean_tokens", questions.empty() ? 0.0
                                                            : static_cast<double>(total_tokens) /
                                                                  questions.size()},
                          {"path", cfg.paths.responses}};
    return summary.dump(2);
}

std::string cmd_coverage(const config::RunConfig& cfg) {
    require_artifact(cfg.paths.instances, "spotkit build-data");
    model::Backbone student = load_model(cfg.paths.checkpoint_stage1, "spotkit train-stage1");
    model::Backbone base = load_model(cfg.paths.checkpoint_base, "spotkit train-stage1");
    const auto instances = data::load_instances(cfg.paths.instances);
    const head::HeadWeights head = base.head_view();
    const model::ToyTokenizer& tk = student.tokenizer();

    auto mean_cov = [&](const model::Backbone& m) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& inst : instances) {
            if (inst.pairings.empty()) continue;
            const auto enc = train::encode_instance(inst, tk);
            const Matrix hidden = m.forward_hidden(enc.tokens);
            const auto region = spans::extract_reasoning_region(inst.reasoning);
            for (std::size_t r = 0; r < enc.pause_positions.size(); ++r) {
                const auto& pairing = inst.pairings[r];
                const std::string span_text =
                    region.body.substr(pairing.begin, pairing.end - pairing.begin);
                const Vector z = hidden.col(static_cast<Eigen::Index>(enc.pause_positions[r]));
                if (const auto c = diag::coverage(z, span_text, tk, head)) {
                    sum += *c;
                    ++n;
                }
            }
        }
        return n == 0 ? 0.0 : sum / static_cast<double>(n);
    };

    const double trained = mean_cov(student);
    const double baseline = mean_cov(base);
    const json report = {{"command", "coverage"},
                         {"trained_coverage", trained},
                         {"baseline_coverage", baseline},
                         {"delta", trained - baseline}};
    const std::string out_path = report_path(cfg, "coverage.json");
    io::write_file_atomic(out_path, report.dump(2) + "\n");
    write_manifest(cfg, "coverage",
                   {cfg.paths.instances, cfg.paths.checkpoint_stage1, cfg.paths.checkpoint_base},
                   {out_path});
    return report.dump(2);
}

std::string cmd_judge(const config::RunConfig& cfg) {
    require_artifact(cfg.paths.responses, "spotkit infer");
    diag::JudgeClientConfig jc;
    jc.fixture_path = cfg.judge.fixture_path;
    jc.model = cfg.judge.model;
    jc.max_concurrency = cfg.judge.max_concurrency;
    jc.timeout_seconds = cfg.judge.timeout_seconds;
    jc = diag::apply_judge_env(jc);
    const diag::JudgeClient client = diag::JudgeClient::from_config(jc);

    struct Pending {
        diag::BoundaryPair pair;
        std::string question;
        std::string trace;
        std::string answer;
    };
    std::vector<Pending> pending;
    {
        const std::string text = io::read_file(cfg.paths.responses);
        std::size_t start = 0;
        while (start < text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            const std::string line = text.substr(start, end - start);
            start = end + 1;
            if (line.empty()) continue;
            const json rec = json::parse(line);
            const std::string response = rec["response"].get<std::string>();
            for (auto& pair : diag::extract_boundary_pairs(response)) {
                pair.trace_id = rec["id"].get<std::string>();
                Pending p;
                p.pair = std::move(pair);
                p.question = rec["question"].get<std::string>();
                p.trace = response;
                p.answer = rec["answer"].get<std::string>();
                pending.push_back(std::move(p));
                if (cfg.judge.max_boundaries > 0 && pending.size() >= cfg.judge.max_boundaries) {
                    break;
                }
            }
            if (cfg.judge.max_boundaries > 0 && pending.size() >= cfg.judge.max_boundaries) break;
        }
    }
    if (pending.empty()) {
        fail(ErrorCode::invalid_argument,
             "no <pause> boundary pairs found in " + cfg.paths.responses);
    }

    std::vector<std::optional<diag::JudgeVerdict>> verdicts(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
        verdicts[i] = client.judge_boundary(pending[i].pair, pending[i].question, pending[i].trace,
                                            pending[i].answer, i);
    }
    const diag::JudgeAggregate agg = diag::aggregate_judgments(verdicts);

    std::string csv = "trace_id,pause_ordinal,local_continuity,pause_utilization,error_type,confidence\n";
    for (std::size_t i = 0; i < pending.size(); ++i) {
        char line[256];
        if (verdicts[i]) {
            std::snprintf(line, sizeof(line), "%s,%zu,%d,%d,%s,%.3f\n",
                          pending[i].pair.trace_id.c_str(), pending[i].pair.pause_ordinal,
                          verdicts[i]->local_continuity, verdicts[i]->pause_utilization,
                          verdicts[i]->error_type.c_str(), verdicts[i]->confidence);
        } else {
            std::snprintf(line, sizeof(line), "%s,%zu,,,judge_failure,\n",
                          pending[i].pair.trace_id.c_str(), pending[i].pair.pause_ordinal);
        }
        csv += line;
    }
    const std::string csv_path = report_path(cfg, "judge_verdicts.csv");
    io::write_file_atomic(csv_path, csv);

    const json report = {{"command", "judge"},
                         {"boundaries", pending.size()},
                         {"valid", agg.valid},
                         {"failures", agg.failures},
                         {"mean_local", agg.mean_local},
                         {"mean_util", agg.mean_util},
                         {"joint_at_4", agg.joint_at_4},
                         {"fixture_mode", client.fixture_mode()}};
    const std::string out_path = report_path(cfg, "judge_summary.json");
    io::write_file_atomic(out_path, report.dump(2) + "\n");
    write_manifest(cfg, "judge", {cfg.paths.responses}, {out_path, csv_path});
    return report.dump(2);
}

EvalSummary eval_run(const model::Backbone& backbone, const std::vector<data::Trace>& dataset,
                     const std::vector<std::uint64_t>& seeds,
                     const control::InsertionPolicy& policy,
                     const model::GenerationParams& generation) {
    if (dataset.empty()) fail(ErrorCode::invalid_argument, "eval: empty dataset");
    EvalSummary summary;
    std::size_t total_tokens = 0;
    for (const std::uint64_t seed : seeds) {
        Rng per_seed(seed);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            model::GenerationParams gen = generation;
            gen.seed = per_seed.fork(i).raw();
            const auto r =
                control::generate_with_pauses(dataset[i].question, backbone, policy, gen);
            total_tokens += r.stats.generated_tokens;
            if (corpus::answers_match(control::extract_answer(r.response_text),
                                      dataset[i].answer)) {
                ++correct;
            }
        }
        summary.per_seed_accuracy.push_back(static_cast<double>(correct) /
                                            static_cast<double>(dataset.size()));
    }
    for (double acc : summary.per_seed_accuracy) summary.pass_at_1_mean += acc;
    summary.pass_at_1_mean /= static_cast<double>(seeds.size());
    summary.mean_length = static_cast<double>(total_tokens) /
                          static_cast<double>(dataset.size() * seeds.size());
    return summary;
}

std::string cmd_eval(const config::RunConfig& cfg) {
    model::Backbone backbone = load_inference_model(cfg);
    const auto questions = eval_questions(cfg);
    std::vector<std::uint64_t> seeds;
    Rng seed_rng(cfg.generation.seed ^ 0xe7a1c0dee7a1c0deULL);
    for (int s = 0; s < cfg.eval.num_seeds; ++s) seeds.push_back(seed_rng.fork(s).raw());
    const EvalSummary summary = eval_run(backbone, questions, seeds, cfg.policy, cfg.generation);
    json per_seed = json::array();
    for (double acc : summary.per_seed_accuracy) per_seed.push_back(acc);
    const json report = {{"command", "eval"},
                         {"questions", questions.size()},
                         {"seeds", seeds.size()},
                         {"policy", control::policy_kind_to_string(cfg.policy.kind)},
                         {"pass_at_1_mean", summary.pass_at_1_mean},
                         {"per_seed_accuracy", per_seed},
                         {"mean_length", summary.mean_length}};
    const std::string out_path = report_path(cfg, "eval.json");
    io::write_file_atomic(out_path, report.dump(2) + "\n");
    write_manifest(cfg, "eval", {}, {out_path});
    return report.dump(2);
}

}  // namespace spot::pipeline
