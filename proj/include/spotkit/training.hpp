#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spotkit/backbone.hpp"
#include "spotkit/common.hpp"
#include "spotkit/sinkhorn.hpp"
#include "spotkit/spandrop.hpp"

namespace spot::train {

enum class OptimizerKind { gradient_descent, adamw };

OptimizerKind optimizer_from_string(const std::string& s);
std::string optimizer_to_string(OptimizerKind k);

struct StageOneConfig {
    double lambda = 1.0;
    ot::SinkhornParams sinkhorn;
    bool normalize = true;
    int span_state_cap = 256;
    int epochs = 5;
    int pretrain_epochs = 10;
    double learning_rate = 0.003;
    double pretrain_learning_rate = 0.003;
    int batch_size = 8;
    OptimizerKind optimizer = OptimizerKind::adamw;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RftConfig {
    // Insertion patterns tried per question: span intervals plus one
    // token-interval candidate; the pause-free reference is always included.
    std::vector<int> span_intervals = {1, 2, 3};
    int token_interval = 32;
    int max_questions = 0;  // 0 = all
    model::GenerationParams generation;
    int epochs = 1;
    double learning_rate = 0.002;
    int batch_size = 8;
    OptimizerKind optimizer = OptimizerKind::adamw;
    std::uint64_t seed = 0;
};

// Momentum-free SGD or AdamW over the unfrozen tensors. Frozen tensors are
// never touched; with the pause-row exception only that row of E moves.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate);
    void step(model::Backbone& model, const model::ParamSet& grads);

private:
    OptimizerKind kind_;
    double lr_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    int t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

struct MaskedCeResult {
    double loss = 0.0;
    int valid_positions = 0;
    bool all_pause = false;  // warning flag: every position was masked
};

// True at positions whose target is the <pause> id.
std::vector<bool> pause_mask_from_targets(const std::vector<int>& targets, int pause_id);

// Mean negative log-likelihood over unmasked positions. logits is V x T;
// targets and pause_mask have length T. Masked positions contribute exactly
// zero and their targets are never read.
MaskedCeResult masked_ce_loss(const Matrix& logits, const std::vector<int>& targets,
                              const std::vector<bool>& pause_mask);

// Gradient of the pooled-mean masked CE with respect to the logits.
// `pooled_count` is the denominator (total valid positions of the batch).
Matrix masked_ce_grad(const Matrix& logits, const std::vector<int>& targets,
                      const std::vector<bool>& pause_mask, int pooled_count);

// Alignment value and gradient for one dropped span: the pause state and the
// teacher span states are projected through the frozen head (soft embedding,
// optional row normalization), the squared-distance cost row is built, and
// the entropic OT value is evaluated against uniform target mass. The
// returned gradient treats the transport plan as locally constant.
struct SpanAlignResult {
    double value = 0.0;
    double epsilon_final = 0.0;
    Vector d_pause_state;  // dL/dz, length d
};
SpanAlignResult span_align_single(const Vector& pause_state, const Matrix& teacher_states,
                                  const head::HeadWeights& head, const ot::SinkhornParams& params,
                                  bool normalize);

// Pooled mean of the OT values over every dropped span of every instance.
// Returns 0 when no span is dropped anywhere.
double span_align_loss(const std::vector<data::SpanDropInstance>& instances,
                       const model::Backbone& student, const model::Backbone& teacher,
                       const ot::SinkhornParams& params, bool normalize, int cap);

// Token-level view of one training instance.
struct EncodedInstance {
    std::vector<int> tokens;             // prompt + completion (+ <eos>)
    std::size_t completion_begin = 0;    // first completion position
    std::vector<std::size_t> pause_positions;      // token indices of <pause>
    std::vector<int> teacher_tokens;               // prompt + full trace (+ <eos>)
    std::vector<std::pair<std::size_t, std::size_t>> teacher_span_ranges;  // per pause
};

EncodedInstance encode_instance(const data::SpanDropInstance& instance,
                                const model::ToyTokenizer& tokenizer);

// Builds the full teacher-trace token view used for pretraining.
std::vector<int> encode_trace_tokens(const data::Trace& trace,
                                     const model::ToyTokenizer& tokenizer);

std::string build_full_text(const std::string& question, const std::string& reasoning,
                            const std::string& answer);
std::string build_prompt_text(const std::string& question);

struct StepMetrics {
    int step = 0;
    double ce = 0.0;
    double align = 0.0;
    double coverage = 0.0;  // mean over the step's dropped spans; NaN if none
    double epsilon_final = 0.0;
};

struct StageOneResult {
    std::vector<StepMetrics> metrics;
    double baseline_coverage = 0.0;  // pre-stage-I student, same computation
    double final_coverage = 0.0;     // trained student over all instances
};

// Plain-CE pretraining over full traces; all parameters trainable.
void pretrain(model::Backbone& model, const std::vector<data::SpanDropInstance>& instances,
              const StageOneConfig& config);

// Stage-I optimization of masked CE + lambda * span alignment with the
// frozen-(W, b, E) contract. The teacher must already be frozen.
StageOneResult stage1_train(model::Backbone& student, const model::Backbone& teacher,
                            const std::vector<data::SpanDropInstance>& instances,
                            const StageOneConfig& config);

// Length-saving score 1 - |y_k| / |y_0|.
double rft_score(std::size_t candidate_length, std::size_t reference_length);

struct RftCandidate {
    std::string pattern;      // label, e.g. "span1", "token32", "reference"
    std::size_t length = 0;   // generated tokens
    bool correct = false;
    std::vector<int> tokens;  // full completion tokens
};

struct RftSelection {
    bool skipped = true;
    std::size_t chosen_index = 0;
    std::string pattern;
    double score = 0.0;
};

// Discards incorrect candidates and returns the max-score survivor
// (ties: fewer tokens, then lowest index). Skip when none is correct.
RftSelection rft_select(const std::vector<RftCandidate>& candidates,
                        std::size_t reference_length);

struct Stage2Target {
    std::string trace_id;
    std::vector<int> prompt;      // question prompt tokens
    std::vector<int> completion;  // selected completion tokens
};

// Masked-CE fine-tuning on selected targets. W and b stay frozen; E is
// frozen except the <pause> row.
void stage2_train(model::Backbone& student, const std::vector<Stage2Target>& targets,
                  const RftConfig& config);

void freeze_stage1(model::Backbone& student);
void freeze_stage2(model::Backbone& student);

}  // namespace spot::train
