#include "spotkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spotkit/diagnostics.hpp"
#include "spotkit/text_spans.hpp"

namespace spot::train {

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "gd") return OptimizerKind::gradient_descent;
    if (s == "adamw") return OptimizerKind::adamw;
    fail(ErrorCode::invalid_argument, "unknown optimizer: " + s + " (expected gd|adamw)");
}

std::string optimizer_to_string(OptimizerKind k) {
    return k == OptimizerKind::gradient_descent ? "gd" : "adamw";
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {}

void Optimizer::step(model::Backbone& modelref, const model::ParamSet& grads) {
    if (kind_ == OptimizerKind::gradient_descent) {
        modelref.apply_gradients(grads, lr_);
        return;
    }
    // AdamW (decoupled decay is zero at this scale, so effectively Adam).
    std::vector<std::pair<const double*, Eigen::Index>> grad_list;
    grads.for_each_tensor([&](const std::string&, const double* data, Eigen::Index rows,
                              Eigen::Index cols) { grad_list.emplace_back(data, rows * cols); });
    if (m_.empty()) {
        grads.for_each_tensor([&](const std::string&, const double*, Eigen::Index rows,
                                  Eigen::Index cols) {
            m_.push_back(Matrix::Zero(rows, cols));
            v_.push_back(Matrix::Zero(rows, cols));
        });
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    const int pause = modelref.tokenizer().pause_id();
    std::size_t idx = 0;
    modelref.params().for_each_tensor([&](const std::string& name, double* data,
                                          Eigen::Index rows, Eigen::Index cols) {
        const std::size_t k = idx++;
        const auto [gdata, gsize] = grad_list[k];
        if (rows * cols != gsize) fail(ErrorCode::internal, "optimizer: shape mismatch");
        const bool frozen = modelref.is_frozen(name);
        const bool pause_row_only = name == "E" && frozen && modelref.pause_row_trainable();
        if (frozen && !pause_row_only) return;
        double* m = m_[k].data();
        double* v = v_[k].data();
        auto update_at = [&](Eigen::Index i) {
            const double g = gdata[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        };
        if (pause_row_only) {
            for (Eigen::Index c = 0; c < cols; ++c) update_at(c * rows + pause);
            return;
        }
        for (Eigen::Index i = 0; i < rows * cols; ++i) update_at(i);
    });
}

void StageOneConfig::validate() const {
    if (lambda < 0.0) fail(ErrorCode::invalid_argument, "stage1: lambda must be >= 0");
    if (epochs < 0 || pretrain_epochs < 0) {
        fail(ErrorCode::invalid_argument, "stage1: epochs must be >= 0");
    }
    if (batch_size < 1) fail(ErrorCode::invalid_argument, "stage1: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail(ErrorCode::invalid_argument, "stage1: learning_rate must be > 0");
    if (span_state_cap < 1) fail(ErrorCode::invalid_argument, "stage1: span_state_cap must be >= 1");
    sinkhorn.validate();
}

std::vector<bool> pause_mask_from_targets(const std::vector<int>& targets, int pause_id) {
    std::vector<bool> mask(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) mask[t] = targets[t] == pause_id;
    return mask;
}

MaskedCeResult masked_ce_loss(const Matrix& logits, const std::vector<int>& targets,
                              const std::vector<bool>& pause_mask) {
    if (static_cast<std::size_t>(logits.cols()) != targets.size() ||
        pause_mask.size() != targets.size()) {
        fail(ErrorCode::invalid_argument, "masked_ce_loss: logits/target/mask length mismatch");
    }
    MaskedCeResult res;
    double total = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (pause_mask[t]) continue;
        const Vector p = head::softmax(logits.col(static_cast<Eigen::Index>(t)));
        total += -std::log(std::max(p[targets[t]], 1e-300));
        ++res.valid_positions;
    }
    if (res.valid_positions == 0) {
        res.loss = 0.0;
        res.all_pause = !targets.empty();
        return res;
    }
    res.loss = total / res.valid_positions;
    return res;
}

Matrix masked_ce_grad(const Matrix& logits, const std::vector<int>& targets,
                      const std::vector<bool>& pause_mask, int pooled_count) {
    Matrix grad = Matrix::Zero(logits.rows(), logits.cols());
    if (pooled_count <= 0) return grad;
    const double w = 1.0 / pooled_count;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (pause_mask[t]) continue;
        const auto col = static_cast<Eigen::Index>(t);
        Vector p = head::softmax(logits.col(col));
        p[targets[t]] -= 1.0;
        grad.col(col) = w * p;
    }
    return grad;
}

SpanAlignResult span_align_single(const Vector& pause_state, const Matrix& teacher_states,
                                  const head::HeadWeights& head, const ot::SinkhornParams& params,
                                  bool normalize) {
    const Eigen::Index d = pause_state.size();
    const Eigen::Index k = teacher_states.cols();
    if (k == 0) fail(ErrorCode::invalid_argument, "span_align: empty teacher span");
    const double delta = params.delta;

    // Student projection through the frozen head.
    const Vector p = head::head_distribution(pause_state, head);
    const Vector phi = head::soft_embed_from_distribution(p, head.E);
    Vector zt = phi;
    double phi_norm = 0.0;
    if (normalize) {
        phi_norm = phi.norm();
        zt = phi / (phi_norm + delta);
    }

    // Teacher projections (constants for the gradient).
    Matrix ht(d, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        Vector col = head::soft_embed(teacher_states.col(j), head);
        if (normalize) col /= (col.norm() + delta);
        ht.col(j) = col;
    }

    ot::TransportProblem problem;
    problem.cost.resize(1, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        problem.cost(0, j) = (zt - ht.col(j)).squaredNorm();
    }
    problem.source = Vector::Ones(1);
    problem.target = Vector::Constant(k, 1.0 / static_cast<double>(k));
    const ot::TransportSolution sol = ot::sinkhorn_value(problem, params);

    // dValue/dC = plan; chain through cost, normalization, soft embedding,
    // and the head softmax back to the pause state.
    Vector d_zt = Vector::Zero(d);
    for (Eigen::Index j = 0; j < k; ++j) {
        d_zt += sol.plan(0, j) * 2.0 * (zt - ht.col(j));
    }
    Vector d_phi;
    if (normalize) {
        const double s = 1.0 / (phi_norm + delta);
        // J = s*I - phi phi^T / (|phi| (|phi|+delta)^2), symmetric.
        const double coef = 1.0 / (std::max(phi_norm, 1e-300) * (phi_norm + delta) * (phi_norm + delta));
        d_phi = s * d_zt - coef * phi * (phi.dot(d_zt));
    } else {
        d_phi = d_zt;
    }
    const Vector d_p = head.E * d_phi;
    // Softmax backward: dlogits = p .* (d_p - <d_p, p>).
    const double inner = d_p.dot(p);
    const Vector d_logits = (p.array() * (d_p.array() - inner)).matrix();

    SpanAlignResult out;
    out.value = sol.value;
    out.epsilon_final = sol.epsilon_final;
    out.d_pause_state = head.W.transpose() * d_logits;
    return out;
}

std::string build_prompt_text(const std::string& question) { return question + "\n"; }

std::string build_full_text(const std::string& question, const std::string& reasoning,
                            const std::string& answer) {
    return build_prompt_text(question) + reasoning + "\nAnswer: " + answer;
}

std::vector<int> encode_trace_tokens(const data::Trace& trace,
                                     const model::ToyTokenizer& tokenizer) {
    std::vector<int> ids =
        tokenizer.encode(build_full_text(trace.question, trace.reasoning, trace.answer));
    ids.push_back(tokenizer.eos_id());
    return ids;
}

EncodedInstance encode_instance(const data::SpanDropInstance& inst,
                                const model::ToyTokenizer& tokenizer) {
    EncodedInstance enc;
    const std::string prompt = build_prompt_text(inst.question);
    const std::string full = build_full_text(inst.question, inst.compressed, inst.answer);
    enc.tokens = tokenizer.encode(full);
    enc.tokens.push_back(tokenizer.eos_id());
    enc.completion_begin = tokenizer.encode(prompt).size();

    for (std::size_t i = 0; i < enc.tokens.size(); ++i) {
        if (enc.tokens[i] == tokenizer.pause_id()) enc.pause_positions.push_back(i);
    }
    if (enc.pause_positions.size() != inst.pairings.size()) {
        fail(ErrorCode::parse, "instance " + inst.trace_id + ": pause count (" +
                                   std::to_string(enc.pause_positions.size()) +
                                   ") does not match pairings (" +
                                   std::to_string(inst.pairings.size()) + ")");
    }

    // Teacher side: locate each dropped span's token range inside the full
    // teacher sequence via character offsets.
    const std::string teacher_full =
        build_full_text(inst.question, inst.reasoning, inst.answer);
    const auto teacher_offsets = tokenizer.encode_with_offsets(teacher_full);
    enc.teacher_tokens.reserve(teacher_offsets.size() + 1);
    for (const auto& t : teacher_offsets) enc.teacher_tokens.push_back(t.id);
    enc.teacher_tokens.push_back(tokenizer.eos_id());

    const auto region = spans::extract_reasoning_region(inst.reasoning);
    const std::size_t body_offset = prompt.size() + region.prefix.size() +
                                    (region.explicit_tags ? std::string(spans::kThinkOpen).size() : 0);
    for (const auto& pairing : inst.pairings) {
        const std::size_t abs_begin = body_offset + pairing.begin;
        const std::size_t abs_end = body_offset + pairing.end;
        std::size_t tok_begin = teacher_offsets.size();
        std::size_t tok_end = 0;
        for (std::size_t i = 0; i < teacher_offsets.size(); ++i) {
            if (teacher_offsets[i].begin >= abs_begin && teacher_offsets[i].end <= abs_end) {
                tok_begin = std::min(tok_begin, i);
                tok_end = std::max(tok_end, i + 1);
            }
        }
        if (tok_begin >= tok_end) {
            fail(ErrorCode::parse, "instance " + inst.trace_id +
                                       ": dropped span has no teacher tokens");
        }
        enc.teacher_span_ranges.emplace_back(tok_begin, tok_end);
    }
    return enc;
}

double span_align_loss(const std::vector<data::SpanDropInstance>& instances,
                       const model::Backbone& student, const model::Backbone& teacher,
                       const ot::SinkhornParams& params, bool normalize, int cap) {
    const model::ToyTokenizer& tokenizer = student.tokenizer();
    const head::HeadWeights head = teacher.head_view();
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& inst : instances) {
        if (inst.pairings.empty()) continue;
        const EncodedInstance enc = encode_instance(inst, tokenizer);
        const Matrix student_hidden = student.forward_hidden(enc.tokens);
        const Matrix teacher_hidden = teacher.forward_hidden(enc.teacher_tokens);
        for (std::size_t r = 0; r < enc.pause_positions.size(); ++r) {
            const auto [tb, te] = enc.teacher_span_ranges[r];
            Matrix span_states = teacher.states_for_range(teacher_hidden, tb, te);
            if (span_states.cols() > cap) {
                const auto keep = data::subsample_span_positions(
                    static_cast<std::size_t>(span_states.cols()), static_cast<std::size_t>(cap),
                    fnv1a64(inst.trace_id) + r);
                Matrix reduced(span_states.rows(), static_cast<Eigen::Index>(keep.size()));
                for (std::size_t c = 0; c < keep.size(); ++c) {
                    reduced.col(static_cast<Eigen::Index>(c)) =
                        span_states.col(static_cast<Eigen::Index>(keep[c]));
                }
                span_states = std::move(reduced);
            }
            const Vector z = student_hidden.col(static_cast<Eigen::Index>(enc.pause_positions[r]));
            total += span_align_single(z, span_states, head, params, normalize).value;
            ++count;
        }
    }
    if (count == 0) return 0.0;
    return total / static_cast<double>(count);
}

namespace {

Matrix capped_span_states(const model::Backbone& teacher, const Matrix& teacher_hidden,
                          std::size_t tb, std::size_t te, int cap, const std::string& trace_id,
                          std::size_t ordinal) {
    Matrix span_states = teacher.states_for_range(teacher_hidden, tb, te);
    if (span_states.cols() > cap) {
        const auto keep = data::subsample_span_positions(
            static_cast<std::size_t>(span_states.cols()), static_cast<std::size_t>(cap),
            fnv1a64(trace_id) + ordinal);
        Matrix reduced(span_states.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c) {
            reduced.col(static_cast<Eigen::Index>(c)) =
                span_states.col(static_cast<Eigen::Index>(keep[c]));
        }
        return reduced;
    }
    return span_states;
}

// Gradient of the CE loss pushed back to final hidden states; head W/b
// gradients are accumulated when those tensors are trainable.
void accumulate_ce_backward(const model::Backbone& modelref, const model::ForwardCache& cache,
                            const Matrix& d_logits, Matrix& d_hidden,
                            model::ParamSet& grads, bool head_trainable) {
    d_hidden += modelref.params().W_head.transpose() * d_logits;
    if (head_trainable) {
        grads.W_head += d_logits * cache.hidden.transpose();
        grads.b_head += d_logits.rowwise().sum();
    }
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

}  // namespace

void pretrain(model::Backbone& modelref, const std::vector<data::SpanDropInstance>& instances,
              const StageOneConfig& config) {
    config.validate();
    const model::ToyTokenizer& tokenizer = modelref.tokenizer();
    std::vector<std::vector<int>> sequences;
    std::vector<std::size_t> completion_begins;
    sequences.reserve(instances.size());
    for (const auto& inst : instances) {
        data::Trace t{inst.trace_id, inst.question, inst.reasoning, inst.answer};
        sequences.push_back(encode_trace_tokens(t, tokenizer));
        completion_begins.push_back(tokenizer.encode(build_prompt_text(inst.question)).size());
    }

    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    Optimizer optimizer(config.optimizer, config.pretrain_learning_rate);
    int step = 0;
    for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
        const auto order = shuffled_order(sequences.size(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            model::ParamSet grads = modelref.zero_grads();

            // Count valid positions first (pooled mean).
            int pooled = 0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const auto& seq = sequences[order[bi]];
                pooled += static_cast<int>(seq.size() - 1 - completion_begins[order[bi]] + 1);
            }
            double loss_sum = 0.0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const auto& seq = sequences[order[bi]];
                const std::size_t cb = completion_begins[order[bi]];
                const model::ForwardCache cache = modelref.forward_cached(seq);
                const Matrix logits = modelref.logits_from_hidden(cache.hidden);

                // Positions cb-1 .. T-2 predict the completion tokens.
                const auto first = static_cast<Eigen::Index>(cb) - 1;
                const auto count = static_cast<Eigen::Index>(seq.size()) - cb;
                std::vector<int> targets(seq.begin() + static_cast<std::ptrdiff_t>(cb), seq.end());
                const auto mask = pause_mask_from_targets(targets, tokenizer.pause_id());
                const Matrix pred_logits = logits.middleCols(first, count);
                const MaskedCeResult ce = masked_ce_loss(pred_logits, targets, mask);
                loss_sum += ce.loss * ce.valid_positions;
                Matrix d_logits = Matrix::Zero(logits.rows(), logits.cols());
                d_logits.middleCols(first, count) =
                    masked_ce_grad(pred_logits, targets, mask, pooled);
                Matrix d_hidden = Matrix::Zero(cache.hidden.rows(), cache.hidden.cols());
                accumulate_ce_backward(modelref, cache, d_logits, d_hidden, grads, true);
                modelref.backward(cache, d_hidden, grads);
            }
            if (!std::isfinite(loss_sum)) {
                fail(ErrorCode::numeric, "pretrain: NaN loss at step " + std::to_string(step));
            }
            optimizer.step(modelref, grads);
            ++step;
        }
    }
}

void freeze_stage1(model::Backbone& student) {
    student.freeze("head.W");
    student.freeze("head.b");
    student.freeze("E");
    student.set_pause_row_trainable(false);
}

void freeze_stage2(model::Backbone& student) {
    student.freeze("head.W");
    student.freeze("head.b");
    student.freeze("E");
    student.set_pause_row_trainable(true);
}

StageOneResult stage1_train(model::Backbone& student, const model::Backbone& teacher,
                            const std::vector<data::SpanDropInstance>& instances,
                            const StageOneConfig& config) {
    config.validate();
    const model::ToyTokenizer& tokenizer = student.tokenizer();
    const head::HeadWeights head = teacher.head_view();
    freeze_stage1(student);

    std::vector<EncodedInstance> encoded;
    encoded.reserve(instances.size());
    for (const auto& inst : instances) encoded.push_back(encode_instance(inst, tokenizer));

    // Dropped-span texts, for the coverage diagnostic.
    std::vector<std::vector<std::string>> span_texts(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto region = spans::extract_reasoning_region(instances[i].reasoning);
        for (const auto& pairing : instances[i].pairings) {
            span_texts[i].push_back(region.body.substr(pairing.begin, pairing.end - pairing.begin));
        }
    }

    // Teacher hidden states never change; compute them once.
    std::vector<std::vector<Matrix>> teacher_spans(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (encoded[i].pause_positions.empty()) continue;
        const Matrix th = teacher.forward_hidden(encoded[i].teacher_tokens);
        for (std::size_t r = 0; r < encoded[i].teacher_span_ranges.size(); ++r) {
            const auto [tb, te] = encoded[i].teacher_span_ranges[r];
            teacher_spans[i].push_back(capped_span_states(teacher, th, tb, te,
                                                          config.span_state_cap,
                                                          instances[i].trace_id, r));
        }
    }

    auto mean_coverage = [&](const model::Backbone& m) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            if (encoded[i].pause_positions.empty()) continue;
            const Matrix hidden = m.forward_hidden(encoded[i].tokens);
            for (std::size_t r = 0; r < encoded[i].pause_positions.size(); ++r) {
                const Vector z =
                    hidden.col(static_cast<Eigen::Index>(encoded[i].pause_positions[r]));
                if (const auto c = diag::coverage(z, span_texts[i][r], tokenizer, head)) {
                    sum += *c;
                    ++n;
                }
            }
        }
        return n == 0 ? 0.0 : sum / static_cast<double>(n);
    };

    StageOneResult result;
    result.baseline_coverage = mean_coverage(student);

    Rng rng(config.seed);
    Optimizer optimizer(config.optimizer, config.learning_rate);
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = shuffled_order(encoded.size(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);

            int pooled_positions = 0;
            std::size_t pooled_spans = 0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const EncodedInstance& enc = encoded[order[bi]];
                pooled_positions += static_cast<int>(enc.tokens.size() - enc.completion_begin) -
                                    static_cast<int>(enc.pause_positions.size());
                pooled_spans += enc.pause_positions.size();
            }

            model::ParamSet grads = student.zero_grads();
            double ce_sum = 0.0;
            double align_sum = 0.0;
            double cov_sum = 0.0;
            std::size_t cov_n = 0;
            double eps_final = config.sinkhorn.epsilon_min();

            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t idx = order[bi];
                const EncodedInstance& enc = encoded[idx];
                const model::ForwardCache cache = student.forward_cached(enc.tokens);
                const Matrix logits = student.logits_from_hidden(cache.hidden);

                const auto cb = enc.completion_begin;
                const auto first = static_cast<Eigen::Index>(cb) - 1;
                const auto count = static_cast<Eigen::Index>(enc.tokens.size()) - static_cast<Eigen::Index>(cb);
                std::vector<int> targets(enc.tokens.begin() + static_cast<std::ptrdiff_t>(cb),
                                         enc.tokens.end());
                const auto mask = pause_mask_from_targets(targets, tokenizer.pause_id());
                const Matrix pred_logits = logits.middleCols(first, count);
                const MaskedCeResult ce = masked_ce_loss(pred_logits, targets, mask);
                ce_sum += ce.loss * ce.valid_positions;

                Matrix d_logits = Matrix::Zero(logits.rows(), logits.cols());
                d_logits.middleCols(first, count) =
                    masked_ce_grad(pred_logits, targets, mask, pooled_positions);
                Matrix d_hidden = Matrix::Zero(cache.hidden.rows(), cache.hidden.cols());
                accumulate_ce_backward(student, cache, d_logits, d_hidden, grads, false);

                for (std::size_t r = 0; r < enc.pause_positions.size(); ++r) {
                    const auto pos = static_cast<Eigen::Index>(enc.pause_positions[r]);
                    const Vector z = cache.hidden.col(pos);
                    const SpanAlignResult align = span_align_single(
                        z, teacher_spans[idx][r], head, config.sinkhorn, config.normalize);
                    align_sum += align.value;
                    eps_final = align.epsilon_final;
                    if (config.lambda > 0.0 && pooled_spans > 0) {
                        d_hidden.col(pos) += (config.lambda / static_cast<double>(pooled_spans)) *
                                             align.d_pause_state;
                    }
                    if (const auto c = diag::coverage(z, span_texts[idx][r], tokenizer, head)) {
                        cov_sum += *c;
                        ++cov_n;
                    }
                }
                student.backward(cache, d_hidden, grads);
            }

            StepMetrics sm;
            sm.step = step;
            sm.ce = pooled_positions > 0 ? ce_sum / pooled_positions : 0.0;
            sm.align = pooled_spans > 0 ? align_sum / static_cast<double>(pooled_spans) : 0.0;
            sm.coverage = cov_n > 0 ? cov_sum / static_cast<double>(cov_n)
                                    : std::numeric_limits<double>::quiet_NaN();
            sm.epsilon_final = eps_final;
            if (!std::isfinite(sm.ce) || !std::isfinite(sm.align)) {
                fail(ErrorCode::numeric, "stage1: NaN loss at step " + std::to_string(step));
            }
            result.metrics.push_back(sm);
            optimizer.step(student, grads);
            ++step;
        }
    }
    result.final_coverage = mean_coverage(student);
    return result;
}

double rft_score(std::size_t candidate_length, std::size_t reference_length) {
    if (reference_length == 0) {
        fail(ErrorCode::invalid_argument, "rft_score: reference length must be positive");
    }
    return 1.0 - static_cast<double>(candidate_length) / static_cast<double>(reference_length);
}

RftSelection rft_select(const std::vector<RftCandidate>& candidates,
                        std::size_t reference_length) {
    RftSelection sel;
    bool have = false;
    double best_score = 0.0;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        if (!c.correct) continue;
        const double score = rft_score(c.length, reference_length);
        const bool better =
            !have || score > best_score || (score == best_score && c.length < best_len);
        if (better) {
            have = true;
            best_score = score;
            best_len = c.length;
            sel.chosen_index = i;
            sel.pattern = c.pattern;
            sel.score = score;
        }
    }
    sel.skipped = !have;
    return sel;
}

void stage2_train(model::Backbone& student, const std::vector<Stage2Target>& targets,
                  const RftConfig& config) {
    if (targets.empty()) return;
    freeze_stage2(student);
    const model::ToyTokenizer& tokenizer = student.tokenizer();

    std::vector<std::vector<int>> sequences;
    std::vector<std::size_t> completion_begins;
    for (const auto& t : targets) {
        std::vector<int> seq = t.prompt;
        seq.insert(seq.end(), t.completion.begin(), t.completion.end());
        sequences.push_back(std::move(seq));
        completion_begins.push_back(t.prompt.size());
    }

    Rng rng(config.seed ^ 0x51ed2701d0f3ca11ULL);
    Optimizer optimizer(config.optimizer, config.learning_rate);
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = shuffled_order(sequences.size(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            model::ParamSet grads = student.zero_grads();
            int pooled = 0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const auto& seq = sequences[order[bi]];
                const std::size_t cb = completion_begins[order[bi]];
                for (std::size_t t = cb; t < seq.size(); ++t) {
                    if (seq[t] != tokenizer.pause_id()) ++pooled;
                }
            }
            double loss_sum = 0.0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const auto& seq = sequences[order[bi]];
                const std::size_t cb = completion_begins[order[bi]];
                const model::ForwardCache cache = student.forward_cached(seq);
                const Matrix logits = student.logits_from_hidden(cache.hidden);
                const auto first = static_cast<Eigen::Index>(cb) - 1;
                const auto count = static_cast<Eigen::Index>(seq.size()) - static_cast<Eigen::Index>(cb);
                std::vector<int> tg(seq.begin() + static_cast<std::ptrdiff_t>(cb), seq.end());
                const auto mask = pause_mask_from_targets(tg, tokenizer.pause_id());
                const Matrix pred_logits = logits.middleCols(first, count);
                const MaskedCeResult ce = masked_ce_loss(pred_logits, tg, mask);
                loss_sum += ce.loss * ce.valid_positions;
                Matrix d_logits = Matrix::Zero(logits.rows(), logits.cols());
                d_logits.middleCols(first, count) =
                    masked_ce_grad(pred_logits, tg, mask, pooled);
                Matrix d_hidden = Matrix::Zero(cache.hidden.rows(), cache.hidden.cols());
                accumulate_ce_backward(student, cache, d_logits, d_hidden, grads, false);
                student.backward(cache, d_hidden, grads);
            }
            if (!std::isfinite(loss_sum)) {
                fail(ErrorCode::numeric, "stage2: NaN loss at step " + std::to_string(step));
            }
            optimizer.step(student, grads);
            ++step;
        }
    }
}

}  // namespace spot::train
