#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spotkit/common.hpp"
#include "spotkit/frozen_head.hpp"
#include "spotkit/tokenizer.hpp"

namespace spot::model {

struct BackboneConfig {
    int d = 64;
    int n_heads = 4;
    int n_blocks = 2;
    int d_ff = 256;
    int max_seq = 512;
    double ln_eps = 1e-5;
    double init_std = 0.08;
    std::uint64_t init_seed = 1234;
};

struct GenerationParams {
    double temperature = 0.6;
    double top_p = 0.95;
    int max_tokens = 256;
    std::uint64_t seed = 0;
    bool greedy = false;
    // <pause> is an input-only control token; it is masked from sampling and
    // enters generations only through forced insertion.
    bool suppress_pause = true;

    void validate() const;
};

// One transformer block: pre-LN attention and MLP sublayers.
struct BlockParams {
    Vector ln1_g, ln1_b;
    Matrix Wq, Wk, Wv, Wo;
    Vector bq, bk, bv, bo;
    Vector ln2_g, ln2_b;
    Matrix W1;  // d_ff x d
    Vector b1;
    Matrix W2;  // d x d_ff
    Vector b2;
};

struct ParamSet {
    Matrix E;       // V x d
    Matrix W_head;  // V x d
    Vector b_head;  // V
    std::vector<BlockParams> blocks;
    Vector lnf_g, lnf_b;

    // Visits every tensor in a fixed order; vectors are exposed as n x 1.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        auto visit_vec = [&](const std::string& name, Vector& v) {
            fn(name, v.data(), v.size(), Eigen::Index(1));
        };
        auto visit_mat = [&](const std::string& name, Matrix& m) {
            fn(name, m.data(), m.rows(), m.cols());
        };
        visit_mat("E", E);
        visit_mat("head.W", W_head);
        visit_vec("head.b", b_head);
        for (std::size_t l = 0; l < blocks.size(); ++l) {
            const std::string p = "block" + std::to_string(l) + ".";
            BlockParams& blk = blocks[l];
            visit_vec(p + "ln1.g", blk.ln1_g);
            visit_vec(p + "ln1.b", blk.ln1_b);
            visit_mat(p + "Wq", blk.Wq);
            visit_mat(p + "Wk", blk.Wk);
            visit_mat(p + "Wv", blk.Wv);
            visit_mat(p + "Wo", blk.Wo);
            visit_vec(p + "bq", blk.bq);
            visit_vec(p + "bk", blk.bk);
            visit_vec(p + "bv", blk.bv);
            visit_vec(p + "bo", blk.bo);
            visit_vec(p + "ln2.g", blk.ln2_g);
            visit_vec(p + "ln2.b", blk.ln2_b);
            visit_mat(p + "W1", blk.W1);
            visit_vec(p + "b1", blk.b1);
            visit_mat(p + "W2", blk.W2);
            visit_vec(p + "b2", blk.b2);
        }
        visit_vec("lnf.g", lnf_g);
        visit_vec("lnf.b", lnf_b);
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<ParamSet*>(this)->for_each_tensor(
            [&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
                fn(name, static_cast<const double*>(data), rows, cols);
            });
    }
};

struct BlockCache {
    Matrix x_in;       // d x T
    Matrix ln1_hat;    // normalized input
    Vector ln1_inv_sigma;
    Matrix Q, K, V;    // d x T, heads stacked along rows
    std::vector<Matrix> attn;  // per head, T x T, row = query position
    Matrix ctx;        // d x T, pre-output-projection
    Matrix x_mid;      // after attention residual
    Matrix ln2_hat;
    Vector ln2_inv_sigma;
    Matrix mlp_pre;    // d_ff x T
    Matrix mlp_act;    // d_ff x T
};

struct ForwardCache {
    std::vector<int> tokens;
    Matrix x0;  // embedding + positional input, d x T
    std::vector<BlockCache> blocks;
    Matrix pre_lnf;   // d x T
    Matrix lnf_hat;
    Vector lnf_inv_sigma;
    Matrix hidden;    // final-layer states, d x T
};

// Incremental decoding state with cached keys/values per block.
struct DecodeState {
    std::vector<int> tokens;
    std::vector<Matrix> k_cache;  // per block, d x t
    std::vector<Matrix> v_cache;
    Vector last_hidden;
    Vector last_logits;
};

class Backbone;

// Deep copy of a backbone with every parameter frozen. Later updates to the
// source never affect the clone, and updates never apply to the clone.
Backbone clone_frozen_teacher(const Backbone& backbone);

class Backbone {
public:
    Backbone(BackboneConfig config, ToyTokenizer tokenizer);

    const BackboneConfig& config() const { return cfg_; }
    const ToyTokenizer& tokenizer() const { return tokenizer_; }
    int vocab_size() const { return tokenizer_.vocab_size(); }

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    // Frozen-head view over (W, b, E).
    head::HeadWeights head_view() const;

    // Final-layer hidden states for a token sequence, one column per
    // position. Hidden state t depends only on tokens <= t.
    Matrix forward_hidden(const std::vector<int>& tokens) const;

    // Forward pass retaining every intermediate needed for backward.
    ForwardCache forward_cached(const std::vector<int>& tokens) const;

    // Logits for every position given final hidden states.
    Matrix logits_from_hidden(const Matrix& hidden) const;

    // Backward from a gradient on the final hidden states, accumulating into
    // `grads` (same shapes as params). Head W/b gradients are the caller's
    // responsibility; input-embedding gradients are scattered into grads.E.
    void backward(const ForwardCache& cache, const Matrix& d_hidden, ParamSet& grads) const;

    // Teacher states restricted to a token range [begin, end).
    Matrix states_for_range(const Matrix& hidden, std::size_t begin, std::size_t end) const;

    // --- incremental decoding ---
    DecodeState decode_begin() const;
    // Appends one token and returns the logits for the next position.
    const Vector& decode_step(DecodeState& state, int token) const;

    // Autoregressive nucleus sampling. The hook runs before each step and may
    // force the next token; generation stops at <eos> or max_tokens.
    struct StepInfo {
        int step = 0;
        const std::vector<int>* generated = nullptr;
    };
    using StepHook = std::function<std::optional<int>(const StepInfo&)>;
    struct GenerationResult {
        std::vector<int> tokens;  // generated tokens, excluding the prompt
        bool truncated = false;
    };
    GenerationResult generate(const std::vector<int>& prompt, const GenerationParams& params,
                              const StepHook& hook = nullptr) const;

    // Samples one token id from logits under temperature/top-p.
    int sample_token(const Vector& logits, const GenerationParams& params, Rng& rng) const;

    // --- freezing ---
    void freeze(const std::string& tensor_name);
    void unfreeze(const std::string& tensor_name);
    void freeze_all();
    bool is_frozen(const std::string& tensor_name) const;
    const std::set<std::string>& frozen_tensors() const { return frozen_; }
    void set_pause_row_trainable(bool on) { pause_row_trainable_ = on; }
    bool pause_row_trainable() const { return pause_row_trainable_; }

    // SGD step honoring the freeze mask. Frozen tensors are not touched at
    // all; with the pause-row exception only that row of E is updated.
    void apply_gradients(const ParamSet& grads, double learning_rate);

    // Checksum over a named tensor's raw bytes.
    std::uint64_t tensor_checksum(const std::string& name) const;

    // --- persistence ---
    void save_checkpoint(const std::string& path) const;
    static Backbone load_checkpoint(const std::string& path);

    ParamSet zero_grads() const;

private:
    void init_parameters();
    Matrix positional_encoding(int T, int offset = 0) const;

    BackboneConfig cfg_;
    ToyTokenizer tokenizer_;
    ParamSet params_;
    std::set<std::string> frozen_;
    bool pause_row_trainable_ = false;
};

}  // namespace spot::model
