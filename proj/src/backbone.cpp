#include "spotkit/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "spotkit/atomic_io.hpp"

namespace spot::model {

namespace {

constexpr double kSqrt2Inv = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kSqrt2Inv)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kSqrt2Inv)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

}  // namespace

void GenerationParams::validate() const {
    if (!(temperature > 0.0)) fail(ErrorCode::invalid_argument, "generation: temperature must be > 0");
    if (!(top_p > 0.0) || top_p > 1.0) fail(ErrorCode::invalid_argument, "generation: top_p must lie in (0, 1]");
    if (max_tokens < 0) fail(ErrorCode::invalid_argument, "generation: max_tokens must be >= 0");
}

Backbone::Backbone(BackboneConfig config, ToyTokenizer tokenizer)
    : cfg_(config), tokenizer_(std::move(tokenizer)) {
    if (cfg_.d % cfg_.n_heads != 0) {
        fail(ErrorCode::invalid_argument, "backbone: d must be divisible by n_heads");
    }
    init_parameters();
}

void Backbone::init_parameters() {
    const int V = tokenizer_.vocab_size();
    const int d = cfg_.d;
    Rng rng(cfg_.init_seed);
    auto randmat = [&](Eigen::Index r, Eigen::Index c) {
        Matrix m(r, c);
        for (Eigen::Index j = 0; j < c; ++j) {
            for (Eigen::Index i = 0; i < r; ++i) m(i, j) = cfg_.init_std * rng.normal();
        }
        return m;
    };
    params_.E = randmat(V, d);
    params_.W_head = randmat(V, d);
    params_.b_head = Vector::Zero(V);
    params_.blocks.resize(static_cast<std::size_t>(cfg_.n_blocks));
    for (auto& blk : params_.blocks) {
        blk.ln1_g = Vector::Ones(d);
        blk.ln1_b = Vector::Zero(d);
        blk.Wq = randmat(d, d);
        blk.Wk = randmat(d, d);
        blk.Wv = randmat(d, d);
        blk.Wo = randmat(d, d);
        blk.bq = Vector::Zero(d);
        blk.bk = Vector::Zero(d);
        blk.bv = Vector::Zero(d);
        blk.bo = Vector::Zero(d);
        blk.ln2_g = Vector::Ones(d);
        blk.ln2_b = Vector::Zero(d);
        blk.W1 = randmat(cfg_.d_ff, d);
        blk.b1 = Vector::Zero(cfg_.d_ff);
        blk.W2 = randmat(d, cfg_.d_ff);
        blk.b2 = Vector::Zero(d);
    }
    params_.lnf_g = Vector::Ones(d);
    params_.lnf_b = Vector::Zero(d);

    // <pause> starts at the mean of the non-special embedding rows.
    Vector mean = Vector::Zero(d);
    int count = 0;
    for (int t = 0; t < V; ++t) {
        if (tokenizer_.is_special(t)) continue;
        mean += params_.E.row(t).transpose();
        ++count;
    }
    if (count > 0) params_.E.row(tokenizer_.pause_id()) = (mean / count).transpose();
}

head::HeadWeights Backbone::head_view() const {
    head::HeadWeights h;
    h.W = params_.W_head;
    h.bias = params_.b_head;
    h.E = params_.E;
    return h;
}

Matrix Backbone::positional_encoding(int T, int offset) const {
    const int d = cfg_.d;
    Matrix pos(d, T);
    for (int t = 0; t < T; ++t) {
        const double p = static_cast<double>(t + offset);
        for (int i = 0; i < d / 2; ++i) {
            const double rate = std::pow(10000.0, -2.0 * i / d);
            pos(2 * i, t) = std::sin(p * rate);
            pos(2 * i + 1, t) = std::cos(p * rate);
        }
    }
    return pos;
}

namespace {

// Per-column layer norm; returns normalized matrix, stores 1/sigma per column.
Matrix layer_norm_forward(const Matrix& x, const Vector& gamma, const Vector& beta,
                          double eps, Matrix& x_hat, Vector& inv_sigma) {
    const Eigen::Index d = x.rows();
    const Eigen::Index T = x.cols();
    x_hat.resize(d, T);
    inv_sigma.resize(T);
    Matrix y(d, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double mu = x.col(t).mean();
        Vector centered = x.col(t).array() - mu;
        const double var = centered.squaredNorm() / static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[t] = is;
        x_hat.col(t) = centered * is;
        y.col(t) = gamma.cwiseProduct(x_hat.col(t)) + beta;
    }
    return y;
}

// Backward through layer norm. Accumulates dgamma/dbeta, returns dx.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& x_hat, const Vector& inv_sigma,
                           const Vector& gamma, Vector& dgamma, Vector& dbeta) {
    const Eigen::Index d = x_hat.rows();
    const Eigen::Index T = x_hat.cols();
    Matrix dx(d, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        dgamma += dy.col(t).cwiseProduct(x_hat.col(t));
        dbeta += dy.col(t);
        const Vector dhat = dy.col(t).cwiseProduct(gamma);
        const double m1 = dhat.mean();
        const double m2 = dhat.cwiseProduct(x_hat.col(t)).mean();
        dx.col(t) = inv_sigma[t] * (dhat.array() - m1 - x_hat.col(t).array() * m2);
    }
    return dx;
}

}  // namespace

ForwardCache Backbone::forward_cached(const std::vector<int>& tokens) const {
    const int T = static_cast<int>(tokens.size());
    if (T == 0) fail(ErrorCode::invalid_argument, "forward: empty token sequence");
    if (T > cfg_.max_seq) {
        fail(ErrorCode::invalid_argument, "forward: sequence length " + std::to_string(T) +
                                              " exceeds max_seq " + std::to_string(cfg_.max_seq));
    }
    const int V = tokenizer_.vocab_size();
    for (int id : tokens) {
        if (id < 0 || id >= V) {
            fail(ErrorCode::invalid_argument,
                 "forward: token id " + std::to_string(id) + " outside vocabulary");
        }
    }
    const int d = cfg_.d;
    const int heads = cfg_.n_heads;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ForwardCache cache;
    cache.tokens = tokens;
    cache.x0 = positional_encoding(T);
    for (int t = 0; t < T; ++t) {
        cache.x0.col(t) += params_.E.row(tokens[static_cast<std::size_t>(t)]).transpose();
    }

    Matrix x = cache.x0;
    cache.blocks.resize(params_.blocks.size());
    for (std::size_t l = 0; l < params_.blocks.size(); ++l) {
        const BlockParams& blk = params_.blocks[l];
        BlockCache& bc = cache.blocks[l];
        bc.x_in = x;

        const Matrix a =
            layer_norm_forward(x, blk.ln1_g, blk.ln1_b, cfg_.ln_eps, bc.ln1_hat, bc.ln1_inv_sigma);
        bc.Q = (blk.Wq * a).colwise() + blk.bq;
        bc.K = (blk.Wk * a).colwise() + blk.bk;
        bc.V = (blk.Wv * a).colwise() + blk.bv;

        bc.ctx.resize(d, T);
        bc.attn.assign(static_cast<std::size_t>(heads), Matrix());
        for (int h = 0; h < heads; ++h) {
            const auto Qh = bc.Q.middleRows(h * dh, dh);
            const auto Kh = bc.K.middleRows(h * dh, dh);
            const auto Vh = bc.V.middleRows(h * dh, dh);
            Matrix& alpha = bc.attn[static_cast<std::size_t>(h)];
            alpha = Matrix::Zero(T, T);
            for (int t = 0; t < T; ++t) {
                double best = -1e300;
                for (int s = 0; s <= t; ++s) {
                    const double sc = Qh.col(t).dot(Kh.col(s)) * scale;
                    alpha(t, s) = sc;
                    best = std::max(best, sc);
                }
                double z = 0.0;
                for (int s = 0; s <= t; ++s) {
                    alpha(t, s) = std::exp(alpha(t, s) - best);
                    z += alpha(t, s);
                }
                for (int s = 0; s <= t; ++s) alpha(t, s) /= z;
                bc.ctx.col(t).segment(h * dh, dh) = Vh.leftCols(t + 1) * alpha.row(t).head(t + 1).transpose();
            }
        }
        const Matrix attn_out = (blk.Wo * bc.ctx).colwise() + blk.bo;
        bc.x_mid = x + attn_out;

        const Matrix m = layer_norm_forward(bc.x_mid, blk.ln2_g, blk.ln2_b, cfg_.ln_eps,
                                            bc.ln2_hat, bc.ln2_inv_sigma);
        bc.mlp_pre = (blk.W1 * m).colwise() + blk.b1;
        bc.mlp_act = bc.mlp_pre.unaryExpr([](double v) { return gelu(v); });
        x = bc.x_mid + ((blk.W2 * bc.mlp_act).colwise() + blk.b2);
    }

    cache.pre_lnf = x;
    cache.hidden = layer_norm_forward(x, params_.lnf_g, params_.lnf_b, cfg_.ln_eps,
                                      cache.lnf_hat, cache.lnf_inv_sigma);
    return cache;
}

Matrix Backbone::forward_hidden(const std::vector<int>& tokens) const {
    return forward_cached(tokens).hidden;
}

Matrix Backbone::logits_from_hidden(const Matrix& hidden) const {
    Matrix logits = params_.W_head * hidden;
    logits.colwise() += params_.b_head;
    return logits;
}

void Backbone::backward(const ForwardCache& cache, const Matrix& d_hidden, ParamSet& grads) const {
    const int T = static_cast<int>(cache.tokens.size());
    const int d = cfg_.d;
    const int heads = cfg_.n_heads;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dx = layer_norm_backward(d_hidden, cache.lnf_hat, cache.lnf_inv_sigma, params_.lnf_g,
                                    grads.lnf_g, grads.lnf_b);

    for (std::size_t li = params_.blocks.size(); li-- > 0;) {
        const BlockParams& blk = params_.blocks[li];
        const BlockCache& bc = cache.blocks[li];
        BlockParams& bg = grads.blocks[li];

        // MLP sublayer: x_out = x_mid + W2 gelu(W1 m + b1) + b2.
        Matrix m = (bc.ln2_hat.array().colwise() * blk.ln2_g.array()).matrix();
        m.colwise() += blk.ln2_b;
        Matrix d_act = blk.W2.transpose() * dx;
        bg.W2 += dx * bc.mlp_act.transpose();
        bg.b2 += dx.rowwise().sum();
        Matrix d_pre = d_act.cwiseProduct(bc.mlp_pre.unaryExpr([](double v) { return gelu_grad(v); }));
        bg.W1 += d_pre * m.transpose();
        bg.b1 += d_pre.rowwise().sum();
        const Matrix dm = blk.W1.transpose() * d_pre;
        Matrix dx_mid = dx + layer_norm_backward(dm, bc.ln2_hat, bc.ln2_inv_sigma, blk.ln2_g,
                                                 bg.ln2_g, bg.ln2_b);

        // Attention sublayer: x_mid = x_in + Wo ctx + bo.
        bg.Wo += dx_mid * bc.ctx.transpose();
        bg.bo += dx_mid.rowwise().sum();
        const Matrix d_ctx = blk.Wo.transpose() * dx_mid;

        Matrix dQ = Matrix::Zero(d, T);
        Matrix dK = Matrix::Zero(d, T);
        Matrix dV = Matrix::Zero(d, T);
        for (int h = 0; h < heads; ++h) {
            const auto Qh = bc.Q.middleRows(h * dh, dh);
            const auto Kh = bc.K.middleRows(h * dh, dh);
            const auto Vh = bc.V.middleRows(h * dh, dh);
            const auto d_ctx_h = d_ctx.middleRows(h * dh, dh);
            const Matrix& alpha = bc.attn[static_cast<std::size_t>(h)];

            // ctx_h = Vh * alpha^T  =>  dVh = d_ctx_h * alpha, dalpha = d_ctx_h^T Vh.
            dV.middleRows(h * dh, dh) += d_ctx_h * alpha;
            Matrix d_alpha = d_ctx_h.transpose() * Vh;  // T x T
            // Softmax rows (causal support).
            Matrix d_scores = Matrix::Zero(T, T);
            for (int t = 0; t < T; ++t) {
                double dot = 0.0;
                for (int s = 0; s <= t; ++s) dot += d_alpha(t, s) * alpha(t, s);
                for (int s = 0; s <= t; ++s) {
                    d_scores(t, s) = alpha(t, s) * (d_alpha(t, s) - dot);
                }
            }
            dQ.middleRows(h * dh, dh) += (Kh * d_scores.transpose()) * scale;
            dK.middleRows(h * dh, dh) += (Qh * d_scores) * scale;
        }

        Matrix a = (bc.ln1_hat.array().colwise() * blk.ln1_g.array()).matrix();
        a.colwise() += blk.ln1_b;
        bg.Wq += dQ * a.transpose();
        bg.Wk += dK * a.transpose();
        bg.Wv += dV * a.transpose();
        bg.bq += dQ.rowwise().sum();
        bg.bk += dK.rowwise().sum();
        bg.bv += dV.rowwise().sum();
        const Matrix da = blk.Wq.transpose() * dQ + blk.Wk.transpose() * dK + blk.Wv.transpose() * dV;
        dx = dx_mid + layer_norm_backward(da, bc.ln1_hat, bc.ln1_inv_sigma, blk.ln1_g,
                                          bg.ln1_g, bg.ln1_b);
    }

    for (int t = 0; t < T; ++t) {
        grads.E.row(cache.tokens[static_cast<std::size_t>(t)]) += dx.col(t).transpose();
    }
}

Matrix Backbone::states_for_range(const Matrix& hidden, std::size_t begin, std::size_t end) const {
    if (begin >= end) fail(ErrorCode::invalid_argument, "states_for_range: empty span");
    if (end > static_cast<std::size_t>(hidden.cols())) {
        fail(ErrorCode::invalid_argument, "states_for_range: range exceeds sequence");
    }
    return hidden.middleCols(static_cast<Eigen::Index>(begin),
                             static_cast<Eigen::Index>(end - begin));
}

DecodeState Backbone::decode_begin() const {
    DecodeState st;
    st.k_cache.assign(params_.blocks.size(), Matrix(cfg_.d, 0));
    st.v_cache.assign(params_.blocks.size(), Matrix(cfg_.d, 0));
    return st;
}

const Vector& Backbone::decode_step(DecodeState& st, int token) const {
    const int V = tokenizer_.vocab_size();
    if (token < 0 || token >= V) {
        fail(ErrorCode::invalid_argument, "decode: token id outside vocabulary");
    }
    const int t = static_cast<int>(st.tokens.size());
    if (t >= cfg_.max_seq) fail(ErrorCode::invalid_argument, "decode: exceeded max_seq");
    const int d = cfg_.d;
    const int heads = cfg_.n_heads;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    st.tokens.push_back(token);
    Vector x = params_.E.row(token).transpose() + positional_encoding(1, t).col(0);

    Matrix dummy_hat;
    Vector dummy_sigma;
    for (std::size_t l = 0; l < params_.blocks.size(); ++l) {
        const BlockParams& blk = params_.blocks[l];
        const Matrix a1 = layer_norm_forward(x, blk.ln1_g, blk.ln1_b, cfg_.ln_eps, dummy_hat, dummy_sigma);
        const Vector a = a1.col(0);
        const Vector q = blk.Wq * a + blk.bq;
        const Vector k = blk.Wk * a + blk.bk;
        const Vector v = blk.Wv * a + blk.bv;
        Matrix& K = st.k_cache[l];
        Matrix& V_ = st.v_cache[l];
        K.conservativeResize(Eigen::NoChange, t + 1);
        V_.conservativeResize(Eigen::NoChange, t + 1);
        K.col(t) = k;
        V_.col(t) = v;

        Vector ctx(d);
        for (int h = 0; h < heads; ++h) {
            const auto Kh = K.middleRows(h * dh, dh);
            const auto Vh = V_.middleRows(h * dh, dh);
            const Vector qh = q.segment(h * dh, dh);
            Vector sc = (Kh.transpose() * qh) * scale;
            const double best = sc.maxCoeff();
            Vector w = (sc.array() - best).exp();
            w /= w.sum();
            ctx.segment(h * dh, dh) = Vh * w;
        }
        x += blk.Wo * ctx + blk.bo;

        const Matrix m1 = layer_norm_forward(x, blk.ln2_g, blk.ln2_b, cfg_.ln_eps, dummy_hat, dummy_sigma);
        const Vector pre = blk.W1 * m1.col(0) + blk.b1;
        const Vector act = pre.unaryExpr([](double vv) { return gelu(vv); });
        x += blk.W2 * act + blk.b2;
    }
    const Matrix hf = layer_norm_forward(x, params_.lnf_g, params_.lnf_b, cfg_.ln_eps, dummy_hat, dummy_sigma);
    st.last_hidden = hf.col(0);
    st.last_logits = params_.W_head * st.last_hidden + params_.b_head;
    return st.last_logits;
}

int Backbone::sample_token(const Vector& logits, const GenerationParams& params, Rng& rng) const {
    const int V = static_cast<int>(logits.size());
    Vector masked = logits;
    if (params.suppress_pause) masked[tokenizer_.pause_id()] = -1e300;
    std::vector<int> order(static_cast<std::size_t>(V));
    std::iota(order.begin(), order.end(), 0);
    if (params.greedy) {
        return *std::min_element(order.begin(), order.end(), [&](int a, int b) {
            if (masked[a] != masked[b]) return masked[a] > masked[b];
            return a < b;
        });
    }
    const Vector p = head::softmax(masked / params.temperature);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return a < b;
    });
    // Smallest prefix whose mass reaches top_p.
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        mass += p[order[keep]];
        ++keep;
        if (mass >= params.top_p) break;
    }
    const double u = rng.uniform() * mass;
    double acc = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        acc += p[order[i]];
        if (u < acc) return order[i];
    }
    return order[keep - 1];
}

Backbone::GenerationResult Backbone::generate(const std::vector<int>& prompt,
                                              const GenerationParams& params,
                                              const StepHook& hook) const {
    params.validate();
    GenerationResult result;
    if (params.max_tokens == 0) return result;
    Rng rng(params.seed);
    DecodeState st = decode_begin();
    if (prompt.empty()) fail(ErrorCode::invalid_argument, "generate: empty prompt");
    for (std::size_t i = 0; i + 1 < prompt.size(); ++i) decode_step(st, prompt[i]);
    const Vector* logits = &decode_step(st, prompt.back());

    while (static_cast<int>(result.tokens.size()) < params.max_tokens) {
        if (static_cast<int>(st.tokens.size()) >= cfg_.max_seq) {
            result.truncated = true;
            break;
        }
        int next;
        StepInfo info;
        info.step = static_cast<int>(result.tokens.size());
        info.generated = &result.tokens;
        std::optional<int> forced;
        if (hook) forced = hook(info);
        next = forced ? *forced : sample_token(*logits, params, rng);
        result.tokens.push_back(next);
        if (next == tokenizer_.eos_id()) return result;
        logits = &decode_step(st, next);
    }
    if (static_cast<int>(result.tokens.size()) >= params.max_tokens) result.truncated = true;
    return result;
}

void Backbone::freeze(const std::string& tensor_name) { frozen_.insert(tensor_name); }
void Backbone::unfreeze(const std::string& tensor_name) { frozen_.erase(tensor_name); }

void Backbone::freeze_all() {
    params_.for_each_tensor([&](const std::string& name, const double*, Eigen::Index, Eigen::Index) {
        frozen_.insert(name);
    });
}

bool Backbone::is_frozen(const std::string& tensor_name) const {
    return frozen_.count(tensor_name) > 0;
}

ParamSet Backbone::zero_grads() const {
    ParamSet g = params_;
    g.for_each_tensor([](const std::string&, double* data, Eigen::Index rows, Eigen::Index cols) {
        std::fill(data, data + rows * cols, 0.0);
    });
    return g;
}

void Backbone::apply_gradients(const ParamSet& grads, double learning_rate) {
    std::vector<std::pair<const double*, Eigen::Index>> grad_list;
    grads.for_each_tensor([&](const std::string&, const double* data, Eigen::Index rows,
                              Eigen::Index cols) { grad_list.emplace_back(data, rows * cols); });
    std::size_t idx = 0;
    const int pause = tokenizer_.pause_id();
    params_.for_each_tensor([&](const std::string& name, double* data, Eigen::Index rows,
                                Eigen::Index cols) {
        const auto [gdata, gsize] = grad_list[idx++];
        if (rows * cols != gsize) fail(ErrorCode::internal, "apply_gradients: shape mismatch");
        const bool frozen = frozen_.count(name) > 0;
        if (name == "E" && frozen && pause_row_trainable_) {
            // Column-major: row `pause` strides by V.
            for (Eigen::Index c = 0; c < cols; ++c) {
                data[c * rows + pause] -= learning_rate * gdata[c * rows + pause];
            }
            return;
        }
        if (frozen) return;
        for (Eigen::Index i = 0; i < rows * cols; ++i) data[i] -= learning_rate * gdata[i];
    });
}

std::uint64_t Backbone::tensor_checksum(const std::string& name) const {
    std::uint64_t sum = 0;
    bool found = false;
    params_.for_each_tensor([&](const std::string& n, const double* data, Eigen::Index rows,
                                Eigen::Index cols) {
        if (n == name) {
            sum = fnv1a64(data, sizeof(double) * static_cast<std::size_t>(rows * cols));
            found = true;
        }
    });
    if (!found) fail(ErrorCode::invalid_argument, "unknown tensor: " + name);
    return sum;
}

Backbone clone_frozen_teacher(const Backbone& backbone) {
    Backbone teacher = backbone;
    teacher.freeze_all();
    teacher.set_pause_row_trainable(false);
    return teacher;
}

// --- checkpoint serialization ---

namespace {

constexpr char kMagic[8] = {'S', 'P', 'O', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_f64(std::string& out, double v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) fail(ErrorCode::parse, "checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void Backbone::save_checkpoint(const std::string& path) const {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(cfg_.d));
    put_u32(out, static_cast<std::uint32_t>(cfg_.n_heads));
    put_u32(out, static_cast<std::uint32_t>(cfg_.n_blocks));
    put_u32(out, static_cast<std::uint32_t>(cfg_.d_ff));
    put_u32(out, static_cast<std::uint32_t>(cfg_.max_seq));
    put_f64(out, cfg_.ln_eps);
    put_f64(out, cfg_.init_std);
    put_u64(out, cfg_.init_seed);

    put_u32(out, static_cast<std::uint32_t>(tokenizer_.vocab_size()));
    for (int i = 0; i < tokenizer_.vocab_size(); ++i) {
        put_str(out, tokenizer_.piece(i));
        out.push_back(tokenizer_.is_special(i) ? '\1' : '\0');
    }

    std::uint32_t tensor_count = 0;
    params_.for_each_tensor([&](const std::string&, const double*, Eigen::Index, Eigen::Index) {
        ++tensor_count;
    });
    put_u32(out, tensor_count);
    params_.for_each_tensor([&](const std::string& name, const double* data, Eigen::Index rows,
                                Eigen::Index cols) {
        put_str(out, name);
        put_u32(out, static_cast<std::uint32_t>(rows));
        put_u32(out, static_cast<std::uint32_t>(cols));
        out.append(reinterpret_cast<const char*>(data),
                   sizeof(double) * static_cast<std::size_t>(rows * cols));
    });

    put_u32(out, static_cast<std::uint32_t>(frozen_.size()));
    for (const auto& name : frozen_) put_str(out, name);
    out.push_back(pause_row_trainable_ ? '\1' : '\0');

    io::write_file_atomic(path, out);
}

Backbone Backbone::load_checkpoint(const std::string& path) {
    const std::string buf = io::read_file(path);
    Reader r{buf};
    r.need(8);
    if (std::memcmp(buf.data(), kMagic, 8) != 0) {
        fail(ErrorCode::parse, "checkpoint: bad magic in " + path);
    }
    r.pos = 8;
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        fail(ErrorCode::parse, "checkpoint: unsupported version " + std::to_string(version));
    }
    BackboneConfig cfg;
    cfg.d = static_cast<int>(r.u32());
    cfg.n_heads = static_cast<int>(r.u32());
    cfg.n_blocks = static_cast<int>(r.u32());
    cfg.d_ff = static_cast<int>(r.u32());
    cfg.max_seq = static_cast<int>(r.u32());
    cfg.ln_eps = r.f64();
    cfg.init_std = r.f64();
    cfg.init_seed = r.u64();

    const std::uint32_t vocab = r.u32();
    std::vector<std::string> pieces;
    std::vector<bool> special;
    pieces.reserve(vocab);
    for (std::uint32_t i = 0; i < vocab; ++i) {
        pieces.push_back(r.str());
        r.need(1);
        special.push_back(buf[r.pos++] != '\0');
    }
    Backbone model(cfg, ToyTokenizer::from_table(std::move(pieces), std::move(special)));

    const std::uint32_t tensor_count = r.u32();
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        const std::string name = r.str();
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        bool assigned = false;
        model.params_.for_each_tensor([&](const std::string& n, double* data, Eigen::Index tr,
                                          Eigen::Index tc) {
            if (n != name) return;
            if (tr != static_cast<Eigen::Index>(rows) || tc != static_cast<Eigen::Index>(cols)) {
                fail(ErrorCode::parse, "checkpoint: shape mismatch for tensor " + name);
            }
            const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(tr * tc);
            r.need(bytes);
            std::memcpy(data, buf.data() + r.pos, bytes);
            assigned = true;
        });
        if (!assigned) fail(ErrorCode::parse, "checkpoint: unknown tensor " + name);
        r.pos += sizeof(double) * static_cast<std::size_t>(rows) * cols;
    }

    const std::uint32_t frozen_count = r.u32();
    for (std::uint32_t i = 0; i < frozen_count; ++i) model.frozen_.insert(r.str());
    r.need(1);
    model.pause_row_trainable_ = buf[r.pos++] != '\0';
    return model;
}

}  // namespace spot::model
