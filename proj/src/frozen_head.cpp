#include "spotkit/frozen_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spot::head {

void HeadWeights::validate() const {
    if (W.rows() == 0 || W.cols() == 0) {
        fail(ErrorCode::invalid_argument, "head: W must be non-empty");
    }
    if (E.rows() != W.rows() || E.cols() != W.cols()) {
        fail(ErrorCode::invalid_argument, "head: E shape must match W");
    }
    if (bias.size() != 0 && bias.size() != W.rows()) {
        fail(ErrorCode::invalid_argument, "head: bias length must equal vocab size");
    }
}

Vector softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    Vector p = (logits.array() - m).exp();
    const double z = p.sum();
    return p / z;
}

Vector head_distribution(const Vector& h, const HeadWeights& head) {
    if (h.size() != head.dim()) {
        fail(ErrorCode::invalid_argument, "head_distribution: hidden width mismatch");
    }
    if (!h.allFinite()) {
        fail(ErrorCode::numeric, "head_distribution: non-finite hidden state");
    }
    Vector logits = head.W * h;
    if (head.bias.size() != 0) logits += head.bias;
    return softmax(logits);
}

Vector soft_embed_from_distribution(const Vector& p, const Matrix& E) {
    return E.transpose() * p;
}

Vector soft_embed(const Vector& h, const HeadWeights& head) {
    return soft_embed_from_distribution(head_distribution(h, head), head.E);
}

std::vector<int> top_k_from_distribution(const Vector& p, int k) {
    const int v = static_cast<int>(p.size());
    if (k < 1 || k > v) {
        fail(ErrorCode::invalid_argument, "top_k: K must lie in [1, vocab]");
    }
    std::vector<int> ids(static_cast<std::size_t>(v));
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return a < b;
    });
    ids.resize(static_cast<std::size_t>(k));
    return ids;
}

std::vector<int> top_k_tokens(const Vector& h, const HeadWeights& head, int k) {
    return top_k_from_distribution(head_distribution(h, head), k);
}

}  // namespace spot::head
