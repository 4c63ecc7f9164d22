#pragma once

#include <vector>

#include "spotkit/common.hpp"

namespace spot::head {

// Output projection (W, b) plus the token embedding matrix E. All three are
// held fixed while they are used as a projection for alignment.
struct HeadWeights {
    Matrix W;      // V x d
    Vector bias;   // length V; empty means zero
    Matrix E;      // V x d

    Eigen::Index vocab() const { return W.rows(); }
    Eigen::Index dim() const { return W.cols(); }
    void validate() const;
};

// softmax(W h + b). Entries positive and summing to 1.
Vector head_distribution(const Vector& h, const HeadWeights& head);

// Numerically stable softmax of raw logits.
Vector softmax(const Vector& logits);

// Vocabulary-induced soft embedding: phi(h) = p(.|h)^T E, the expectation of
// embedding rows under the head distribution.
Vector soft_embed(const Vector& h, const HeadWeights& head);

Vector soft_embed_from_distribution(const Vector& p, const Matrix& E);

// The K most probable token ids in descending probability. Equal
// probabilities are ordered by ascending token id.
std::vector<int> top_k_tokens(const Vector& h, const HeadWeights& head, int k = 20);

std::vector<int> top_k_from_distribution(const Vector& p, int k);

}  // namespace spot::head
