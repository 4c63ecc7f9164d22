#pragma once

#include "spotkit/common.hpp"

namespace spot::ot {

struct TransportProblem {
    Matrix cost;    // m x n, non-negative finite entries
    Vector source;  // a, length m, sums to 1
    Vector target;  // b, length n, sums to 1

    void validate() const;
};

struct SinkhornParams {
    double blur = 0.05;     // epsilon_min = blur^2
    double scaling = 0.9;   // annealing factor in (0, 1]
    int inner_iters = 50;   // L iterations per epsilon level
    double delta = 1e-8;    // positivity floor

    void validate() const;
    double epsilon_min() const { return blur * blur; }
};

struct TransportSolution {
    Matrix plan;          // m x n coupling
    double value = 0.0;   // entropic OT value at epsilon_final
    double epsilon_final = 0.0;
};

// Entropic OT value with epsilon-scaling. Anneals epsilon from
// max(eps_min, median(C)) by `scaling` down to eps_min with warm-started
// potentials, then runs one final round of inner iterations at eps_min so
// the returned plan and value share the same epsilon. Updates run in the
// log domain; the last update is the column one, so the plan's column sums
// match the target marginal to machine precision. In the converged regime
// the gradient of the value with respect to the cost equals the plan.
TransportSolution sinkhorn_value(const TransportProblem& problem,
                                 const SinkhornParams& params);

// Closed form for the 1 x n case, where the feasible set contains exactly
// one coupling (the target marginal itself):
//   sum_j b_j C_j - epsilon * sum_j b_j (log b_j - 1).
double one_to_set_value(const Vector& cost_row, const Vector& target, double epsilon);

// Lower median of all matrix entries.
double lower_median(const Matrix& m);

}  // namespace spot::ot
