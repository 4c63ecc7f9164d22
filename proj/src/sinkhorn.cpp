#include "spotkit/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace spot::ot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_k exp(x_k)) over finite-or-neg-inf entries.
double log_sum_exp(const Vector& x) {
    const double m = x.maxCoeff();
    if (!std::isfinite(m)) return kNegInf;
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) s += std::exp(x[k] - m);
    return m + std::log(s);
}

Vector safe_log(const Vector& v) {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out[i] = v[i] > 0.0 ? std::log(v[i]) : kNegInf;
    }
    return out;
}

}  // namespace

void TransportProblem::validate() const {
    const Eigen::Index m = cost.rows();
    const Eigen::Index n = cost.cols();
    if (m == 0 || n == 0) fail(ErrorCode::invalid_argument, "transport problem: empty cost matrix");
    if (source.size() != m || target.size() != n) {
        fail(ErrorCode::invalid_argument, "transport problem: marginal lengths do not match cost");
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double c = cost(i, j);
            if (!std::isfinite(c) || c < 0.0) {
                fail(ErrorCode::numeric, "transport problem: cost entries must be finite and >= 0");
            }
        }
    }
    auto check_marginal = [](const Vector& v, const char* name) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i]) || v[i] < 0.0) {
                fail(ErrorCode::numeric,
                     std::string("transport problem: ") + name + " entries must be finite and >= 0");
            }
            sum += v[i];
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            fail(ErrorCode::invalid_argument,
                 std::string("transport problem: ") + name + " must sum to 1");
        }
    };
    check_marginal(source, "source marginal");
    check_marginal(target, "target marginal");
}

void SinkhornParams::validate() const {
    if (!(blur > 0.0)) fail(ErrorCode::invalid_argument, "sinkhorn: blur must be > 0");
    if (!(scaling > 0.0) || scaling > 1.0) {
        fail(ErrorCode::invalid_argument, "sinkhorn: scaling must lie in (0, 1]");
    }
    if (inner_iters < 1) fail(ErrorCode::invalid_argument, "sinkhorn: inner_iters must be >= 1");
    if (!(delta > 0.0)) fail(ErrorCode::invalid_argument, "sinkhorn: delta must be > 0");
}

double lower_median(const Matrix& m) {
    std::vector<double> entries(m.data(), m.data() + m.size());
    const std::size_t k = (entries.size() - 1) / 2;
    std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k),
                     entries.end());
    return entries[k];
}

double one_to_set_value(const Vector& cost_row, const Vector& target, double epsilon) {
    if (cost_row.size() != target.size()) {
        fail(ErrorCode::invalid_argument, "one_to_set_value: cost/target length mismatch");
    }
    if (cost_row.size() == 0) {
        fail(ErrorCode::invalid_argument, "one_to_set_value: empty problem");
    }
    double transport = 0.0;
    double entropy = 0.0;
    for (Eigen::Index j = 0; j < target.size(); ++j) {
        const double b = target[j];
        transport += b * cost_row[j];
        if (b > 0.0) entropy += b * (std::log(b) - 1.0);
    }
    return transport - epsilon * entropy;
}

TransportSolution sinkhorn_value(const TransportProblem& problem,
                                 const SinkhornParams& params) {
    problem.validate();
    params.validate();

    const Eigen::Index m = problem.cost.rows();
    const Eigen::Index n = problem.cost.cols();
    const Matrix& C = problem.cost;
    const Vector log_a = safe_log(problem.source);
    const Vector log_b = safe_log(problem.target);

    const double eps_min = params.epsilon_min();

    // Epsilon schedule: anneal geometrically from max(eps_min, median(C)),
    // then one final level at eps_min itself.
    std::vector<double> levels;
    double eps = std::max(eps_min, lower_median(C));
    while (eps > eps_min + 1e-12) {
        levels.push_back(eps);
        if (params.scaling == 1.0) break;
        eps = std::max(eps_min, eps * params.scaling);
    }
    levels.push_back(eps_min);

    // Dual potentials in cost units: u_i = exp(f_i / eps), v_j = exp(g_j / eps).
    // Keeping f, g (rather than u, v) makes warm starts across epsilon levels
    // scale-stable and avoids overflow at small epsilon.
    Vector f = Vector::Zero(m);
    Vector g = Vector::Zero(n);
    Vector f_prev(m), g_prev(n), work_n(n), work_m(m);

    // Each level runs a fixed budget of at least inner_iters; the floor of
    // 2000 keeps the marginals feasible at small blur, where per-level
    // contraction degrades and the nominal L alone leaves the row sums off.
    // The fixed-point break below makes converged levels cheap.
    const int budget = std::max(params.inner_iters, 2000);
    Matrix c_scaled(m, n);
    for (std::size_t level = 0; level < levels.size(); ++level) {
        const double level_eps = levels[level];
        c_scaled = C / level_eps;
        for (int it = 0; it < budget; ++it) {
            f_prev = f;
            g_prev = g;
            // Row update: f_i = eps*log a_i - eps*LSE_j((g_j - C_ij)/eps).
            // exp(-inf) underflows to 0, which handles zero-mass entries.
            for (Eigen::Index i = 0; i < m; ++i) {
                if (log_a[i] == kNegInf) {
                    f[i] = kNegInf;
                    continue;
                }
                work_n = (g / level_eps) - c_scaled.row(i).transpose();
                const double peak = work_n.maxCoeff();
                if (peak == kNegInf) {
                    f[i] = kNegInf;
                    continue;
                }
                const double lse = peak + std::log((work_n.array() - peak).exp().sum());
                f[i] = level_eps * (log_a[i] - lse);
            }
            // Column update last, so plan column sums match b.
            for (Eigen::Index j = 0; j < n; ++j) {
                if (log_b[j] == kNegInf) {
                    g[j] = kNegInf;
                    continue;
                }
                work_m = (f / level_eps) - c_scaled.col(j);
                const double peak = work_m.maxCoeff();
                if (peak == kNegInf) {
                    g[j] = kNegInf;
                    continue;
                }
                const double lse = peak + std::log((work_m.array() - peak).exp().sum());
                g[j] = level_eps * (log_b[j] - lse);
            }
            // Numerical fixed point: once updates sit at rounding level the
            // remaining budget cannot make further progress.
            double df = 0.0;
            double dg = 0.0;
            double scale = 1.0;
            for (Eigen::Index i = 0; i < m; ++i) {
                if (f[i] == kNegInf) continue;
                df = std::max(df, std::abs(f[i] - f_prev[i]));
                scale = std::max(scale, std::abs(f[i]));
            }
            for (Eigen::Index j = 0; j < n; ++j) {
                if (g[j] == kNegInf) continue;
                dg = std::max(dg, std::abs(g[j] - g_prev[j]));
                scale = std::max(scale, std::abs(g[j]));
            }
            if (df <= 1e-13 * scale && dg <= 1e-13 * scale) break;
        }
    }

    TransportSolution sol;
    sol.epsilon_final = eps_min;
    sol.plan.resize(m, n);
    double transport = 0.0;
    double entropy = 0.0;
    const double log_delta = std::log(params.delta);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            double log_pi;
            if (f[i] == kNegInf || g[j] == kNegInf) {
                log_pi = kNegInf;
            } else {
                log_pi = (f[i] + g[j] - C(i, j)) / eps_min;
            }
            const double pi = std::exp(log_pi);
            sol.plan(i, j) = pi;
            transport += pi * C(i, j);
            // Positivity floor applies to the log argument only.
            entropy += pi * (std::max(log_pi, log_delta) - 1.0);
        }
    }
    sol.value = transport - eps_min * entropy;
    if (!std::isfinite(sol.value)) {
        fail(ErrorCode::numeric, "sinkhorn: value did not converge to a finite number");
    }
    return sol;
}

}  // namespace spot::ot
