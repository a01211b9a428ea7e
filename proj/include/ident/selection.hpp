#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ident/regression.hpp"
#include "ident/simulate.hpp"

namespace ident {

/// Time Evolution Error: evolve the candidate from the first observed slice
/// over the whole record and accumulate the L1 space-time discrepancy.
/// Diverged evolutions score +infinity.
inline double tee(const PdeSpec& candidate, const Field& data, double fine_dt,
                  double abort_above = std::numeric_limits<double>::infinity()) {
    const Grid& g = data.grid;
    if (fine_dt > g.dt / 10.0 + 1e-15) throw std::invalid_argument("tee requires fine_dt <= dt/10");
    // accumulate the space-time L1 error on the fly so a candidate that is
    // already worse than abort_above stops evolving early
    double acc = (candidate.initial - data.values.col(0)).cwiseAbs().sum();
    const double cell = g.dx * g.dt;
    EvolveResult ev = evolve_candidate(
        candidate, fine_dt, g.nt, candidate.initial, [&](int n, const Vector& u) {
            acc += (u - data.values.col(n)).cwiseAbs().sum();
            return acc * cell <= abort_above;
        });
    if (ev.diverged) return std::numeric_limits<double>::infinity();
    return acc * cell;  // if aborted this is a lower bound, already > abort_above
}

struct MteeOptions {
    double diverged_penalty_scale = 1e3;  // one unstable window costs 1e3*||U||_2
};

/// Multi-shooting TEE: average w-step-ahead L2 error over all shooting starts.
inline double mtee(const PdeSpec& candidate, const Field& data, double fine_dt, int w,
                   MteeOptions opts = {}) {
    const Grid& g = data.grid;
    if (w < 1 || w >= g.nt) throw std::invalid_argument("window w out of range");
    const double penalty = opts.diverged_penalty_scale * data.values.norm();
    double acc = 0.0;
    int shots = 0;
    for (int n = 0; n + w < g.nt; ++n) {
        PdeSpec local = candidate;
        local.initial = data.values.col(n);
        EvolveResult ev = evolve_candidate(local, fine_dt, w + 1, local.initial);
        if (ev.diverged)
            acc += penalty;
        else
            acc += (ev.states.col(w) - data.values.col(n + w)).norm();
        ++shots;
    }
    return acc / shots;
}

/// Cross-validation estimation error: fit the support on the first
/// ceil(alpha*H) rows, return the residual on the held-out rows.
inline double cee(const LinearSystem& sys, const std::vector<int>& support, double alpha = 0.8) {
    if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("alpha must be in (0,1)");
    if (support.empty()) throw std::invalid_argument("empty support");
    const int H = sys.nrows();
    const int h1 = std::min(H - 1, static_cast<int>(std::ceil(alpha * H)));
    if (h1 < 1) throw std::invalid_argument("too few rows to split");

    Matrix A1 = sys.A.topRows(h1);
    Vector b1 = sys.b.head(h1);
    Matrix sub(h1, support.size());
    for (size_t j = 0; j < support.size(); ++j) sub.col(j) = A1.col(support[j]);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(sub);
    Vector c = cod.solve(b1);

    Matrix A2 = sys.A.bottomRows(H - h1);
    Vector b2 = sys.b.tail(H - h1);
    Vector pred = Vector::Zero(H - h1);
    for (size_t j = 0; j < support.size(); ++j) pred += A2.col(support[j]) * c[j];
    return (b2 - pred).norm();
}

struct RrResult {
    int k = 0;          // chosen sparsity (1-based)
    bool plateau = true;  // false when no s_k dropped below rho (argmin fallback)
    std::vector<double> scores;  // s_k for k = 1..K-n_rr
};

/// Reduction in Residual: residuals[k-1] is the squared residual R_k of the
/// k-sparse candidate. Picks the smallest k with
/// s_k = (R_k - R_{k+N_RR}) / (N_RR * R_1) below rho.
inline RrResult rr_select(const std::vector<double>& residuals, int n_rr = 5, double rho = 0.015) {
    const int K = static_cast<int>(residuals.size());
    if (n_rr < 1) throw std::invalid_argument("n_rr must be >= 1");
    if (K <= n_rr) throw std::invalid_argument("need more residuals than n_rr");
    const double r1 = residuals[0];
    if (r1 <= 0.0) return {1, true, {}};  // already exact at sparsity one

    RrResult out;
    for (int k = 1; k <= K - n_rr; ++k)
        out.scores.push_back((residuals[k - 1] - residuals[k - 1 + n_rr]) / (n_rr * r1));
    for (int k = 1; k <= K - n_rr; ++k)
        if (out.scores[k - 1] < rho) {
            out.k = k;
            out.plateau = true;
            return out;
        }
    // no plateau: fall back to the smallest score
    const auto it = std::min_element(out.scores.begin(), out.scores.end());
    out.k = static_cast<int>(it - out.scores.begin()) + 1;
    out.plateau = false;
    return out;
}

/// Reduction-in-Residual-Curve selection: errors[l-1] is the global fitting
/// error E of the l-sparse candidate; the score is E + rho*l/N_f. A
/// non-positive rho selects the default rule rho = mean of the errors.
inline int rrc_select(const std::vector<double>& errors, double rho = 0.0,
                      int n_features = 0) {
    if (errors.empty()) throw std::invalid_argument("no candidate errors");
    const int L = static_cast<int>(errors.size());
    const int nf = n_features > 0 ? n_features : L + 1;
    if (rho <= 0.0) {
        double mean = 0.0;
        for (double e : errors) mean += e;
        rho = mean / L;
        if (rho <= 0.0) rho = 1.0;  // all-zero errors: complexity penalty decides
    }
    int best = 1;
    double best_score = std::numeric_limits<double>::infinity();
    for (int l = 1; l <= L; ++l) {
        const double s = errors[l - 1] + rho * static_cast<double>(l) / nf;
        if (s < best_score) {
            best_score = s;
            best = l;
        }
    }
    return best;
}

struct BeeResult {
    int nb = 0;
    bool plateau = true;
};

/// Base Element Expansion: block_magnitudes[i] holds the normalized block
/// magnitudes B(N_b) for nb_grid[i]; picks the smallest N_b at which the
/// max-over-features relative change to the next grid point is below tol.
inline BeeResult bee(const std::vector<int>& nb_grid, const std::vector<Vector>& block_magnitudes,
                     double plateau_tol = 0.05) {
    if (nb_grid.size() != block_magnitudes.size() || nb_grid.empty())
        throw std::invalid_argument("grid/magnitude size mismatch");
    for (size_t i = 1; i < nb_grid.size(); ++i) {
        const Vector& prev = block_magnitudes[i - 1];
        const Vector& cur = block_magnitudes[i];
        if (prev.size() != cur.size()) throw std::invalid_argument("inconsistent magnitude sizes");
        double rel = 0.0;
        for (int k = 0; k < cur.size(); ++k) {
            const double denom = std::max(std::abs(prev[k]), 1e-12);
            rel = std::max(rel, std::abs(cur[k] - prev[k]) / denom);
        }
        if (rel < plateau_tol) return {nb_grid[i - 1], true};
    }
    return {nb_grid.back(), false};
}

}  // namespace ident
