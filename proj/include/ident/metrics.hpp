#pragma once

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ident/assembly.hpp"
#include "ident/simulate.hpp"

namespace ident {

struct CoefficientErrors {
    double e_c = 0.0;    // relative l1 error
    double e2 = 0.0;     // relative l2 error
    double e_inf = 0.0;  // relative l-infinity error
};

inline CoefficientErrors coefficient_errors(const Vector& c_hat, const Vector& c_true) {
    if (c_hat.size() != c_true.size()) throw std::invalid_argument("length mismatch");
    if (c_true.lpNorm<1>() == 0.0) throw std::invalid_argument("zero true coefficient vector");
    Vector d = c_hat - c_true;
    return {d.lpNorm<1>() / c_true.lpNorm<1>(), d.norm() / c_true.norm(),
            d.lpNorm<Eigen::Infinity>() / c_true.lpNorm<Eigen::Infinity>()};
}

/// Grid-weighted residual error sqrt(dx*dt) * ||F (c_hat - c_true)||_2.
/// Coefficients are physical; the system's column scaling is applied back.
inline double residual_error(const LinearSystem& sys, const Vector& c_hat, const Vector& c_true) {
    if (c_hat.size() != sys.ncols() || c_true.size() != sys.ncols())
        throw std::invalid_argument("coefficient length mismatch");
    Vector d = c_hat - c_true;
    for (int k = 0; k < sys.ncols(); ++k) d[k] *= sys.cols[k].divisor;
    return std::sqrt(sys.dx * sys.dt) * (sys.A * d).norm();
}

struct DynamicError {
    double e_e = 0.0;
    bool diverged = false;
};

/// Evolution (dynamic) error: both models evolved from the same initial data,
/// dx*dt-weighted L1 mismatch of the trajectories.
inline DynamicError dynamic_error(const PdeSpec& pde_true, const PdeSpec& pde_hat,
                                  double fine_dt) {
    const Grid& g = pde_true.grid;
    EvolveResult a = evolve_candidate(pde_true, fine_dt, g.nt, pde_true.initial);
    EvolveResult b = evolve_candidate(pde_hat, fine_dt, g.nt, pde_true.initial);
    if (a.diverged || b.diverged) return {std::numeric_limits<double>::infinity(), true};
    return {(a.states - b.states).cwiseAbs().sum() * g.dx * g.dt, false};
}

struct SupportScores {
    double tpr = 0.0;
    double ppv = 0.0;
    double jaccard = 0.0;
    bool empty_estimate = false;
};

inline SupportScores support_scores(const std::vector<int>& support_hat,
                                    const std::vector<int>& support_true) {
    if (support_true.empty()) throw std::invalid_argument("empty true support");
    std::set<int> sh(support_hat.begin(), support_hat.end());
    std::set<int> st(support_true.begin(), support_true.end());
    int inter = 0;
    for (int k : sh)
        if (st.count(k)) ++inter;
    const int uni = static_cast<int>(sh.size() + st.size()) - inter;
    SupportScores out;
    out.tpr = static_cast<double>(inter) / st.size();
    out.jaccard = static_cast<double>(inter) / uni;
    if (sh.empty()) {
        out.empty_estimate = true;
        out.ppv = 0.0;
    } else {
        out.ppv = static_cast<double>(inter) / sh.size();
    }
    return out;
}

/// Noise-to-signal ratio of an assembled (unnormalized) system:
/// ||F c - b|| / min over active j of ||F[j]|| * |c_j|.
inline double nsr(const LinearSystem& sys, const Vector& c_true) {
    if (c_true.size() != sys.ncols()) throw std::invalid_argument("coefficient length mismatch");
    Vector scaled = c_true;
    for (int k = 0; k < sys.ncols(); ++k) scaled[k] *= sys.cols[k].divisor;
    const double resid = (sys.A * scaled - sys.b).norm();
    double signal = std::numeric_limits<double>::infinity();
    for (int k = 0; k < sys.ncols(); ++k) {
        if (scaled[k] == 0.0) continue;
        signal = std::min(signal, sys.A.col(k).norm() * std::abs(scaled[k]));
    }
    if (!std::isfinite(signal)) throw std::invalid_argument("zero coefficient vector");
    return resid / signal;
}

}  // namespace ident
