#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ident/assembly.hpp"

namespace ident {

/// A support set with fitted coefficients and diagnostics. `coeffs` is a
/// full-length vector in physical scale (zeros off support); `residual` is
/// ||A c - b||_2 on the system the model was fitted on.
struct CandidateModel {
    std::vector<int> support;
    Vector coeffs;
    double residual = 0.0;
    int sparsity = 0;
    std::map<std::string, double> scores;
    bool rank_deficient = false;
    bool flagged = false;  // generic "look at me" flag (trim emptied, no convergence, ...)
};

namespace detail {

/// Minimum-norm least squares on selected columns; returns solution in the
/// system's (possibly normalized) column scale.
inline Vector solve_on_columns(const Matrix& A, const Vector& b, const std::vector<int>& cols,
                               bool* rank_deficient = nullptr) {
    Matrix sub(A.rows(), cols.size());
    for (size_t j = 0; j < cols.size(); ++j) sub.col(j) = A.col(cols[j]);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(sub);
    if (rank_deficient) *rank_deficient = cod.rank() < static_cast<Eigen::Index>(cols.size());
    return cod.solve(b);
}

}  // namespace detail

/// Least-squares fit restricted to a support; coefficients are reported in
/// physical scale (column normalizations undone).
inline CandidateModel least_squares_on_support(const LinearSystem& sys,
                                               const std::vector<int>& support) {
    if (support.empty()) throw std::invalid_argument("empty support");
    for (int k : support)
        if (k < 0 || k >= sys.ncols()) throw std::out_of_range("support index out of range");

    CandidateModel m;
    m.support = support;
    std::sort(m.support.begin(), m.support.end());
    m.sparsity = static_cast<int>(m.support.size());

    Vector sol = detail::solve_on_columns(sys.A, sys.b, m.support, &m.rank_deficient);
    Vector full = Vector::Zero(sys.ncols());
    for (size_t j = 0; j < m.support.size(); ++j) full[m.support[j]] = sol[j];
    m.residual = (sys.A * full - sys.b).norm();
    m.coeffs = sys.physical_coeffs(full);
    return m;
}

struct LassoOptions {
    double tol = 1e-8;
    int max_iter = 100000;
};

struct LassoResult {
    Vector coeffs;  // in the system's column scale
    bool converged = true;
    int iterations = 0;
    double objective = 0.0;
};

/// LASSO via accelerated proximal gradient (monotone variant: momentum restarts
/// whenever the objective would increase, so the objective is non-increasing).
inline LassoResult lasso(const LinearSystem& sys, double lambda, LassoOptions opts = {}) {
    if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    const Matrix& A = sys.A;
    const Vector& b = sys.b;
    const int nf = sys.ncols();

    // largest eigenvalue of A^T A by power iteration
    Vector v = Vector::Ones(nf).normalized();
    double L = 1.0;
    for (int it = 0; it < 100; ++it) {
        Vector w = A.transpose() * (A * v);
        const double nw = w.norm();
        if (nw == 0.0) break;
        L = nw;
        v = w / nw;
    }
    const double step = 1.0 / std::max(L, 1e-300);

    auto objective = [&](const Vector& c) {
        return 0.5 * (A * c - b).squaredNorm() + lambda * c.lpNorm<1>();
    };
    auto shrink = [&](const Vector& c) {
        Vector out(c.size());
        const double thr = step * lambda;
        for (int j = 0; j < c.size(); ++j)
            out[j] = std::copysign(std::max(0.0, std::abs(c[j]) - thr), c[j]);
        return out;
    };

    Vector x = Vector::Zero(nf), y = x;
    double tprev = 1.0;
    double obj = objective(x);
    LassoResult res;
    for (int it = 0; it < opts.max_iter; ++it) {
        Vector grad = A.transpose() * (A * y - b);
        Vector xn = shrink(y - step * grad);
        double objn = objective(xn);
        if (objn > obj) {  // restart momentum from the best iterate
            y = x;
            grad = A.transpose() * (A * y - b);
            xn = shrink(y - step * grad);
            objn = objective(xn);
            tprev = 1.0;
            if (objn > obj) {
                res.iterations = it;
                break;  // no further descent possible at this step size
            }
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tprev * tprev));
        y = xn + (tprev - 1.0) / tn * (xn - x);
        const double rel = std::abs(obj - objn) / std::max(1.0, std::abs(obj));
        const double step_rel = (xn - x).lpNorm<Eigen::Infinity>() /
                                std::max(1.0, xn.lpNorm<Eigen::Infinity>());
        x = xn;
        obj = objn;
        tprev = tn;
        res.iterations = it + 1;
        if (rel < opts.tol && step_rel < opts.tol) {
            res.converged = true;
            res.coeffs = x;
            res.objective = obj;
            return res;
        }
    }
    res.converged = res.iterations < opts.max_iter;
    res.coeffs = x;
    res.objective = obj;
    return res;
}

/// Subspace Pursuit: greedy support search for a fixed sparsity k.
/// Ties in correlation magnitude resolve to the lower column index.
inline CandidateModel subspace_pursuit(const LinearSystem& sys, int k, int max_iter = 50) {
    const int nf = sys.ncols();
    if (k < 1 || k > std::min<int>(sys.nrows(), nf))
        throw std::invalid_argument("sparsity k out of range");

    auto top_k = [&](const Vector& corr, int count) {
        std::vector<int> idx(nf);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            if (std::abs(corr[a]) != std::abs(corr[b])) return std::abs(corr[a]) > std::abs(corr[b]);
            return a < b;
        });
        idx.resize(count);
        return idx;
    };

    // init: top-k correlations with b
    Vector corr = sys.A.transpose() * sys.b;
    std::vector<int> support = top_k(corr, k);
    std::sort(support.begin(), support.end());

    auto fit = [&](const std::vector<int>& sup) {
        Vector sol = detail::solve_on_columns(sys.A, sys.b, sup);
        Vector full = Vector::Zero(nf);
        for (size_t j = 0; j < sup.size(); ++j) full[sup[j]] = sol[j];
        return full;
    };

    Vector coef = fit(support);
    double resid = (sys.A * coef - sys.b).norm();

    for (int it = 0; it < max_iter; ++it) {
        Vector r = sys.b - sys.A * coef;
        Vector rcorr = sys.A.transpose() * r;
        std::vector<int> expand = top_k(rcorr, k);
        std::vector<int> uni = support;
        for (int e : expand)
            if (std::find(uni.begin(), uni.end(), e) == uni.end()) uni.push_back(e);
        std::sort(uni.begin(), uni.end());

        Vector cu = fit(uni);
        // shrink to the k largest LS magnitudes (ties: lower index)
        std::vector<int> order = uni;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (std::abs(cu[a]) != std::abs(cu[b])) return std::abs(cu[a]) > std::abs(cu[b]);
            return a < b;
        });
        std::vector<int> next(order.begin(), order.begin() + k);
        std::sort(next.begin(), next.end());

        Vector cn = fit(next);
        const double rn = (sys.A * cn - sys.b).norm();
        if (rn >= resid - 1e-14 * std::max(1.0, resid)) break;
        support = next;
        coef = cn;
        resid = rn;
    }

    CandidateModel m;
    m.support = support;
    m.sparsity = k;
    m.residual = resid;
    m.coeffs = sys.physical_coeffs(coef);
    return m;
}

/// Iterative trimming: repeatedly drop the single smallest-contribution
/// feature with score below rho and refit until all scores clear rho.
inline CandidateModel trim(const LinearSystem& sys, const CandidateModel& model,
                           double rho = 0.05) {
    CandidateModel cur = model;
    while (cur.sparsity > 1) {
        // contribution scores in the system's column scale
        Vector n(cur.sparsity);
        for (int j = 0; j < cur.sparsity; ++j) {
            const int k = cur.support[j];
            const double c_scaled = cur.coeffs[k] * sys.cols[k].divisor;
            n[j] = sys.A.col(k).norm() * std::abs(c_scaled);
        }
        const double nmax = n.maxCoeff();
        if (nmax <= 0.0) break;
        int drop = -1;
        double smin = rho;
        for (int j = 0; j < cur.sparsity; ++j) {
            const double s = n[j] / nmax;
            if (s < smin) {
                smin = s;
                drop = j;
            }
        }
        if (drop < 0) break;
        std::vector<int> next = cur.support;
        next.erase(next.begin() + drop);
        cur = least_squares_on_support(sys, next);
    }
    if (cur.sparsity == 1 && model.sparsity > 1) {
        // trimmed all the way down; keep the last nonempty model (it is nonempty
        // by construction, flag if a zero-coefficient singleton remains)
        if (cur.coeffs.cwiseAbs().maxCoeff() == 0.0) cur.flagged = true;
    }
    return cur;
}

// ---- grouped systems ----

/// Group structure over the columns of a linear system: groups[g] lists the
/// column indices of group g (contiguous for basis-expanded systems).
using GroupLayout = std::vector<std::vector<int>>;

struct GroupModel {
    std::vector<int> group_support;
    Vector coeffs;  // full-length, physical scale
    double residual = 0.0;
    bool flagged = false;
};

namespace detail {

inline Vector fit_groups(const LinearSystem& sys, const GroupLayout& groups,
                         const std::vector<int>& gsup) {
    std::vector<int> cols;
    for (int g : gsup) cols.insert(cols.end(), groups[g].begin(), groups[g].end());
    Vector sol = solve_on_columns(sys.A, sys.b, cols);
    Vector full = Vector::Zero(sys.ncols());
    for (size_t j = 0; j < cols.size(); ++j) full[cols[j]] = sol[j];
    return full;
}

}  // namespace detail

/// Group Projected Subspace Pursuit: expand by the k groups with the largest
/// projection score P, least squares on the union, keep the k groups with the
/// largest fitted block energy ||F_g x[g]||, accept only if the residual drops.
inline GroupModel group_subspace_pursuit(const LinearSystem& sys, const GroupLayout& groups,
                                         int k, int max_iter = 50) {
    const int ng = static_cast<int>(groups.size());
    if (k < 1 || k > ng) throw std::invalid_argument("group sparsity out of range");

    auto proj_score = [&](const Vector& yr, int g) {
        std::vector<int> cols = groups[g];
        Matrix sub(sys.A.rows(), cols.size());
        for (size_t j = 0; j < cols.size(); ++j) sub.col(j) = sys.A.col(cols[j]);
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(sub);
        Vector proj = sub * cod.solve(yr);
        const double pn = proj.norm(), yn = yr.norm();
        if (pn == 0.0 || yn == 0.0) return 0.0;
        return std::abs(proj.dot(yr)) / (pn * yn);
    };

    auto top_groups = [&](const Vector& yr, int count) {
        std::vector<std::pair<double, int>> scored(ng);
        for (int g = 0; g < ng; ++g) scored[g] = {proj_score(yr, g), g};
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<int> out;
        for (int j = 0; j < count; ++j) out.push_back(scored[j].second);
        return out;
    };

    std::vector<int> T = top_groups(sys.b, k);
    std::sort(T.begin(), T.end());
    Vector coef = detail::fit_groups(sys, groups, T);
    double resid = (sys.A * coef - sys.b).norm();

    for (int it = 0; it < max_iter; ++it) {
        Vector yr = sys.b - sys.A * coef;
        std::vector<int> uni = T;
        for (int g : top_groups(yr, k))
            if (std::find(uni.begin(), uni.end(), g) == uni.end()) uni.push_back(g);
        std::sort(uni.begin(), uni.end());

        Vector cu = detail::fit_groups(sys, groups, uni);
        std::vector<std::pair<double, int>> energy;
        for (int g : uni) {
            Vector block = Vector::Zero(sys.A.rows());
            for (int c : groups[g]) block += sys.A.col(c) * cu[c];
            energy.push_back({block.norm(), g});
        }
        std::stable_sort(energy.begin(), energy.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<int> next;
        for (int j = 0; j < k; ++j) next.push_back(energy[j].second);
        std::sort(next.begin(), next.end());

        Vector cn = detail::fit_groups(sys, groups, next);
        const double rn = (sys.A * cn - sys.b).norm();
        if (rn > resid) break;  // accept iteration iff the residual decreased
        const bool same = next == T;
        T = next;
        coef = cn;
        resid = rn;
        if (same) break;
    }

    GroupModel m;
    m.group_support = T;
    m.residual = resid;
    m.coeffs = sys.physical_coeffs(coef);
    return m;
}

/// One-pass group trimming: drop all groups whose contribution score is below
/// rho, then refit.
inline GroupModel group_trim(const LinearSystem& sys, const GroupLayout& groups,
                             const GroupModel& model, double rho = 0.05) {
    Vector scaled = model.coeffs;
    for (int c = 0; c < sys.ncols(); ++c) scaled[c] *= sys.cols[c].divisor;
    std::vector<double> n;
    for (int g : model.group_support) {
        Vector block = Vector::Zero(sys.A.rows());
        for (int c : groups[g]) block += sys.A.col(c) * scaled[c];
        n.push_back(block.norm());
    }
    const double nmax = *std::max_element(n.begin(), n.end());
    std::vector<int> keep;
    for (size_t j = 0; j < model.group_support.size(); ++j)
        if (nmax <= 0.0 || n[j] / nmax >= rho) keep.push_back(model.group_support[j]);
    if (keep.empty()) {
        GroupModel out = model;
        out.flagged = true;
        return out;
    }
    if (keep.size() == model.group_support.size()) return model;

    GroupModel out;
    out.group_support = keep;
    Vector coef = detail::fit_groups(sys, groups, keep);
    out.residual = (sys.A * coef - sys.b).norm();
    out.coeffs = sys.physical_coeffs(coef);
    return out;
}

}  // namespace ident
