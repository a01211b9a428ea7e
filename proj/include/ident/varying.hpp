#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ident/assembly.hpp"
#include "ident/regression.hpp"
#include "ident/selection.hpp"

namespace ident {

enum class BasisKind { FiniteElementHat, BSpline };

/// Uniform clamped spline basis on an interval (hat functions are the
/// degree-1 case); optionally tensored with a second basis in time.
struct BasisSet {
    BasisKind kind = BasisKind::BSpline;
    int nb = 0;
    int degree = 3;
    double a = 0.0, b = 1.0;
    bool in_time = false;
    int nb_t = 1;
    int degree_t = 1;
    double ta = 0.0, tb = 1.0;

    std::vector<double> knots;    // clamped uniform knot vector (space)
    std::vector<double> knots_t;  // same for time when in_time

    int columns_per_feature() const { return in_time ? nb * nb_t : nb; }
};

namespace detail {

inline std::vector<double> clamped_uniform_knots(int nb, int degree, double a, double b) {
    const int nspans = nb - degree;
    if (nspans < 1) throw std::invalid_argument("nb must exceed the spline degree");
    std::vector<double> t;
    for (int i = 0; i <= degree; ++i) t.push_back(a);
    for (int i = 1; i < nspans; ++i) t.push_back(a + (b - a) * i / nspans);
    for (int i = 0; i <= degree; ++i) t.push_back(b);
    return t;
}

/// Cox-de Boor evaluation of B_{i,d} at x.
inline double bspline_value(const std::vector<double>& t, int i, int d, double x) {
    if (d == 0) {
        // half-open spans, closed at the right end of the domain
        const bool last = (t[i + 1] >= t.back() - 1e-14);
        return (x >= t[i] && (x < t[i + 1] || (last && x <= t[i + 1] + 1e-14))) ? 1.0 : 0.0;
    }
    double left = 0.0, right = 0.0;
    if (t[i + d] > t[i]) left = (x - t[i]) / (t[i + d] - t[i]) * bspline_value(t, i, d - 1, x);
    if (t[i + d + 1] > t[i + 1])
        right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * bspline_value(t, i + 1, d - 1, x);
    return left + right;
}

/// Derivative of order `der` of B_{i,d} at x.
inline double bspline_derivative(const std::vector<double>& t, int i, int d, double x, int der) {
    if (der == 0) return bspline_value(t, i, d, x);
    if (d == 0) return 0.0;
    double left = 0.0, right = 0.0;
    if (t[i + d] > t[i])
        left = d / (t[i + d] - t[i]) * bspline_derivative(t, i, d - 1, x, der - 1);
    if (t[i + d + 1] > t[i + 1])
        right = d / (t[i + d + 1] - t[i + 1]) * bspline_derivative(t, i + 1, d - 1, x, der - 1);
    return left - right;
}

}  // namespace detail

inline BasisSet build_basis(BasisKind kind, int nb, const Grid& grid, bool in_time = false,
                            int order = 3, int nb_t = 3, int order_t = 2) {
    if (nb < 2) throw std::invalid_argument("nb must be >= 2");
    BasisSet bs;
    bs.kind = kind;
    bs.nb = nb;
    bs.degree = (kind == BasisKind::FiniteElementHat) ? 1 : order;
    bs.a = grid.x0;
    bs.b = grid.x0 + (grid.nx - 1) * grid.dx;
    bs.knots = detail::clamped_uniform_knots(nb, bs.degree, bs.a, bs.b);
    bs.in_time = in_time;
    if (in_time) {
        if (nb_t < 2) throw std::invalid_argument("nb_t must be >= 2");
        bs.nb_t = nb_t;
        bs.degree_t = (kind == BasisKind::FiniteElementHat) ? 1 : order_t;
        bs.ta = grid.t0;
        bs.tb = grid.t0 + (grid.nt - 1) * grid.dt;
        bs.knots_t = detail::clamped_uniform_knots(nb_t, bs.degree_t, bs.ta, bs.tb);
    }
    return bs;
}

/// phi_m(x) for m = 0..nb-1.
inline Vector basis_values(const BasisSet& bs, double x) {
    Vector v(bs.nb);
    for (int m = 0; m < bs.nb; ++m) v[m] = detail::bspline_value(bs.knots, m, bs.degree, x);
    return v;
}

inline double basis_derivative(const BasisSet& bs, int m, double x, int der) {
    return detail::bspline_derivative(bs.knots, m, bs.degree, x, der);
}

inline Vector basis_values_t(const BasisSet& bs, double t) {
    Vector v(bs.nb_t);
    for (int m = 0; m < bs.nb_t; ++m) v[m] = detail::bspline_value(bs.knots_t, m, bs.degree_t, t);
    return v;
}

/// Reconstructs c(x) = sum_m coeffs[m] * phi_m(x) at the grid nodes.
inline Vector reconstruct_coefficient(const BasisSet& bs, const Vector& coeffs, const Grid& grid) {
    if (coeffs.size() != bs.nb) throw std::invalid_argument("coefficient length must be nb");
    Vector out(grid.nx);
    for (int i = 0; i < grid.nx; ++i) out[i] = basis_values(bs, grid.x(i)).dot(coeffs);
    return out;
}

enum class GroupForm { Differential, Weak };

/// Block-structured system for varying coefficients: N_f groups of
/// columns_per_feature columns each, stored inside a LinearSystem whose column
/// labels carry "<feature>[m]".
struct GroupSystem {
    LinearSystem sys;
    GroupLayout groups;
    BasisSet basis;
    std::vector<std::string> feature_labels;
};

/// Assembles the group system. Differential form: entry (row (i,n), col (k,m))
/// = f_k(i,n) * phi_m(x_i); weak form folds phi_m into the integrand via the
/// Leibniz expansion of d^alpha(phi_m * phi_h).
inline GroupSystem assemble_group_system(const Field& U, const Dictionary& dict,
                                         const BasisSet& basis, GroupForm form,
                                         const SmootherConfig& smoother = {},
                                         const TestFunction& tf = {}, int stride_x = 1,
                                         int stride_t = 1) {
    const Grid& g = U.grid;
    GroupSystem gs;
    gs.basis = basis;
    for (int k = 0; k < dict.size(); ++k) gs.feature_labels.push_back(dict[k].label);

    if (form == GroupForm::Differential) {
        LinearSystem base = assemble_differential(U, dict, smoother);
        const int nbc = basis.columns_per_feature();
        const int H = base.nrows();
        gs.sys.dx = base.dx;
        gs.sys.dt = base.dt;
        gs.sys.A.resize(H, dict.size() * nbc);
        gs.sys.b = base.b;
        gs.sys.rows = base.rows;
        for (int k = 0; k < dict.size(); ++k) {
            std::vector<int> grp;
            for (int m = 0; m < nbc; ++m) {
                const int col = k * nbc + m;
                grp.push_back(col);
                gs.sys.cols.push_back({dict[k].label + "[" + std::to_string(m) + "]", 1.0});
            }
            gs.groups.push_back(grp);
        }
        // basis values per row center
        for (int r = 0; r < H; ++r) {
            const Vector bx = basis_values(basis, g.x(base.rows[r].ix));
            Vector bt = Vector::Ones(1);
            if (basis.in_time) bt = basis_values_t(basis, g.t(base.rows[r].it));
            for (int k = 0; k < dict.size(); ++k) {
                int m = 0;
                for (int q = 0; q < bt.size(); ++q)
                    for (int mx = 0; mx < basis.nb; ++mx, ++m)
                        gs.sys.A(r, k * nbc + m) = base.A(r, k) * bx[mx] * bt[q];
            }
        }
        return gs;
    }

    // weak form, space-only basis
    if (basis.in_time)
        throw std::invalid_argument("weak group assembly supports space-only bases");
    if (dict.style != DictionaryStyle::WeakForm)
        throw std::invalid_argument("weak group assembly requires a WeakForm dictionary");
    if (2 * tf.mx + 1 > g.nx || 2 * tf.mt + 1 > g.nt)
        throw std::invalid_argument("mx/mt too large for the grid");

    TestFunctionKernels kern = sample_test_function(tf, g.dx, g.dt, dict.max_alpha);
    std::vector<int> xs, ts;
    const int xlo = (g.boundary == Boundary::Periodic) ? 0 : tf.mx;
    const int xhi = (g.boundary == Boundary::Periodic) ? g.nx - 1 : g.nx - 1 - tf.mx;
    for (int i = xlo; i <= xhi; i += stride_x) xs.push_back(i);
    for (int n = tf.mt; n <= g.nt - 1 - tf.mt; n += stride_t) ts.push_back(n);
    const int H = static_cast<int>(xs.size() * ts.size());

    gs.sys.dx = g.dx;
    gs.sys.dt = g.dt;
    gs.sys.A.resize(H, dict.size() * basis.nb);
    gs.sys.b.resize(H);
    for (int n : ts)
        for (int i : xs) gs.sys.rows.push_back({i, n});

    std::map<int, Matrix> powers;
    for (int k = 0; k < dict.size(); ++k)
        if (!powers.count(dict[k].beta))
            powers[dict[k].beta] = U.values.array().pow(dict[k].beta).matrix();
    if (!powers.count(1)) powers[1] = U.values;

    auto binom = [](int n, int r) {
        double v = 1.0;
        for (int j = 0; j < r; ++j) v = v * (n - j) / (j + 1);
        return v;
    };

    for (int k = 0; k < dict.size(); ++k) {
        const int a = dict[k].alpha, bexp = dict[k].beta;
        const double sign = (a % 2 == 0) ? 1.0 : -1.0;
        const double scale = (a >= 1 && bexp >= 1) ? 1.0 / bexp : 1.0;
        for (int m = 0; m < basis.nb; ++m) {
            // (-1)^a int u^b d^a(phi_m phi_h) = sum_j C(a,j) (-1)^a int (u^b d^j phi_m) d^{a-j} phi_h
            Matrix acc = Matrix::Zero(g.nx, g.nt);
            for (int j = 0; j <= a; ++j) {
                Matrix weighted = powers[bexp];
                for (int i = 0; i < g.nx; ++i)
                    weighted.row(i) *= basis_derivative(basis, m, g.x(i), j);
                Matrix kmat = kern.dxphi[a - j] * (binom(a, j) * sign * scale * kern.cell);
                acc += detail::circular_correlate(weighted, kmat, tf.mx, tf.mt);
            }
            const int col = k * basis.nb + m;
            int r = 0;
            for (int n : ts)
                for (int i : xs) gs.sys.A(r++, col) = acc(i, n);
            gs.sys.cols.push_back({dict[k].label + "[" + std::to_string(m) + "]", 1.0});
        }
        std::vector<int> grp(basis.nb);
        for (int m = 0; m < basis.nb; ++m) grp[m] = k * basis.nb + m;
        gs.groups.push_back(grp);
    }
    {
        Matrix kmat = kern.dtphi * (-kern.cell);
        Matrix conv = detail::circular_correlate(powers[1], kmat, tf.mx, tf.mt);
        int r = 0;
        for (int n : ts)
            for (int i : xs) gs.sys.b[r++] = conv(i, n);
    }
    return gs;
}

/// Group LASSO via monotone accelerated proximal gradient with the blockwise
/// soft-threshold prox.
inline LassoResult group_lasso(const GroupSystem& gsys, double lambda, LassoOptions opts = {}) {
    if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    const Matrix& A = gsys.sys.A;
    const Vector& b = gsys.sys.b;
    const int nc = gsys.sys.ncols();

    Vector v = Vector::Ones(nc).normalized();
    double L = 1.0;
    for (int it = 0; it < 100; ++it) {
        Vector w = A.transpose() * (A * v);
        const double nw = w.norm();
        if (nw == 0.0) break;
        L = nw;
        v = w / nw;
    }
    const double step = 1.0 / std::max(L, 1e-300);

    auto group_norms = [&](const Vector& c) {
        double acc = 0.0;
        for (auto& grp : gsys.groups) {
            double s = 0.0;
            for (int col : grp) s += c[col] * c[col];
            acc += std::sqrt(s);
        }
        return acc;
    };
    auto objective = [&](const Vector& c) {
        return 0.5 * (A * c - b).squaredNorm() + lambda * group_norms(c);
    };
    auto shrink = [&](Vector c) {
        const double thr = step * lambda;
        for (auto& grp : gsys.groups) {
            double s = 0.0;
            for (int col : grp) s += c[col] * c[col];
            const double nrm = std::sqrt(s);
            const double f = (nrm > thr) ? (1.0 - thr / nrm) : 0.0;
            for (int col : grp) c[col] *= f;
        }
        return c;
    };

    Vector x = Vector::Zero(nc), y = x;
    double tprev = 1.0;
    double obj = objective(x);
    LassoResult res;
    for (int it = 0; it < opts.max_iter; ++it) {
        Vector grad = A.transpose() * (A * y - b);
        Vector xn = shrink(y - step * grad);
        double objn = objective(xn);
        if (objn > obj) {
            y = x;
            grad = A.transpose() * (A * y - b);
            xn = shrink(y - step * grad);
            objn = objective(xn);
            tprev = 1.0;
            if (objn > obj) {
                res.iterations = it;
                break;
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
        if (rel < opts.tol && step_rel < opts.tol) break;
    }
    res.coeffs = x;
    res.objective = obj;
    res.converged = res.iterations < opts.max_iter;
    return res;
}

/// Normalized block magnitudes of a group-LASSO solution, the BEE statistic.
inline Vector block_magnitudes(const GroupSystem& gsys, const Vector& coeffs, const Grid& grid) {
    const int nf = static_cast<int>(gsys.groups.size());
    Vector B(nf);
    for (int k = 0; k < nf; ++k) {
        const auto& grp = gsys.groups[k];
        double fnorm1 = 0.0;
        for (int col : grp) fnorm1 += gsys.sys.A.col(col).lpNorm<1>();
        // L1 norm of sum_m c_{k,m}/||F[k,m]||_inf * phi_m over the domain
        Vector scaled(grp.size());
        for (size_t m = 0; m < grp.size(); ++m) {
            const double cinf = gsys.sys.A.col(grp[m]).lpNorm<Eigen::Infinity>();
            scaled[m] = (cinf > 0.0) ? coeffs[grp[m]] / cinf : 0.0;
        }
        double l1 = 0.0;
        for (int i = 0; i < grid.nx; ++i)
            l1 += std::abs(basis_values(gsys.basis, grid.x(i)).dot(scaled)) * grid.dx;
        B[k] = fnorm1 * l1;
    }
    return B;
}

/// l^{1,0} norm: number of groups with nonzero l1 mass.
inline int l10_norm(const Vector& coeffs, const GroupLayout& groups) {
    int count = 0;
    for (auto& grp : groups) {
        double s = 0.0;
        for (int col : grp) s += std::abs(coeffs[col]);
        if (s > 0.0) ++count;
    }
    return count;
}

// ---- CaSLR ----

struct CaslrResult {
    std::vector<int> support;            // shared feature support
    std::vector<Vector> patch_coeffs;    // per-patch full-length coefficients
    double global_error = 0.0;           // total squared residual E(c)
    bool flagged = false;
};

/// Consistent and Sparse Local Regression for a fixed support size l: GPSP on
/// the block-diagonal stacked system whose group k collects feature k's
/// coefficient across all patches.
inline CaslrResult caslr(const std::vector<LinearSystem>& patches, int l) {
    if (patches.empty()) throw std::invalid_argument("no patches");
    const int nf = patches[0].ncols();
    const int J = static_cast<int>(patches.size());
    for (auto& p : patches)
        if (p.ncols() != nf) throw std::invalid_argument("patches must share the dictionary");
    if (l < 1 || l > nf) throw std::invalid_argument("support size out of range");

    int rows = 0;
    for (auto& p : patches) rows += p.nrows();
    LinearSystem stacked;
    stacked.A = Matrix::Zero(rows, nf * J);
    stacked.b.resize(rows);
    GroupLayout groups(nf);
    int r0 = 0;
    for (int j = 0; j < J; ++j) {
        const LinearSystem& p = patches[j];
        for (int k = 0; k < nf; ++k) {
            const int col = k * J + j;
            stacked.A.block(r0, col, p.nrows(), 1) = p.A.col(k);
        }
        stacked.b.segment(r0, p.nrows()) = p.b;
        r0 += p.nrows();
    }
    for (int k = 0; k < nf; ++k) {
        for (int j = 0; j < J; ++j) groups[k].push_back(k * J + j);
        stacked.cols.resize(nf * J);
    }
    for (int k = 0; k < nf; ++k)
        for (int j = 0; j < J; ++j)
            stacked.cols[k * J + j] = {patches[0].cols[k].label + "@" + std::to_string(j), 1.0};

    GroupModel gm = group_subspace_pursuit(stacked, groups, l);

    CaslrResult out;
    out.support = gm.group_support;
    out.global_error = gm.residual * gm.residual;
    out.flagged = gm.flagged;
    for (int j = 0; j < J; ++j) {
        Vector cj = Vector::Zero(nf);
        for (int k = 0; k < nf; ++k) cj[k] = gm.coeffs[k * J + j] / patches[j].cols[k].divisor;
        out.patch_coeffs.push_back(cj);
    }
    return out;
}

/// Runs CaSLR across all support sizes and picks the winner with RRC
/// (rho = mean of the global errors when not supplied).
inline CaslrResult caslr_path(const std::vector<LinearSystem>& patches, double rho = 0.0) {
    const int nf = patches[0].ncols();
    std::vector<CaslrResult> results;
    std::vector<double> errors;
    for (int l = 1; l <= nf - 1; ++l) {
        results.push_back(caslr(patches, l));
        errors.push_back(results.back().global_error);
    }
    const int lstar = rrc_select(errors, rho, nf);
    return results[lstar - 1];
}

}  // namespace ident
