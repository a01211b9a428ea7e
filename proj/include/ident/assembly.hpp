#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ident/denoise.hpp"
#include "ident/dictionary.hpp"
#include "ident/grid.hpp"

namespace ident {

/// Separable polynomial bump used as the weak-form test function:
///   phi(x,t) = (1-(x/(mx*dx))^2)^px * (1-(t/(mt*dt))^2)^pt  on its support,
/// normalized so that the discrete integral of phi is one.
struct TestFunction {
    int mx = 8;
    int mt = 8;
    int px = 4;
    int pt = 2;

    TestFunction() = default;
    TestFunction(int mx_, int mt_, int px_, int pt_) : mx(mx_), mt(mt_), px(px_), pt(pt_) {
        if (mx < 1 || mt < 1) throw std::invalid_argument("test function half-widths must be >= 1");
        if (px < 2 || pt < 1) throw std::invalid_argument("test function orders too small");
    }
};

namespace detail {

/// Coefficients of (1 - s^2)^p as a polynomial in s.
inline std::vector<double> bump_poly(int p) {
    std::vector<double> c(2 * p + 1, 0.0);
    double binom = 1.0;
    for (int j = 0; j <= p; ++j) {
        c[2 * j] = (j % 2 ? -binom : binom);
        binom = binom * (p - j) / (j + 1);
    }
    return c;
}

inline std::vector<double> poly_derivative(std::vector<double> c) {
    if (c.size() <= 1) return {0.0};
    std::vector<double> d(c.size() - 1);
    for (size_t j = 1; j < c.size(); ++j) d[j - 1] = j * c[j];
    return d;
}

inline double poly_eval(const std::vector<double>& c, double s) {
    double acc = 0.0;
    for (size_t j = c.size(); j-- > 0;) acc = acc * s + c[j];
    return acc;
}

/// Samples d^order/dx^order of the 1-D bump factor at grid offsets -m..m,
/// where the half-width is m*spacing.
inline Vector bump_factor_samples(int m, int p, double spacing, int order) {
    const double a = m * spacing;
    std::vector<double> poly = bump_poly(p);
    for (int k = 0; k < order; ++k) poly = poly_derivative(poly);
    Vector out(2 * m + 1);
    for (int o = -m; o <= m; ++o) {
        const double s = static_cast<double>(o) / m;
        // the bump vanishes identically at the support edge together with its
        // first p-1 derivatives; evaluate the polynomial directly
        out[o + m] = poly_eval(poly, s) / std::pow(a, order);
    }
    return out;
}

using CMatrix = Eigen::MatrixXcd;

inline CMatrix fft2(const CMatrix& in, bool inverse) {
    Eigen::FFT<double> fft;
    CMatrix tmp(in.rows(), in.cols());
    Eigen::VectorXcd col(in.rows()), out(in.rows());
    for (int c = 0; c < in.cols(); ++c) {
        col = in.col(c);
        if (inverse)
            fft.inv(out, col);
        else
            fft.fwd(out, col);
        tmp.col(c) = out;
    }
    Eigen::VectorXcd row(in.cols()), rout(in.cols());
    for (int r = 0; r < in.rows(); ++r) {
        row = tmp.row(r).transpose();
        if (inverse)
            fft.inv(rout, row);
        else
            fft.fwd(rout, row);
        tmp.row(r) = rout.transpose();
    }
    return tmp;
}

/// Circular cross-correlation: out(i,n) = sum_{ox,ot} data(i+ox, n+ot) * kern(ox,ot),
/// kern given on offsets ox in [-mx,mx], ot in [-mt,mt] (row ox+mx, col ot+mt).
inline Matrix circular_correlate(const Matrix& data, const Matrix& kern, int mx, int mt) {
    const int nx = static_cast<int>(data.rows());
    const int nt = static_cast<int>(data.cols());
    CMatrix kpad = CMatrix::Zero(nx, nt);
    for (int ox = -mx; ox <= mx; ++ox)
        for (int ot = -mt; ot <= mt; ++ot)
            kpad(((ox % nx) + nx) % nx, ((ot % nt) + nt) % nt) += kern(ox + mx, ot + mt);
    CMatrix dHat = fft2(data.cast<std::complex<double>>(), false);
    CMatrix kHat = fft2(kpad, false);
    CMatrix prod = dHat.cwiseProduct(kHat.conjugate());
    return fft2(prod, true).real();
}

}  // namespace detail

/// Sampled test-function kernels on the (2mx+1) x (2mt+1) stencil.
struct TestFunctionKernels {
    Matrix phi;                 // phi itself
    std::vector<Matrix> dxphi;  // d^a/dx^a phi for a = 0..max_alpha
    Matrix dtphi;               // d/dt phi
    double cell = 0.0;          // dx*dt quadrature weight
};

inline TestFunctionKernels sample_test_function(const TestFunction& tf, double dx, double dt,
                                                int max_alpha) {
    if (tf.px < max_alpha + 1)
        throw std::invalid_argument("px must be at least max_alpha + 1 so the bump's "
                                    "derivatives vanish on the support boundary");
    TestFunctionKernels k;
    k.cell = dx * dt;
    Vector fx = detail::bump_factor_samples(tf.mx, tf.px, dx, 0);
    Vector ft = detail::bump_factor_samples(tf.mt, tf.pt, dt, 0);
    // normalize each factor to unit discrete integral
    const double sx = fx.sum() * dx;
    const double st = ft.sum() * dt;
    if (sx <= 0.0 || st <= 0.0) throw std::logic_error("degenerate test function");
    k.phi = (fx / sx) * (ft / st).transpose();
    for (int a = 0; a <= max_alpha; ++a) {
        Vector fxa = detail::bump_factor_samples(tf.mx, tf.px, dx, a);
        k.dxphi.push_back((fxa / sx) * (ft / st).transpose());
    }
    Vector ft1 = detail::bump_factor_samples(tf.mt, tf.pt, dt, 1);
    k.dtphi = (fx / sx) * (ft1 / st).transpose();
    return k;
}

struct ColumnMeta {
    std::string label;
    double divisor = 1.0;  // cumulative column scaling; physical coeff = solved / divisor
};

struct RowMeta {
    int ix = 0;
    int it = 0;
};

/// The assembled identification system (differential or weak form).
struct LinearSystem {
    Matrix A;
    Vector b;
    std::vector<ColumnMeta> cols;
    std::vector<RowMeta> rows;
    Vector row_scores;   // s(h) used for the high dynamic region (may be empty)
    Matrix lead_scores;  // H x Nf leading-coefficient scores (weak systems)
    double dx = 1.0;
    double dt = 1.0;
    std::vector<std::string> warnings;

    int nrows() const { return static_cast<int>(A.rows()); }
    int ncols() const { return static_cast<int>(A.cols()); }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        out.reserve(cols.size());
        for (auto& c : cols) out.push_back(c.label);
        return out;
    }

    int index_of(const std::string& label) const {
        for (int k = 0; k < ncols(); ++k)
            if (cols[k].label == label) return k;
        throw std::invalid_argument("no such column: " + label);
    }

    /// Maps a solved coefficient vector back to physical scale.
    Vector physical_coeffs(const Vector& solved) const {
        Vector out = solved;
        for (int k = 0; k < ncols(); ++k) out[k] /= cols[k].divisor;
        return out;
    }
};

namespace detail {

/// Differential evaluation of one dictionary term as a full nx x nt matrix.
inline Matrix eval_term_differential(const Field& U, const FeatureTerm& term,
                                     const SmootherConfig& cfg,
                                     const std::map<int, Matrix>& deriv_table) {
    if (term.form == FeatureTerm::Form::WeakForm) {
        if (term.alpha == 0 && term.beta == 0)
            return Matrix::Ones(U.grid.nx, U.grid.nt);
        // differentiate the beta-th power, matching the weak-form semantics
        Matrix powv = U.values.array().pow(term.beta).matrix();
        Field powf(U.grid, std::move(powv));
        Matrix d = sdd_derivative(powf, term.alpha, cfg);
        if (term.alpha >= 1) d /= static_cast<double>(term.beta);
        return d;
    }
    return eval_monomial_pointwise(term, deriv_table);
}

}  // namespace detail

/// Assembles the differential-form system: rows are interior grid nodes,
/// column k is the SDD evaluation of term k, rhs is the SDD time derivative.
inline LinearSystem assemble_differential(const Field& U, const Dictionary& dict,
                                          const SmootherConfig& smoother) {
    const Grid& g = U.grid;
    std::map<int, Matrix> deriv_table;
    if (dict.style == DictionaryStyle::GeneralMonomial) {
        for (int o = 0; o <= dict.max_derivative_order(); ++o)
            deriv_table[o] = sdd_derivative(U, o, smoother);
    }
    Matrix bfull = sdd_time_derivative(U, smoother);

    const int margin_x = (g.boundary == Boundary::Periodic) ? 0 : std::max(4, dict.max_derivative_order() + 2);
    const int margin_t = 2;
    const int rx0 = margin_x, rx1 = g.nx - margin_x;
    const int rt0 = margin_t, rt1 = g.nt - margin_t;
    if (rx1 <= rx0 || rt1 <= rt0) throw std::invalid_argument("grid too small for assembly margins");

    LinearSystem sys;
    sys.dx = g.dx;
    sys.dt = g.dt;
    const int H = (rx1 - rx0) * (rt1 - rt0);
    sys.A.resize(H, dict.size());
    sys.b.resize(H);
    sys.rows.reserve(H);
    for (int n = rt0; n < rt1; ++n)
        for (int i = rx0; i < rx1; ++i) sys.rows.push_back({i, n});

    for (int k = 0; k < dict.size(); ++k) {
        Matrix col = detail::eval_term_differential(U, dict[k], smoother, deriv_table);
        int r = 0;
        for (int n = rt0; n < rt1; ++n)
            for (int i = rx0; i < rx1; ++i) sys.A(r++, k) = col(i, n);
        sys.cols.push_back({dict[k].label, 1.0});
    }
    {
        int r = 0;
        for (int n = rt0; n < rt1; ++n)
            for (int i = rx0; i < rx1; ++i) sys.b[r++] = bfull(i, n);
    }
    if (!sys.A.allFinite() || !sys.b.allFinite()) throw std::runtime_error("non-finite system entries");
    return sys;
}

/// Weak-form assembly via FFT circular cross-correlation. Row h is centered at
/// (x_i, t_n) on a stride lattice of centers whose test-function support lies
/// inside the observed domain (all i are admissible under periodic boundary).
inline LinearSystem assemble_weak(const Field& U, const Dictionary& dict, const TestFunction& tf,
                                  int stride_x = 1, int stride_t = 1) {
    if (dict.style != DictionaryStyle::WeakForm)
        throw std::invalid_argument("assemble_weak requires a WeakForm dictionary");
    const Grid& g = U.grid;
    if (2 * tf.mx + 1 > g.nx || 2 * tf.mt + 1 > g.nt)
        throw std::invalid_argument("mx/mt too large for the grid");
    if (stride_x < 1 || stride_t < 1) throw std::invalid_argument("strides must be >= 1");

    TestFunctionKernels kern = sample_test_function(tf, g.dx, g.dt, dict.max_alpha);

    // valid row centers
    std::vector<int> xs, ts;
    const int xlo = (g.boundary == Boundary::Periodic) ? 0 : tf.mx;
    const int xhi = (g.boundary == Boundary::Periodic) ? g.nx - 1 : g.nx - 1 - tf.mx;
    for (int i = xlo; i <= xhi; i += stride_x) xs.push_back(i);
    for (int n = tf.mt; n <= g.nt - 1 - tf.mt; n += stride_t) ts.push_back(n);
    if (xs.empty() || ts.empty()) throw std::invalid_argument("mx/mt too large");

    LinearSystem sys;
    sys.dx = g.dx;
    sys.dt = g.dt;
    const int H = static_cast<int>(xs.size() * ts.size());
    sys.A.resize(H, dict.size());
    sys.b.resize(H);
    sys.lead_scores.resize(H, dict.size());
    sys.rows.reserve(H);
    for (int n : ts)
        for (int i : xs) sys.rows.push_back({i, n});

    // powers of U appearing in the dictionary
    std::map<int, Matrix> powers;
    for (int k = 0; k < dict.size(); ++k) {
        for (int b : {dict[k].beta, dict[k].beta - 1})
            if (b >= 0 && !powers.count(b)) powers[b] = U.values.array().pow(b).matrix();
    }

    auto gather = [&](const Matrix& full, Eigen::Ref<Matrix> dst, int col) {
        int r = 0;
        for (int n : ts)
            for (int i : xs) dst(r++, col) = full(i, n);
    };

    for (int k = 0; k < dict.size(); ++k) {
        const int a = dict[k].alpha, bexp = dict[k].beta;
        const double sign = (a % 2 == 0) ? 1.0 : -1.0;
        const double scale = (a >= 1) ? 1.0 / bexp : 1.0;
        Matrix kmat = kern.dxphi[a] * (sign * scale * kern.cell);
        Matrix conv = detail::circular_correlate(powers[bexp], kmat, tf.mx, tf.mt);
        gather(conv, sys.A, k);
        sys.cols.push_back({dict[k].label, 1.0});

        // leading-coefficient score s(h,k) = beta * |int u^{beta-1} d^a phi|
        if (a == 0 && bexp == 0) {
            sys.lead_scores.col(k).setOnes();
        } else {
            Matrix skern = kern.dxphi[a] * kern.cell;
            Matrix sconv = detail::circular_correlate(powers[bexp - 1], skern, tf.mx, tf.mt);
            Matrix sabs = (static_cast<double>(bexp) * sconv).cwiseAbs();
            gather(sabs, sys.lead_scores, k);
        }
    }
    {
        Matrix kmat = kern.dtphi * (-kern.cell);
        Matrix conv = detail::circular_correlate(powers[1], kmat, tf.mx, tf.mt);
        int r = 0;
        for (int n : ts)
            for (int i : xs) sys.b[r++] = conv(i, n);
    }

    // s(h): the u*u_x column's score when present, per the Weak-IDENT convention
    sys.row_scores = Vector::Ones(H);
    for (int k = 0; k < dict.size(); ++k)
        if (dict[k].alpha == 1 && dict[k].beta == 2) sys.row_scores = sys.lead_scores.col(k);

    if (!sys.A.allFinite() || !sys.b.allFinite()) throw std::runtime_error("non-finite system entries");
    return sys;
}

/// Direct nested-loop quadrature of the weak entries; the independent route
/// used to validate the FFT assembly.
inline double weak_entry_direct(const Field& U, int alpha, int beta, const TestFunction& tf,
                                int ci, int cn) {
    const Grid& g = U.grid;
    TestFunctionKernels kern = sample_test_function(tf, g.dx, g.dt, alpha);
    const double sign = (alpha % 2 == 0) ? 1.0 : -1.0;
    const double scale = (alpha >= 1 && beta >= 1) ? 1.0 / beta : 1.0;
    double acc = 0.0;
    for (int ox = -tf.mx; ox <= tf.mx; ++ox)
        for (int ot = -tf.mt; ot <= tf.mt; ++ot) {
            const int i = ((ci + ox) % g.nx + g.nx) % g.nx;
            const int n = cn + ot;
            const double uval = std::pow(U.values(i, n), beta);
            acc += uval * kern.dxphi[alpha](ox + tf.mx, ot + tf.mt);
        }
    return sign * scale * acc * g.dx * g.dt;
}

/// Error normalization: divide column k by the mean leading-coefficient score.
inline LinearSystem error_normalize(const LinearSystem& sys) {
    if (sys.lead_scores.size() == 0)
        throw std::invalid_argument("error_normalize requires leading-coefficient scores");
    LinearSystem out = sys;
    for (int k = 0; k < sys.ncols(); ++k) {
        const double mean = sys.lead_scores.col(k).mean();
        if (mean <= 0.0) {
            out.warnings.push_back("column '" + sys.cols[k].label +
                                   "' has zero mean score; left unscaled");
            continue;
        }
        out.A.col(k) /= mean;
        out.cols[k].divisor *= mean;
    }
    return out;
}

/// Column normalization: each column divided by its own 2-norm.
inline LinearSystem column_normalize(const LinearSystem& sys) {
    LinearSystem out = sys;
    for (int k = 0; k < sys.ncols(); ++k) {
        const double nrm = sys.A.col(k).norm();
        if (nrm <= 0.0) {
            out.warnings.push_back("column '" + sys.cols[k].label + "' is zero; left unscaled");
            continue;
        }
        out.A.col(k) /= nrm;
        out.cols[k].divisor *= nrm;
    }
    return out;
}

/// Finds the high dynamic region: histogram the scores, fit the cumulative bin
/// counts with a one-junction piecewise-linear curve (exhaustive junction
/// search), and keep rows whose score is at least the junction edge.
inline std::vector<int> high_dynamic_region(const Vector& scores, int bins = 200) {
    const int H = static_cast<int>(scores.size());
    if (H == 0) throw std::invalid_argument("no scores");
    const double lo = scores.minCoeff(), hi = scores.maxCoeff();
    std::vector<int> all(H);
    for (int h = 0; h < H; ++h) all[h] = h;
    if (hi - lo <= 1e-300 * std::max(1.0, std::abs(hi))) return all;  // all scores equal

    bins = std::max(bins, 3);
    Vector counts = Vector::Zero(bins);
    const double width = (hi - lo) / bins;
    for (int h = 0; h < H; ++h) {
        int j = std::min(bins - 1, static_cast<int>((scores[h] - lo) / width));
        counts[j] += 1.0;
    }
    Vector B(bins);
    double run = 0.0;
    for (int j = 0; j < bins; ++j) {
        run += counts[j];
        B[j] = run;
    }

    // continuous piecewise-linear r(j) with a junction at jc: basis {1, j, (j-jc)+}
    double best_cost = std::numeric_limits<double>::infinity();
    int best_jc = 1;
    for (int jc = 1; jc < bins - 1; ++jc) {
        Matrix M(bins, 3);
        Vector rhs(bins);
        for (int j = 0; j < bins; ++j) {
            const double w = (B[j] > 0.0) ? 1.0 / B[j] : 0.0;  // sqrt of 1/B^2
            M(j, 0) = w;
            M(j, 1) = w * j;
            M(j, 2) = w * std::max(0.0, static_cast<double>(j - jc));
            rhs[j] = w * B[j];
        }
        Vector sol = M.colPivHouseholderQr().solve(rhs);
        const double cost = (M * sol - rhs).squaredNorm();
        if (cost < best_cost) {
            best_cost = cost;
            best_jc = jc;
        }
    }
    const double gamma = lo + best_jc * width;
    std::vector<int> idx;
    for (int h = 0; h < H; ++h)
        if (scores[h] >= gamma) idx.push_back(h);
    if (idx.empty()) return all;
    return idx;
}

inline std::vector<int> high_dynamic_region(const LinearSystem& sys, int bins = 200) {
    if (sys.row_scores.size() == 0) throw std::invalid_argument("system carries no row scores");
    return high_dynamic_region(sys.row_scores, bins);
}

/// Row restriction to an index set, preserving column metadata.
inline LinearSystem narrow_system(const LinearSystem& sys, const std::vector<int>& rows) {
    if (rows.empty()) throw std::invalid_argument("empty row set");
    LinearSystem out;
    out.dx = sys.dx;
    out.dt = sys.dt;
    out.cols = sys.cols;
    out.warnings = sys.warnings;
    const int H = static_cast<int>(rows.size());
    out.A.resize(H, sys.ncols());
    out.b.resize(H);
    if (sys.row_scores.size()) out.row_scores.resize(H);
    if (sys.lead_scores.size()) out.lead_scores.resize(H, sys.ncols());
    for (int r = 0; r < H; ++r) {
        const int h = rows[r];
        if (h < 0 || h >= sys.nrows()) throw std::out_of_range("row index out of range");
        out.A.row(r) = sys.A.row(h);
        out.b[r] = sys.b[h];
        out.rows.push_back(sys.rows.empty() ? RowMeta{} : sys.rows[h]);
        if (sys.row_scores.size()) out.row_scores[r] = sys.row_scores[h];
        if (sys.lead_scores.size()) out.lead_scores.row(r) = sys.lead_scores.row(h);
    }
    return out;
}

/// Mutual coherence of the system matrix and the pair attaining it.
inline std::pair<double, std::pair<int, int>> mutual_coherence(const LinearSystem& sys) {
    const int nf = sys.ncols();
    if (nf < 2) throw std::invalid_argument("mutual coherence needs at least 2 columns");
    double mu = 0.0;
    std::pair<int, int> arg{0, 1};
    for (int j = 0; j < nf; ++j)
        for (int l = j + 1; l < nf; ++l) {
            const double denom = sys.A.col(j).norm() * sys.A.col(l).norm();
            if (denom == 0.0) continue;
            const double v = std::abs(sys.A.col(j).dot(sys.A.col(l))) / denom;
            if (v > mu) {
                mu = v;
                arg = {j, l};
            }
        }
    return {mu, arg};
}

}  // namespace ident
