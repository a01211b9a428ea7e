#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ident/grid.hpp"

namespace ident {

enum class SmootherKind { LSMA, MLS, Identity };

struct SmootherConfig {
    SmootherKind kind = SmootherKind::MLS;
    double mls_bandwidth = 0.0;  // kernel width h; 0 means "5*dx" default at use site
    int degree = 2;              // local polynomial degree

    SmootherConfig() = default;
    SmootherConfig(SmootherKind k, double h, int deg = 2) : kind(k), mls_bandwidth(h), degree(deg) {
        if (k == SmootherKind::MLS && h <= 0.0)
            throw std::invalid_argument("MLS bandwidth must be positive");
        if (deg < 2 || deg > 4) throw std::invalid_argument("degree must be in {2,3,4}");
    }
};

/// Finite-difference weights for the m-th derivative at point x0 given
/// arbitrary stencil nodes (Fornberg's recurrence).
inline std::vector<double> fd_weights(double x0, const std::vector<double>& nodes, int m) {
    const int n = static_cast<int>(nodes.size()) - 1;
    if (n < m) throw std::invalid_argument("stencil too short for derivative order");
    std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
    c[0][0] = 1.0;
    double c1 = 1.0;
    double c4 = nodes[0] - x0;
    for (int i = 1; i <= n; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        double c5 = c4;
        c4 = nodes[i] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(n + 1);
    for (int i = 0; i <= n; ++i) w[i] = c[i][m];
    return w;
}

namespace detail {

/// Central stencil (offsets and weights) of 4th-order accuracy for derivative `order`.
inline void central_stencil(int order, double dx, std::vector<int>& offs, std::vector<double>& w) {
    const int half = (order <= 2) ? 2 : 3;
    offs.clear();
    std::vector<double> nodes;
    for (int o = -half; o <= half; ++o) {
        offs.push_back(o);
        nodes.push_back(o * dx);
    }
    w = fd_weights(0.0, nodes, order);
}

}  // namespace detail

/// 4th-order finite differences of the requested derivative order, with
/// periodic wraparound or one-sided stencils at Dirichlet boundaries.
inline Vector fd_derivative(const Vector& samples, double spacing, int order, Boundary boundary) {
    if (order < 1 || order > 4) throw std::invalid_argument("derivative order must be in {1,...,4}");
    const int n = static_cast<int>(samples.size());
    const int width = order + 5;  // one-sided stencil width for 4th-order accuracy
    if (n < width) throw std::invalid_argument("sequence shorter than stencil");

    std::vector<int> offs;
    std::vector<double> w;
    detail::central_stencil(order, spacing, offs, w);
    const int half = offs.back();

    Vector out(n);
    for (int i = half; i < n - half; ++i) {
        double acc = 0.0;
        for (size_t s = 0; s < offs.size(); ++s) acc += w[s] * samples[i + offs[s]];
        out[i] = acc;
    }
    if (boundary == Boundary::Periodic) {
        for (int i = 0; i < n; ++i) {
            if (i >= half && i < n - half) continue;
            double acc = 0.0;
            for (size_t s = 0; s < offs.size(); ++s)
                acc += w[s] * samples[((i + offs[s]) % n + n) % n];
            out[i] = acc;
        }
    } else {
        // one-sided stencils of matching accuracy near the edges
        for (int i = 0; i < half; ++i) {
            std::vector<double> nodes(width);
            for (int s = 0; s < width; ++s) nodes[s] = (s - i) * spacing;
            auto ws = fd_weights(0.0, nodes, order);
            double acc = 0.0;
            for (int s = 0; s < width; ++s) acc += ws[s] * samples[s];
            out[i] = acc;
        }
        for (int i = n - half; i < n; ++i) {
            std::vector<double> nodes(width);
            for (int s = 0; s < width; ++s) nodes[s] = (n - width + s - i) * spacing;
            auto ws = fd_weights(0.0, nodes, order);
            double acc = 0.0;
            for (int s = 0; s < width; ++s) acc += ws[s] * samples[n - width + s];
            out[i] = acc;
        }
    }
    return out;
}

/// Least-squares moving average: at each point, fit a quadratic whose 5-point
/// moving averages match the 5-point moving averages of the data at
/// j = i, i+-1, i+-2. Near the edges the fit degrades to plain least squares
/// on the nearest 5 samples.
inline Vector lsma_smooth(const Vector& samples, double spacing) {
    const int n = static_cast<int>(samples.size());
    if (n < 9) throw std::invalid_argument("lsma_smooth needs at least 9 samples");

    // 5-point moving averages, defined where the full window fits
    Vector mavg(n);
    for (int j = 2; j < n - 2; ++j) mavg[j] = samples.segment(j - 2, 5).mean() ;

    Vector out(n);
    Eigen::Matrix<double, 5, 3> A;
    Eigen::Matrix<double, 5, 1> rhs;
    for (int i = 0; i < n; ++i) {
        if (i >= 4 && i < n - 4) {
            // averaged quadratic: avg of p over 5 points centered at x_j is
            // p(x_j) + 2*a2*dx^2
            for (int r = 0; r < 5; ++r) {
                const int j = i - 2 + r;
                const double d = (j - i) * spacing;
                A(r, 0) = 1.0;
                A(r, 1) = d;
                A(r, 2) = d * d + 2.0 * spacing * spacing;
                rhs[r] = mavg[j];
            }
        } else {
            // clamped plain least-squares window
            const int j0 = std::clamp(i - 2, 0, n - 5);
            for (int r = 0; r < 5; ++r) {
                const double d = (j0 + r - i) * spacing;
                A(r, 0) = 1.0;
                A(r, 1) = d;
                A(r, 2) = d * d;
                rhs[r] = samples[j0 + r];
            }
        }
        Eigen::Vector3d coef = A.colPivHouseholderQr().solve(rhs);
        out[i] = coef[0];
    }
    return out;
}

/// Moving least squares: local polynomial fit with Gaussian weights
/// exp(-(x_i - x_j)^2 / h^2) evaluated at each node.
inline Vector mls_smooth(const Vector& samples, double spacing, const SmootherConfig& cfg) {
    const int n = static_cast<int>(samples.size());
    const double h = cfg.mls_bandwidth > 0.0 ? cfg.mls_bandwidth : 5.0 * spacing;
    const int deg = cfg.degree;
    if (n < deg + 1) throw std::invalid_argument("too few samples for mls degree");

    // weights are negligible beyond ~6h
    const int reach = std::max(deg + 1, static_cast<int>(std::ceil(6.0 * h / spacing)));
    Vector out(n);
    for (int i = 0; i < n; ++i) {
        const int j0 = std::max(0, i - reach);
        const int j1 = std::min(n - 1, i + reach);
        const int m = j1 - j0 + 1;
        if (m < deg + 1) throw std::runtime_error("bandwidth too small");
        Matrix A(m, deg + 1);
        Vector rhs(m);
        double wmax = 0.0;
        for (int r = 0; r < m; ++r) {
            const double d = (j0 + r - i) * spacing;
            const double w = std::exp(-d * d / (h * h));
            wmax = std::max(wmax, w);
            const double sw = std::sqrt(w);
            double pw = sw;
            for (int c = 0; c <= deg; ++c) {
                A(r, c) = pw;
                pw *= d;
            }
            rhs[r] = sw * samples[j0 + r];
        }
        if (wmax < 1e-300) throw std::runtime_error("bandwidth too small");
        Vector coef = A.colPivHouseholderQr().solve(rhs);
        out[i] = coef[0];
    }
    return out;
}

inline Vector apply_smoother(const Vector& samples, double spacing, const SmootherConfig& cfg) {
    switch (cfg.kind) {
        case SmootherKind::LSMA: return lsma_smooth(samples, spacing);
        case SmootherKind::MLS: return mls_smooth(samples, spacing, cfg);
        case SmootherKind::Identity: return samples;
    }
    throw std::logic_error("unknown smoother");
}

/// Successively denoised differentiation along one axis: smooth once, then
/// alternate (differentiate, smooth) `order` times. Order 0 returns S[U].
inline Vector sdd_derivative_1d(const Vector& samples, double spacing, int order,
                                const SmootherConfig& cfg, Boundary boundary) {
    if (order < 0) throw std::invalid_argument("order must be nonnegative");
    Vector cur = apply_smoother(samples, spacing, cfg);
    for (int k = 0; k < order; ++k) {
        cur = fd_derivative(cur, spacing, 1, boundary);
        cur = apply_smoother(cur, spacing, cfg);
    }
    return cur;
}

/// SDD spatial derivative applied per time slice; returns an nx x nt matrix.
inline Matrix sdd_derivative(const Field& field, int order, const SmootherConfig& cfg) {
    const Grid& g = field.grid;
    Matrix out(g.nx, g.nt);
    for (int n = 0; n < g.nt; ++n)
        out.col(n) = sdd_derivative_1d(field.values.col(n), g.dx, order, cfg, g.boundary);
    return out;
}

/// MLS bandwidth for the time direction: covers the same number of grid
/// samples as the spatial pass, so a grid with dt != dx is smoothed equally
/// hard along both axes instead of inheriting the spatial physical width.
inline SmootherConfig time_scaled(const SmootherConfig& cfg, const Grid& g) {
    SmootherConfig out = cfg;
    if (cfg.kind == SmootherKind::MLS) {
        const double h = cfg.mls_bandwidth > 0.0 ? cfg.mls_bandwidth : 5.0 * g.dx;
        out.mls_bandwidth = h * g.dt / g.dx;
    }
    return out;
}

/// SDD time derivative per spatial location. Time is never periodic here;
/// one-sided stencils are used at the first and last slices.
inline Matrix sdd_time_derivative(const Field& field, const SmootherConfig& cfg) {
    const Grid& g = field.grid;
    const SmootherConfig tcfg = time_scaled(cfg, g);
    Matrix out(g.nx, g.nt);
    for (int i = 0; i < g.nx; ++i) {
        Vector row = field.values.row(i).transpose();
        out.row(i) =
            sdd_derivative_1d(row, g.dt, 1, tcfg, Boundary::Dirichlet).transpose();
    }
    return out;
}

/// Smooths a whole field along x (per slice) and then along t (per location).
inline Field smooth_field(const Field& field, const SmootherConfig& cfg) {
    if (cfg.kind == SmootherKind::Identity) return field;
    const Grid& g = field.grid;
    const SmootherConfig tcfg = time_scaled(cfg, g);
    Matrix v(g.nx, g.nt);
    for (int n = 0; n < g.nt; ++n) v.col(n) = apply_smoother(field.values.col(n), g.dx, cfg);
    for (int i = 0; i < g.nx; ++i) {
        Vector row = v.row(i).transpose();
        v.row(i) = apply_smoother(row, g.dt, tcfg).transpose();
    }
    return Field(g, std::move(v));
}

}  // namespace ident
