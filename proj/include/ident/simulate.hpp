#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ident/denoise.hpp"
#include "ident/dictionary.hpp"
#include "ident/grid.hpp"

namespace ident {

enum class SpatialScheme { Spectral, FiniteDifference };

/// A concrete PDE u_t = sum_k c_k f_k for time evolution.
struct PdeSpec {
    Dictionary dictionary;
    Vector coeffs;
    Grid grid;
    Vector initial;
    SpatialScheme scheme = SpatialScheme::Spectral;

    PdeSpec() = default;
    PdeSpec(Dictionary d, Vector c, Grid g, Vector init,
            SpatialScheme s = SpatialScheme::Spectral)
        : dictionary(std::move(d)), coeffs(std::move(c)), grid(g), initial(std::move(init)),
          scheme(s) {
        if (coeffs.size() != dictionary.size())
            throw std::invalid_argument("coeffs length must match dictionary length");
        if (initial.size() != grid.nx) throw std::invalid_argument("initial length must be nx");
    }
};

namespace detail {

inline Vector wavenumbers(int n, double dx) {
    const double L = n * dx;
    Vector k(n);
    for (int j = 0; j < n; ++j) {
        const int m = (j <= n / 2) ? j : j - n;
        k[j] = 2.0 * M_PI * m / L;
    }
    return k;
}

/// Spectral d^order/dx^order on a periodic grid.
inline Vector spectral_derivative(const Vector& u, double dx, int order) {
    const int n = static_cast<int>(u.size());
    Eigen::FFT<double> fft;
    Eigen::VectorXcd uh(n), src = u.cast<std::complex<double>>();
    fft.fwd(uh, src);
    const Vector k = wavenumbers(n, dx);
    const std::complex<double> I(0.0, 1.0);
    for (int j = 0; j < n; ++j) {
        std::complex<double> mult = std::pow(I * k[j], order);
        if (order % 2 == 1 && n % 2 == 0 && j == n / 2) mult = 0.0;  // Nyquist
        uh[j] *= mult;
    }
    Eigen::VectorXcd out(n);
    fft.inv(out, uh);
    return out.real();
}

inline Vector space_derivative(const Vector& u, double dx, int order, SpatialScheme scheme,
                               Boundary boundary) {
    if (order == 0) return u;
    if (scheme == SpatialScheme::Spectral && boundary == Boundary::Periodic)
        return spectral_derivative(u, dx, order);
    return fd_derivative(u, dx, order, boundary);
}

}  // namespace detail

/// Evaluates the right-hand side sum_k c_k f_k(u) on one spatial slice.
inline Vector pde_rhs(const PdeSpec& model, const Vector& u) {
    const int nx = static_cast<int>(u.size());
    const Grid& g = model.grid;
    std::map<int, Vector> derivs;
    auto deriv = [&](int order) -> const Vector& {
        auto it = derivs.find(order);
        if (it == derivs.end())
            it = derivs.emplace(order, detail::space_derivative(u, g.dx, order, model.scheme,
                                                                g.boundary)).first;
        return it->second;
    };

    Vector rhs = Vector::Zero(nx);
    for (int k = 0; k < model.dictionary.size(); ++k) {
        const double c = model.coeffs[k];
        if (c == 0.0) continue;
        const FeatureTerm& term = model.dictionary[k];
        Vector val;
        if (term.form == FeatureTerm::Form::WeakForm) {
            if (term.alpha == 0 && term.beta == 0) {
                val = Vector::Ones(nx);
            } else if (term.alpha == 0) {
                val = u.array().pow(term.beta).matrix();
            } else if (term.alpha == 1) {
                // product form u^{beta-1} u_x: identical in the continuum to
                // the conservative form d_x(u^beta)/beta but alias-free against
                // the benchmark solvers, which use the product form
                val = u.array().pow(term.beta - 1).matrix().cwiseProduct(deriv(1));
            } else {
                Vector pow = u.array().pow(term.beta).matrix();
                val = detail::space_derivative(pow, g.dx, term.alpha, model.scheme, g.boundary) /
                      static_cast<double>(term.beta);
            }
        } else {
            val = Vector::Ones(nx);
            for (auto& [order, exp] : term.exponents)
                for (int e = 0; e < exp; ++e) val = val.cwiseProduct(deriv(order));
        }
        rhs += c * val;
    }
    if (g.boundary == Boundary::Dirichlet) {
        rhs[0] = 0.0;  // boundary values are held fixed
        rhs[nx - 1] = 0.0;
    }
    return rhs;
}

struct EvolveResult {
    Matrix states;  // nx x horizon, recorded at the observation times
    bool diverged = false;
    int diverged_step = -1;  // observation index at which divergence was detected
    bool aborted = false;    // evolution stopped early by the caller's observer
};

/// RK4 evolution of a candidate PDE with adaptive substepping. Substeps double
/// until the explicit stability indicator max|lambda|*dt <= 0.5 (lambda estimated
/// from the stiffest term's symbol); past 2^14 substeps per observation
/// interval, or when the state amplitude runs away, the evolution is declared
/// diverged. An optional observer sees each recorded state and may stop the
/// evolution early (res.aborted) by returning false.
inline EvolveResult evolve_candidate(const PdeSpec& model, double fine_dt, int horizon,
                                     const Vector& from,
                                     const std::function<bool(int, const Vector&)>& observer = {}) {
    const Grid& g = model.grid;
    if (fine_dt > g.dt / 5.0 + 1e-15) throw std::invalid_argument("fine_dt must be <= dt/5");
    if (horizon < 1 || horizon > g.nt) throw std::invalid_argument("bad horizon");
    if (from.size() != g.nx) throw std::invalid_argument("initial slice length must be nx");

    EvolveResult res;
    res.states.resize(g.nx, horizon);
    Vector u = from;
    res.states.col(0) = u;

    const double kmax = M_PI / g.dx;
    auto stability_scale = [&](const Vector& state) {
        const double umax = std::max(1e-12, state.cwiseAbs().maxCoeff());
        double lam = 0.0;
        for (int k = 0; k < model.dictionary.size(); ++k) {
            const double c = std::abs(model.coeffs[k]);
            if (c == 0.0) continue;
            const FeatureTerm& t = model.dictionary[k];
            const int order = t.max_derivative_order();
            const int deg = std::max(1, t.total_degree());
            lam += c * std::pow(umax, deg - 1) * std::pow(kmax, order);
        }
        return lam;
    };

    // amplitude ceiling: a candidate whose state grows far beyond the initial
    // data is declared divergent without waiting for floating-point overflow
    const double amp_cap = 10.0 * (1.0 + from.cwiseAbs().maxCoeff());

    for (int n = 1; n < horizon; ++n) {
        long substeps = std::max(1L, std::lround(std::ceil(g.dt / fine_dt)));
        const double lam = stability_scale(u);
        while (substeps < (1L << 14) && lam * (g.dt / substeps) > 0.5) substeps *= 2;
        if (lam * (g.dt / substeps) > 0.5) {
            res.diverged = true;
            res.diverged_step = n;
            return res;
        }
        const double dts = g.dt / substeps;
        for (long s = 0; s < substeps; ++s) {
            const Vector k1 = pde_rhs(model, u);
            const Vector k2 = pde_rhs(model, u + 0.5 * dts * k1);
            const Vector k3 = pde_rhs(model, u + 0.5 * dts * k2);
            const Vector k4 = pde_rhs(model, u + dts * k3);
            u += (dts / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!u.allFinite() || u.cwiseAbs().maxCoeff() > amp_cap) {
                res.diverged = true;
                res.diverged_step = n;
                return res;
            }
        }
        res.states.col(n) = u;
        if (observer && !observer(n, u)) {
            res.aborted = true;
            return res;
        }
    }
    return res;
}

enum class BenchmarkPde { Burgers, ViscousBurgers, Transport, KdV, KS };

namespace detail {

/// RK4 on du/dt = rhs(u) with fixed internal step.
inline void rk4_advance(Vector& u, double dt, const std::function<Vector(const Vector&)>& rhs) {
    Vector k1 = rhs(u);
    Vector k2 = rhs(u + 0.5 * dt * k1);
    Vector k3 = rhs(u + 0.5 * dt * k2);
    Vector k4 = rhs(u + dt * k3);
    u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrating-factor RK4 in Fourier space for u_t = L u + N(u) with a
/// diagonal linear symbol; used for the stiff KdV and KS references.
class IntegratingFactorStepper {
public:
    IntegratingFactorStepper(const Vector& symbol, double dt,
                             std::function<Vector(const Vector&)> nonlinear)
        : nonlinear_(std::move(nonlinear)) {
        const int n = static_cast<int>(symbol.size());
        E_.resize(n);
        E2_.resize(n);
        for (int j = 0; j < n; ++j) {
            E_[j] = std::exp(symbol[j] * dt / 2.0);
            E2_[j] = E_[j] * E_[j];
        }
        dt_ = dt;
    }

    void advance(Vector& u) {
        Eigen::FFT<double> fft;
        const int n = static_cast<int>(u.size());
        Eigen::VectorXcd uh(n);
        fft.fwd(uh, Eigen::VectorXcd(u.cast<std::complex<double>>()));
        auto nhat = [&](const Eigen::VectorXcd& vh) {
            Eigen::VectorXcd v(n), out(n);
            fft.inv(v, const_cast<Eigen::VectorXcd&>(vh));
            Vector phys = v.real();
            Vector nl = nonlinear_(phys);
            fft.fwd(out, Eigen::VectorXcd(nl.cast<std::complex<double>>()));
            return out;
        };
        Eigen::VectorXcd k1 = nhat(uh);
        Eigen::VectorXcd k2 = nhat(mul(E_, uh + 0.5 * dt_ * k1));
        Eigen::VectorXcd k3 = nhat(mul(E_, uh) + 0.5 * dt_ * k2);
        Eigen::VectorXcd k4 = nhat(mul(E2_, uh) + dt_ * mul(E_, k3));
        uh = mul(E2_, uh) +
             dt_ / 6.0 * (mul(E2_, k1) + 2.0 * mul(E_, k2 + k3) + k4);
        Eigen::VectorXcd back(n);
        fft.inv(back, uh);
        u = back.real();
    }

private:
    static Eigen::VectorXcd mul(const Eigen::VectorXd& d, const Eigen::VectorXcd& v) {
        return d.array().cast<std::complex<double>>() * v.array();
    }
    Eigen::VectorXd E_, E2_;
    double dt_ = 0.0;
    std::function<Vector(const Vector&)> nonlinear_;
};

inline void check_finite(const Vector& u) {
    if (!u.allFinite()) throw std::runtime_error("blow-up; reduce internal step");
}

}  // namespace detail

inline Vector default_initial(BenchmarkPde pde, const Grid& g) {
    Vector u(g.nx);
    switch (pde) {
        case BenchmarkPde::Burgers:
        case BenchmarkPde::ViscousBurgers:
            for (int i = 0; i < g.nx; ++i) u[i] = std::sin(4.0 * M_PI * g.x(i));
            break;
        case BenchmarkPde::Transport:
            for (int i = 0; i < g.nx; ++i) u[i] = std::sin(2.0 * M_PI * g.x(i));
            break;
        case BenchmarkPde::KdV:
            for (int i = 0; i < g.nx; ++i)
                u[i] = std::cos(M_PI * g.x(i)) + 0.3 * std::sin(2.0 * M_PI * g.x(i));
            break;
        case BenchmarkPde::KS:
            for (int i = 0; i < g.nx; ++i)
                u[i] = std::cos(2.0 * M_PI * g.x(i)) * (1.0 + 0.1 * std::sin(2.0 * M_PI * g.x(i)));
            break;
    }
    return u;
}

/// Solves the named benchmark PDE on an internally refined time grid and
/// subsamples onto `grid`. Spectral derivatives + RK4 under periodic BC,
/// 2nd-order central FD + RK4 under Dirichlet, integrating-factor stepping
/// for KdV and KS.
inline Field simulate_reference(BenchmarkPde pde, const Grid& grid,
                                std::optional<Vector> init = std::nullopt, int refine = 10) {
    if (refine < 1) throw std::invalid_argument("refine must be >= 1");
    if ((pde == BenchmarkPde::KdV || pde == BenchmarkPde::KS) &&
        grid.boundary != Boundary::Periodic)
        throw std::invalid_argument("KdV/KS require a periodic grid");

    Vector u = init.value_or(default_initial(pde, grid));
    if (u.size() != grid.nx) throw std::invalid_argument("initial length must be nx");

    const bool periodic = grid.boundary == Boundary::Periodic;
    const SpatialScheme scheme = periodic ? SpatialScheme::Spectral : SpatialScheme::FiniteDifference;
    auto dx_op = [&](const Vector& v, int order) {
        return detail::space_derivative(v, grid.dx, order, scheme, grid.boundary);
    };

    Matrix states(grid.nx, grid.nt);
    states.col(0) = u;

    if (pde == BenchmarkPde::KdV || pde == BenchmarkPde::KS) {
        const Vector k = detail::wavenumbers(grid.nx, grid.dx);
        Vector symbol(grid.nx);
        std::function<Vector(const Vector&)> nonlinear;
        if (pde == BenchmarkPde::KdV) {
            // u_t = -0.5 u u_x - u_xxx ; the dispersive symbol is imaginary and
            // handled in the dedicated branch below
            symbol.setZero();
            nonlinear = [&dx_op](const Vector& v) -> Vector {
                return (-0.5 * v.array() * dx_op(v, 1).array()).matrix();
            };
        } else {
            for (int i = 0; i < grid.nx; ++i) symbol[i] = -1.0 + k[i] * k[i] - std::pow(k[i], 4);
            nonlinear = [](const Vector& v) -> Vector { return Vector::Zero(v.size()); };
        }

        if (pde == BenchmarkPde::KS) {
            const double fine = grid.dt / refine;
            detail::IntegratingFactorStepper step(symbol, fine, nonlinear);
            for (int n = 1; n < grid.nt; ++n) {
                for (int s = 0; s < refine; ++s) step.advance(u);
                detail::check_finite(u);
                states.col(n) = u;
            }
        } else {
            // KdV dispersive symbol is imaginary; step in Fourier space directly
            const double fine = grid.dt / refine;
            Eigen::FFT<double> fft;
            const std::complex<double> I(0.0, 1.0);
            Eigen::VectorXcd E(grid.nx), E2(grid.nx);
            for (int i = 0; i < grid.nx; ++i) {
                const std::complex<double> lam = -std::pow(I * k[i], 3);  // from -u_xxx
                E[i] = std::exp(lam * (fine / 2.0));
                E2[i] = E[i] * E[i];
            }
            auto nhat = [&](const Eigen::VectorXcd& vh) {
                Eigen::VectorXcd v(grid.nx), out(grid.nx);
                fft.inv(v, const_cast<Eigen::VectorXcd&>(vh));
                Vector phys = v.real();
                Vector nl = nonlinear(phys);
                fft.fwd(out, Eigen::VectorXcd(nl.cast<std::complex<double>>()));
                return out;
            };
            Eigen::VectorXcd uh(grid.nx);
            fft.fwd(uh, Eigen::VectorXcd(u.cast<std::complex<double>>()));
            for (int n = 1; n < grid.nt; ++n) {
                for (int s = 0; s < refine; ++s) {
                    Eigen::VectorXcd k1 = nhat(uh);
                    Eigen::VectorXcd k2 = nhat(E.cwiseProduct(uh + 0.5 * fine * k1));
                    Eigen::VectorXcd k3 = nhat(E.cwiseProduct(uh) + 0.5 * fine * k2);
                    Eigen::VectorXcd k4 = nhat(E2.cwiseProduct(uh) + fine * E.cwiseProduct(k3));
                    uh = E2.cwiseProduct(uh) +
                         fine / 6.0 *
                             (E2.cwiseProduct(k1) + 2.0 * E.cwiseProduct(k2 + k3) + k4);
                }
                Eigen::VectorXcd back(grid.nx);
                fft.inv(back, uh);
                u = back.real();
                detail::check_finite(u);
                states.col(n) = u;
            }
        }
        return Field(grid, std::move(states));
    }

    // non-stiff references: RK4 with CFL-limited substeps
    std::function<Vector(const Vector&)> rhs;
    switch (pde) {
        case BenchmarkPde::Transport:
            rhs = [&dx_op](const Vector& v) -> Vector { return -dx_op(v, 1); };
            break;
        case BenchmarkPde::Burgers:
            rhs = [&dx_op, &grid](const Vector& v) -> Vector {
                Vector r = (-v.array() * dx_op(v, 1).array()).matrix();
                if (grid.boundary == Boundary::Dirichlet) {
                    r[0] = 0.0;
                    r[grid.nx - 1] = 0.0;
                }
                return r;
            };
            break;
        case BenchmarkPde::ViscousBurgers:
            rhs = [&dx_op, &grid](const Vector& v) -> Vector {
                Vector r = (-v.array() * dx_op(v, 1).array() + 0.1 * dx_op(v, 2).array()).matrix();
                if (grid.boundary == Boundary::Dirichlet) {
                    r[0] = 0.0;
                    r[grid.nx - 1] = 0.0;
                }
                return r;
            };
            break;
        default: throw std::logic_error("unreachable");
    }

    for (int n = 1; n < grid.nt; ++n) {
        // tighten substeps when advective/diffusive CFL demands it
        const double umax = std::max(1.0, u.cwiseAbs().maxCoeff());
        double limit = grid.dx / umax;
        if (pde == BenchmarkPde::ViscousBurgers)
            limit = std::min(limit, grid.dx * grid.dx / 0.1 * 0.5);
        int steps = refine;
        while (grid.dt / steps > 0.5 * limit) steps *= 2;
        const double fine = grid.dt / steps;
        for (int s = 0; s < steps; ++s) detail::rk4_advance(u, fine, rhs);
        detail::check_finite(u);
        states.col(n) = u;
    }
    return Field(grid, std::move(states));
}

/// Reference evolution of u_t = a(x) u_x on a periodic grid (varying speed).
inline Field simulate_varying_advection(const Grid& grid, const Vector& speed, const Vector& init,
                                        int refine = 10) {
    if (grid.boundary != Boundary::Periodic)
        throw std::invalid_argument("varying advection reference requires periodic BC");
    if (speed.size() != grid.nx || init.size() != grid.nx)
        throw std::invalid_argument("speed/init length must be nx");
    auto rhs = [&](const Vector& v) -> Vector {
        return (speed.array() * detail::spectral_derivative(v, grid.dx, 1).array()).matrix();
    };
    Vector u = init;
    Matrix states(grid.nx, grid.nt);
    states.col(0) = u;
    const double amax = std::max(1.0, speed.cwiseAbs().maxCoeff());
    for (int n = 1; n < grid.nt; ++n) {
        int steps = refine;
        while (grid.dt / steps > 0.5 * grid.dx / amax) steps *= 2;
        const double fine = grid.dt / steps;
        for (int s = 0; s < steps; ++s) detail::rk4_advance(u, fine, rhs);
        detail::check_finite(u);
        states.col(n) = u;
    }
    return Field(grid, std::move(states));
}

}  // namespace ident
