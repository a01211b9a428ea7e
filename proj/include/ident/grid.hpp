#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ident {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Boundary { Periodic, Dirichlet };

/// Uniform space-time sampling grid. Space index is the fast-varying one:
/// a Field stores nx rows by nt columns, one column per time slice.
struct Grid {
    double x0 = 0.0;
    double dx = 1.0;
    int nx = 0;
    double t0 = 0.0;
    double dt = 1.0;
    int nt = 0;
    Boundary boundary = Boundary::Periodic;

    Grid() = default;
    Grid(double x0_, double dx_, int nx_, double t0_, double dt_, int nt_,
         Boundary b = Boundary::Periodic)
        : x0(x0_), dx(dx_), nx(nx_), t0(t0_), dt(dt_), nt(nt_), boundary(b) {
        if (dx <= 0.0 || dt <= 0.0) throw std::invalid_argument("grid spacing must be positive");
        if (nx < 8) throw std::invalid_argument("nx must be >= 8");
        if (nt < 4) throw std::invalid_argument("nt must be >= 4");
    }

    double x(int i) const { return x0 + i * dx; }
    double t(int n) const { return t0 + n * dt; }
    Vector x_nodes() const {
        Vector v(nx);
        for (int i = 0; i < nx; ++i) v[i] = x(i);
        return v;
    }
};

/// A sampled scalar solution U_i^n on a grid; values(i, n) = U at (x_i, t_n).
struct Field {
    Grid grid;
    Matrix values;  // nx x nt

    Field() = default;
    Field(const Grid& g, Matrix v) : grid(g), values(std::move(v)) {
        if (values.rows() != grid.nx || values.cols() != grid.nt)
            throw std::invalid_argument("field dimensions do not match grid");
        if (!values.allFinite()) throw std::invalid_argument("field contains non-finite values");
    }

    static Field zeros(const Grid& g) { return Field(g, Matrix::Zero(g.nx, g.nt)); }

    Vector slice(int n) const { return values.col(n); }
    int size() const { return grid.nx * grid.nt; }
};

enum class NoiseKind { PercentOfRms, NsrOfCenteredRms };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::PercentOfRms;
    double level = 0.0;  // p/100-style percent or sigma_NSR, both >= 0
    std::uint64_t seed = 0;

    NoiseSpec() = default;
    NoiseSpec(NoiseKind k, double lvl, std::uint64_t s) : kind(k), level(lvl), seed(s) {
        if (level < 0.0) throw std::invalid_argument("noise level must be nonnegative");
    }
};

/// sigma for "p% noise": (p/100) * rms of the clean samples.
inline double sigma_from_percent(const Field& clean, double p) {
    if (p < 0.0) throw std::invalid_argument("percent must be nonnegative");
    if (clean.size() == 0) throw std::invalid_argument("empty field");
    const double ms = clean.values.array().square().sum() / clean.size();
    return (p / 100.0) * std::sqrt(ms);
}

/// sigma for an NSR level: sigma_NSR * rms of the midrange-centered samples.
inline double sigma_from_nsr(const Field& clean, double nsr) {
    if (nsr < 0.0) throw std::invalid_argument("nsr must be nonnegative");
    if (clean.size() == 0) throw std::invalid_argument("empty field");
    const double mid = 0.5 * (clean.values.maxCoeff() + clean.values.minCoeff());
    const double ms = (clean.values.array() - mid).square().sum() / clean.size();
    return nsr * std::sqrt(ms);
}

inline double noise_sigma(const Field& clean, const NoiseSpec& spec) {
    return spec.kind == NoiseKind::PercentOfRms ? sigma_from_percent(clean, 100.0 * spec.level)
                                                : sigma_from_nsr(clean, spec.level);
}

/// Adds iid N(0, sigma^2) samples; deterministic per seed.
inline Field add_gaussian_noise(const Field& clean, const NoiseSpec& spec) {
    const double sigma = noise_sigma(clean, spec);
    if (sigma == 0.0) return clean;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    Matrix noisy = clean.values;
    for (int n = 0; n < clean.grid.nt; ++n)
        for (int i = 0; i < clean.grid.nx; ++i) noisy(i, n) += gauss(rng);
    return Field(clean.grid, std::move(noisy));
}

// ---- Field CSV format ----
// First line: "# nx=<int> nt=<int> x0=<f> dx=<f> t0=<f> dt=<f> boundary=<periodic|dirichlet>"
// then nt lines of nx comma-separated values (one time slice per line).

inline void write_field_csv(const Field& f, std::ostream& os) {
    const Grid& g = f.grid;
    os.precision(17);
    os << "# nx=" << g.nx << " nt=" << g.nt << " x0=" << g.x0 << " dx=" << g.dx << " t0=" << g.t0
       << " dt=" << g.dt
       << " boundary=" << (g.boundary == Boundary::Periodic ? "periodic" : "dirichlet") << "\n";
    for (int n = 0; n < g.nt; ++n) {
        for (int i = 0; i < g.nx; ++i) {
            if (i) os << ",";
            os << f.values(i, n);
        }
        os << "\n";
    }
}

inline void write_field_csv(const Field& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_field_csv(f, os);
}

inline Field read_field_csv(std::istream& is, const std::string& what = "<stream>") {
    std::string header;
    if (!std::getline(is, header) || header.empty() || header[0] != '#')
        throw std::runtime_error("bad field header in " + what);
    auto grab = [&header, &what](const std::string& key) {
        const std::string tag = key + "=";
        auto pos = header.find(tag);
        if (pos == std::string::npos)
            throw std::runtime_error("missing '" + key + "' in field header of " + what);
        return header.substr(pos + tag.size(), header.find(' ', pos) - pos - tag.size());
    };
    Grid g;
    g.nx = std::stoi(grab("nx"));
    g.nt = std::stoi(grab("nt"));
    g.x0 = std::stod(grab("x0"));
    g.dx = std::stod(grab("dx"));
    g.t0 = std::stod(grab("t0"));
    g.dt = std::stod(grab("dt"));
    g.boundary = grab("boundary") == "dirichlet" ? Boundary::Dirichlet : Boundary::Periodic;

    Matrix v(g.nx, g.nt);
    std::string line;
    for (int n = 0; n < g.nt; ++n) {
        if (!std::getline(is, line)) throw std::runtime_error("truncated field data in " + what);
        std::stringstream ss(line);
        std::string cell;
        for (int i = 0; i < g.nx; ++i) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("short row in field data of " + what);
            v(i, n) = std::stod(cell);
        }
    }
    return Field(g, std::move(v));
}

inline Field read_field_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open field file: " + path);
    return read_field_csv(is, path);
}

}  // namespace ident
