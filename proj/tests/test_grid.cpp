#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ident/grid.hpp"

using namespace ident;

namespace {

Field make_field(int nx, int nt, double (*f)(double, double)) {
    Grid g(0.0, 1.0 / nx, nx, 0.0, 0.01, nt, Boundary::Periodic);
    Matrix v(nx, nt);
    for (int n = 0; n < nt; ++n)
        for (int i = 0; i < nx; ++i) v(i, n) = f(g.x(i), g.t(n));
    return Field(g, std::move(v));
}

}  // namespace

TEST(Grid, ValidatesShape) {
    EXPECT_THROW(Grid(0, -0.1, 16, 0, 0.1, 16), std::invalid_argument);
    EXPECT_THROW(Grid(0, 0.1, 4, 0, 0.1, 16), std::invalid_argument);
    EXPECT_THROW(Grid(0, 0.1, 16, 0, 0.1, 2), std::invalid_argument);
    Grid g(0, 0.1, 16, 0, 0.1, 8);
    EXPECT_DOUBLE_EQ(g.x(3), 0.3);
    EXPECT_DOUBLE_EQ(g.t(2), 0.2);
}

TEST(Field, RejectsMismatchAndNonFinite) {
    Grid g(0, 0.1, 16, 0, 0.1, 8);
    EXPECT_THROW(Field(g, Matrix::Zero(8, 8)), std::invalid_argument);
    Matrix bad = Matrix::Zero(16, 8);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(Field(g, bad), std::invalid_argument);
}

TEST(Noise, SigmaPercentMatchesDirectRms) {
    Field f = make_field(32, 16, [](double x, double t) { return std::sin(2 * M_PI * x) + t; });
    // oracle: direct rms summation
    double ss = 0.0;
    for (int n = 0; n < 16; ++n)
        for (int i = 0; i < 32; ++i) ss += f.values(i, n) * f.values(i, n);
    const double rms = std::sqrt(ss / (32 * 16));
    EXPECT_NEAR(sigma_from_percent(f, 8.0), 0.08 * rms, 1e-12);
    EXPECT_DOUBLE_EQ(sigma_from_percent(f, 0.0), 0.0);
}

TEST(Noise, SigmaNsrUsesMidrangeCentering) {
    Field f = make_field(32, 16, [](double x, double) { return 2.0 + std::sin(2 * M_PI * x); });
    const double mid = 0.5 * (f.values.maxCoeff() + f.values.minCoeff());
    double ss = 0.0;
    for (int n = 0; n < 16; ++n)
        for (int i = 0; i < 32; ++i) ss += std::pow(f.values(i, n) - mid, 2);
    EXPECT_NEAR(sigma_from_nsr(f, 0.5), 0.5 * std::sqrt(ss / (32 * 16)), 1e-12);
}

TEST(Noise, DeterministicPerSeedAndSeedSensitive) {
    Field f = make_field(32, 16, [](double x, double) { return std::sin(2 * M_PI * x); });
    NoiseSpec spec(NoiseKind::PercentOfRms, 0.1, 42);
    Field a = add_gaussian_noise(f, spec);
    Field b = add_gaussian_noise(f, spec);
    EXPECT_EQ((a.values - b.values).cwiseAbs().maxCoeff(), 0.0);
    NoiseSpec other(NoiseKind::PercentOfRms, 0.1, 43);
    Field c = add_gaussian_noise(f, other);
    EXPECT_GT((a.values - c.values).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Noise, EmpiricalSigmaNearRequested) {
    Field f = make_field(64, 64, [](double x, double) { return std::sin(2 * M_PI * x); });
    const double sigma = sigma_from_percent(f, 10.0);
    Field noisy = add_gaussian_noise(f, NoiseSpec(NoiseKind::PercentOfRms, 0.1, 7));
    Matrix delta = noisy.values - f.values;
    const double emp = std::sqrt(delta.array().square().sum() / delta.size());
    EXPECT_NEAR(emp, sigma, 0.05 * sigma);
}

TEST(FieldCsv, RoundTripsExactly) {
    Field f = make_field(32, 16, [](double x, double t) { return std::sin(2 * M_PI * x) * (1 + t); });
    std::stringstream ss;
    write_field_csv(f, ss);
    Field back = read_field_csv(ss);
    EXPECT_EQ(back.grid.nx, f.grid.nx);
    EXPECT_EQ(back.grid.nt, f.grid.nt);
    EXPECT_DOUBLE_EQ(back.grid.dx, f.grid.dx);
    EXPECT_EQ(back.grid.boundary, Boundary::Periodic);
    EXPECT_EQ((back.values - f.values).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FieldCsv, RejectsBadHeader) {
    std::stringstream ss("1,2,3\n");
    EXPECT_THROW(read_field_csv(ss), std::runtime_error);
}
