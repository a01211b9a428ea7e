#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ident/varying.hpp"
#include "ident/simulate.hpp"

using namespace ident;

namespace {

Dictionary weak_terms(std::vector<std::pair<int, int>> ab) {
    Dictionary d;
    d.style = DictionaryStyle::WeakForm;
    for (auto& [a, b] : ab) {
        d.terms.push_back(FeatureTerm::weak(a, b));
        d.max_alpha = std::max(d.max_alpha, a);
        d.max_beta = std::max(d.max_beta, b);
    }
    return d;
}

/// Degenerate one-element basis phi == 1 (not buildable via build_basis).
BasisSet constant_basis(const Grid& g) {
    BasisSet bs;
    bs.kind = BasisKind::BSpline;
    bs.nb = 1;
    bs.degree = 0;
    bs.a = g.x0;
    bs.b = g.x0 + (g.nx - 1) * g.dx;
    bs.knots = {bs.a, bs.b};
    return bs;
}

}  // namespace

TEST(Basis, PartitionOfUnity) {
    Grid g(0.0, 1.0 / 32, 32, 0.0, 0.1, 8);
    for (BasisKind kind : {BasisKind::FiniteElementHat, BasisKind::BSpline}) {
        BasisSet bs = build_basis(kind, 9, g);
        for (int i = 0; i < g.nx; ++i)
            EXPECT_NEAR(basis_values(bs, g.x(i)).sum(), 1.0, 1e-12);
    }
    EXPECT_THROW(build_basis(BasisKind::BSpline, 1, g), std::invalid_argument);
}

TEST(Basis, TwoHatsAreLinearInterpolationWeights) {
    Grid g(0.0, 1.0 / 16, 16, 0.0, 0.1, 8);
    BasisSet bs = build_basis(BasisKind::FiniteElementHat, 2, g);
    const double L = (g.nx - 1) * g.dx;
    for (double x : {0.0, 0.25 * L, 0.5 * L, L}) {
        Vector v = basis_values(bs, x);
        EXPECT_NEAR(v[0], 1.0 - x / L, 1e-12);
        EXPECT_NEAR(v[1], x / L, 1e-12);
    }
}

TEST(Basis, HatIntegratesToKnotSpan) {
    // interior hat: triangle of height 1 over two knot spans
    Grid g(0.0, 1.0 / 64, 64, 0.0, 0.1, 8);
    BasisSet bs = build_basis(BasisKind::FiniteElementHat, 9, g);
    const double span = (bs.b - bs.a) / (bs.nb - bs.degree);
    const int fine = 20000;
    const double h = (bs.b - bs.a) / fine;
    double integral = 0.0;
    for (int i = 0; i <= fine; ++i)
        integral += detail::bspline_value(bs.knots, 4, bs.degree, bs.a + i * h) * h;
    EXPECT_NEAR(integral, span, 1e-3);
}

TEST(Basis, SplineDerivativeMatchesFiniteDifference) {
    Grid g(0.0, 1.0 / 32, 32, 0.0, 0.1, 8);
    BasisSet bs = build_basis(BasisKind::BSpline, 8, g, false, 3);
    const double eps = 1e-6;
    for (double x : {0.17, 0.34, 0.71}) {
        for (int m = 0; m < bs.nb; ++m) {
            const double fd = (detail::bspline_value(bs.knots, m, bs.degree, x + eps) -
                               detail::bspline_value(bs.knots, m, bs.degree, x - eps)) /
                              (2 * eps);
            EXPECT_NEAR(basis_derivative(bs, m, x, 1), fd, 1e-5);
        }
    }
}

TEST(Basis, ReconstructionInterpolatesSpanMembers) {
    Grid g(0.0, 1.0 / 32, 32, 0.0, 0.1, 8);
    BasisSet bs = build_basis(BasisKind::FiniteElementHat, 9, g);
    // a piecewise-linear function on the knots lies in the hat span
    Vector coeffs(bs.nb);
    for (int m = 0; m < bs.nb; ++m) coeffs[m] = std::sin(1.0 + m);
    Vector curve = reconstruct_coefficient(bs, coeffs, g);
    const double span = (bs.b - bs.a) / (bs.nb - 1);
    for (int m = 0; m < bs.nb; ++m) {
        // evaluate at the m-th knot
        const double x = bs.a + m * span;
        const int i = static_cast<int>(std::round((x - g.x0) / g.dx));
        if (i >= 0 && i < g.nx && std::abs(g.x(i) - x) < 1e-12)
            EXPECT_NEAR(curve[i], coeffs[m], 1e-12);
    }
}

TEST(GroupSystem, DegenerateBasisReducesToConstantCoefficients) {
    Grid g(0.0, 1.0 / 32, 32, 0.0, 0.01, 16, Boundary::Periodic);
    Field f = simulate_reference(BenchmarkPde::Transport, g);
    Dictionary d = weak_terms({{0, 1}, {1, 1}});
    SmootherConfig cfg;
    cfg.kind = SmootherKind::Identity;
    GroupSystem gs = assemble_group_system(f, d, constant_basis(g), GroupForm::Differential, cfg);
    LinearSystem plain = assemble_differential(f, d, cfg);
    ASSERT_EQ(gs.sys.ncols(), plain.ncols());
    EXPECT_LT((gs.sys.A - plain.A).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((gs.sys.b - plain.b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GroupSystem, WeakColumnsSumToConstantCoefficientColumns) {
    // sum over basis elements telescopes to the constant-coefficient weak system
    Grid g(0.0, 1.0 / 32, 32, 0.0, 0.01, 32, Boundary::Periodic);
    Field f = simulate_reference(BenchmarkPde::Transport, g);
    Dictionary d = weak_terms({{0, 1}, {1, 2}, {2, 1}});
    TestFunction tf(5, 5, 4, 2);
    BasisSet bs = build_basis(BasisKind::BSpline, 6, g);
    GroupSystem gs =
        assemble_group_system(f, d, bs, GroupForm::Weak, SmootherConfig{}, tf);
    LinearSystem plain = assemble_weak(f, d, tf);
    ASSERT_EQ(gs.sys.nrows(), plain.nrows());
    for (int k = 0; k < d.size(); ++k) {
        Vector sum = Vector::Zero(gs.sys.nrows());
        for (int col : gs.groups[k]) sum += gs.sys.A.col(col);
        EXPECT_LT((sum - plain.A.col(k)).cwiseAbs().maxCoeff(), 1e-10) << d[k].label;
    }
    EXPECT_LT((gs.sys.b - plain.b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GroupSystem, RecoversVaryingAdvectionSpeed) {
    // u_t = a(x) u_x with a = 1 + 0.5 sin(2 pi x); LS on the true group
    Grid g(0.0, 1.0 / 128, 128, 0.0, 0.3 / 63, 64, Boundary::Periodic);
    Vector speed(g.nx), init(g.nx);
    for (int i = 0; i < g.nx; ++i) {
        speed[i] = 1.0 + 0.5 * std::sin(2 * M_PI * g.x(i));
        init[i] = std::sin(2 * M_PI * g.x(i)) + 0.5 * std::cos(4 * M_PI * g.x(i));
    }
    Field f = simulate_varying_advection(g, speed, init);
    Dictionary d = weak_terms({{0, 1}, {1, 1}});
    SmootherConfig cfg;
    cfg.kind = SmootherKind::Identity;
    BasisSet bs = build_basis(BasisKind::BSpline, 20, g);
    GroupSystem gs = assemble_group_system(f, d, bs, GroupForm::Differential, cfg);
    GroupModel m = group_subspace_pursuit(gs.sys, gs.groups, 1);
    ASSERT_EQ(m.group_support, std::vector<int>{1});  // the u_x group
    Vector cm(bs.nb);
    for (int j = 0; j < bs.nb; ++j) cm[j] = m.coeffs[gs.groups[1][j]];
    Vector curve = reconstruct_coefficient(bs, cm, g);
    const double rel = (curve - speed).norm() / speed.norm();
    EXPECT_LT(rel, 0.10);
}

TEST(GroupLasso, ZeroLambdaIsLeastSquares) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gauss(0.0, 1.0);
    GroupSystem gs;
    gs.sys.A = Matrix::NullaryExpr(40, 6, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
    gs.sys.b = Vector::NullaryExpr(40, [&](Eigen::Index) { return gauss(rng); });
    gs.groups = {{0, 1}, {2, 3}, {4, 5}};
    LassoResult lr = group_lasso(gs, 0.0);
    Vector ls = gs.sys.A.colPivHouseholderQr().solve(gs.sys.b);
    EXPECT_LT((lr.coeffs - ls).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(GroupLasso, BlockOrthonormalClosedForm) {
    GroupSystem gs;
    gs.sys.A = Matrix::Identity(8, 8);
    gs.sys.b = Vector::Random(8);
    gs.groups = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
    const double lambda = 0.4;
    LassoResult lr = group_lasso(gs, lambda);
    for (auto& grp : gs.groups) {
        Eigen::Vector2d gk(gs.sys.b[grp[0]], gs.sys.b[grp[1]]);
        const double f = std::max(0.0, 1.0 - lambda / gk.norm());
        EXPECT_NEAR(lr.coeffs[grp[0]], f * gk[0], 1e-6);
        EXPECT_NEAR(lr.coeffs[grp[1]], f * gk[1], 1e-6);
    }
}

TEST(GroupLasso, LargeLambdaGivesZero) {
    GroupSystem gs;
    gs.sys.A = Matrix::Random(20, 4);
    gs.sys.b = Vector::Random(20);
    gs.groups = {{0, 1}, {2, 3}};
    double bound = 0.0;
    for (auto& grp : gs.groups) {
        Eigen::Vector2d v(gs.sys.A.col(grp[0]).dot(gs.sys.b), gs.sys.A.col(grp[1]).dot(gs.sys.b));
        bound = std::max(bound, v.norm());
    }
    LassoResult lr = group_lasso(gs, bound * 1.001);
    EXPECT_LT(lr.coeffs.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(L10Norm, CountsNonzeroGroups) {
    GroupLayout groups{{0, 1}, {2, 3}, {4, 5}};
    Vector dense = Vector::Ones(6);
    EXPECT_EQ(l10_norm(dense, groups), 3);
    EXPECT_EQ(l10_norm(Vector::Zero(6), groups), 0);
    Vector partial = Vector::Zero(6);
    partial[2] = 0.5;
    EXPECT_EQ(l10_norm(partial, groups), 1);
}

TEST(Caslr, SinglePatchEquivalentToSubspacePursuit) {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> gauss(0.0, 1.0);
    LinearSystem p;
    p.A = Matrix::NullaryExpr(40, 5, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
    Vector c = Vector::Zero(5);
    c[1] = 1.5;
    c[3] = -0.5;
    p.b = p.A * c;
    for (int k = 0; k < 5; ++k) p.cols.push_back({"c" + std::to_string(k), 1.0});
    CaslrResult r = caslr({p}, 2);
    CandidateModel sp = subspace_pursuit(p, 2);
    EXPECT_EQ(r.support, sp.support);
    EXPECT_LT((r.patch_coeffs[0] - sp.coeffs).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Caslr, TwoPatchesShareSupportWithDistinctCoefficients) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<LinearSystem> patches;
    for (double a : {1.0, 2.0}) {
        LinearSystem p;
        p.A = Matrix::NullaryExpr(50, 4, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
        Vector c = Vector::Zero(4);
        c[2] = a;
        p.b = p.A * c;
        for (int k = 0; k < 4; ++k) p.cols.push_back({"c" + std::to_string(k), 1.0});
        patches.push_back(p);
    }
    CaslrResult r = caslr(patches, 1);
    ASSERT_EQ(r.support, std::vector<int>{2});
    EXPECT_NEAR(r.patch_coeffs[0][2], 1.0, 0.05);
    EXPECT_NEAR(r.patch_coeffs[1][2], 2.0, 0.05);
}

TEST(Caslr, IdenticalPatchesGiveIdenticalCoefficients) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> gauss(0.0, 1.0);
    LinearSystem p;
    p.A = Matrix::NullaryExpr(30, 4, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
    p.b = p.A.col(0) * 2.0 + Vector::NullaryExpr(30, [&](Eigen::Index) { return 0.01 * gauss(rng); });
    for (int k = 0; k < 4; ++k) p.cols.push_back({"c" + std::to_string(k), 1.0});
    CaslrResult r = caslr({p, p, p}, 1);
    EXPECT_LT((r.patch_coeffs[0] - r.patch_coeffs[1]).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((r.patch_coeffs[1] - r.patch_coeffs[2]).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BlockMagnitudes, ZeroCoefficientsGiveZeroBlocks) {
    Grid g(0.0, 1.0 / 16, 16, 0.0, 0.1, 8);
    GroupSystem gs;
    gs.sys.A = Matrix::Random(20, 4);
    gs.groups = {{0, 1}, {2, 3}};
    gs.basis = build_basis(BasisKind::FiniteElementHat, 2, g);
    Vector b = block_magnitudes(gs, Vector::Zero(4), g);
    EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}
