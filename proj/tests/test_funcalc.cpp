#include <random>

#include <gtest/gtest.h>

#include "hdx/funcalc.hpp"

using namespace hdx;

namespace {

const AssembledOperator& square_op() {
    static AssembledOperator op = assemble_dirac(build_complex("square", 0.125));
    return op;
}

}  // namespace

TEST(Sector, Membership) {
    SectorSpec s(M_PI / 4, SectorKind::double_sector);
    EXPECT_TRUE(s.contains({1, 0.5}));
    EXPECT_TRUE(s.contains({-1, -0.5}));
    EXPECT_FALSE(s.contains({0.1, 1}));
    EXPECT_TRUE(s.contains(0.0));
    EXPECT_FALSE(s.contains(0.0, true));
    EXPECT_TRUE(s.contains(std::polar(2.0, M_PI / 4)));
    EXPECT_FALSE(s.contains(std::polar(2.0, M_PI / 4), true));
    SectorSpec t(3 * M_PI / 4, SectorKind::single_sector);
    EXPECT_TRUE(t.contains({-1, 1.5}));
    EXPECT_FALSE(t.contains({-1, 0.2}));
    EXPECT_THROW(SectorSpec(M_PI / 2, SectorKind::double_sector), std::invalid_argument);
}

TEST(PsiClass, DecayConstantsFinite) {
    SectorSpec s(M_PI / 3, SectorKind::double_sector);
    for (const auto& f : psi_corpus()) {
        double C = psi_decay_constant(f, s);
        EXPECT_TRUE(std::isfinite(C)) << f.name;
        EXPECT_LT(C, 10) << f.name;
    }
}

TEST(Resolvent, BasicProperties) {
    const auto& op = square_op();
    MatrixXc I = MatrixXc::Identity(op.size(), op.size());
    EXPECT_LE((resolvent(op, 0.0) - I).cwiseAbs().maxCoeff(), 0.0);
    MatrixXc R = resolvent(op, cdouble(0, 1));
    EXPECT_LE(complex_singular_values(R)[0], 1 + 1e-10);
    // resolvent identity
    MatrixXc A = op.dense().cast<cdouble>();
    cdouble z(0.3, 0.7), w(-0.2, 1.1);
    MatrixXc lhs = resolvent(op, z) - resolvent(op, w);
    MatrixXc rhs = (w - z) * A * resolvent(op, z) * resolvent(op, w);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
    // sparse solver agrees with the dense inverse
    ResolventSolver S(complex_operator(op), z);
    VectorXc b = VectorXc::Random(op.size());
    EXPECT_LE((S.solve(b) - resolvent(op, z) * b).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((S.solve_adjoint(b) - resolvent(op, z).adjoint() * b).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(resolvent_norm_power(S), complex_singular_values(resolvent(op, z))[0], 1e-8);
}

TEST(Resolvent, SingularThrows) {
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(3, 3);
    EXPECT_THROW(resolvent(A, -1.0), std::domain_error);
}

TEST(Resolvent, SectorBoundOutsideQuarterSector) {
    const auto& op = square_op();
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> U(0, 1);
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
        double phi = M_PI / 4 + U(rng) * M_PI / 2;
        double r = std::pow(10.0, -2 + 4 * U(rng));
        cdouble z = std::polar(r, k % 2 ? phi : -phi);
        worst = std::max(worst, complex_singular_values(resolvent(op, z))[0]);
    }
    EXPECT_LE(worst, std::sqrt(2.0) + 1e-8);
}

TEST(SpectralFuncalc, Oracles) {
    const auto& op = square_op();
    PsiFunction zero{"0", [](cdouble) { return cdouble(0); }, 1};
    PsiFunction id{"z", [](cdouble z) { return z; }, 1};
    EXPECT_EQ(spectral_funcalc(op, zero).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE((spectral_funcalc(op, id) - op.dense()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::MatrixXd F = spectral_funcalc(op, psi_rational1());
    Eigen::MatrixXd A = op.dense();
    EXPECT_LE((F * A - A * F).cwiseAbs().maxCoeff(), 1e-9);
    // multiplicativity
    PsiFunction prod{"", [](cdouble z) { return psi_rational1().f(z) * psi_rational2().f(z); }, 3};
    Eigen::MatrixXd G = spectral_funcalc(op, psi_rational2());
    EXPECT_LE((spectral_funcalc(op, prod) - F * G).cwiseAbs().maxCoeff(), 1e-8);
    // self-adjoint calculus bound ||f(D)|| <= sup |f| on the spectrum
    double sup = 0;
    for (double l : op.eigen().values) sup = std::max(sup, std::abs(psi_rational1().f(l)));
    EXPECT_LE(opnorm2(F), sup + 1e-8);
}

TEST(ContourFuncalc, ScalarSanity) {
    Eigen::MatrixXd A(2, 2);
    A << 2, 0, 0, -0.5;
    auto c = make_contour(0.5, 2.0, M_PI / 4, 400);
    auto r = contour_funcalc(A, psi_rational1(), c);
    EXPECT_NEAR(r.approx[0](0, 0), 2.0 / 5.0, 1e-9);
    EXPECT_NEAR(r.approx[0](1, 1), -0.5 / 1.25, 1e-9);
    MatrixXc g = contour_funcalc_general(A.cast<cdouble>(), psi_rational1(), c);
    EXPECT_NEAR(g(0, 0).real(), 0.4, 1e-9);
    EXPECT_NEAR(g(0, 0).imag(), 0.0, 1e-9);
}

TEST(ContourFuncalc, MatchesOracleAndConverges) {
    const auto& op = square_op();
    for (const auto& f : psi_corpus()) {
        auto chk = funcalc_convergence(op, f);
        ASSERT_EQ(chk.nodes, (std::vector<int>{100, 200, 400}));
        EXPECT_LE(chk.rel_error.back(), 1e-6) << f.name;
        EXPECT_TRUE(halving_ok(chk.rel_error)) << f.name << " " << chk.rel_error[0] << " " << chk.rel_error[1] << " " << chk.rel_error[2];
    }
}

TEST(ContourFuncalc, RegularizedSignApproachesSpectralSign) {
    const auto& op = square_op();
    const auto& e = op.eigen();
    auto ext = spectrum_extent(e.values);
    auto c = make_contour(ext.min_nonzero, ext.max_abs, M_PI / 4, 400);
    PsiFunction sgn{"sgn", [](cdouble z) { return cdouble(z.real() > 0 ? 1 : -1); }, 1};
    Eigen::MatrixXd S = spectral_funcalc(e, sgn);
    std::vector<double> err;
    for (double eps : {1e-2, 1e-3}) {
        Eigen::MatrixXd X = contour_funcalc(op.dense(), psi_sign(eps), c).approx[0];
        EXPECT_LE(opnorm2(X - spectral_funcalc(e, psi_sign(eps))), 1e-6);
        err.push_back(opnorm2(X - S));
    }
    EXPECT_LT(err[1], err[0]);
    EXPECT_LE(err[1], 1e-4);
}

TEST(ResolventSweep, TwoNormAndSmallT) {
    const auto& op = square_op();
    auto r = resolvent_sweep(op, {0.1, 1.0, 10.0}, {2.0}, Subspace::all, nullptr, 1, 3);
    EXPECT_LE(r.sup_over_t[2.0], 1 + 1e-8);
    auto s = resolvent_sweep(op, {1e-8}, {1.5, 3.0}, Subspace::all, nullptr, 1, 3);
    for (auto& row : s.rows) EXPECT_NEAR(row.estimate, 1.0, 1e-6);
    EXPECT_THROW(resolvent_sweep(op, {}, {2.0}), std::invalid_argument);
    EXPECT_THROW(resolvent_sweep(op, {1.0}, {2.0}, Subspace::range_d), std::invalid_argument);
}

TEST(ResolventSweep, RestrictedBelowFourThirdsOnLshape) {
    auto op = assemble_dirac(build_complex("lshape", 0.25));
    auto H = hodge_projectors(op);
    auto sub = resolvent_sweep(op, {0.05, 0.5, 5.0}, {1.2}, Subspace::range_d, &H, 1, 4);
    auto all = resolvent_sweep(op, {0.05, 0.5, 5.0}, {1.2}, Subspace::all, nullptr, 1, 4);
    EXPECT_TRUE(std::isfinite(sub.sup_over_t[1.2]));
    EXPECT_GE(sub.sup_over_t[1.2], 0.5);
    EXPECT_TRUE(std::isfinite(all.sup_over_t[1.2]));
}

TEST(Offdiag, ExponentialDecayOnSquare) {
    auto op = assemble_dirac(build_complex("square", 1.0 / 32));
    const double h = 1.0 / 32;
    std::vector<int> F;
    auto xs = index_barycenters(op);
    for (int i = 0; i < op.size(); ++i)
        if (std::abs(xs[i][0] - 0.5) <= 2 * h && std::abs(xs[i][1] - 0.5) <= 2 * h) F.push_back(i);
    double t = 2 * h;
    auto prof = offdiag_profile(op, t, F, {0.0, 2 * h, 4 * h, 8 * h});
    for (const auto& f : prof.families) {
        EXPECT_TRUE(f.monotone) << f.name;
        EXPECT_GT(f.rate, 0) << f.name;
    }
    // zero separation: bounded by the full resolvent norm (1 for the self-adjoint case)
    EXPECT_LE(prof.families[0].norm[0], 1 + 1e-10);
    EXPECT_THROW(offdiag_profile(op, t, {}, {h}), std::invalid_argument);
}

TEST(LaplacianFuncalc, OracleRieszAndStokes) {
    const auto& op = square_op();
    Eigen::MatrixXd L(hodge_laplacian(op));
    auto fL = laplacian_funcalc(op, psi_sectorial1()).approx[0];
    SymEigen le = sym_eigen(L, true);
    Eigen::MatrixXd ref = spectral_funcalc(le, psi_sectorial1());
    EXPECT_LE(opnorm2(fL - ref) / opnorm2(ref), 1e-6);
    // ||D u|| = ||sqrt(L) u|| for u orthogonal to ker D
    auto H = hodge_projectors(op);
    PsiFunction sq{"sqrt", [](cdouble l) { return std::sqrt(l); }, 0.5};
    Eigen::MatrixXd rootL = spectral_funcalc(le, sq);
    std::mt19937 rng(2);
    std::normal_distribution<double> g;
    Eigen::VectorXd u(op.size());
    for (auto& v : u) v = g(rng);
    u -= H.apply(Projector::harmonic, u);
    double a = (op.D * u).norm(), b = (rootL * u).norm();
    EXPECT_NEAR(a / b, 1.0, 1e-8);
    Eigen::MatrixXd S = stokes_restriction(fL, H);
    Eigen::MatrixXd P = H.dense(Projector::delta);
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(op.size(), op.size());
    EXPECT_LE(opnorm2((I - P) * fL * P), 1e-9);
    EXPECT_LE(opnorm2(S - fL * P), 1e-9);
}

TEST(ExponentScan, LshapeFlagsAndDuality) {
    auto op = assemble_dirac(build_complex("lshape", 0.25));
    auto H = hodge_projectors(op);
    auto rows = exponent_scan(op, H, {1.4, 2.0, 3.9}, {0.1, 1.0}, 50, 1, 4);
    for (const auto& r : rows) EXPECT_TRUE(r.below_ceiling) << r.p;
    EXPECT_NEAR(rows[1].proj_d, 1.0, 1e-8);
    double a = projector_pnorm(H, Projector::d, 1.4, 1, 4).value, b = projector_pnorm(H, Projector::d, 1.4 / 0.4, 1, 4).value;
    EXPECT_NEAR(a / b, 1.0, 0.2);
}
