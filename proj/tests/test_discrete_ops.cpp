#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "hdx/discrete_ops.hpp"

using namespace hdx;

TEST(AssembleDirac, IntervalNeumannBlock) {
    const double h = 0.125;
    auto c = build_complex("interval", h);
    auto D = assemble_dirac(c);
    Eigen::MatrixXd L(hodge_laplacian(D));
    const int nv = c->count(0);
    Eigen::MatrixXd neumann = Eigen::MatrixXd::Zero(nv, nv);
    for (int i = 0; i < nv; ++i) {
        if (i > 0) {
            neumann(i, i) += 1;
            neumann(i, i - 1) = -1;
        }
        if (i + 1 < nv) {
            neumann(i, i) += 1;
            neumann(i, i + 1) = -1;
        }
    }
    neumann /= h * h;
    EXPECT_LE((L.topLeftCorner(nv, nv) - neumann).cwiseAbs().maxCoeff(), 1e-10);
    // block diagonal in grading
    EXPECT_EQ(L.topRightCorner(nv, L.cols() - nv).cwiseAbs().maxCoeff(), 0.0);
}

TEST(AssembleDirac, SelfAdjointBlockTridiagonalSymmetricSpectrum) {
    for (auto bc : {BoundaryCondition::tangential, BoundaryCondition::normal}) {
        auto c = build_complex("square", 0.125);
        auto D = assemble_dirac(c, bc);
        Eigen::MatrixXd M = Eigen::MatrixXd::Identity(D.size(), D.size()) * D.mass;
        Eigen::MatrixXd A = D.dense();
        EXPECT_LE((M * A - A.transpose() * M).cwiseAbs().maxCoeff(), 1e-12);
        for (int i = 0; i < D.size(); ++i)
            for (int j = 0; j < D.size(); ++j)
                if (A(i, j) != 0) EXPECT_EQ(std::abs(D.grade_of_index(i) - D.grade_of_index(j)), 1);
        Eigen::VectorXd ev = D.eigen(false).values;
        Eigen::VectorXd neg = -ev.reverse();
        EXPECT_LE((ev - neg).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(AssembleDirac, KernelDimensions) {
    auto c = build_complex("square", 0.125);
    auto tan = assemble_dirac(c);
    auto nor = assemble_dirac(c, BoundaryCondition::normal);
    auto kernel = [](const AssembledOperator& D) {
        const auto& e = D.eigen(true);
        std::vector<int> per(D.dim() + 1, 0);
        double tol = 1e-8 * e.values.cwiseAbs().maxCoeff();
        for (int k = 0; k < e.values.size(); ++k) {
            if (std::abs(e.values[k]) > tol) continue;
            int g;
            e.vectors.col(k).cwiseAbs().maxCoeff(&g);
            ++per[D.grade_of_index(g)];
        }
        return per;
    };
    EXPECT_EQ(kernel(tan), (std::vector<int>{1, 0, 0}));
    EXPECT_EQ(kernel(nor), (std::vector<int>{0, 0, 1}));
}

TEST(HodgeLaplacian, SpectralMappingAndKernel) {
    auto c = build_complex("lshape", 0.25);
    auto D = assemble_dirac(c);
    Eigen::MatrixXd L(hodge_laplacian(D));
    EXPECT_LE((L - D.dense() * D.dense()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::VectorXd ev = D.eigen(false).values.array().square();
    std::sort(ev.data(), ev.data() + ev.size());
    Eigen::VectorXd lv = sym_eigen(L, false).values;
    EXPECT_LE((ev - lv).cwiseAbs().maxCoeff(), 1e-10 * lv.maxCoeff());
    EXPECT_GE(lv.minCoeff(), -1e-10 * lv.maxCoeff());
    int kd = 0, kl = 0;
    for (int i = 0; i < ev.size(); ++i) {
        kd += std::sqrt(ev[i]) < 1e-6;
        kl += lv[i] < 1e-12 * lv.maxCoeff();
    }
    EXPECT_EQ(kd, kl);
}

TEST(AssemblePerturbed, IdentityAndScalarFields) {
    auto c = build_complex("square", 0.25);
    auto D = assemble_dirac(c);
    auto P1 = assemble_perturbed(c, constant_coefficient(D, 1.0));
    auto P2 = assemble_perturbed(c, constant_coefficient(D, 2.0));
    Eigen::MatrixXcd a(*P1.Dc), b(*P2.Dc);
    Eigen::MatrixXcd ref = D.dense().cast<cdouble>();
    EXPECT_LE((a - ref).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((b - ref).cwiseAbs().maxCoeff(), 1e-13);
    CoefficientField zero = constant_coefficient(D, 1.0);
    zero.b[3] = 0;
    EXPECT_THROW(assemble_perturbed(c, zero), std::domain_error);
}

TEST(AssemblePerturbed, SpectrumInsideDoubleSector) {
    auto c = build_complex("square", 0.125);
    auto D = assemble_dirac(c);
    for (unsigned seed : {1u, 2u, 3u}) {
        auto B = random_coefficient_field(D, seed, 0.5);
        EXPECT_GE(B.measured_coercivity(), 0.5);
        auto P = assemble_perturbed(c, B);
        auto ev = general_eigenvalues(Eigen::MatrixXcd(*P.Dc));
        double omega = 0;
        for (auto z : ev) {
            if (std::abs(z) < 1e-8) continue;
            double a = std::atan2(std::abs(z.imag()), std::abs(z.real()));
            omega = std::max(omega, a);
        }
        EXPECT_LT(omega, M_PI / 2 - 1e-3) << seed;
    }
}

TEST(ExportOperator, MatrixMarketAndSidecar) {
    auto c = build_complex("square", 0.5);
    auto D = assemble_dirac(c);
    std::ostringstream os;
    export_matrix_market(os, D);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "%%MatrixMarket matrix coordinate real general");
    int r, k, nnz;
    is >> r >> k >> nnz;
    EXPECT_EQ(r, D.size());
    EXPECT_EQ(nnz, D.D.nonZeros());
    auto j = operator_sidecar(D);
    EXPECT_EQ(j["bc"], "tangential");
    EXPECT_EQ(j["grading_offsets"], D.offsets);
}
