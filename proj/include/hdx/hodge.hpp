#pragma once

#include <cmath>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "discrete_ops.hpp"
#include "linalg.hpp"
#include "pnorm.hpp"

namespace hdx {

enum class Projector { d, delta, harmonic };

inline std::string to_string(Projector p) {
    switch (p) {
        case Projector::d: return "P_d";
        case Projector::delta: return "P_delta";
        default: return "P_N";
    }
}

// mass-orthogonal Hodge splitting, stored grade by grade (all three projectors are block diagonal)
struct HodgeSplit {
    int dim = 0;
    std::vector<int> offsets;
    std::vector<Eigen::MatrixXd> range_d;      // orthonormal basis of range(d) in grade l
    std::vector<Eigen::MatrixXd> range_delta;  // orthonormal basis of range(delta) in grade l
    std::vector<Eigen::MatrixXd> harmonic;     // orthonormal basis of ker D in grade l
    std::vector<ThinSVD> svd;                  // d_l = U S V^T truncated to its numerical rank
    std::vector<int> rank_d;                   // rank of d_l : l -> l+1
    std::vector<double> rank_tol;
    std::vector<std::string> log;

    std::vector<int> betti() const {
        std::vector<int> b;
        for (const auto& h : harmonic) b.push_back(int(h.cols()));
        return b;
    }
    int grade_size(int l) const { return offsets[l + 1] - offsets[l]; }
    int size() const { return offsets.back(); }

    const Eigen::MatrixXd& basis(Projector k, int l) const {
        switch (k) {
            case Projector::d: return range_d[l];
            case Projector::delta: return range_delta[l];
            default: return harmonic[l];
        }
    }
    Eigen::MatrixXd block(Projector k, int l) const {
        const auto& B = basis(k, l);
        return B * B.transpose();
    }
    Eigen::VectorXd apply(Projector k, const Eigen::VectorXd& x) const {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
        for (int l = 0; l <= dim; ++l) {
            const auto& B = basis(k, l);
            if (B.cols() == 0) continue;
            auto seg = x.segment(offsets[l], grade_size(l));
            y.segment(offsets[l], grade_size(l)) = B * (B.transpose() * seg);
        }
        return y;
    }
    Eigen::VectorXcd apply(Projector k, const Eigen::VectorXcd& x) const {
        return apply(k, Eigen::VectorXd(x.real())).cast<cdouble>() + cdouble(0, 1) * apply(k, Eigen::VectorXd(x.imag())).cast<cdouble>();
    }
    Eigen::MatrixXd dense(Projector k) const {
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(size(), size());
        for (int l = 0; l <= dim; ++l) P.block(offsets[l], offsets[l], grade_size(l), grade_size(l)) = block(k, l);
        return P;
    }
};

inline HodgeSplit hodge_projectors(const AssembledOperator& D, double rel_tol = 1e-10) {
    if (D.is_complex()) throw std::invalid_argument("hodge_projectors expects an unperturbed operator");
    HodgeSplit H;
    const int n = D.dim();
    H.dim = n;
    H.offsets = D.offsets;
    H.range_d.resize(n + 1);
    H.range_delta.resize(n + 1);
    H.harmonic.resize(n + 1);
    for (int l = 0; l <= n; ++l) {
        H.range_d[l].resize(D.grade_size(l), 0);
        H.range_delta[l].resize(D.grade_size(l), 0);
    }
    for (int l = 0; l < n; ++l) {
        ThinSVD s = thin_svd(Eigen::MatrixXd(D.d[l]));
        double smax = s.S.size() ? s.S[0] : 0.0;
        double tol = rel_tol * smax;
        int r = 0;
        while (r < s.S.size() && s.S[r] > tol) ++r;
        double gap_lo = r < s.S.size() ? s.S[r] : 0.0;
        H.log.push_back("grade " + std::to_string(l) + ": rank(d)=" + std::to_string(r) + " smax=" + fmt17(smax) +
                        " smin_kept=" + fmt17(r ? s.S[r - 1] : 0.0) + " first_dropped=" + fmt17(gap_lo));
        s.U = s.U.leftCols(r).eval();
        s.V = s.V.leftCols(r).eval();
        s.S = s.S.head(r).eval();
        H.range_d[l + 1] = s.U;
        H.range_delta[l] = s.V;
        H.rank_d.push_back(r);
        H.rank_tol.push_back(tol);
        H.svd.push_back(std::move(s));
    }
    // harmonic part from the kernel of each Laplacian block, independent of the range bases
    for (int l = 0; l <= n; ++l) {
        const int m = D.grade_size(l);
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
        if (l > 0) {
            Eigen::MatrixXd a(D.d[l - 1]);
            L += a * a.transpose();
        }
        if (l < n) {
            Eigen::MatrixXd b(D.d[l]);
            L += b.transpose() * b;
        }
        if (m == 0) continue;
        SymEigen e = sym_eigen(L, true);
        double lmax = std::max(std::abs(e.values[m - 1]), 1e-300);
        int k = 0;
        while (k < m && e.values[k] <= 1e-9 * lmax) ++k;
        H.harmonic[l] = e.vectors.leftCols(k);
        H.log.push_back("grade " + std::to_string(l) + ": dim ker=" + std::to_string(k) +
                        " first_nonzero_eig=" + fmt17(k < m ? e.values[k] : 0.0) + " lmax=" + fmt17(lmax));
    }
    return H;
}

// discrete potentials: R_h = d^+ P_d (grade l -> l-1), S_h = (delta)^+ P_delta (grade l -> l+1)
struct DiscretePotential {
    std::vector<Eigen::MatrixXd> R;  // R[l]: grade l -> l-1, R[0] empty
    std::vector<Eigen::MatrixXd> S;  // S[l]: grade l -> l+1, S[n] empty
    std::vector<int> offsets;

    Eigen::MatrixXd dense_R() const { return assemble(R, -1); }
    Eigen::MatrixXd dense_S() const { return assemble(S, +1); }
    Eigen::VectorXd apply_R(const Eigen::VectorXd& u) const { return apply(R, -1, u); }
    Eigen::VectorXd apply_S(const Eigen::VectorXd& u) const { return apply(S, +1, u); }

private:
    Eigen::MatrixXd assemble(const std::vector<Eigen::MatrixXd>& blocks, int shift) const {
        const int N = offsets.back();
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
        for (int l = 0; l < int(blocks.size()); ++l) {
            if (blocks[l].size() == 0) continue;
            M.block(offsets[l + shift], offsets[l], blocks[l].rows(), blocks[l].cols()) = blocks[l];
        }
        return M;
    }
    Eigen::VectorXd apply(const std::vector<Eigen::MatrixXd>& blocks, int shift, const Eigen::VectorXd& u) const {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(u.size());
        for (int l = 0; l < int(blocks.size()); ++l) {
            if (blocks[l].size() == 0) continue;
            y.segment(offsets[l + shift], blocks[l].rows()) += blocks[l] * u.segment(offsets[l], blocks[l].cols());
        }
        return y;
    }
};

inline DiscretePotential discrete_potential(const AssembledOperator& D, const HodgeSplit& H) {
    DiscretePotential P;
    const int n = D.dim();
    P.offsets = D.offsets;
    P.R.resize(n + 1);
    P.S.resize(n + 1);
    for (int l = 0; l < n; ++l) {
        const ThinSVD& s = H.svd[l];
        Eigen::VectorXd inv = s.S.cwiseInverse();
        P.R[l + 1] = s.V * inv.asDiagonal() * s.U.transpose();
        P.S[l] = s.U * inv.asDiagonal() * s.V.transpose();
    }
    return P;
}

// Z = P_d S P_delta + P_delta R P_d, so that D Z v = v on range(D)
inline Eigen::MatrixXd potential_map_Z(const AssembledOperator& D, const HodgeSplit& H) {
    DiscretePotential P = discrete_potential(D, H);
    Eigen::MatrixXd Pd = H.dense(Projector::d), Pe = H.dense(Projector::delta);
    return Pd * P.dense_S() * Pe + Pe * P.dense_R() * Pd;
}

struct HodgeChecks {
    double completeness = 0, orthogonality = 0, idempotence = 0, kernel_residual = 0;
    bool rank_ok = true;
};

inline HodgeChecks check_split(const AssembledOperator& D, const HodgeSplit& H) {
    HodgeChecks c;
    for (int l = 0; l <= H.dim; ++l) {
        const int m = H.grade_size(l);
        if (m == 0) continue;
        Eigen::MatrixXd Pd = H.block(Projector::d, l), Pe = H.block(Projector::delta, l), Pn = H.block(Projector::harmonic, l);
        Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
        c.completeness = std::max(c.completeness, (Pd + Pe + Pn - I).cwiseAbs().maxCoeff());
        for (auto* pr : {&Pd, &Pe, &Pn}) c.idempotence = std::max(c.idempotence, ((*pr) * (*pr) - *pr).cwiseAbs().maxCoeff());
        c.orthogonality = std::max({c.orthogonality, (Pd * Pe).cwiseAbs().maxCoeff(), (Pd * Pn).cwiseAbs().maxCoeff(),
                                    (Pe * Pn).cwiseAbs().maxCoeff()});
        const auto& Hb = H.harmonic[l];
        if (Hb.cols() > 0) {
            double scale = 0;
            if (l < H.dim) {
                Eigen::MatrixXd dl(D.d[l]);
                scale = std::max(scale, dl.cwiseAbs().maxCoeff());
                c.kernel_residual = std::max(c.kernel_residual, (dl * Hb).cwiseAbs().maxCoeff());
            }
            if (l > 0) {
                Eigen::MatrixXd dm(D.d[l - 1]);
                scale = std::max(scale, dm.cwiseAbs().maxCoeff());
                c.kernel_residual = std::max(c.kernel_residual, (dm.transpose() * Hb).cwiseAbs().maxCoeff());
            }
            if (scale > 0) c.kernel_residual /= scale;
        }
        int rd = l > 0 ? H.rank_d[l - 1] : 0, re = l < H.dim ? H.rank_d[l] : 0;
        if (rd + re + int(Hb.cols()) != m) c.rank_ok = false;
    }
    return c;
}

inline NormEstimate projector_pnorm(const HodgeSplit& H, Projector k, double p, unsigned seed = 1, int starts = 8, int max_iter = 200) {
    if (!(p > 1) || std::isinf(p)) throw std::invalid_argument("projector_pnorm needs 1 < p < inf");
    using V = Eigen::VectorXd;
    std::function<V(const V&)> A = [&](const V& x) -> V { return H.apply(k, x); };
    return boyd_pnorm<V>(A, A, H.size(), p, seed, starts, max_iter);
}

// dual cubical complex: voxels centred at the primal vertices
inline std::shared_ptr<const CubicalComplex> dual_complex(const std::shared_ptr<const CubicalComplex>& c) {
    const int n = c->dim();
    const double h = c->h();
    DomainSpec d = c->domain();
    d.name = c->domain().name + "*";
    std::vector<double> lo0 = c->domain().lo;
    for (int i = 0; i < n; ++i) {
        d.lo[i] -= h / 2;
        d.hi[i] += h / 2;
    }
    d.contains = [c, lo0, h, n](const double* x) {
        std::array<int, kMaxMeshDim> a{};
        for (int i = 0; i < n; ++i) a[i] = int(std::lround((x[i] - lo0[i]) / h));
        return c->find(a, 0) >= 0;
    };
    return std::make_shared<const CubicalComplex>(d, h);
}

// signed permutation taking primal l-cells to dual (n-l)-cells, with the continuum star sign
inline Eigen::MatrixXd discrete_star(const AssembledOperator& primal, const AssembledOperator& dual) {
    const auto& c = *primal.complex;
    const auto& cd = *dual.complex;
    const int n = c.dim();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dual.size(), primal.size());
    std::vector<std::vector<int>> dual_local(n + 1);
    for (int l = 0; l <= n; ++l) {
        dual_local[l].assign(cd.count(l), -1);
        for (int i = 0; i < int(dual.cells[l].size()); ++i) dual_local[l][dual.cells[l][i]] = i;
    }
    for (int l = 0; l <= n; ++l)
        for (int i = 0; i < int(primal.cells[l].size()); ++i) {
            const Cell& cell = c.cell(l, primal.cells[l][i]);
            std::array<int, kMaxMeshDim> a = cell.anchor;
            for (int j = 0; j < n; ++j)
                if (cell.axes >> j & 1) ++a[j];
            Blade comp = full_blade(n) & ~cell.axes;
            int id = cd.find(a, comp);
            if (id < 0) throw std::logic_error("dual cell missing");
            int loc = dual_local[n - l][id];
            if (loc < 0) throw std::logic_error("dual cell is not a degree of freedom");
            S(dual.offsets[n - l] + loc, primal.offsets[l] + i) = star_sign(cell.axes, n);
        }
    return S;
}

inline void write_hodge_csv_header(std::ostream& os) { os << "domain,h,p,projector,norm_estimate,iterations\n"; }

inline void write_hodge_csv_row(std::ostream& os, const std::string& domain, double h, double p, Projector k, const NormEstimate& e) {
    os << domain << "," << fmt17(h) << "," << fmt17(p) << "," << to_string(k) << "," << fmt17(e.value) << "," << e.iterations << "\n";
}

}  // namespace hdx
