#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "discrete_ops.hpp"
#include "hodge.hpp"
#include "linalg.hpp"
#include "pnorm.hpp"

namespace hdx {

enum class SectorKind { double_sector, single_sector };

struct SectorSpec {
    double mu = M_PI / 4;
    SectorKind kind = SectorKind::double_sector;

    SectorSpec() = default;
    SectorSpec(double angle, SectorKind k) : mu(angle), kind(k) {
        double cap = k == SectorKind::double_sector ? M_PI / 2 : M_PI;
        if (!(angle > 0 && angle < cap)) throw std::invalid_argument("sector angle out of range");
    }

    // closed sector: 0 belongs, open sector: 0 excluded and the boundary rays too
    bool contains(cdouble z, bool open = false) const {
        if (std::abs(z) == 0) return !open;
        double a = std::abs(std::arg(z));
        bool right = open ? a < mu : a <= mu;
        if (kind == SectorKind::single_sector) return right;
        double b = M_PI - a;
        return right || (open ? b < mu : b <= mu);
    }
};

struct PsiFunction {
    std::string name;
    std::function<cdouble(cdouble)> f;
    double decay = 1;              // |f(z)| <= C |z|^s / (1 + |z|^{2s})
    bool decays_at_infinity = true;
    bool real_on_real_axis = true;  // f(conj z) = conj f(z)
};

inline PsiFunction psi_rational1() { return {"z/(1+z^2)", [](cdouble z) { return z / (1.0 + z * z); }, 1}; }
inline PsiFunction psi_rational2() {
    return {"z^2/(1+z^2)^2", [](cdouble z) { return z * z / ((1.0 + z * z) * (1.0 + z * z)); }, 2};
}
inline PsiFunction psi_rational3() {
    return {"z^3/(1+z^2)^2", [](cdouble z) { return z * z * z / ((1.0 + z * z) * (1.0 + z * z)); }, 1};
}

// regularized sign z / sqrt(z^2 + eps^2), principal branch; bounded but not decaying at infinity
inline PsiFunction psi_sign(double eps) {
    return {"sgn_eps", [eps](cdouble z) { return z / std::sqrt(z * z + eps * eps); }, 1, false};
}

// sectorial corpus for -Laplacian
inline PsiFunction psi_sectorial1() {
    return {"l/(1+l)^2", [](cdouble l) { return l / ((1.0 + l) * (1.0 + l)); }, 1};
}

inline std::vector<PsiFunction> psi_corpus() { return {psi_rational1(), psi_rational2(), psi_rational3()}; }

// largest C with |f| <= C |z|^s/(1+|z|^{2s}) along rays of the sector
inline double psi_decay_constant(const PsiFunction& f, const SectorSpec& sector, int samples = 400) {
    double C = 0;
    std::vector<double> angles{0.0, sector.mu * 0.5, sector.mu * 0.99};
    for (double a : angles)
        for (int k = 0; k < samples; ++k) {
            double r = std::pow(10.0, -6 + 12.0 * k / (samples - 1));
            for (double sgn : {1.0, -1.0}) {
                if (sector.kind == SectorKind::single_sector && sgn < 0) continue;
                cdouble z = sgn * std::polar(r, a);
                double bound = std::pow(r, f.decay) / (1 + std::pow(r, 2 * f.decay));
                C = std::max(C, std::abs(f.f(z)) / bound);
            }
        }
    return C;
}

struct ContourSpec {
    double theta = M_PI / 4;
    double r_min = 1e-9, r_max = 1e9;
    int nodes = 400;  // trapezoid intervals per ray in log r
    SectorKind kind = SectorKind::double_sector;

    void validate(double omega, double min_nonzero, double max_abs) const {
        if (nodes < 4 || nodes % 4 != 0) throw std::invalid_argument("contour node count must be a positive multiple of 4");
        if (!(theta > omega)) throw std::invalid_argument("contour angle must exceed the spectral angle");
        double cap = kind == SectorKind::double_sector ? M_PI / 2 : M_PI;
        if (!(theta < cap)) throw std::invalid_argument("contour angle out of range");
        if (min_nonzero > 0 && !(r_min < min_nonzero / 10)) throw std::invalid_argument("r_min too large for the spectrum");
        if (!(r_max > 10 * max_abs)) throw std::invalid_argument("r_max too small for the spectrum");
    }
};

// radii tied to the spectral extent, wide enough that truncation sits below 1e-9
inline ContourSpec make_contour(double min_nonzero, double max_abs, double theta = M_PI / 4, int nodes = 400,
                                SectorKind kind = SectorKind::double_sector) {
    ContourSpec c;
    c.theta = theta;
    c.nodes = nodes;
    c.kind = kind;
    c.r_min = 1e-9 * std::min(1.0, min_nonzero > 0 ? min_nonzero : 1.0);
    c.r_max = 1e9 * std::max(1.0, max_abs);
    return c;
}

// measured spectral angle of a cloud: max |arg| folded into the right half plane
inline double spectral_angle(const VectorXc& ev, double zero_tol = 1e-8) {
    double omega = 0;
    for (auto z : ev) {
        if (std::abs(z) < zero_tol) continue;
        omega = std::max(omega, std::atan2(std::abs(z.imag()), std::abs(z.real())));
    }
    return omega;
}

// (I + zA)^{-1}, dense
inline MatrixXc resolvent(const MatrixXc& A, cdouble z) {
    const Eigen::Index n = A.rows();
    MatrixXc M = MatrixXc::Identity(n, n) + z * A;
    Eigen::PartialPivLU<MatrixXc> lu(M);
    if (!(lu.rcond() > 1e-14)) throw std::domain_error("resolvent: (I + zA) is singular to working precision");
    return lu.inverse();
}

inline MatrixXc resolvent(const AssembledOperator& op, cdouble z) {
    return resolvent(op.is_complex() ? MatrixXc(*op.Dc) : MatrixXc(op.dense().cast<cdouble>()), z);
}

inline SpMatC complex_operator(const AssembledOperator& op) { return op.is_complex() ? *op.Dc : SpMatC(op.D.cast<cdouble>()); }

// sparse factorization of I + zA with solves for the operator and its adjoint
class ResolventSolver {
public:
    ResolventSolver(const SpMatC& A, cdouble z) : n_(A.rows()) {
        SpMatC I(n_, n_);
        I.setIdentity();
        SpMatC M = I + z * A;
        M.makeCompressed();
        lu_.compute(M);
        if (lu_.info() != Eigen::Success) throw std::domain_error("resolvent: factorization failed");
        SpMatC Mh = SpMatC(M.adjoint());
        Mh.makeCompressed();
        luh_.compute(Mh);
        if (luh_.info() != Eigen::Success) throw std::domain_error("resolvent: adjoint factorization failed");
    }
    VectorXc solve(const VectorXc& b) const { return lu_.solve(b); }
    MatrixXc solve(const MatrixXc& b) const { return lu_.solve(b); }
    VectorXc solve_adjoint(const VectorXc& b) const { return luh_.solve(b); }
    Eigen::Index size() const { return n_; }

private:
    Eigen::Index n_;
    Eigen::SparseLU<SpMatC> lu_, luh_;
};

// ||(I+zA)^{-1}||_2 by power iteration on R^H R; lower bound that converges from below
inline double resolvent_norm_power(const ResolventSolver& R, unsigned seed = 1, int max_iter = 500, double tol = 1e-11) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    VectorXc x(R.size());
    for (auto& v : x) v = cdouble(g(rng), g(rng));
    x.normalize();
    double prev = 0, est = 0;
    for (int it = 0; it < max_iter; ++it) {
        VectorXc y = R.solve(x);
        est = y.norm();
        VectorXc w = R.solve_adjoint(y);
        double nw = w.norm();
        if (nw == 0) return 0;
        x = w / nw;
        if (std::abs(est - prev) <= tol * est) break;
        prev = est;
    }
    return est;
}

namespace detail {

// the conjugate-symmetric half of the contour: f(A) = (1/pi) Im sum over these rays
inline std::vector<cdouble> half_rays(const ContourSpec& c) {
    std::vector<cdouble> rays{std::polar(1.0, -c.theta)};
    if (c.kind == SectorKind::double_sector) rays.push_back(-std::polar(1.0, -c.theta));
    return rays;
}

// node weights for nested trapezoid levels: level m uses every 2^(L-1-m)-th node
inline double level_weight(int k, int K, int stride, double du) {
    if (k % stride != 0) return 0;
    double w = stride * du;
    return (k == 0 || k == K) ? w / 2 : w;
}

}  // namespace detail

struct ContourResult {
    std::vector<int> nodes;                 // intervals per ray for each level
    std::vector<Eigen::MatrixXd> approx;    // f(A) at each level
};

// contour calculus for a real symmetric A: tridiagonalize once, then one tridiagonal solve per node.
// levels = 3 gives nodes/4, nodes/2, nodes intervals from a single pass
inline ContourResult contour_funcalc(const Eigen::MatrixXd& A, const PsiFunction& f, const ContourSpec& c, int levels = 1) {
    if (!f.real_on_real_axis) throw std::invalid_argument("contour_funcalc: f must be real on the real axis");
    if (levels < 1 || c.nodes % (1 << (levels - 1)) != 0) throw std::invalid_argument("contour_funcalc: bad level count");
    const int n = int(A.rows());
    Eigen::Tridiagonalization<Eigen::MatrixXd> tri(A);
    Eigen::MatrixXd Q = tri.matrixQ();
    Eigen::VectorXd diag = tri.diagonal(), sub = tri.subDiagonal();
    const int K = c.nodes;
    const double u0 = std::log(c.r_min), u1 = std::log(c.r_max), du = (u1 - u0) / K;
    std::vector<Eigen::MatrixXd> acc(levels, Eigen::MatrixXd::Zero(n, n));
    std::vector<lapack_complex_double> dl(std::max(n - 1, 1)), d(n), du_(std::max(n - 1, 1));
    MatrixXc X(n, n);
    for (cdouble w : detail::half_rays(c)) {
        for (int k = 0; k <= K; ++k) {
            double r = std::exp(u0 + k * du);
            cdouble z = r * w;
            cdouble coef = f.f(z) * w * r;
            if (coef == 0.0) continue;
            // X = (zI - T)^{-1}
            for (int i = 0; i < n; ++i) reinterpret_cast<cdouble&>(d[i]) = z - diag[i];
            for (int i = 0; i + 1 < n; ++i) reinterpret_cast<cdouble&>(dl[i]) = reinterpret_cast<cdouble&>(du_[i]) = cdouble(-sub[i], 0);
            X.setIdentity();
            lapack_int info = LAPACKE_zgtsv(LAPACK_COL_MAJOR, n, n, dl.data(), d.data(), du_.data(),
                                            reinterpret_cast<lapack_complex_double*>(X.data()), n);
            if (info != 0) throw std::domain_error("contour node touches the spectrum");
            for (int m = 0; m < levels; ++m) {
                double wt = detail::level_weight(k, K, 1 << (levels - 1 - m), du);
                if (wt == 0) continue;
                cdouble cc = coef * wt;
                acc[m].noalias() += cc.real() * X.imag() + cc.imag() * X.real();
            }
        }
    }
    ContourResult out;
    for (int m = 0; m < levels; ++m) {
        out.nodes.push_back(K >> (levels - 1 - m));
        out.approx.push_back(Q * (acc[m] / M_PI) * Q.transpose());
    }
    return out;
}

// general (possibly non-normal) A: dense LU per node over all rays
inline MatrixXc contour_funcalc_general(const MatrixXc& A, const PsiFunction& f, const ContourSpec& c) {
    const Eigen::Index n = A.rows();
    const int K = c.nodes;
    const double u0 = std::log(c.r_min), u1 = std::log(c.r_max), du = (u1 - u0) / K;
    std::vector<std::pair<cdouble, double>> rays{{std::polar(1.0, -c.theta), 1.0}, {std::polar(1.0, c.theta), -1.0}};
    if (c.kind == SectorKind::double_sector) {
        rays.push_back({-std::polar(1.0, -c.theta), 1.0});
        rays.push_back({-std::polar(1.0, c.theta), -1.0});
    }
    MatrixXc acc = MatrixXc::Zero(n, n);
    MatrixXc I = MatrixXc::Identity(n, n);
    for (auto [w, sgn] : rays)
        for (int k = 0; k <= K; ++k) {
            double r = std::exp(u0 + k * du);
            cdouble z = r * w;
            cdouble coef = sgn * f.f(z) * w * r * detail::level_weight(k, K, 1, du);
            if (coef == 0.0) continue;
            Eigen::PartialPivLU<MatrixXc> lu(z * I - A);
            acc += coef * lu.inverse();
        }
    return acc / cdouble(0, 2 * M_PI);
}

// oracle V f(Lambda) V^T; f(0) := 0 on the kernel
inline Eigen::MatrixXd spectral_funcalc(const SymEigen& e, const PsiFunction& f, double zero_tol = 1e-9) {
    if (e.vectors.size() == 0) throw std::logic_error("spectral_funcalc: eigenvectors missing");
    double lmax = e.values.size() ? e.values.cwiseAbs().maxCoeff() : 0.0;
    Eigen::VectorXd fv(e.values.size());
    for (Eigen::Index i = 0; i < fv.size(); ++i)
        fv[i] = std::abs(e.values[i]) <= zero_tol * std::max(lmax, 1.0) ? 0.0 : f.f(cdouble(e.values[i], 0)).real();
    return e.vectors * fv.asDiagonal() * e.vectors.transpose();
}

inline Eigen::MatrixXd spectral_funcalc(const AssembledOperator& op, const PsiFunction& f) { return spectral_funcalc(op.eigen(true), f); }

struct SpectrumExtent {
    double min_nonzero = 0, max_abs = 0;
    int kernel = 0;
};

inline SpectrumExtent spectrum_extent(const Eigen::VectorXd& ev, double zero_tol = 1e-9) {
    SpectrumExtent s;
    s.max_abs = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
    s.min_nonzero = std::numeric_limits<double>::infinity();
    for (double v : ev) {
        if (std::abs(v) <= zero_tol * std::max(1.0, s.max_abs))
            ++s.kernel;
        else
            s.min_nonzero = std::min(s.min_nonzero, std::abs(v));
    }
    if (!std::isfinite(s.min_nonzero)) s.min_nonzero = 0;
    return s;
}

struct FuncalcCheck {
    std::string function;
    std::vector<int> nodes;
    std::vector<double> rel_error;  // relative M-norm error per level
};

// contour vs oracle for one operator and f; M-norm equals the 2-norm since the mass is uniform
inline FuncalcCheck funcalc_convergence(const AssembledOperator& op, const PsiFunction& f, double theta = M_PI / 4, int nodes = 400) {
    const auto& e = op.eigen(true);
    auto ext = spectrum_extent(e.values);
    ContourSpec c = make_contour(ext.min_nonzero, ext.max_abs, theta, nodes);
    c.validate(0.0, ext.min_nonzero, ext.max_abs);
    Eigen::MatrixXd ref = spectral_funcalc(e, f);
    auto res = contour_funcalc(op.dense(), f, c, 3);
    FuncalcCheck out{f.name, res.nodes, {}};
    double nref = std::max(opnorm2(ref), 1e-300);
    for (const auto& X : res.approx) out.rel_error.push_back(opnorm2(X - ref) / nref);
    return out;
}

// error halves (or better) per doubling until the floor
inline bool halving_ok(const std::vector<double>& err, double floor = 1e-8) {
    for (std::size_t i = 1; i < err.size(); ++i)
        if (!(err[i] <= err[i - 1] / 2 || err[i] <= floor)) return false;
    return true;
}

enum class Subspace { all, range_d, range_delta };

inline std::string to_string(Subspace s) {
    switch (s) {
        case Subspace::all: return "all";
        case Subspace::range_d: return "R(d)";
        default: return "R(delta)";
    }
}

inline Subspace parse_subspace(const std::string& s) {
    if (s == "all") return Subspace::all;
    if (s == "R(d)" || s == "range_d" || s == "d") return Subspace::range_d;
    if (s == "R(delta)" || s == "range_delta" || s == "delta") return Subspace::range_delta;
    throw std::invalid_argument("unknown subspace " + s);
}

struct SweepRow {
    double t = 0, p = 0;
    double estimate = 0;
    int iterations = 0;
};

struct SweepResult {
    Subspace subspace = Subspace::all;
    std::vector<SweepRow> rows;
    std::map<double, double> sup_over_t;
};

// l^p(mass) norm of (I + itA)^{-1} restricted to a subspace; uniform mass makes the weight cancel
inline SweepResult resolvent_sweep(const AssembledOperator& op, const std::vector<double>& t_grid, const std::vector<double>& p_grid,
                                   Subspace sub = Subspace::all, const HodgeSplit* H = nullptr, unsigned seed = 1, int starts = 8,
                                   int max_iter = 200) {
    if (t_grid.empty() || p_grid.empty()) throw std::invalid_argument("resolvent_sweep: empty grid");
    if (sub != Subspace::all && !H) throw std::invalid_argument("resolvent_sweep: subspace needs a Hodge split");
    SpMatC A = complex_operator(op);
    SweepResult out;
    out.subspace = sub;
    using V = VectorXc;
    std::function<V(const V&)> P;
    if (sub != Subspace::all) {
        Projector k = sub == Subspace::range_d ? Projector::d : Projector::delta;
        P = [H, k](const V& x) -> V { return H->apply(k, x); };
    }
    for (double t : t_grid) {
        ResolventSolver R(A, cdouble(0, t));
        std::function<V(const V&)> f = [&R](const V& x) -> V { return R.solve(x); };
        std::function<V(const V&)> fh = [&R](const V& x) -> V { return R.solve_adjoint(x); };
        for (double p : p_grid) {
            auto e = boyd_pnorm<V>(f, fh, op.size(), p, seed, starts, max_iter, P);
            out.rows.push_back({t, p, e.value, e.iterations});
            out.sup_over_t[p] = std::max(out.sup_over_t[p], e.value);
        }
    }
    return out;
}

struct OffdiagFamily {
    std::string name;
    std::vector<double> separation, norm;
    double rate = 0, intercept = 0, r2 = 0;
    bool monotone = true;
};

struct OffdiagProfile {
    double t = 0;
    std::vector<OffdiagFamily> families;
};

namespace detail {

inline void fit_decay(OffdiagFamily& fam, double t) {
    const int m = int(fam.separation.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < m; ++i) {
        double x = fam.separation[i] / t, y = std::log(fam.norm[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    double icept = (sy - slope * sx) / m;
    double ss_tot = 0, ss_res = 0, ybar = sy / m;
    for (int i = 0; i < m; ++i) {
        double x = fam.separation[i] / t, y = std::log(fam.norm[i]);
        ss_tot += (y - ybar) * (y - ybar);
        ss_res += (y - icept - slope * x) * (y - icept - slope * x);
    }
    fam.rate = -slope;
    fam.intercept = icept;
    fam.r2 = ss_tot > 0 ? 1 - ss_res / ss_tot : 1.0;
    for (int i = 1; i < m; ++i)
        if (fam.norm[i] > fam.norm[i - 1] * (1 + 1e-12)) fam.monotone = false;
}

inline double block_norm(const MatrixXc& X, const std::vector<int>& rows) {
    if (rows.empty()) throw std::invalid_argument("offdiag: empty region");
    MatrixXc XE(rows.size(), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) XE.row(i) = X.row(rows[i]);
    MatrixXc G = XE.adjoint() * XE;
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(G, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace detail

// barycenter of every operator index
inline std::vector<std::vector<double>> index_barycenters(const AssembledOperator& op) {
    std::vector<std::vector<double>> x(op.size());
    for (int l = 0; l <= op.dim(); ++l)
        for (int i = 0; i < int(op.cells[l].size()); ++i) x[op.offsets[l] + i] = op.complex->barycenter(l, op.cells[l][i]);
    return x;
}

// ||1_E T 1_F|| for T in {R, t d R, t delta R}, R = (I+itA)^{-1}; E_s = indices at distance >= s from F
inline OffdiagProfile offdiag_profile(const AssembledOperator& op, double t, const std::vector<int>& F, const std::vector<double>& separations) {
    if (F.empty()) throw std::invalid_argument("offdiag: empty region F");
    if (!(t > 0)) throw std::invalid_argument("offdiag: t must be positive");
    SpMatC A = complex_operator(op);
    ResolventSolver R(A, cdouble(0, t));
    const int N = op.size();
    MatrixXc B = MatrixXc::Zero(N, F.size());
    for (std::size_t j = 0; j < F.size(); ++j) B(F[j], j) = 1;
    MatrixXc X = R.solve(B);
    SpMatC d = op.d_full().cast<cdouble>();
    SpMatC dt = SpMatC(d.transpose());
    std::vector<std::pair<std::string, MatrixXc>> fam{{"resolvent", X}, {"t_d_resolvent", t * (d * X)}, {"t_delta_resolvent", t * (dt * X)}};
    auto xs = index_barycenters(op);
    std::vector<double> dist(N, std::numeric_limits<double>::infinity());
    for (int i = 0; i < N; ++i)
        for (int j : F) {
            double s = 0;
            for (std::size_t k = 0; k < xs[i].size(); ++k) s += (xs[i][k] - xs[j][k]) * (xs[i][k] - xs[j][k]);
            dist[i] = std::min(dist[i], std::sqrt(s));
        }
    OffdiagProfile out;
    out.t = t;
    for (auto& [name, M] : fam) {
        OffdiagFamily f;
        f.name = name;
        for (double s : separations) {
            std::vector<int> E;
            for (int i = 0; i < N; ++i)
                if (dist[i] >= s - 1e-12) E.push_back(i);
            f.separation.push_back(s);
            f.norm.push_back(detail::block_norm(M, E));
        }
        if (separations.size() >= 2) detail::fit_decay(f, t);
        out.families.push_back(std::move(f));
    }
    return out;
}

// f(-Laplacian) through a single-sector contour; the Stokes variant conjugates by P_delta
inline ContourResult laplacian_funcalc(const AssembledOperator& op, const PsiFunction& f, double theta = M_PI / 4, int nodes = 400, int levels = 1) {
    Eigen::MatrixXd L(hodge_laplacian(op));
    const auto& e = op.eigen(false);
    auto ext = spectrum_extent(e.values.array().square().matrix());
    ContourSpec c = make_contour(ext.min_nonzero, ext.max_abs, theta, nodes, SectorKind::single_sector);
    c.validate(0.0, ext.min_nonzero, ext.max_abs);
    return contour_funcalc(L, f, c, levels);
}

inline Eigen::MatrixXd stokes_restriction(const Eigen::MatrixXd& fL, const HodgeSplit& H) {
    Eigen::MatrixXd P = H.dense(Projector::delta);
    return P * fL * P;
}

struct ExponentRow {
    std::string domain;
    double h = 0, p = 0;
    double resolvent_sup_d = 0, resolvent_sup_delta = 0;
    double proj_d = 0, proj_delta = 0;
    bool below_ceiling = false;
};

// per p: sup_t restricted-resolvent estimates and projector norms, flagged against a ceiling
inline std::vector<ExponentRow> exponent_scan(const AssembledOperator& op, const HodgeSplit& H, const std::vector<double>& p_grid,
                                              const std::vector<double>& t_grid, double ceiling = 50, unsigned seed = 1, int starts = 8) {
    auto sd = resolvent_sweep(op, t_grid, p_grid, Subspace::range_d, &H, seed, starts);
    auto se = resolvent_sweep(op, t_grid, p_grid, Subspace::range_delta, &H, seed, starts);
    std::vector<ExponentRow> rows;
    for (double p : p_grid) {
        ExponentRow r;
        r.domain = op.complex->domain().name;
        r.h = op.complex->h();
        r.p = p;
        r.resolvent_sup_d = sd.sup_over_t[p];
        r.resolvent_sup_delta = se.sup_over_t[p];
        r.proj_d = projector_pnorm(H, Projector::d, p, seed, starts).value;
        r.proj_delta = projector_pnorm(H, Projector::delta, p, seed, starts).value;
        r.below_ceiling = std::max({r.resolvent_sup_d, r.resolvent_sup_delta, r.proj_d, r.proj_delta}) < ceiling;
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<double> log_grid(double a, double b, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(a * std::pow(b / a, n == 1 ? 0.0 : double(i) / (n - 1)));
    return g;
}

}  // namespace hdx
