// Acceptance run: one PASS/FAIL line per criterion. Arguments select criteria (e.g. AC4 AC9); none runs all.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hdx/exterior.hpp"
#include "hdx/funcalc.hpp"
#include "hdx/geometry.hpp"
#include "hdx/hodge.hpp"
#include "hdx/localization.hpp"
#include "hdx/polyform.hpp"

using namespace hdx;
using RMV = Multivector<Rational>;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

PolyForm random_form(int n, int max_deg, int grade, int nterms, std::mt19937& rng) {
    std::uniform_int_distribution<int> num(-6, 6), den(1, 4), deg(0, max_deg), var(0, n - 1);
    auto blades = blades_of_grade(n, grade);
    PolyForm f(n);
    for (int t = 0; t < nterms; ++t) {
        Blade s = blades[std::uniform_int_distribution<std::size_t>(0, blades.size() - 1)(rng)];
        std::vector<int> a(n, 0);
        int d = deg(rng);
        for (int k = 0; k < d; ++k) ++a[var(rng)];
        f += PolyForm::term(n, s, mono_from(a), Rational(num(rng), den(rng)));
    }
    return f;
}

// 240 forms: every (n, grade) with n in {2, 3}, degrees up to 6
std::vector<PolyForm> form_corpus() {
    std::mt19937 rng(2024);
    std::vector<PolyForm> out;
    for (int k = 0; k < 240; ++k) {
        int n = 2 + k % 2;
        int grade = (k / 2) % (n + 1);
        out.push_back(random_form(n, 6, grade, 4, rng));
    }
    return out;
}

RMV random_mv(int n, int grade, std::mt19937& rng) {
    std::uniform_int_distribution<int> num(-9, 9), den(1, 5);
    RMV m(n);
    for (Blade s = 0; s < m.size(); ++s)
        if (grade_of(s) == grade) m[s] = Rational(num(rng), den(rng));
    return m;
}

double max_abs(const SpMat& A) {
    double m = 0;
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
    return m;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

// d_h of a sampled 0-form |x - x0|^{-gamma}
Eigen::VectorXd singular_exact_form(const AssembledOperator& op, std::vector<double> x0, double gamma) {
    const auto& c = *op.complex;
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(op.size());
    for (int id = 0; id < c.count(0); ++id) {
        auto x = c.barycenter(0, id);
        double r2 = 0;
        for (int i = 0; i < c.dim(); ++i) r2 += (x[i] - x0[i]) * (x[i] - x0[i]);
        phi[id] = std::pow(r2, -gamma / 2);
    }
    return op.d_full() * phi;
}

void ac1(Outcome& o) {
    auto t0 = std::chrono::steady_clock::now();
    auto corpus = form_corpus();
    int ok = 0;
    for (const auto& f : corpus) ok += poincare_RB(ext_d(f)) + ext_d(poincare_RB(f)) == f - poincare_KB(f);
    double secs = seconds_since(t0);
    o.detail << ok << "/" << corpus.size() << " forms exact, " << sci(secs) << " s";
    o.require(ok == int(corpus.size()), "identity");
    o.require(secs <= 120, "runtime");
}

void ac2(Outcome& o) {
    auto t0 = std::chrono::steady_clock::now();
    int ok = 0, total = 0;
    auto corpus = form_corpus();
    for (std::size_t k = 0; k < corpus.size(); ++k) {
        const int n = 2 + k % 2;
        if (int(k / 2) % (n + 1) == n) continue;  // top grade, d g = 0
        PolyForm f = ext_d(corpus[k]);
        ++total;
        ok += ext_d(poincare_RB(f)) == f;
    }
    double secs = seconds_since(t0);
    o.detail << ok << "/" << total << " exact forms, " << sci(secs) << " s";
    o.require(total >= 100 && ok == total, "dR f = f");
    o.require(secs <= 60, "runtime");
}

void ac3(Outcome& o) {
    const int N = 1000;
    std::mt19937 rng(77);
    int duality = 0, star = 0, product = 0, pull = 0;
    for (int k = 0; k < N; ++k) {
        int n = 2 + k % 4;
        int l = k % n;
        RMV a = random_mv(n, 1, rng), u = random_mv(n, l, rng), v = random_mv(n, l + 1, rng);
        duality += inner(wedge(a, u), v) == inner(u, interior(a, v));
    }
    for (int k = 0; k < N; ++k) {
        int n = 2 + k % 3;
        int l = k % (n + 1);
        PolyForm u = random_form(n, 3, l, 3, rng);
        Rational s = (l & 1) ? -1 : 1;
        star += hodge_star(int_delta(u)) == ext_d(hodge_star(u)) * s && hodge_star(ext_d(u)) == int_delta(hodge_star(u)) * (-s);
    }
    for (int k = 0; k < N; ++k) {
        int n = 2 + k % 3;
        int l = k % (n + 1), m = (k / 3) % (n + 1);
        Poly eta = random_form(n, 3, 0, 3, rng)[0];
        PolyForm u = random_form(n, 3, l, 3, rng), v = random_form(n, 3, m, 3, rng);
        PolyForm g = gradient(eta);
        Rational s = (l & 1) ? -1 : 1;
        product += ext_d(eta * u) == eta * ext_d(u) + wedge(g, u) && int_delta(eta * v) == eta * int_delta(v) - interior(g, v) &&
                   ext_d(wedge(u, v)) == wedge(ext_d(u), v) + wedge(u, ext_d(v)) * s && ext_d(wedge(g, u)) == -wedge(g, ext_d(u));
    }
    std::uniform_int_distribution<int> num(-3, 3), den(1, 3);
    int tried = 0;
    while (tried < N) {
        int n = 2 + tried % 2;
        PolyForm u = random_form(n, 3, tried % (n + 1), 3, rng);
        if (tried % 4 == 3) {
            // polynomial map
            PolyMap rho;
            for (int i = 0; i < n; ++i) rho.comp.push_back(random_form(n, 2, 0, 3, rng)[0]);
            pull += ext_d(pullback(rho, u)) == pullback(rho, ext_d(u));
            ++tried;
            continue;
        }
        std::vector<std::vector<Rational>> A(n, std::vector<Rational>(n));
        std::vector<Rational> b(n);
        for (auto& row : A)
            for (auto& x : row) x = Rational(num(rng), den(rng));
        for (auto& x : b) x = Rational(num(rng), den(rng));
        try {
            rational_inverse(A, nullptr);
        } catch (const std::domain_error&) {
            continue;
        }
        auto rho = PolyMap::affine(A, b);
        pull += ext_d(pullback(rho, u)) == pullback(rho, ext_d(u)) && int_delta(pushforward_tilde(rho, u)) == pushforward_tilde(rho, int_delta(u));
        ++tried;
    }
    o.detail << "duality " << duality << ", star " << star << ", product " << product << ", pullback " << pull << " of " << N << " each";
    o.require(duality == N && star == N && product == N && pull == N, "exact identities");
}

void ac4(Outcome& o) {
    struct Case {
        std::string name;
        double h;
    };
    double worst_sa = 0, worst_pair = 0;
    bool nil = true;
    for (const auto& cs : std::vector<Case>{{"square", 1.0 / 8}, {"annulus", 1.0 / 8}, {"lshape", 1.0 / 8}, {"cube", 1.0 / 4}, {"twobrick", 1.0}}) {
        for (double h : {cs.h, cs.h / 2}) {
            auto c = build_complex(cs.name, h);
            for (int l = 0; l + 1 < c->dim(); ++l) nil &= max_abs(SpMat(c->coboundary(l + 1) * c->coboundary(l))) == 0.0;
            for (auto bc : {BoundaryCondition::tangential, BoundaryCondition::normal}) {
                auto op = assemble_dirac(c, bc);
                for (int l = 0; l + 1 < c->dim(); ++l) nil &= max_abs(SpMat(op.d[l + 1] * op.d[l])) == 0.0;
                SpMat At = op.D.transpose();
                worst_sa = std::max(worst_sa, max_abs(SpMat(op.D * op.mass - At * op.mass)));
                Eigen::VectorXd ev = op.eigen(false).values;
                worst_pair = std::max(worst_pair, (ev + ev.reverse()).cwiseAbs().maxCoeff());
            }
        }
    }
    o.detail << "d^2 = 0 " << (nil ? "exact" : "violated") << ", self-adjointness " << sci(worst_sa) << ", spectral pairing " << sci(worst_pair);
    o.require(nil, "d^2");
    o.require(worst_sa <= 1e-12, "self-adjointness");
    o.require(worst_pair <= 1e-9, "symmetric spectrum");
}

void ac5(Outcome& o) {
    struct Case {
        std::string name;
        double h;
        std::vector<int> betti;
    };
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    for (const auto& cs : std::vector<Case>{{"square", 1.0 / 16, {1, 0, 0}},
                                            {"annulus", 1.0 / 8, {1, 1, 0}},
                                            {"cube", 1.0 / 8, {1, 0, 0, 0}},
                                            {"twobrick", 0.5, {1, 0, 0, 0}}}) {
        auto op = assemble_dirac(build_complex(cs.name, cs.h));
        auto H = hodge_projectors(op);
        auto chk = check_split(op, H);
        worst = std::max({worst, chk.completeness, chk.orthogonality, chk.idempotence});
        o.require(H.betti() == cs.betti, cs.name + " betti");
        o.require(chk.rank_ok, cs.name + " ranks");
        o.detail << cs.name << " N=" << op.size() << " betti (";
        for (std::size_t i = 0; i < H.betti().size(); ++i) o.detail << (i ? "," : "") << H.betti()[i];
        o.detail << "); ";
    }
    double secs = seconds_since(t0);
    o.detail << "split defect " << sci(worst) << ", " << sci(secs) << " s";
    o.require(worst <= 1e-10, "split");
    o.require(secs <= 300, "runtime");
}

void ac6(Outcome& o) {
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> U(0, 1);
    double sector = 0, axis = 0;
    for (auto [name, h] : std::vector<std::pair<std::string, double>>{{"square", 1.0 / 8}, {"lshape", 1.0 / 4}}) {
        auto op = assemble_dirac(build_complex(name, h));
        MatrixXc A = op.dense().cast<cdouble>();
        for (int k = 0; k < 50; ++k) {
            double phi = M_PI / 4 + 1e-9 + U(rng) * (M_PI / 2 - 2e-9);
            double r = std::pow(10.0, -2 + 4 * U(rng));
            cdouble z = std::polar(r, k % 2 ? phi : phi + M_PI);
            sector = std::max(sector, complex_singular_values(resolvent(A, z))[0]);
        }
        for (double t : log_grid(1e-3, 1e3, 25)) axis = std::max(axis, complex_singular_values(resolvent(A, cdouble(0, t)))[0]);
    }
    o.detail << "sup outside S_pi/4 " << sci(sector) << ", sup on iR " << sci(axis);
    o.require(sector <= std::sqrt(2.0) + 1e-8, "sector bound");
    o.require(axis <= 1 + 1e-10, "axis bound");
}

void ac7(Outcome& o) {
    for (auto [name, h] : std::vector<std::pair<std::string, double>>{{"square", 1.0 / 8}, {"lshape", 1.0 / 8}, {"cube", 1.0 / 4}}) {
        auto t0 = std::chrono::steady_clock::now();
        auto op = assemble_dirac(build_complex(name, h));
        double worst = 0, coarse = 0;
        bool halving = true;
        for (const auto& f : psi_corpus()) {
            auto chk = funcalc_convergence(op, f);
            worst = std::max(worst, chk.rel_error.back());
            coarse = std::max(coarse, chk.rel_error.front());
            halving &= halving_ok(chk.rel_error);
        }
        double secs = seconds_since(t0);
        o.detail << name << " err@100 " << sci(coarse) << " err@400 " << sci(worst) << (halving ? " halving" : " NOT halving") << " " << sci(secs) << " s; ";
        o.require(worst <= 1e-6, name + " error");
        o.require(halving, name + " halving");
        o.require(secs <= 180, name + " runtime");
    }
}

void ac8(Outcome& o) {
    const double h = 1.0 / 64;
    auto op = assemble_dirac(build_complex("square", h));
    auto xs = index_barycenters(op);
    std::vector<int> F;
    for (int i = 0; i < op.size(); ++i)
        if (std::abs(xs[i][0] - 0.5) <= 2 * h && std::abs(xs[i][1] - 0.5) <= 2 * h) F.push_back(i);
    std::vector<double> seps;
    for (int k = 4; k <= 32; k += 4) seps.push_back(k * h);
    for (double t : {4 * h, 8 * h}) {
        auto prof = offdiag_profile(op, t, F, seps);
        o.require(prof.families.size() == 3, "three families");
        for (const auto& f : prof.families) {
            o.detail << f.name << "@t=" << int(std::round(t / h)) << "h c=" << sci(f.rate) << " R2=" << sci(f.r2) << "; ";
            o.require(f.rate > 0 && f.r2 >= 0.9, f.name);
        }
    }
}

void ac9(Outcome& o) {
    const double p = 1.5;
    auto op = assemble_dirac(build_complex("square", 1.0 / 64));
    NeumannPotential R(op);
    Eigen::VectorXd u = singular_exact_form(op, {0.3, 0.45}, 1.0 / 3);
    const double astar = lp_norm(Cochain(op.complex, u), p);
    std::vector<double> la, lm, rw, rv;
    double residual = 0, Cg = 0;
    for (int i = 0; i <= 60; ++i) {
        double alpha = astar * std::pow(10.0, -2 + i / 20.0);
        auto cz = cz_decompose(op, u, alpha, std::cref(R), nullptr, p);
        residual = std::max(residual, cz.residual);
        Cg = std::max(Cg, cz.Cg);
        la.push_back(std::log(alpha));
        lm.push_back(std::log(cz.exceptional_measure));
        // norm ratios collected at two thresholds inside the domain scale
        if (i == 40 || i == 50)
            for (const auto& k : cz.cubes)
                if (!k.fallback && k.norm_u_p > 0) {
                    rw.push_back(k.ratio_w);
                    rv.push_back(k.ratio_v);
                }
    }
    double s = slope(la, lm);
    auto spread = [](const std::vector<double>& r) { return *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end()); };
    double sw = rw.empty() ? 0 : spread(rw), sv = rv.empty() ? 0 : spread(rv);
    o.detail << "residual " << sci(residual) << ", C_g " << sci(Cg) << ", slope " << sci(s) << " (p=" << p << "), ratio spread w " << sci(sw) << " v "
             << sci(sv) << " over " << rw.size() << " cubes";
    o.require(residual <= 1e-9, "reconstruction");
    o.require(Cg <= 2, "good part");
    o.require(std::abs(s + p) <= 0.2, "slope");
    o.require(!rw.empty() && sw <= 10 && sv <= 10, "ratio uniformity");
}

void ac10(Outcome& o) {
    struct Case {
        std::string name;
        std::vector<double> hs, ps;
    };
    const auto t_grid = log_grid(0.01, 10.0, 4);
    for (const auto& cs : std::vector<Case>{{"lshape", {1.0 / 8, 1.0 / 16}, {1.4, 2.0, 3.9}}, {"cube", {1.0 / 4, 1.0 / 6}, {1.6, 2.0, 2.9}}}) {
        for (double h : cs.hs) {
            auto op = assemble_dirac(build_complex(cs.name, h));
            auto H = hodge_projectors(op);
            auto rows = exponent_scan(op, H, cs.ps, t_grid, 50, 1, 4);
            double top = 0, dual = 0;
            for (const auto& r : rows) {
                top = std::max({top, r.resolvent_sup_d, r.resolvent_sup_delta, r.proj_d, r.proj_delta});
                o.require(r.below_ceiling, cs.name + " ceiling p=" + sci(r.p));
                const double pc = r.p / (r.p - 1);
                for (auto pr : {Projector::d, Projector::delta}) {
                    double a = pr == Projector::d ? r.proj_d : r.proj_delta;
                    double b = projector_pnorm(H, pr, pc, 1, 4).value;
                    dual = std::max(dual, std::abs(a / b - 1));
                }
            }
            o.require(dual <= 0.2, cs.name + " duality");
            o.detail << cs.name << " h=1/" << int(std::round(1 / h)) << " max " << sci(top) << " dual " << sci(dual) << "; ";
        }
    }
}

void ac11(Outcome& o) {
    const auto t_grid = log_grid(0.01, 100.0, 13);
    for (unsigned seed : {1u, 2u, 3u}) {
        std::vector<double> sups;
        double angle = 0, kappa = 1e300;
        for (double h : {1.0 / 8, 1.0 / 16}) {
            auto c = build_complex("square", h);
            auto D = assemble_dirac(c);
            auto B = random_coefficient_field(D, seed, 0.5);
            kappa = std::min(kappa, B.measured_coercivity());
            auto P = assemble_perturbed(c, B);
            angle = std::max(angle, spectral_angle(general_eigenvalues(MatrixXc(*P.Dc))));
            SpMatC A = complex_operator(P);
            double sup = 0;
            for (double t : t_grid) sup = std::max(sup, resolvent_norm_power(ResolventSolver(A, cdouble(0, t)), seed));
            sups.push_back(sup);
        }
        double drift = sups[1] / sups[0] - 1;
        o.detail << "seed " << seed << " kappa " << sci(kappa) << " angle " << sci(angle) << " sup " << sci(sups[0]) << "->" << sci(sups[1]) << "; ";
        o.require(kappa >= 0.5, "coercivity");
        o.require(angle < M_PI / 2, "sector");
        o.require(std::isfinite(sups[1]) && std::abs(drift) <= 0.2, "stability");
    }
}

void ac12(Outcome& o) {
    auto chi2 = box_cutoff(Vec::Zero(2), Vec{{0.5, 0.5}}, Vec{{1.5, 1.5}});
    auto S2 = smoothing_map([](const Vec& x) { return std::abs(x[0]) - 0.3 * std::sin(2 * x[0]); }, 2, 0.05, chi2, 2.0);
    auto chi3 = box_cutoff(Vec::Zero(3), Vec{{0.5, 0.5, 0.5}}, Vec{{1.5, 1.5, 1.5}});
    auto S3 = smoothing_map([](const Vec& x) { return 0.5 * std::abs(x[0]) + 0.3 * std::abs(x[1]); }, 3, 0.2, chi3, 2.0);
    double lo = 1e300, hi = -1e300, rt = 0;
    for (const auto* S : {&S2, &S3}) {
        auto r = check_smoothing_map(*S, 2.0);
        lo = std::min(lo, r.h_prime_min);
        hi = std::max(hi, r.h_prime_max);
        rt = std::max(rt, r.roundtrip);
    }
    o.detail << "h' in [" << sci(lo) << ", " << sci(hi) << "], round trip " << sci(rt);
    o.require(lo >= 0.5 - 1e-9 && hi <= 1.5 + 1e-9, "bracket");
    o.require(rt <= 1e-10, "round trip");
    auto disc = ball_domain(Vec::Zero(2), 1.0);
    auto ball = ball_domain(Vec::Zero(3), 2.0);
    struct Pair {
        const ImplicitDomain* omega;
        Vec x0;
        double r;
    };
    const double s = std::sqrt(0.5);
    std::vector<Pair> pairs{{&disc, Vec{{1.0, 0.0}}, 0.2},
                            {&disc, Vec{{0.0, -1.0}}, 0.05},
                            {&disc, Vec{{-s, s}}, 0.4},
                            {&ball, Vec{{0.0, 0.0, 2.0}}, 0.5},
                            {&ball, Vec{{2 * s, 0.0, -2 * s}}, 0.1}};
    int violations = 0, inner = 0;
    unsigned seed = 1;
    for (const auto& pr : pairs) {
        auto rep = check_containments(smooth_ball_domain(pr.x0, pr.r, *pr.omega), 10000, seed++);
        violations += rep.inner_violations + rep.outer_violations;
        inner += rep.inner;
        o.require(rep.samples == 10000 && rep.inner > 0, "containment sampling");
    }
    o.detail << "; containments: " << violations << " violations, " << inner << " inner samples over 5 pairs";
    o.require(violations == 0, "containments");
}

void ac13(Outcome& o) {
    for (std::string name : {"lshape", "twobrick"}) {
        auto A = make_atlas(name);
        const int n = A.dim;
        // a 1-form with polynomial coefficients, neither closed nor coclosed
        PolyForm w(n);
        w += ext_d(PolyForm::scalar(Poly::var(n, 0) * Poly::var(n, 1)));
        w += PolyForm::term(n, {0}, mono_from(std::vector<int>(n, 0)), 1);
        std::vector<int> a(n, 0);
        a[1] = 2;
        w += PolyForm::term(n, {0}, mono_from(a), 1);
        a.assign(n, 0);
        a[0] = 1;
        w += PolyForm::term(n, {1}, mono_from(a), 1);
        auto u = CompiledForm(w).field(), du = CompiledForm(ext_d(w)).field();
        QuadratureSpec q;
        double base = 0, fine = 0;
        auto t0 = std::chrono::steady_clock::now();
        for (const auto& y : A.sample_interior(20, 3, 0.01, fd_clearance(A))) {
            base = std::max(base, glued_homotopy_defect(A, u, du, y, q).defect);
            fine = std::max(fine, glued_homotopy_defect(A, u, du, y, q.doubled()).defect);
        }
        o.detail << name << " default " << sci(base) << " doubled " << sci(fine) << " (" << sci(seconds_since(t0)) << " s); ";
        o.require(base <= 1e-3, name + " defect");
        // below 1e-9 the defect is finite-difference round-off and no longer tracks the rule
        o.require(base <= 1e-9 || 2 * fine <= base, name + " refinement");
    }
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4},   {"AC5", ac5},   {"AC6", ac6},  {"AC7", ac7},
        {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}, {"AC11", ac11}, {"AC12", ac12}, {"AC13", ac13}};
    std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        failed += !o.pass;
        std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << " (" << sci(seconds_since(t0)) << " s) " << o.detail.str() << std::endl;
    }
    return failed ? 1 : 0;
}
