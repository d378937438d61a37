#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdx/exponents.hpp"
#include "hdx/exterior.hpp"
#include "hdx/funcalc.hpp"
#include "hdx/geometry.hpp"
#include "hdx/hodge.hpp"
#include "hdx/localization.hpp"
#include "hdx/polyform.hpp"

using namespace hdx;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string command;
    std::string domain = "square";
    double h = 0.125;
    std::vector<std::string> p{"2"};
    std::vector<double> t{0.01, 0.1, 1.0, 10.0};
    double theta = M_PI / 4;
    std::string bc = "tangential";
    unsigned seed = 1;
    std::string out = "hdx_out";
    int jobs = 1;
    double tol = -1;  // negative: each command uses its own default
    std::string kind = "exponents";
    std::string config;
    json extra = json::object();  // command-specific keys from the config file

    std::vector<double> p_values() const {
        std::vector<double> v;
        for (const auto& s : p) {
            Exponent e = parse_exponent(s);
            if (e.infinite) throw UsageError("p must be finite here");
            v.push_back(e.to_double());
        }
        return v;
    }
    double tolerance(double fallback) const { return tol > 0 ? tol : fallback; }
    BoundaryCondition boundary() const { return parse_bc(bc); }
};

const std::set<std::string> kConfigKeys{"domain", "h", "p", "t", "theta", "bc", "seed", "out", "jobs", "tol", "kind",
                                        "n", "alpha", "x0", "gamma", "points", "ceiling", "kappa"};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// config file values replace flag values
void apply_config(RunConfig& rc) {
    if (rc.config.empty()) return;
    std::ifstream in(rc.config);
    if (!in) throw UsageError("cannot open config " + rc.config);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("malformed config: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            if (!kConfigKeys.count(k)) throw UsageError("unknown config key: " + k);
            const json& v = it.value();
            if (k == "domain") rc.domain = v.get<std::string>();
            else if (k == "h") rc.h = v.get<double>();
            else if (k == "p") {
                rc.p.clear();
                for (const auto& x : v.is_array() ? v : json::array({v})) rc.p.push_back(x.is_string() ? x.get<std::string>() : fmt17(x.get<double>()));
            } else if (k == "t") rc.t = v.get<std::vector<double>>();
            else if (k == "theta") rc.theta = v.get<double>();
            else if (k == "bc") rc.bc = v.get<std::string>();
            else if (k == "seed") rc.seed = v.get<unsigned>();
            else if (k == "out") rc.out = v.get<std::string>();
            else if (k == "jobs") rc.jobs = v.get<int>();
            else if (k == "tol") rc.tol = v.get<double>();
            else if (k == "kind") rc.kind = v.get<std::string>();
            else rc.extra[k] = v;
        }
    } catch (const json::type_error& e) {
        throw UsageError(std::string("config value has the wrong type: ") + e.what());
    }
}

void validate(const RunConfig& rc) {
    auto known = known_domains();
    if (std::find(known.begin(), known.end(), rc.domain) == known.end()) throw UsageError("unknown domain: " + rc.domain);
    if (!(rc.h > 0)) throw UsageError("h must be positive");
    if (rc.p.empty() || rc.t.empty()) throw UsageError("p and t grids must be nonempty");
    try {
        for (const auto& s : rc.p)
            if (!parse_exponent(s).infinite && parse_exponent(s).value < 1) throw UsageError("p must be at least 1");
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    for (double t : rc.t)
        if (!(t > 0)) throw UsageError("t values must be positive");
    if (!(rc.theta > 0 && rc.theta < M_PI / 2)) throw UsageError("theta must lie in (0, pi/2)");
    try {
        parse_bc(rc.bc);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (rc.jobs < 1) throw UsageError("jobs must be at least 1");
    if (rc.tol == 0 || rc.tol < -1) throw UsageError("tol must be positive");
    const std::set<std::string> kinds{"exponents", "resolvent", "offdiag", "perturbed"};
    if (rc.command == "sweep" && !kinds.count(rc.kind)) throw UsageError("unknown sweep kind: " + rc.kind);
    if (rc.command != "exponents") {
        try {
            auto c = build_complex(rc.domain, rc.h);
            if (rc.command == "sweep" && rc.kind == "offdiag") {
                const auto& d = c->domain();
                for (int k = 0; k < d.dim; ++k)
                    if (12 * rc.h > 0.5 * (d.hi[k] - d.lo[k])) throw UsageError("offdiag needs h small enough for three separations");
            }
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            throw UsageError(std::string("mesh: ") + e.what());
        }
    }
}

// assertion ledger for one run
struct Report {
    json invariants = json::array();
    std::vector<std::string> failures;

    void check(const std::string& name, double value, double bound, bool upper = true) {
        bool ok = upper ? value <= bound : value >= bound;
        invariants.push_back({{"name", name}, {"value", value}, {"bound", bound}, {"kind", upper ? "upper" : "lower"}, {"pass", ok}});
        if (!ok) failures.push_back(name);
    }
    void check_true(const std::string& name, bool ok) {
        invariants.push_back({{"name", name}, {"pass", ok}});
        if (!ok) failures.push_back(name);
    }
};

struct Output {
    fs::path dir;
    explicit Output(const std::string& d) : dir(d) { fs::create_directories(dir); }
    std::ofstream csv(const std::string& name) const {
        std::ofstream os(dir / name);
        if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
        return os;
    }
    void json_file(const std::string& name, const json& j) const {
        std::ofstream os(dir / name);
        os << j.dump(2) << "\n";
    }
};

const std::map<std::string, std::vector<int>>& expected_betti() {
    static const std::map<std::string, std::vector<int>> table{{"interval", {1, 0}},     {"square", {1, 0, 0}},   {"disc", {1, 0, 0}},
                                                               {"lshape", {1, 0, 0}},    {"annulus", {1, 1, 0}},  {"cube", {1, 0, 0, 0}},
                                                               {"twobrick", {1, 0, 0, 0}}};
    return table;
}

double sparse_max_abs(const SpMat& A) {
    double m = 0;
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
    return m;
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

Multivector<Rational> random_mv(int n, int grade, std::mt19937& rng) {
    std::uniform_int_distribution<int> num(-9, 9), den(1, 5);
    Multivector<Rational> m(n);
    for (Blade s = 0; s < m.size(); ++s)
        if (grade_of(s) == grade) m[s] = Rational(num(rng), den(rng));
    return m;
}

// exact identity counts over random corpora; returns the number of failures per identity
struct AlgebraCounts {
    int homotopy = 0, potential = 0, duality = 0, star = 0, product = 0, pullback = 0;
    int corpus = 0, exact = 0, instances = 0;
};

AlgebraCounts algebra_suite(const std::vector<int>& dims, int corpus, int instances, unsigned seed) {
    AlgebraCounts c;
    c.corpus = corpus;
    c.instances = instances;
    std::mt19937 rng(seed);
    for (int k = 0; k < corpus; ++k) {
        int n = dims[k % dims.size()];
        int grade = (k / int(dims.size())) % (n + 1);
        PolyForm f = random_form(n, 6, grade, 4, rng);
        c.homotopy += !(poincare_RB(ext_d(f)) + ext_d(poincare_RB(f)) == f - poincare_KB(f));
        if (grade < n) {
            PolyForm g = ext_d(f);
            ++c.exact;
            c.potential += !(ext_d(poincare_RB(g)) == g);
        }
    }
    for (int k = 0; k < instances; ++k) {
        int n = 2 + k % 4, l = k % n;
        auto a = random_mv(n, 1, rng), u = random_mv(n, l, rng), v = random_mv(n, l + 1, rng);
        c.duality += !(inner(wedge(a, u), v) == inner(u, interior(a, v)));
    }
    for (int k = 0; k < instances; ++k) {
        int n = dims[k % dims.size()], l = k % (n + 1);
        PolyForm u = random_form(n, 3, l, 3, rng);
        Rational s = (l & 1) ? -1 : 1;
        c.star += !(hodge_star(int_delta(u)) == ext_d(hodge_star(u)) * s && hodge_star(ext_d(u)) == int_delta(hodge_star(u)) * (-s));
        int m = (k / 3) % (n + 1);
        Poly eta = random_form(n, 3, 0, 3, rng)[0];
        PolyForm v = random_form(n, 3, m, 3, rng), g = gradient(eta);
        c.product += !(ext_d(eta * u) == eta * ext_d(u) + wedge(g, u) && int_delta(eta * v) == eta * int_delta(v) - interior(g, v) &&
                       ext_d(wedge(u, v)) == wedge(ext_d(u), v) + wedge(u, ext_d(v)) * s && ext_d(wedge(g, u)) == -wedge(g, ext_d(u)));
    }
    std::uniform_int_distribution<int> num(-3, 3), den(1, 3);
    for (int k = 0; k < instances;) {
        int n = dims[k % dims.size()];
        PolyForm u = random_form(n, 3, k % (n + 1), 3, rng);
        if (k % 4 == 3) {
            PolyMap rho;
            for (int i = 0; i < n; ++i) rho.comp.push_back(random_form(n, 2, 0, 3, rng)[0]);
            c.pullback += !(ext_d(pullback(rho, u)) == pullback(rho, ext_d(u)));
            ++k;
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
        c.pullback += !(ext_d(pullback(rho, u)) == pullback(rho, ext_d(u)) &&
                        int_delta(pushforward_tilde(rho, u)) == pushforward_tilde(rho, int_delta(u)));
        ++k;
    }
    return c;
}

Eigen::VectorXd singular_exact_form(const AssembledOperator& op, const std::vector<double>& x0, double gamma) {
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

std::vector<double> default_singularity(const DomainSpec& d) {
    // inside every known domain and off the dyadic grid lines
    if (d.name == "square" || d.name == "cube") return std::vector<double>(d.dim, 0.3) = d.dim == 2 ? std::vector<double>{0.3, 0.45} : std::vector<double>{0.3, 0.45, 0.55};
    if (d.name == "interval") return {0.3};
    if (d.name == "annulus") return {0.0, -0.72};
    if (d.name == "twobrick") return {0.1, 0.3, 0.2};
    return {-0.45, -0.3};  // disc, lshape
}

// shared by verify and czdemo
struct CZSweep {
    double astar = 0, slope = 0, residual = 0, Cg = 0, spread_w = 0, spread_v = 0;
    int cubes = 0;
};

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
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

// ---------------------------------------------------------------- commands

int finish(const RunConfig& rc, const Output& out, Report& rep, const json& extra = json::object()) {
    json m{{"version", kVersion},
           {"command", rc.command},
           {"config",
            {{"domain", rc.domain}, {"h", rc.h}, {"p", rc.p}, {"t", rc.t}, {"theta", rc.theta}, {"bc", rc.bc}, {"jobs", rc.jobs}, {"kind", rc.kind}}},
           {"seed", rc.seed},
           {"tolerance", rc.tol > 0 ? json(rc.tol) : json("command default")},
           {"invariants", rep.invariants},
           {"passed", int(rep.invariants.size() - rep.failures.size())},
           {"failed", rep.failures},
           {"status", rep.failures.empty() ? "pass" : "fail"}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    out.json_file("manifest.json", m);
    std::cout << rc.command << ": " << m["passed"] << " passed, " << rep.failures.size() << " failed";
    for (const auto& f : rep.failures) std::cout << "\n  FAIL " << f;
    std::cout << "\n";
    return rep.failures.empty() ? 0 : 1;
}

int cmd_verify(const RunConfig& rc) {
    Output out(rc.out);
    Report rep;
    auto c = build_complex(rc.domain, rc.h);
    const int n = c->dim();
    auto tan = assemble_dirac(c, BoundaryCondition::tangential);
    auto nor = assemble_dirac(c, BoundaryCondition::normal);
    for (int l = 0; l + 1 < n; ++l) rep.check("d_squared_zero_grade" + std::to_string(l), sparse_max_abs(SpMat(c->coboundary(l + 1) * c->coboundary(l))), 0.0);
    for (auto* op : {&tan, &nor}) {
        const std::string tag = to_string(op->bc);
        SpMat At = op->D.transpose();
        rep.check(tag + "_self_adjoint", sparse_max_abs(SpMat(op->D * op->mass - At * op->mass)), 1e-12);
        Eigen::VectorXd ev = op->eigen(false).values;
        rep.check(tag + "_spectrum_symmetric", (ev + ev.reverse()).cwiseAbs().maxCoeff(), 1e-9);
        bool graded = true;
        for (int k = 0; k < op->D.outerSize(); ++k)
            for (SpMat::InnerIterator it(op->D, k); it; ++it)
                graded &= std::abs(op->grade_of_index(int(it.row())) - op->grade_of_index(int(it.col()))) == 1;
        rep.check_true(tag + "_dirac_shifts_grade_by_one", graded);
    }
    SpMat L = hodge_laplacian(tan);
    rep.check("laplacian_equals_D_squared", sparse_max_abs(SpMat(L - SpMat(tan.D * tan.D))), 1e-9);
    auto H = hodge_projectors(tan);
    auto chk = check_split(tan, H);
    rep.check("split_completeness", chk.completeness, 1e-10);
    rep.check("split_orthogonality", chk.orthogonality, 1e-10);
    rep.check("split_idempotence", chk.idempotence, 1e-10);
    rep.check("split_kernel_residual", chk.kernel_residual, 1e-10);
    rep.check_true("split_rank_count", chk.rank_ok);
    auto betti = H.betti();
    int euler_b = 0, euler_c = 0;
    for (int l = 0; l <= n; ++l) {
        euler_b += (l % 2 ? -1 : 1) * betti[l];
        euler_c += (l % 2 ? -1 : 1) * c->count(l);
    }
    rep.check_true("betti_euler_characteristic", euler_b == euler_c);
    auto Hn = hodge_projectors(nor);
    auto bn = Hn.betti();
    rep.check_true("betti_normal_is_reversed", std::equal(betti.begin(), betti.end(), bn.rbegin()));
    if (expected_betti().count(rc.domain)) rep.check_true("betti_expected", betti == expected_betti().at(rc.domain));
    {
        std::mt19937 rng(rc.seed);
        std::normal_distribution<double> g;
        Eigen::VectorXd x(tan.size());
        for (auto& v : x) v = g(rng);
        Eigen::VectorXd u = H.apply(Projector::d, x);
        auto P = discrete_potential(tan, H);
        rep.check("discrete_potential_inverts_d", (tan.D * P.apply_R(u) - u).cwiseAbs().maxCoeff() / std::max(1.0, u.cwiseAbs().maxCoeff()), 1e-9);
        rep.check("projector_2norm_is_one", std::abs(projector_pnorm(H, Projector::d, 2.0, rc.seed, 2).value - 1), 1e-8);
    }
    MatrixXc A = tan.dense().cast<cdouble>();
    if (tan.size() <= 1500) {
        double axis = 0, sector = 0;
        for (double t : rc.t) axis = std::max(axis, complex_singular_values(resolvent(A, cdouble(0, t)))[0]);
        std::mt19937 rng(rc.seed);
        std::uniform_real_distribution<double> U(0, 1);
        for (int k = 0; k < 10; ++k) {
            double phi = rc.theta + 1e-9 + U(rng) * (M_PI - 2 * rc.theta - 2e-9);
            sector = std::max(sector, complex_singular_values(resolvent(A, std::polar(std::pow(10.0, -2 + 4 * U(rng)), phi)))[0]);
        }
        rep.check("resolvent_axis_bound", axis, 1 + 1e-10);
        rep.check("resolvent_sector_bound", sector, 1 / std::sin(rc.theta) + 1e-8);
    }
    for (const auto& f : psi_corpus()) {
        auto fc = funcalc_convergence(tan, f, rc.theta);
        rep.check("funcalc_error_" + f.name, fc.rel_error.back(), 1e-6);
        rep.check_true("funcalc_halving_" + f.name, halving_ok(fc.rel_error));
    }
    {
        auto B = random_coefficient_field(tan, rc.seed, 0.5);
        rep.check("perturbed_coercivity", B.measured_coercivity(), 0.5, false);
        auto P = assemble_perturbed(c, B);
        rep.check("perturbed_spectral_angle", spectral_angle(general_eigenvalues(MatrixXc(*P.Dc))), M_PI / 2 - 1e-6);
    }
    {
        double t = std::max(4 * rc.h, 0.25);
        auto W = whitney_cover(tan, t);
        rep.check("whitney_partition_of_squares", W.partition_error, 1e-12);
        rep.check("whitney_overlap", W.overlap, std::pow(4.0, n));
        Cochain u(c, singular_exact_form(tan, default_singularity(c->domain()), 1.0 / 3));
        std::vector<double> lambdas;
        for (int k = 0; k < 12; ++k) lambdas.push_back(std::pow(10.0, -1 + 0.25 * k));
        rep.check("maximal_weak11_constant", weak11_constant(u, lambdas), std::pow(3.0, n));
        NeumannPotential R(tan);
        double alpha = 2 * lp_norm(u, 1.5);
        auto cz = cz_decompose(tan, u.values, alpha, std::cref(R));
        rep.check("cz_reconstruction", cz.residual, 1e-9);
        rep.check("cz_good_part", cz.Cg, 2.0);
    }
    if (n >= 2) {
        auto a = algebra_suite({n}, 40, 200, rc.seed);
        rep.check("poincare_homotopy_identity_failures", a.homotopy, 0);
        rep.check("poincare_true_potential_failures", a.potential, 0);
        rep.check("interior_duality_failures", a.duality, 0);
        rep.check("star_relation_failures", a.star, 0);
        rep.check("product_rule_failures", a.product, 0);
        rep.check("pullback_commutation_failures", a.pullback, 0);
        bool involution = true;
        for (const auto& s : rc.p) {
            Exponent p = parse_exponent(s);
            involution &= exponents(exponents(p, n).conjugate, n).conjugate == p;
        }
        rep.check_true("exponent_conjugate_involution", involution);
    }
    try {
        auto atlas = make_atlas(rc.domain);
        double pu = 0, kc = 0;
        std::vector<double> chi;
        std::vector<Vec> grad;
        for (const auto& y : atlas.sample_interior(20, rc.seed, 0.05)) {
            atlas.partition(y, chi, grad);
            double s = 0;
            for (double v : chi) s += v;
            pu = std::max(pu, std::abs(s - 1));
            FormField one = [n](const Vec&) {
                MV m(n);
                m[0] = 1;
                return m;
            };
            kc = std::max(kc, std::abs(glued_K_apply(atlas, one, y)[0] - 1));
        }
        rep.check("atlas_partition_of_unity", pu, 1e-10);
        rep.check("glued_K_reproduces_constants", kc, 1e-9);
    } catch (const std::invalid_argument&) {
        // no atlas for this domain
    }
    return finish(rc, out, rep, {{"invariant_count", rep.invariants.size()}});
}

int cmd_potential(const RunConfig& rc) {
    Output out(rc.out);
    Report rep;
    auto a = algebra_suite({2, 3}, 240, 1000, rc.seed);
    rep.check("homotopy_identity_failures", a.homotopy, 0);
    rep.check("true_potential_failures", a.potential, 0);
    rep.check("duality_failures", a.duality, 0);
    rep.check("star_relation_failures", a.star, 0);
    rep.check("product_rule_failures", a.product, 0);
    rep.check("pullback_commutation_failures", a.pullback, 0);
    json extra{{"corpus", a.corpus}, {"exact_forms", a.exact}, {"instances", a.instances}};
    DomainAtlas atlas;
    try {
        atlas = make_atlas(rc.domain);
    } catch (const std::invalid_argument&) {
        return finish(rc, out, rep, extra);
    }
    const int n = atlas.dim;
    PolyForm w(n);
    w += ext_d(PolyForm::scalar(Poly::var(n, 0) * Poly::var(n, 1)));
    w += PolyForm::term(n, {0}, mono_from(std::vector<int>(n, 0)), 1);
    std::vector<int> e(n, 0);
    e[1] = 2;
    w += PolyForm::term(n, {0}, mono_from(e), 1);
    e.assign(n, 0);
    e[0] = 1;
    w += PolyForm::term(n, {1}, mono_from(e), 1);
    auto u = CompiledForm(w).field(), du = CompiledForm(ext_d(w)).field();
    const int points = rc.extra.value("points", 20);
    QuadratureSpec q;
    auto os = out.csv("glued_defect.csv");
    for (int i = 0; i < n; ++i) os << "x" << i << ",";
    os << "defect_default,defect_doubled\n";
    double base = 0, fine = 0;
    for (const auto& y : atlas.sample_interior(points, rc.seed + 2, 0.01, fd_clearance(atlas))) {
        double d0 = glued_homotopy_defect(atlas, u, du, y, q).defect, d1 = glued_homotopy_defect(atlas, u, du, y, q.doubled()).defect;
        for (int i = 0; i < n; ++i) os << fmt17(y[i]) << ",";
        os << fmt17(d0) << "," << fmt17(d1) << "\n";
        base = std::max(base, d0);
        fine = std::max(fine, d1);
    }
    rep.check("glued_defect_default", base, rc.tolerance(1e-3));
    rep.check("glued_refinement_factor", base / std::max(fine, 1e-300), 2.0, false);
    extra["atlas"] = atlas.metadata;
    return finish(rc, out, rep, extra);
}

int cmd_decompose(const RunConfig& rc) {
    Output out(rc.out);
    Report rep;
    auto op = assemble_dirac(build_complex(rc.domain, rc.h), rc.boundary());
    auto H = hodge_projectors(op);
    auto chk = check_split(op, H);
    const double tol = rc.tolerance(1e-10);
    rep.check("split_completeness", chk.completeness, tol);
    rep.check("split_orthogonality", chk.orthogonality, tol);
    rep.check("split_idempotence", chk.idempotence, tol);
    rep.check("split_kernel_residual", chk.kernel_residual, tol);
    rep.check_true("split_rank_count", chk.rank_ok);
    auto betti = H.betti();
    if (op.bc == BoundaryCondition::tangential && expected_betti().count(rc.domain)) rep.check_true("betti_expected", betti == expected_betti().at(rc.domain));
    auto os = out.csv("projector_norms.csv");
    write_hodge_csv_header(os);
    for (double p : rc.p_values())
        for (auto k : {Projector::d, Projector::delta, Projector::harmonic}) write_hodge_csv_row(os, rc.domain, rc.h, p, k, projector_pnorm(H, k, p, rc.seed, 4));
    return finish(rc, out, rep, {{"N", op.size()}, {"betti", betti}});
}

int sweep_exponents(const RunConfig& rc, const Output& out, Report& rep) {
    auto op = assemble_dirac(build_complex(rc.domain, rc.h), rc.boundary());
    auto H = hodge_projectors(op);
    const double ceiling = rc.extra.value("ceiling", 50.0);
    auto rows = exponent_scan(op, H, rc.p_values(), rc.t, ceiling, rc.seed, 4);
    auto os = out.csv("sweep.csv");
    os << "domain,h,p,resolvent_sup_d,resolvent_sup_delta,proj_d,proj_delta,below_ceiling\n";
    double dual = 0;
    for (const auto& r : rows) {
        os << r.domain << "," << fmt17(r.h) << "," << fmt17(r.p) << "," << fmt17(r.resolvent_sup_d) << "," << fmt17(r.resolvent_sup_delta) << ","
           << fmt17(r.proj_d) << "," << fmt17(r.proj_delta) << "," << (r.below_ceiling ? 1 : 0) << "\n";
        rep.check_true("below_ceiling_p" + fmt17(r.p), r.below_ceiling);
        if (r.p > 1) dual = std::max(dual, std::abs(r.proj_d / projector_pnorm(H, Projector::d, r.p / (r.p - 1), rc.seed, 4).value - 1));
    }
    rep.check("projector_duality_gap", dual, 0.2);
    return 0;
}

int sweep_resolvent(const RunConfig& rc, const Output& out, Report& rep) {
    auto op = assemble_dirac(build_complex(rc.domain, rc.h), rc.boundary());
    MatrixXc A = op.dense().cast<cdouble>();
    std::mt19937 rng(rc.seed);
    std::uniform_real_distribution<double> U(0, 1);
    auto os = out.csv("resolvent.csv");
    os << "re_z,im_z,norm,bound\n";
    double worst = 0, axis = 0;
    const double bound = 1 / std::sin(rc.theta);
    for (int k = 0; k < 50; ++k) {
        double phi = rc.theta + 1e-9 + U(rng) * (M_PI - 2 * rc.theta - 2e-9);
        cdouble z = std::polar(std::pow(10.0, -2 + 4 * U(rng)), k % 2 ? phi : -phi);
        double nz = complex_singular_values(resolvent(A, z))[0];
        worst = std::max(worst, nz);
        os << fmt17(z.real()) << "," << fmt17(z.imag()) << "," << fmt17(nz) << "," << fmt17(bound) << "\n";
    }
    for (double t : rc.t) {
        double nz = complex_singular_values(resolvent(A, cdouble(0, t)))[0];
        axis = std::max(axis, nz);
        os << "0," << fmt17(t) << "," << fmt17(nz) << ",1\n";
    }
    rep.check("sector_resolvent_bound", worst, bound + 1e-8);
    rep.check("axis_resolvent_bound", axis, 1 + 1e-10);
    return 0;
}

int sweep_offdiag(const RunConfig& rc, const Output& out, Report& rep) {
    const double h = rc.h;
    auto op = assemble_dirac(build_complex(rc.domain, h), rc.boundary());
    auto xs = index_barycenters(op);
    const auto& d = op.complex->domain();
    std::vector<int> F;
    for (int i = 0; i < op.size(); ++i) {
        bool in = true;
        for (int k = 0; k < d.dim; ++k) in &= std::abs(xs[i][k] - 0.5 * (d.lo[k] + d.hi[k])) <= 2 * h;
        if (in) F.push_back(i);
    }
    if (F.empty()) throw std::invalid_argument("offdiag: the centre patch holds no cells");
    std::vector<double> seps;
    double reach = 1e300;
    for (int k = 0; k < d.dim; ++k) reach = std::min(reach, 0.5 * (d.hi[k] - d.lo[k]));
    for (int k = 4; k <= 32 && k * h <= reach; k += 4) seps.push_back(k * h);
    auto os = out.csv("offdiag.csv");
    os << "family,t,separation,norm\n";
    for (double t : {4 * h, 8 * h}) {
        auto prof = offdiag_profile(op, t, F, seps);
        for (const auto& f : prof.families) {
            for (std::size_t i = 0; i < f.separation.size(); ++i)
                os << f.name << "," << fmt17(t) << "," << fmt17(f.separation[i]) << "," << fmt17(f.norm[i]) << "\n";
            rep.check(f.name + "_rate_t" + fmt17(t / h) + "h", f.rate, 0.0, false);
            rep.check(f.name + "_r2_t" + fmt17(t / h) + "h", f.r2, 0.9, false);
        }
    }
    return 0;
}

int sweep_perturbed(const RunConfig& rc, const Output& out, Report& rep) {
    const double kappa = rc.extra.value("kappa", 0.5);
    auto os = out.csv("perturbed.csv");
    os << "seed,h,coercivity,spectral_angle,sup_resolvent\n";
    for (unsigned seed = rc.seed; seed < rc.seed + 3; ++seed) {
        std::vector<double> sups;
        for (double h : {rc.h, rc.h / 2}) {
            auto c = build_complex(rc.domain, h);
            auto D = assemble_dirac(c);
            auto B = random_coefficient_field(D, seed, kappa);
            auto P = assemble_perturbed(c, B);
            double angle = spectral_angle(general_eigenvalues(MatrixXc(*P.Dc)));
            SpMatC A = complex_operator(P);
            double sup = 0;
            for (double t : rc.t) sup = std::max(sup, resolvent_norm_power(ResolventSolver(A, cdouble(0, t)), seed));
            sups.push_back(sup);
            os << seed << "," << fmt17(h) << "," << fmt17(B.measured_coercivity()) << "," << fmt17(angle) << "," << fmt17(sup) << "\n";
            rep.check("angle_seed" + std::to_string(seed) + "_h" + fmt17(h), angle, M_PI / 2 - 1e-9);
        }
        rep.check("stability_seed" + std::to_string(seed), std::abs(sups[1] / sups[0] - 1), 0.2);
    }
    return 0;
}

int cmd_sweep(const RunConfig& rc) {
    Output out(rc.out);
    Report rep;
    if (rc.kind == "exponents") sweep_exponents(rc, out, rep);
    else if (rc.kind == "resolvent") sweep_resolvent(rc, out, rep);
    else if (rc.kind == "offdiag") sweep_offdiag(rc, out, rep);
    else sweep_perturbed(rc, out, rep);
    return finish(rc, out, rep);
}

int cmd_funcalc(const RunConfig& rc) {
    Output out(rc.out);
    Report rep;
    auto op = assemble_dirac(build_complex(rc.domain, rc.h), rc.boundary());
    auto os = out.csv("funcalc.csv");
    os << "function,nodes,rel_error\n";
    for (const auto& f : psi_corpus()) {
        auto chk = funcalc_convergence(op, f, rc.theta);
        for (std::size_t i = 0; i < chk.nodes.size(); ++i) os << f.name << "," << chk.nodes[i] << "," << fmt17(chk.rel_error[i]) << "\n";
        rep.check("error_" + f.name, chk.rel_error.back(), rc.tolerance(1e-6));
        rep.check_true("halving_" + f.name, halving_ok(chk.rel_error));
    }
    return finish(rc, out, rep);
}

int cmd_czdemo(const RunConfig& rc) {
    Output out(rc.out);
    Report rep;
    auto op = assemble_dirac(build_complex(rc.domain, rc.h));
    const double p = rc.p_values().front();
    auto x0 = rc.extra.contains("x0") ? rc.extra["x0"].get<std::vector<double>>() : default_singularity(op.complex->domain());
    const double gamma = rc.extra.value("gamma", 1.0 / 3);
    if (int(x0.size()) != op.complex->dim()) throw UsageError("x0 has the wrong dimension");
    NeumannPotential R(op);
    Eigen::VectorXd u = singular_exact_form(op, x0, gamma);
    const double astar = lp_norm(Cochain(op.complex, u), p);
    std::vector<double> alphas;
    if (rc.extra.contains("alpha")) alphas = rc.extra["alpha"].get<std::vector<double>>();
    else
        for (int i = 0; i <= 60; ++i) alphas.push_back(astar * std::pow(10.0, -2 + i / 20.0));
    auto os = out.csv("cz_sweep.csv");
    os << "alpha,exceptional_measure,cubes,fallback_cubes,residual,C_g,C_measure,ratio_w_spread,ratio_v_spread\n";
    std::vector<double> la, lm;
    double residual = 0, Cg = 0;
    json reports = json::array();
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        auto cz = cz_decompose(op, u, alphas[i], std::cref(R), nullptr, p);
        os << fmt17(alphas[i]) << "," << fmt17(cz.exceptional_measure) << "," << cz.cubes.size() << "," << cz.fallback_cubes << "," << fmt17(cz.residual)
           << "," << fmt17(cz.Cg) << "," << fmt17(cz.C_measure) << "," << fmt17(cz.ratio_w_spread) << "," << fmt17(cz.ratio_v_spread) << "\n";
        residual = std::max(residual, cz.residual);
        Cg = std::max(Cg, cz.Cg);
        if (cz.exceptional_measure > 0) {
            la.push_back(std::log(alphas[i]));
            lm.push_back(std::log(cz.exceptional_measure));
        }
        if (std::abs(alphas[i] / astar - 1) < 1e-12 || std::abs(alphas[i] / astar - std::sqrt(10.0)) < 1e-12) {
            rep.check("ratio_w_spread_alpha" + fmt17(alphas[i] / astar), cz.ratio_w_spread, 10);
            rep.check("ratio_v_spread_alpha" + fmt17(alphas[i] / astar), cz.ratio_v_spread, 10);
            reports.push_back(cz_report(cz));
        }
    }
    rep.check("reconstruction", residual, rc.tolerance(1e-9));
    rep.check("good_part_constant", Cg, 2.0);
    if (la.size() >= 2) rep.check("measure_slope_gap", std::abs(fit_slope(la, lm) + p), 0.2);
    out.json_file("cz_report.json", reports);
    return finish(rc, out, rep, {{"alpha_star", astar}, {"x0", x0}, {"gamma", gamma}, {"p", p}});
}

int cmd_geometry(const RunConfig& rc) {
    Output out(rc.out);
    Report rep;
    auto chi2 = box_cutoff(Vec::Zero(2), Vec{{0.5, 0.5}}, Vec{{1.5, 1.5}});
    auto S2 = smoothing_map([](const Vec& x) { return std::abs(x[0]) - 0.3 * std::sin(2 * x[0]); }, 2, 0.05, chi2, 2.0);
    auto chi3 = box_cutoff(Vec::Zero(3), Vec{{0.5, 0.5, 0.5}}, Vec{{1.5, 1.5, 1.5}});
    auto S3 = smoothing_map([](const Vec& x) { return 0.5 * std::abs(x[0]) + 0.3 * std::abs(x[1]); }, 3, 0.2, chi3, 2.0);
    json maps = json::array();
    for (const auto* S : {&S2, &S3}) {
        auto r = check_smoothing_map(*S, 2.0, 50, 400, 1000, rc.seed);
        const std::string tag = "smoothing_" + std::to_string(S->dim) + "d";
        rep.check(tag + "_h_prime_min", r.h_prime_min, 0.5 - 1e-9, false);
        rep.check(tag + "_h_prime_max", r.h_prime_max, 1.5 + 1e-9);
        rep.check(tag + "_round_trip", r.roundtrip, rc.tolerance(1e-10));
        maps.push_back({{"dim", S->dim}, {"eps", S->eps}, {"M", S->M}, {"h_prime_min", r.h_prime_min}, {"h_prime_max", r.h_prime_max}, {"round_trip", r.roundtrip}});
    }
    auto disc = ball_domain(Vec::Zero(2), 1.0);
    auto ball = ball_domain(Vec::Zero(3), 2.0);
    const double s = std::sqrt(0.5);
    std::vector<std::tuple<const ImplicitDomain*, Vec, double>> pairs{{&disc, Vec{{1.0, 0.0}}, 0.2},
                                                                     {&disc, Vec{{0.0, -1.0}}, 0.05},
                                                                     {&disc, Vec{{-s, s}}, 0.4},
                                                                     {&ball, Vec{{0.0, 0.0, 2.0}}, 0.5},
                                                                     {&ball, Vec{{2 * s, 0.0, -2 * s}}, 0.1}};
    auto os = out.csv("containments.csv");
    os << "pair,dim,r,samples,inner,in_Q,inner_violations,outer_violations\n";
    int k = 0;
    for (const auto& [omega, x0, r] : pairs) {
        auto rep_c = check_containments(smooth_ball_domain(x0, r, *omega), 10000, rc.seed + k);
        os << k << "," << x0.size() << "," << fmt17(r) << "," << rep_c.samples << "," << rep_c.inner << "," << rep_c.in_Q << "," << rep_c.inner_violations
           << "," << rep_c.outer_violations << "\n";
        rep.check("containment_violations_pair" + std::to_string(k), rep_c.inner_violations + rep_c.outer_violations, 0);
        ++k;
    }
    json extra{{"smoothing", maps}};
    try {
        extra["atlas"] = make_atlas(rc.domain).metadata;
    } catch (const std::invalid_argument&) {
    }
    return finish(rc, out, rep, extra);
}

int cmd_exponents(const RunConfig& rc) {
    const int n = rc.extra.value("n", 0);
    if (n < 2) throw UsageError("exponents needs --n >= 2");
    json rows = json::array();
    for (const auto& s : rc.p) {
        try {
            rows.push_back(exponents(parse_exponent(s), n).to_json());
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    Output out(rc.out);
    out.json_file("exponents.json", rows);
    std::cout << rows.dump(2) << "\n";
    Report rep;
    return finish(rc, out, rep, {{"exponents", rows}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hdx: Hodge-Dirac operators on bounded domains"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print help");
    RunConfig rc;
    std::string p_list, t_list;
    int n_dim = 0;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"verify", "run the invariant suite on one domain"},
        {"potential", "exact potential identities and the glued potential defect"},
        {"decompose", "Hodge split report and projector norms"},
        {"sweep", "resolvent, off-diagonal, perturbed or exponent sweeps"},
        {"funcalc", "contour calculus against the spectral oracle"},
        {"czdemo", "Calderon-Zygmund decomposition sweep"},
        {"geometry", "smoothing maps, smooth ball domains and atlases"},
        {"exponents", "exact exponent table for p and n"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->set_help_flag("--help", "print help");
        sub->add_option("--domain", rc.domain, "domain name");
        sub->add_option("--h", rc.h, "mesh width");
        sub->add_option("--p", p_list, "comma-separated exponents");
        sub->add_option("--t", t_list, "comma-separated t values");
        sub->add_option("--theta", rc.theta, "sector half-angle");
        sub->add_option("--bc", rc.bc, "tangential or normal");
        sub->add_option("--seed", rc.seed, "random seed");
        sub->add_option("--out", rc.out, "output directory");
        sub->add_option("--jobs", rc.jobs, "worker cap");
        sub->add_option("--tol", rc.tol, "tolerance for the main assertion");
        sub->add_option("--config", rc.config, "JSON config; its values override flags");
        if (name == "sweep") sub->add_option("--kind", rc.kind, "exponents, resolvent, offdiag or perturbed");
        if (name == "exponents") sub->add_option("--n", n_dim, "dimension");
        sub->callback([&rc, name = name] { rc.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        if (!p_list.empty()) rc.p = split_list(p_list);
        if (!t_list.empty()) {
            rc.t.clear();
            for (const auto& s : split_list(t_list)) rc.t.push_back(std::stod(s));
        }
        if (n_dim) rc.extra["n"] = n_dim;
        apply_config(rc);
        validate(rc);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }
    Eigen::setNbThreads(rc.jobs);
    try {
        if (rc.command == "verify") return cmd_verify(rc);
        if (rc.command == "potential") return cmd_potential(rc);
        if (rc.command == "decompose") return cmd_decompose(rc);
        if (rc.command == "sweep") return cmd_sweep(rc);
        if (rc.command == "funcalc") return cmd_funcalc(rc);
        if (rc.command == "czdemo") return cmd_czdemo(rc);
        if (rc.command == "geometry") return cmd_geometry(rc);
        if (rc.command == "exponents") return cmd_exponents(rc);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
