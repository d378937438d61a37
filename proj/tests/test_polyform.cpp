#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss.hpp>
#include <gtest/gtest.h>

#include "hdx/polyform.hpp"

using namespace hdx;

namespace {

PolyForm random_form(int n, int max_deg, int grade, int nterms, std::mt19937& rng) {
    std::uniform_int_distribution<int> num(-6, 6), den(1, 4), deg(0, max_deg), var(0, n - 1);
    auto blades = grade < 0 ? std::vector<Blade>{} : blades_of_grade(n, grade);
    PolyForm f(n);
    for (int t = 0; t < nterms; ++t) {
        Blade s;
        if (grade < 0)
            s = std::uniform_int_distribution<Blade>(0, full_blade(n))(rng);
        else
            s = blades[std::uniform_int_distribution<std::size_t>(0, blades.size() - 1)(rng)];
        std::vector<int> a(n, 0);
        int d = deg(rng);
        for (int k = 0; k < d; ++k) ++a[var(rng)];
        f += PolyForm::term(n, s, mono_from(a), Rational(num(rng), den(rng)));
    }
    return f;
}

Poly random_poly(int n, int max_deg, std::mt19937& rng) { return random_form(n, max_deg, 0, 4, rng)[0]; }

// int over the ball of radius 1/2 of theta(a) g(a), polar Gauss in r, trapezoid in angle (n = 2)
template <class G>
double ball_integral_2d(int k, G g) {
    const double ck = bump_constant(2, k);
    const int na = 48;
    auto radial = [&](double r) {
        double s = 0;
        for (int q = 0; q < na; ++q) {
            double ph = 2 * M_PI * q / na;
            double a[2] = {r * std::cos(ph), r * std::sin(ph)};
            s += g(a);
        }
        return s * 2 * M_PI / na * r * ck * std::pow(0.25 - r * r, k);
    };
    return boost::math::quadrature::gauss<double, 20>::integrate(radial, 0.0, 0.5);
}

template <class G>
double ball_integral_3d(int k, G g) {
    const double ck = bump_constant(3, k);
    const int naz = 24;
    auto radial = [&](double r) {
        auto polar = [&](double c) {
            double s = 0, sn = std::sqrt(std::max(0.0, 1 - c * c));
            for (int q = 0; q < naz; ++q) {
                double ph = 2 * M_PI * q / naz;
                double a[3] = {r * sn * std::cos(ph), r * sn * std::sin(ph), r * c};
                s += g(a);
            }
            return s * 2 * M_PI / naz;
        };
        double ang = boost::math::quadrature::gauss<double, 15>::integrate(polar, -1.0, 1.0);
        return ang * r * r * ck * std::pow(0.25 - r * r, k);
    };
    return boost::math::quadrature::gauss<double, 20>::integrate(radial, 0.0, 0.5);
}

// direct numerical evaluation of the defining double integral of R_B at y
Multivector<double> rb_oracle(const PolyForm& f, const std::vector<double>& y, int k) {
    const int n = f.dim();
    Multivector<double> out(n);
    for (int l = 1; l <= n; ++l) {
        PolyForm fl = f.grade(l);
        if (fl.is_zero()) continue;
        for (Blade target = 0; target < out.size(); ++target) {
            if (grade_of(target) != l - 1) continue;
            auto integrand = [&](const double* a) {
                auto inner_t = [&](double t) {
                    std::vector<double> z(n);
                    for (int i = 0; i < n; ++i) z[i] = a[i] + t * (y[i] - a[i]);
                    Multivector<double> v = fl.eval(z.data());
                    Multivector<double> ya(n);
                    for (int i = 0; i < n; ++i) ya[Blade(1) << i] = y[i] - a[i];
                    return std::pow(t, l - 1) * interior(ya, v)[target];
                };
                return boost::math::quadrature::gauss<double, 7>::integrate(inner_t, 0.0, 1.0);
            };
            out[target] = n == 2 ? ball_integral_2d(k, integrand) : ball_integral_3d(k, integrand);
        }
    }
    return out;
}

PolyForm x(int n, int i) { return PolyForm::scalar(Poly::var(n, i - 1)); }
PolyForm e(int n, std::initializer_list<int> idx) {
    std::vector<int> v;
    for (int i : idx) v.push_back(i - 1);
    return PolyForm::term(n, blade_from_indices(v, n), 0, 1);
}

}  // namespace

TEST(ExtD, Examples) {
    EXPECT_EQ(ext_d(x(2, 1) * Rational(1) + PolyForm(2)), e(2, {1}));
    PolyForm x1x2 = PolyForm::scalar(Poly::var(2, 0) * Poly::var(2, 1));
    EXPECT_EQ(ext_d(x1x2), Poly::var(2, 1) * e(2, {1}) + Poly::var(2, 0) * e(2, {2}));
    EXPECT_EQ(ext_d(Poly::var(2, 1) * e(2, {1})), -e(2, {1, 2}));
    EXPECT_TRUE(ext_d(e(2, {1, 2})).is_zero());
}

TEST(IntDelta, Examples) {
    EXPECT_EQ(int_delta(Poly::var(2, 0) * e(2, {1})), PolyForm::scalar(Poly::constant(2, -1)));
    EXPECT_EQ(int_delta(Poly::var(2, 0) * e(2, {1, 2})), -e(2, {2}));
    EXPECT_TRUE(int_delta(e(2, {1})).is_zero());
}

TEST(ExtD, NilpotentAndGrading) {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + trial % 4;
        int l = trial % (n + 1);
        PolyForm f = random_form(n, 5, l, 6, rng);
        EXPECT_TRUE(ext_d(ext_d(f)).is_zero());
        EXPECT_TRUE(int_delta(int_delta(f)).is_zero());
        PolyForm df = ext_d(f), sf = int_delta(f);
        if (!df.is_zero()) EXPECT_TRUE(df.grade(l + 1) == df);
        if (!sf.is_zero()) EXPECT_TRUE(sf.grade(l - 1) == sf);
    }
}

TEST(BallMoment, ClosedFormAgainstQuadrature) {
    EXPECT_EQ(ball_moment({0, 0}, 2), Rational(1));
    EXPECT_EQ(ball_moment({0, 0, 0}, 3), Rational(1));
    EXPECT_EQ(ball_moment({1, 0}, 2), Rational(0));
    EXPECT_EQ(ball_moment({2, 1, 0}, 4), Rational(0));
    for (int k : {2, 3, 4}) {
        for (auto alpha : std::vector<std::vector<int>>{{2, 0}, {2, 2}, {4, 0}, {0, 6}, {4, 2}}) {
            double q = ball_integral_2d(k, [&](const double* a) { return std::pow(a[0], alpha[0]) * std::pow(a[1], alpha[1]); });
            EXPECT_NEAR(ball_moment(alpha, k).convert_to<double>(), q, 1e-12) << k;
        }
        for (auto alpha : std::vector<std::vector<int>>{{2, 0, 0}, {2, 2, 2}, {0, 0, 4}}) {
            double q = ball_integral_3d(k, [&](const double* a) {
                return std::pow(a[0], alpha[0]) * std::pow(a[1], alpha[1]) * std::pow(a[2], alpha[2]);
            });
            EXPECT_NEAR(ball_moment(alpha, k).convert_to<double>(), q, 1e-12) << k;
        }
    }
    EXPECT_THROW(ball_moment({2, 0}, -1), std::invalid_argument);
}

TEST(PoincareRB, Examples) {
    EXPECT_TRUE(poincare_RB(x(2, 1)).is_zero());
    EXPECT_TRUE(poincare_RB(PolyForm::scalar(Poly::constant(3, 5))).is_zero());
    EXPECT_EQ(poincare_RB(e(2, {1})), x(2, 1));
    PolyForm expect = (Poly::var(2, 0) * e(2, {2}) - Poly::var(2, 1) * e(2, {1})) * Rational(1, 2);
    EXPECT_EQ(poincare_RB(e(2, {1, 2})), expect);
}

TEST(PoincareRB, AgreesWithQuadratureOfDefiningIntegral) {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (int n : {2, 3}) {
        for (int trial = 0; trial < (n == 2 ? 6 : 3); ++trial) {
            PolyForm f = random_form(n, 3, -1, 5, rng);
            for (int k : {2, 3}) {
                PolyForm r = poincare_RB(f, {k});
                for (int pt = 0; pt < (n == 2 ? 10 : 2); ++pt) {
                    std::vector<double> y(n);
                    for (auto& v : y) v = u(rng) / std::sqrt(double(n));
                    auto exact = r.eval(y.data());
                    auto oracle = rb_oracle(f, y, k);
                    for (Blade s = 0; s < exact.size(); ++s) EXPECT_NEAR(exact[s], oracle[s], 1e-10);
                }
            }
        }
    }
}

TEST(PoincareKB, Examples) {
    EXPECT_EQ(poincare_KB(PolyForm::scalar(Poly::constant(2, 1))), PolyForm::scalar(Poly::constant(2, 1)));
    EXPECT_TRUE(poincare_KB(e(2, {1})).is_zero());
    EXPECT_TRUE(poincare_KB(x(2, 1)).is_zero());
    PolyForm sq = PolyForm::scalar(Poly::var(2, 0) * Poly::var(2, 0));
    double q = ball_integral_2d(2, [](const double* a) { return a[0] * a[0]; });
    EXPECT_NEAR(poincare_KB(sq)[0].eval(std::vector<double>{0, 0}.data()), q, 1e-13);
}

TEST(PoincareRB, HomotopyIdentityAllBumps) {
    std::mt19937 rng(23);
    for (int k : {2, 3, 4})
        for (int trial = 0; trial < 30; ++trial) {
            int n = 2 + trial % 2;
            PolyForm f = random_form(n, 5, -1, 5, rng);
            PolyForm lhs = poincare_RB(ext_d(f), {k}) + ext_d(poincare_RB(f, {k}));
            ASSERT_EQ(lhs, f - poincare_KB(f, {k}));
        }
}

TEST(PoincareRB, TruePotentialAndKVanishesOnExact) {
    std::mt19937 rng(29);
    for (int trial = 0; trial < 40; ++trial) {
        int n = 2 + trial % 2;
        PolyForm f = ext_d(random_form(n, 5, trial % n, 5, rng));
        ASSERT_EQ(ext_d(poincare_RB(f)), f);
        ASSERT_TRUE(poincare_KB(f).is_zero());
    }
}

TEST(PoincareRB, DegreeCapIsAnError) {
    PolyForm f = PolyForm::term(2, {1}, {8, 0}, 1);
    EXPECT_THROW(poincare_RB(f), std::length_error);
    EXPECT_NO_THROW(poincare_RB(f, {}, 12));
}

TEST(StarRelations, StarDeltaAndStarD) {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        int n = 2 + trial % 3;
        int l = trial % (n + 1);
        PolyForm u = random_form(n, 4, l, 4, rng);
        Rational s1 = (l & 1) ? -1 : 1;
        ASSERT_EQ(hodge_star(int_delta(u)), ext_d(hodge_star(u)) * s1);
        ASSERT_EQ(hodge_star(ext_d(u)), int_delta(hodge_star(u)) * (-s1));
    }
}

TEST(ProductRules, AllFour) {
    std::mt19937 rng(37);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + trial % 3;
        int l = trial % (n + 1);
        Poly eta = random_poly(n, 3, rng);
        PolyForm u = random_form(n, 3, l, 4, rng), v = random_form(n, 3, (trial / 2) % (n + 1), 4, rng);
        PolyForm g = gradient(eta);
        ASSERT_EQ(ext_d(eta * u), eta * ext_d(u) + wedge(g, u));
        ASSERT_EQ(int_delta(eta * v), eta * int_delta(v) - interior(g, v));
        Rational sg = (l & 1) ? -1 : 1;
        ASSERT_EQ(ext_d(wedge(u, v)), wedge(ext_d(u), v) + wedge(u, ext_d(v)) * sg);
        ASSERT_EQ(ext_d(wedge(g, u)), -wedge(g, ext_d(u)));
    }
}

TEST(Pullback, Examples) {
    std::mt19937 rng(2);
    PolyForm f = random_form(2, 3, -1, 5, rng);
    EXPECT_EQ(pullback(PolyMap::identity(2), f), f);
    auto dil = PolyMap::affine({{2, 0}, {0, 2}}, {0, 0});
    EXPECT_EQ(pullback(dil, e(2, {1})), e(2, {1}) * Rational(2));
    EXPECT_EQ(pullback(dil, e(2, {1, 2})), e(2, {1, 2}) * Rational(4));
    EXPECT_EQ(pullback(dil, x(2, 2)), x(2, 2) * Rational(2));
}

TEST(Pushforward, Examples) {
    auto dil = PolyMap::affine({{2, 0}, {0, 2}}, {0, 0});
    EXPECT_EQ(pushforward_tilde(PolyMap::identity(2), e(2, {1, 2})), e(2, {1, 2}));
    EXPECT_EQ(pushforward_tilde(dil, e(2, {1})), e(2, {1}) * Rational(2));
    auto rot = PolyMap::affine({{0, -1}, {1, 0}}, {0, 0});
    // J^{-1} e_1 = -e_2 for the quarter turn
    EXPECT_EQ(pushforward_tilde(rot, e(2, {1})), -e(2, {2}));
    std::mt19937 rng(3);
    for (int t = 0; t < 20; ++t) {
        PolyForm u = random_form(2, 3, -1, 4, rng);
        EXPECT_EQ(int_delta(pushforward_tilde(rot, u)), pushforward_tilde(rot, int_delta(u)));
    }
    EXPECT_THROW(pushforward_tilde(PolyMap::affine({{1, 1}, {1, 1}}, {0, 0}), e(2, {1})), std::domain_error);
    PolyMap quad;
    quad.comp = {Poly::var(2, 0) * Poly::var(2, 0), Poly::var(2, 1)};
    EXPECT_THROW(pushforward_tilde(quad, e(2, {1})), std::invalid_argument);
}

TEST(Pullback, CommutationAndHomomorphism) {
    std::mt19937 rng(41);
    std::uniform_int_distribution<int> num(-3, 3), den(1, 3);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + trial % 2;
        std::vector<std::vector<Rational>> A(n, std::vector<Rational>(n));
        std::vector<Rational> b(n);
        for (auto& row : A)
            for (auto& a : row) a = Rational(num(rng), den(rng));
        for (auto& v : b) v = Rational(num(rng), den(rng));
        Rational det;
        try {
            rational_inverse(A, &det);
        } catch (const std::domain_error&) {
            continue;
        }
        auto rho = PolyMap::affine(A, b);
        PolyForm u = random_form(n, 3, -1, 4, rng), v = random_form(n, 2, -1, 3, rng);
        ASSERT_EQ(ext_d(pullback(rho, u)), pullback(rho, ext_d(u)));
        ASSERT_EQ(int_delta(pushforward_tilde(rho, u)), pushforward_tilde(rho, int_delta(u)));
        ASSERT_EQ(pullback(rho, wedge(u, v)), wedge(pullback(rho, u), pullback(rho, v)));
    }
    // polynomial (non-affine) map
    for (int trial = 0; trial < 30; ++trial) {
        PolyMap rho;
        for (int i = 0; i < 2; ++i) rho.comp.push_back(random_poly(2, 2, rng));
        PolyForm u = random_form(2, 2, -1, 3, rng);
        ASSERT_EQ(ext_d(pullback(rho, u)), pullback(rho, ext_d(u)));
    }
}

TEST(PolyFormJson, RoundTrip) {
    auto j = nlohmann::json::parse(R"({"n":2,"terms":[{"blade":[1],"alpha":[0,1],"coeff":"3/2"}]})");
    PolyForm f = polyform_from_json(j);
    EXPECT_EQ(f, PolyForm::term(2, {0}, {0, 1}, Rational(3, 2)));
    EXPECT_EQ(polyform_from_json(to_json(f)), f);
    EXPECT_EQ(to_json(f).dump(), j.dump());
    EXPECT_THROW(polyform_from_json(nlohmann::json::parse(R"({"n":2,"terms":[{"blade":[3],"alpha":[0,1],"coeff":"1"}]})")),
                 std::invalid_argument);
}
