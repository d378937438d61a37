#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hdx/domains.hpp"
#include "hdx/exterior.hpp"
#include "hdx/polyform.hpp"

namespace hdx {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using MV = Multivector<double>;

// ---------------------------------------------------------------- quadrature

struct GaussRule {
    std::vector<double> x, w;  // on [-1, 1]
};

inline const GaussRule& gauss_legendre(int m) {
    if (m < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
    static std::map<int, GaussRule> cache;
    auto it = cache.find(m);
    if (it != cache.end()) return it->second;
    GaussRule r;
    r.x.resize(m);
    r.w.resize(m);
    for (int i = 0; i < m; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
        double dp = 1;
        for (int it2 = 0; it2 < 100; ++it2) {
            double p = std::legendre(m, x), pm = m > 1 ? std::legendre(m - 1, x) : 1.0;
            if (m == 1) pm = 1.0;
            dp = m * (x * p - pm) / (x * x - 1);
            double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p = std::legendre(m, x), pm = m > 1 ? std::legendre(m - 1, x) : 1.0;
        dp = m * (x * p - pm) / (x * x - 1);
        r.x[m - 1 - i] = x;
        r.w[m - 1 - i] = 2.0 / ((1 - x * x) * dp * dp);
    }
    return cache.emplace(m, std::move(r)).first->second;
}

struct QuadratureSpec {
    int a_radial = 8;    // radial nodes on [0, 1/2]
    int a_angular = 16;  // angular nodes (per full turn; 3-D uses half as many polar nodes)
    int t_nodes = 12;     // nodes per smooth panel of [0, 1]
    std::string rule = "gauss-legendre";

    void validate() const {
        if (a_radial < 4 || a_angular < 4 || t_nodes < 4) throw std::invalid_argument("quadrature: node counts must be >= 4");
        if (rule != "gauss-legendre") throw std::invalid_argument("quadrature: unknown rule " + rule);
    }
    QuadratureSpec doubled() const { return {2 * a_radial, 2 * a_angular, 2 * t_nodes, rule}; }
    nlohmann::json to_json() const { return {{"a_radial", a_radial}, {"a_angular", a_angular}, {"t_nodes", t_nodes}, {"rule", rule}}; }
};

// ---------------------------------------------------------------- maps

struct BilipschitzMap {
    int dim = 0;
    std::string name;
    std::function<Vec(const Vec&)> forward, inverse;
    std::function<Mat(const Vec&)> jacobian;
    double lip_forward = 0, lip_inverse = 0;
    // planes through the origin of the source across which the jacobian may jump
    std::vector<Vec> kinks;
    // source spheres where the map is only finitely smooth, and the radius inside which it is affine
    std::vector<double> shells;
    double affine_radius = 0;
};

namespace detail {

inline Vec unit_ball_sample(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0, 1);
    Vec v(n);
    for (auto& x : v) x = g(rng);
    return v / v.norm() * std::pow(u(rng), 1.0 / n);
}

// y -> y s(y) with s homogeneous of degree zero
struct RadialProfile {
    enum Kind { identity, cube, star } kind = identity;
    std::vector<Box> boxes;  // star: boxes relative to the centre, each containing 0

    double g_star(const Vec& y, int* axis = nullptr, double* dist = nullptr) const {
        double best = -1;
        for (const auto& b : boxes) {
            double ex = std::numeric_limits<double>::infinity();
            int ax = -1;
            double dd = 0;
            for (int i = 0; i < int(y.size()); ++i) {
                if (y[i] == 0) continue;
                double d = y[i] > 0 ? b.hi[i] : b.lo[i];
                double r = d / y[i];
                if (r < ex) {
                    ex = r;
                    ax = i;
                    dd = d;
                }
            }
            if (ex > best) {
                best = ex;
                if (axis) *axis = ax;
                if (dist) *dist = dd;
            }
        }
        return best;
    }

    double s(const Vec& y) const {
        double r = y.norm();
        if (r == 0) return s(Vec::Unit(y.size(), 0));
        switch (kind) {
            case identity: return 1.0;
            case cube: return r / y.cwiseAbs().maxCoeff();
            case star: return r * g_star(y);
        }
        return 1.0;
    }

    Vec grad(const Vec& y) const {
        const int n = int(y.size());
        double r = y.norm();
        if (kind == identity || r == 0) return Vec::Zero(n);
        if (kind == cube) {
            Eigen::Index k;
            double m = y.cwiseAbs().maxCoeff(&k);
            Vec gr = y / (r * m);
            gr[k] -= r * (y[k] > 0 ? 1 : -1) / (m * m);
            return gr;
        }
        int ax = 0;
        double d = 0;
        double gs = g_star(y, &ax, &d);
        Vec gr = gs * y / r;
        gr[ax] -= r * d / (y[ax] * y[ax]);
        return gr;
    }

    std::vector<Vec> kink_normals(int n) const {
        std::vector<Vec> out;
        auto add = [&](Vec v) {
            v /= v.norm();
            for (const auto& o : out)
                if (std::abs(std::abs(o.dot(v)) - 1) < 1e-12) return;
            out.push_back(v);
        };
        if (kind == cube) {
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    for (double sg : {1.0, -1.0}) {
                        Vec v = Vec::Zero(n);
                        v[i] = 1;
                        v[j] = sg;
                        add(v);
                    }
        } else if (kind == star) {
            std::vector<std::pair<int, double>> faces;
            for (const auto& b : boxes)
                for (int i = 0; i < n; ++i) {
                    faces.push_back({i, b.lo[i]});
                    faces.push_back({i, b.hi[i]});
                }
            std::vector<Vec> cand;
            for (std::size_t a = 0; a < faces.size(); ++a)
                for (std::size_t b = a + 1; b < faces.size(); ++b) {
                    auto [i, di] = faces[a];
                    auto [j, dj] = faces[b];
                    if (i == j) continue;
                    Vec v = Vec::Zero(n);
                    v[j] = di;
                    v[i] = -dj;
                    cand.push_back(v);
                }
            for (int i = 0; i < n; ++i) cand.push_back(Vec::Unit(n, i));
            // keep only planes where the active face actually changes
            for (auto& v : cand) {
                Vec nu = v / v.norm();
                if (is_kink(nu)) add(nu);
            }
        }
        return out;
    }

    bool is_kink(const Vec& nu) const {
        const int n = int(nu.size());
        std::vector<Vec> dirs;
        if (n == 2) {
            Vec t(2);
            t << -nu[1], nu[0];
            dirs = {t, -t};
        } else {
            Vec a = std::abs(nu[0]) < 0.9 ? Vec::Unit(n, 0) : Vec::Unit(n, 1);
            Vec e1 = (a - a.dot(nu) * nu).normalized();
            Vec e2 = Vec::Zero(n);
            e2 << nu[1] * e1[2] - nu[2] * e1[1], nu[2] * e1[0] - nu[0] * e1[2], nu[0] * e1[1] - nu[1] * e1[0];
            for (int k = 0; k < 720; ++k) {
                double ph = 2 * std::numbers::pi * (k + 0.5) / 720;
                dirs.push_back(std::cos(ph) * e1 + std::sin(ph) * e2);
            }
        }
        for (const auto& w : dirs) {
            int a1 = -1, a2 = -1;
            double d1 = 0, d2 = 0;
            g_star(w + 1e-7 * nu, &a1, &d1);
            g_star(w - 1e-7 * nu, &a2, &d2);
            if (a1 != a2 || d1 != d2) return true;
        }
        return false;
    }
};

}  // namespace detail

// radii r1 < r2: the profile is the constant base inside r1 and the full s(y) from r2 on
struct RadialBlend {
    double r1 = 0, r2 = 0;
    bool active() const { return r2 > r1; }
    double beta(double r, double* dbeta = nullptr) const {
        if (!active()) {
            if (dbeta) *dbeta = 0;
            return 1.0;
        }
        double u = (r - r1) / (r2 - r1);
        if (u <= 0 || u >= 1) {
            if (dbeta) *dbeta = 0;
            return u <= 0 ? 0.0 : 1.0;
        }
        if (dbeta) *dbeta = 30 * u * u * (1 - u) * (1 - u) / (r2 - r1);
        return u * u * u * (10 - 15 * u + 6 * u * u);
    }
};

// rho(y) = P(c + L (y S(y))) with P the identity or polar coordinates and
// S = (1 - beta) base + beta s; base must not exceed the minimum of s
inline BilipschitzMap radial_chart(int n, detail::RadialProfile prof, Vec c, Vec L, bool polar, std::string name,
                                   RadialBlend blend = {}, double base = 1.0) {
    if (c.size() != n || L.size() != n) throw std::invalid_argument("radial_chart: dimension mismatch");
    for (double l : L)
        if (!(l > 0)) throw std::invalid_argument("radial_chart: nonpositive size");
    if (blend.active() && !(blend.r1 > 0 && blend.r2 <= 1 && base > 0))
        throw std::invalid_argument("radial_chart: blend radii must satisfy 0 < r1 < r2 <= 1");
    BilipschitzMap m;
    m.dim = n;
    m.name = std::move(name);
    m.kinks = prof.kink_normals(n);
    if (blend.active()) {
        m.shells = {blend.r1, blend.r2};
        m.affine_radius = blend.r1;
    }
    auto S = [=](const Vec& y) {
        double b = blend.beta(y.norm());
        return b == 1.0 ? prof.s(y) : (1 - b) * base + (b == 0 ? 0.0 : b * prof.s(y));
    };
    m.forward = [=](const Vec& y) -> Vec {
        Vec q = c + L.cwiseProduct(y * S(y));
        if (!polar) return q;
        return Vec{{q[0] * std::cos(q[1]), q[0] * std::sin(q[1])}};
    };
    m.inverse = [=](const Vec& p) -> Vec {
        Vec q = p;
        if (polar) {
            double ph = std::atan2(p[1], p[0]);
            while (ph < c[1] - std::numbers::pi) ph += 2 * std::numbers::pi;
            while (ph >= c[1] + std::numbers::pi) ph -= 2 * std::numbers::pi;
            q = Vec{{p.norm(), ph}};
        }
        Vec w = (q - c).cwiseQuotient(L);
        double rw = w.norm();
        if (rw == 0) return w;
        double s0 = prof.s(w);
        if (!blend.active()) return w / s0;
        Vec dir = w / rw;
        if (rw <= base * blend.r1) return dir * (rw / base);
        if (rw >= s0 * blend.r2) return dir * (rw / s0);
        // r (1 - beta) base + r beta s0 is increasing in r
        double lo = blend.r1, hi = blend.r2, r = 0.5 * (lo + hi);
        for (int it = 0; it < 100; ++it) {
            double db;
            double b = blend.beta(r, &db);
            double f = r * ((1 - b) * base + b * s0) - rw;
            if (std::abs(f) < 1e-15 * rw) break;
            (f > 0 ? hi : lo) = r;
            double fp = (1 - b) * base + b * s0 + r * db * (s0 - base);
            double rn = r - f / fp;
            r = (rn > lo && rn < hi) ? rn : 0.5 * (lo + hi);
        }
        return dir * r;
    };
    m.jacobian = [=](const Vec& y) -> Mat {
        double r = y.norm(), db;
        double b = blend.beta(r, &db);
        double sy = prof.s(y);
        double Sy = b == 1.0 ? sy : (1 - b) * base + b * sy;
        Vec gS = Vec::Zero(n);
        if (b != 0) gS = b * prof.grad(y);
        if (db != 0) gS += db * (sy - base) * y / r;
        Mat JF = Sy * Mat::Identity(n, n) + y * gS.transpose();
        Mat J = L.asDiagonal() * JF;
        if (!polar) return J;
        Vec q = c + L.cwiseProduct(y * Sy);
        Mat P(2, 2);
        P << std::cos(q[1]), -q[0] * std::sin(q[1]), std::sin(q[1]), q[0] * std::cos(q[1]);
        return P * J;
    };
    return m;
}

// unit ball onto the box c + L(-1,1)^n through x -> x |x|_2 / |x|_inf
inline BilipschitzMap cube_ball_chart(const Vec& c, const Vec& L, bool polar = false, std::string name = "cube-ball",
                                      RadialBlend blend = {}) {
    detail::RadialProfile p;
    p.kind = detail::RadialProfile::cube;
    return radial_chart(int(c.size()), p, c, L, polar, std::move(name), blend, 1.0);
}

// unit ball onto a union of boxes that all contain c, radially about c
inline BilipschitzMap star_chart(const std::vector<Box>& boxes, const Vec& c, std::string name = "star",
                                 RadialBlend blend = {}) {
    const int n = int(c.size());
    detail::RadialProfile p;
    p.kind = detail::RadialProfile::star;
    double base = 0;
    for (const auto& b : boxes) {
        Box r = b;
        double inner = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            r.lo[i] -= c[i];
            r.hi[i] -= c[i];
            if (!(r.lo[i] < 0 && r.hi[i] > 0)) throw std::invalid_argument("star_chart: every box must contain the centre");
            inner = std::min({inner, -r.lo[i], r.hi[i]});
        }
        base = std::max(base, inner);
        p.boxes.push_back(r);
    }
    return radial_chart(n, p, c, Vec::Ones(n), false, std::move(name), blend, base);
}

inline BilipschitzMap identity_chart(int n) {
    detail::RadialProfile p;
    return radial_chart(n, p, Vec::Zero(n), Vec::Ones(n), false, "identity");
}

struct LipschitzMeasure {
    double forward = 0, inverse = 0, roundtrip = 0;
};

// sampled Jacobian norms and difference quotients over the unit ball
inline LipschitzMeasure measure_lipschitz(const BilipschitzMap& m, int samples = 2000, unsigned seed = 1) {
    std::mt19937_64 rng(seed);
    LipschitzMeasure out;
    std::vector<Vec> pts;
    for (int k = 0; k < samples; ++k) {
        Vec y = detail::unit_ball_sample(m.dim, rng);
        pts.push_back(y);
        Mat J = m.jacobian(y);
        Eigen::JacobiSVD<Mat> svd(J);
        out.forward = std::max(out.forward, svd.singularValues()[0]);
        out.inverse = std::max(out.inverse, 1.0 / svd.singularValues()[m.dim - 1]);
        out.roundtrip = std::max(out.roundtrip, (m.inverse(m.forward(y)) - y).norm());
    }
    for (int k = 0; k + 1 < samples; k += 2) {
        Vec a = m.forward(pts[k]), b = m.forward(pts[k + 1]);
        double dy = (pts[k] - pts[k + 1]).norm(), dx = (a - b).norm();
        if (dy > 0 && dx > 0) {
            out.forward = std::max(out.forward, dx / dy);
            out.inverse = std::max(out.inverse, dy / dx);
        }
    }
    return out;
}

// ---------------------------------------------------------------- atlases

struct DomainAtlas {
    int dim = 0;
    std::string name;
    DomainSpec domain;
    std::vector<BilipschitzMap> charts;
    // depth_j > 0 inside the chart image, 0 on Omega minus it; chi_j built from it
    std::vector<std::function<double(const Vec&)>> depth;
    std::vector<std::function<Vec(const Vec&)>> depth_grad;
    double margin = 0, width = 1;
    nlohmann::json metadata = nlohmann::json::object();

    bool contains(const Vec& x) const { return domain.contains(x.data()); }

    // chi_j(x) and grad chi_j(x)
    void partition(const Vec& x, std::vector<double>& chi, std::vector<Vec>& grad) const {
        const int M = int(charts.size());
        chi.assign(M, 0.0);
        grad.assign(M, Vec::Zero(dim));
        if (M == 1) {
            chi[0] = 1;
            return;
        }
        std::vector<double> phi(M);
        std::vector<Vec> dphi(M, Vec::Zero(dim));
        double sum = 0;
        Vec dsum = Vec::Zero(dim);
        for (int j = 0; j < M; ++j) {
            double s = (depth[j](x) - margin) / width;
            if (s <= 0) {
                phi[j] = 0;
            } else if (s >= 1) {
                phi[j] = 1;
            } else {
                phi[j] = s * s * (3 - 2 * s);
                dphi[j] = 6 * s * (1 - s) / width * depth_grad[j](x);
            }
            sum += phi[j];
            dsum += dphi[j];
        }
        if (!(sum > 0)) throw std::domain_error("partition of unity degenerate at sampled point");
        for (int j = 0; j < M; ++j) {
            chi[j] = phi[j] / sum;
            grad[j] = (dphi[j] * sum - phi[j] * dsum) / (sum * sum);
        }
    }

    std::vector<double> chi(const Vec& x) const {
        std::vector<double> c;
        std::vector<Vec> g;
        partition(x, c, g);
        return c;
    }

    // uniform samples of Omega by rejection from the bounding box
    // distance in source coordinates from the preimages of y to the non-smooth set of the charts in use
    double kink_clearance(const Vec& y) const {
        std::vector<double> c;
        std::vector<Vec> g;
        partition(y, c, g);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < charts.size(); ++j) {
            if (c[j] == 0 && g[j].norm() == 0) continue;
            Vec x = charts[j].inverse(y);
            for (const auto& nu : charts[j].kinks) {
                // inside the affine core a kink plane carries no kink
                Vec foot = x - nu.dot(x) * nu;
                if (foot.norm() <= charts[j].affine_radius) continue;
                best = std::min(best, std::abs(nu.dot(x)));
            }
        }
        return best;
    }

    std::vector<Vec> sample_interior(int count, unsigned seed, double inset = 0, double clearance = 0) const {
        std::mt19937_64 rng(seed);
        std::vector<std::uniform_real_distribution<double>> u;
        for (int i = 0; i < dim; ++i) u.emplace_back(domain.lo[i], domain.hi[i]);
        std::vector<Vec> out;
        Vec x(dim);
        int guard = 0;
        while (int(out.size()) < count && guard++ < 1000000) {
            for (int i = 0; i < dim; ++i) x[i] = u[i](rng);
            if (!contains(x)) continue;
            bool ok = true;
            for (int i = 0; i < dim && ok && inset > 0; ++i)
                for (double s : {-inset, inset}) {
                    Vec z = x;
                    z[i] += s;
                    if (!contains(z)) ok = false;
                }
            if (ok && clearance > 0 && kink_clearance(x) < clearance) ok = false;
            if (ok) out.push_back(x);
        }
        return out;
    }
};

namespace detail {

inline double box_dist(const Box& b, const Vec& x, Vec* grad) {
    Vec d = Vec::Zero(x.size());
    for (int i = 0; i < int(x.size()); ++i) {
        if (x[i] < b.lo[i]) d[i] = x[i] - b.lo[i];
        if (x[i] > b.hi[i]) d[i] = x[i] - b.hi[i];
    }
    double r = d.norm();
    if (grad) *grad = r > 0 ? Vec(d / r) : Vec(Vec::Zero(x.size()));
    return r;
}

inline void box_union_depth(DomainAtlas& A, std::vector<Box> comp) {
    A.depth.push_back([comp](const Vec& x) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : comp) best = std::min(best, box_dist(b, x, nullptr));
        return best;
    });
    A.depth_grad.push_back([comp](const Vec& x) {
        double best = std::numeric_limits<double>::infinity();
        Vec g, out = Vec::Zero(x.size());
        for (const auto& b : comp) {
            double d = box_dist(b, x, &g);
            if (d < best) {
                best = d;
                out = g;
            }
        }
        return out;
    });
}

// r0 times the angular distance to the complement of the sector (a, b)
inline void sector_depth(DomainAtlas& A, double a, double b, double r0) {
    auto ang = [a, b](const Vec& x) {
        double ph = std::atan2(x[1], x[0]);
        double mid = 0.5 * (a + b);
        while (ph < mid - std::numbers::pi) ph += 2 * std::numbers::pi;
        while (ph >= mid + std::numbers::pi) ph -= 2 * std::numbers::pi;
        return ph;
    };
    A.depth.push_back([=](const Vec& x) {
        double ph = ang(x);
        return std::max(0.0, r0 * std::min(ph - a, b - ph));
    });
    A.depth_grad.push_back([=](const Vec& x) {
        double ph = ang(x);
        Vec dph{{-x[1] / x.squaredNorm(), x[0] / x.squaredNorm()}};
        if (ph <= a || ph >= b) return Vec(Vec::Zero(2));
        return Vec(r0 * ((ph - a) < (b - ph) ? dph : Vec(-dph)));
    });
}

}  // namespace detail

inline void measure_atlas(DomainAtlas& A, int grid = 0) {
    nlohmann::json charts = nlohmann::json::array();
    for (auto& c : A.charts) {
        auto lm = measure_lipschitz(c);
        c.lip_forward = lm.forward;
        c.lip_inverse = lm.inverse;
        charts.push_back({{"name", c.name}, {"lip_forward", lm.forward}, {"lip_inverse", lm.inverse}, {"roundtrip", lm.roundtrip},
                          {"kink_planes", c.kinks.size()}});
    }
    A.metadata["charts"] = charts;
    A.metadata["chart_count"] = A.charts.size();
    // partition checks on a grid: smallest denominator, largest gradient
    if (grid <= 0) grid = A.dim == 2 ? 101 : 33;
    double min_den = std::numeric_limits<double>::infinity(), max_grad = 0, max_sum_err = 0;
    std::vector<int> idx(A.dim, 0);
    Vec x(A.dim);
    std::vector<double> chi;
    std::vector<Vec> g;
    while (true) {
        for (int i = 0; i < A.dim; ++i) x[i] = A.domain.lo[i] + (A.domain.hi[i] - A.domain.lo[i]) * (idx[i] + 0.5) / grid;
        if (A.contains(x) && A.charts.size() > 1) {
            double den = 0;
            for (std::size_t j = 0; j < A.charts.size(); ++j) {
                double s = (A.depth[j](x) - A.margin) / A.width;
                den += s <= 0 ? 0 : s >= 1 ? 1 : s * s * (3 - 2 * s);
            }
            min_den = std::min(min_den, den);
            if (den > 0) {
                A.partition(x, chi, g);
                double s = 0;
                for (std::size_t j = 0; j < chi.size(); ++j) {
                    s += chi[j];
                    max_grad = std::max(max_grad, g[j].norm());
                }
                max_sum_err = std::max(max_sum_err, std::abs(s - 1));
            }
        }
        int i = 0;
        while (i < A.dim && ++idx[i] == grid) idx[i++] = 0;
        if (i == A.dim) break;
    }
    if (A.charts.size() == 1) min_den = 1;
    if (!(min_den > 0)) throw std::domain_error("atlas " + A.name + ": partition denominator vanishes on the sample grid");
    A.metadata["partition"] = {{"grid", grid},       {"min_denominator", min_den}, {"max_gradient", max_grad},
                               {"sum_error", max_sum_err}, {"margin", A.margin},     {"width", A.width}};
}

inline DomainAtlas make_atlas(const std::string& name, const nlohmann::json& params = nlohmann::json::object()) {
    DomainAtlas A;
    A.name = name;
    A.domain = make_domain(name, params);
    A.dim = A.domain.dim;
    const double pi = std::numbers::pi;
    // 3d charts are affine on the inner ball so that the ball quadrature sees no kinks
    const RadialBlend blend3{params.value("blend_inner", 0.55), params.value("blend_outer", 1.0)};
    if (name == "disc") {
        A.charts.push_back(identity_chart(2));
    } else if (name == "square" || name == "cube") {
        const int n = A.dim;
        A.charts.push_back(cube_ball_chart(Vec::Constant(n, 0.5), Vec::Constant(n, 0.5), false, name, n == 3 ? blend3 : RadialBlend{}));
    } else if (name == "annulus") {
        double r0 = A.domain.params["r_inner"], r1 = A.domain.params["r_outer"];
        double over = params.value("overlap", 0.1 * pi);
        if (!(over > 0 && over < pi / 2)) throw std::invalid_argument("annulus atlas: overlap out of range");
        double rm = 0.5 * (r0 + r1), rh = 0.5 * (r1 - r0);
        double half = pi / 2 + over;
        for (double mid : {0.0, pi}) {
            A.charts.push_back(cube_ball_chart(Vec{{rm, mid}}, Vec{{rh, half}}, true, "sector"));
            detail::sector_depth(A, mid - half, mid + half, r0);
        }
        A.margin = r0 * over * 0.2;
        A.width = r0 * over * 0.5;
    } else if (name == "lshape") {
        Box bottom{{-1, -1}, {1, 0}}, column{{-1, -1}, {0, 0.5}}, top{{-1, 0.25}, {0, 1}};
        A.charts.push_back(star_chart({bottom, column}, Vec{{-0.5, -0.5}}, "lower"));
        detail::box_union_depth(A, {Box{{-1, 0.5}, {0, 1}}});
        A.charts.push_back(cube_ball_chart(Vec{{-0.5, 0.625}}, Vec{{0.5, 0.375}}, false, "upper"));
        detail::box_union_depth(A, {Box{{-1, -1}, {1, 0}}, Box{{-1, -1}, {0, 0.25}}});
        A.margin = params.value("margin", 1.0 / 32);
        A.width = params.value("width", 1.0 / 16);
    } else if (name == "twobrick") {
        Box a{{-1, -2, 0}, {1, 2, 1}}, b{{-2, -1, -1}, {2, 1, 0}}, core{{-1, -1, -1}, {1, 1, 1}};
        A.charts.push_back(star_chart({b, core}, Vec{{0, 0, -0.5}}, "lower", blend3));
        detail::box_union_depth(A, {Box{{-1, 1, 0}, {1, 2, 1}}, Box{{-1, -2, 0}, {1, -1, 1}}});
        A.charts.push_back(star_chart({a, core}, Vec{{0, 0, 0.5}}, "upper", blend3));
        detail::box_union_depth(A, {Box{{1, -1, -1}, {2, 1, 0}}, Box{{-2, -1, -1}, {-1, 1, 0}}});
        // no positive margin is possible at the four crossing corners
        A.margin = 0;
        A.width = params.value("width", 0.25);
    } else {
        throw std::invalid_argument("make_atlas: no atlas for domain " + name);
    }
    if (!(A.width > 0) || A.margin < 0) throw std::invalid_argument("make_atlas: degenerate partition parameters");
    measure_atlas(A, params.value("grid", 0));
    return A;
}

// ---------------------------------------------------------------- form fields

using FormField = std::function<MV(const Vec&)>;

// double-precision evaluator for a polynomial form
class CompiledForm {
public:
    CompiledForm() = default;
    explicit CompiledForm(const PolyForm& f) : n_(f.dim()) {
        for (Blade s = 0; s < f.size(); ++s)
            for (const auto& [m, c] : f[s].terms()) terms_.push_back({s, mono_vec(m, n_), c.convert_to<double>()});
    }
    MV operator()(const Vec& x) const {
        MV out(n_);
        for (const auto& t : terms_) {
            double v = t.c;
            for (int i = 0; i < n_; ++i)
                for (int k = 0; k < t.e[i]; ++k) v *= x[i];
            out[t.s] += v;
        }
        return out;
    }
    FormField field() const {
        auto self = *this;
        return [self](const Vec& x) { return self(x); };
    }

private:
    struct Term {
        Blade s;
        std::vector<int> e;
        double c;
    };
    int n_ = 0;
    std::vector<Term> terms_;
};

namespace detail {

struct BladeTable {
    std::vector<std::vector<int>> idx;        // indices of each blade
    std::vector<std::vector<Blade>> of_grade;  // blades by grade
};

inline const BladeTable& blade_table(int n) {
    static std::mutex mu;
    static std::map<int, BladeTable> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    BladeTable t;
    t.of_grade.resize(n + 1);
    for (Blade s = 0; s < (Blade(1) << n); ++s) {
        t.idx.push_back(blade_indices(s));
        t.of_grade[grade_of(s)].push_back(s);
    }
    return cache.emplace(n, std::move(t)).first->second;
}

}  // namespace detail

// out_T = sum_S v_S det(J[S, T]); with J = D rho this is the pullback coefficient map
inline MV transform_form(const Mat& J, const MV& v) {
    const int n = v.dim();
    const auto& tab = detail::blade_table(n);
    MV out(n);
    for (Blade s = 0; s < v.size(); ++s) {
        if (v[s] == 0) continue;
        if (s == 0) {
            out[0] += v[0];
            continue;
        }
        const auto& rs = tab.idx[s];
        const int l = int(rs.size());
        for (Blade t : tab.of_grade[l]) {
            const auto& cs = tab.idx[t];
            double det;
            if (l == 1) {
                det = J(rs[0], cs[0]);
            } else if (l == 2) {
                det = J(rs[0], cs[0]) * J(rs[1], cs[1]) - J(rs[0], cs[1]) * J(rs[1], cs[0]);
            } else {
                det = 0;
                // l = 3 by cofactors; higher grades are not needed for n <= 3
                if (l == 3) {
                    auto e = [&](int a, int b) { return J(rs[a], cs[b]); };
                    det = e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0)) +
                          e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0));
                } else {
                    Mat sub(l, l);
                    for (int a = 0; a < l; ++a)
                        for (int b = 0; b < l; ++b) sub(a, b) = J(rs[a], cs[b]);
                    det = sub.determinant();
                }
            }
            out[t] += v[s] * det;
        }
    }
    return out;
}

// exterior derivative of a field by centred differences, five-point stencil unless order = 2
inline MV fd_exterior_derivative(const FormField& w, const Vec& y, double step, int order = 4) {
    if (order != 2 && order != 4) throw std::invalid_argument("fd_exterior_derivative: order must be 2 or 4");
    const int n = int(y.size());
    MV out(n);
    auto at = [&](int j, double s) {
        Vec z = y;
        z[j] += s;
        return w(z);
    };
    for (int j = 0; j < n; ++j) {
        MV dj = order == 2 ? (at(j, step) - at(j, -step)) * (0.5 / step)
                           : (at(j, -2 * step) - at(j, 2 * step) + (at(j, step) - at(j, -step)) * 8.0) * (1.0 / (12 * step));
        Blade bj = Blade(1) << j;
        for (Blade s = 0; s < dj.size(); ++s) {
            if ((s & bj) || dj[s] == 0) continue;
            out[s | bj] += wedge_sign(bj, s) * dj[s];
        }
    }
    return out;
}

inline MV vector_mv(const Vec& v) {
    MV m(int(v.size()));
    for (int i = 0; i < int(v.size()); ++i) m[Blade(1) << i] = v[i];
    return m;
}

// ---------------------------------------------------------------- ball potential by quadrature

struct BallPotential {
    std::vector<MV> R;          // R_B(rho^* u_k)(x) per field
    std::vector<double> K;      // <theta, (rho^* u_k)_0>
};

namespace detail {

struct ANode {
    Vec a;
    double w;  // includes theta(a)
};

inline double wrap_angle(double ang) {
    const double tau = 2 * std::numbers::pi;
    ang = std::fmod(ang, tau);
    return ang < 0 ? ang + tau : ang;
}

// kink angles only; these do not depend on the evaluation point
inline std::vector<double> angle_breaks(const std::vector<Vec>& kinks) {
    std::vector<double> br;
    for (const auto& nu : kinks) {
        double ang = std::atan2(nu[0], -nu[1]);
        br.push_back(wrap_angle(ang));
        br.push_back(wrap_angle(ang + std::numbers::pi));
    }
    if (br.empty()) br.push_back(0);
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }), br.end());
    return br;
}

inline std::vector<ANode> ball_nodes(int n, const std::vector<Vec>& kinks, const Vec& x, const QuadratureSpec& q,
                                     double affine_radius = 0) {
    const auto& gr = gauss_legendre(q.a_radial);
    const double ck = bump_constant(n, BumpSpec{}.k);
    const int k = BumpSpec{}.k;
    std::vector<ANode> out;
    auto theta = [&](double r) { return r >= 0.5 ? 0.0 : ck * std::pow(0.25 - r * r, k); };
    if (n == 2) {
        std::vector<double> br = affine_radius > 0.5 ? std::vector<double>{0.0} : angle_breaks(kinks);
        const int P = int(br.size());
        br.push_back(br.front() + 2 * std::numbers::pi);
        // the segment to x passes the origin when a lies on the ray towards -x; that panel is
        // split in two, each half keeping the panel's node count so the rule varies continuously
        double cut = -1;
        if (x.norm() > 0 && affine_radius <= 0.5) {
            cut = wrap_angle(std::atan2(-x[1], -x[0]));
            if (cut < br.front()) cut += 2 * std::numbers::pi;
        }
        const int m = std::max(3, int(std::ceil(double(q.a_angular) / P)));
        const auto& ga = gauss_legendre(m);
        auto panel = [&](double a0, double a1) {
            double len = a1 - a0;
            if (len <= 1e-14) return;
            for (int i = 0; i < m; ++i) {
                double ph = a0 + 0.5 * len * (ga.x[i] + 1);
                double wph = 0.5 * len * ga.w[i];
                for (int j = 0; j < q.a_radial; ++j) {
                    double r = 0.25 * (gr.x[j] + 1);
                    double w = 0.25 * gr.w[j] * r * wph * theta(r);
                    out.push_back({Vec{{r * std::cos(ph), r * std::sin(ph)}}, w});
                }
            }
        };
        for (int p = 0; p < P; ++p) {
            double a0 = br[p], a1 = br[p + 1];
            if (cut > a0 && cut < a1) {
                panel(a0, cut);
                panel(cut, a1);
            } else {
                panel(a0, a1);
            }
        }
    } else if (n == 3) {
        const int np = std::max(4, q.a_angular / 2), na = q.a_angular;
        const auto& gp = gauss_legendre(np);
        for (int i = 0; i < np; ++i) {
            double ct = gp.x[i], st = std::sqrt(1 - ct * ct);
            for (int a = 0; a < na; ++a) {
                double ph = 2 * std::numbers::pi * (a + 0.5) / na;
                double wang = gp.w[i] * 2 * std::numbers::pi / na;
                for (int j = 0; j < q.a_radial; ++j) {
                    double r = 0.25 * (gr.x[j] + 1);
                    double w = 0.25 * gr.w[j] * r * r * wang * theta(r);
                    out.push_back({Vec{{r * st * std::cos(ph), r * st * std::sin(ph), r * ct}}, w});
                }
            }
        }
    } else {
        throw std::invalid_argument("ball quadrature implemented for n = 2, 3");
    }
    return out;
}

}  // namespace detail

// R_B and K_B of the pulled-back fields rho^* u_k, at the source point x
inline BallPotential ball_potential(const BilipschitzMap& rho, const std::vector<FormField>& fields, const Vec& x,
                                    const QuadratureSpec& q, bool with_R = true) {
    q.validate();
    const int n = rho.dim;
    const std::size_t F = fields.size();
    BallPotential out;
    out.R.assign(F, MV(n));
    out.K.assign(F, 0.0);
    auto nodes = detail::ball_nodes(n, rho.kinks, x, q, rho.affine_radius);
    const auto& gt = gauss_legendre(q.t_nodes);
    std::vector<double> cuts;
    std::vector<MV> inner(F, MV(n));
    for (const auto& node : nodes) {
        const Vec& a = node.a;
        Vec dx = x - a;
        // K_B needs the 0-form part at a itself
        {
            Vec p = rho.forward(a);
            for (std::size_t f = 0; f < F; ++f) out.K[f] += node.w * fields[f](p)[0];
        }
        if (!with_R) continue;
        cuts.assign({0.0, 1.0});
        const double dd = dx.squaredNorm();
        for (const auto& nu : rho.kinks) {
            double den = nu.dot(dx);
            if (den == 0) continue;
            double ts = -nu.dot(a) / den;
            if (ts > 0 && ts < 1 && (a + ts * dx).norm() > rho.affine_radius) cuts.push_back(ts);
        }
        // |z(t)| enters the radial maps, so split at the closest approach to the origin
        if (dd > 0 && rho.affine_radius == 0) {
            double tc = -a.dot(dx) / dd;
            if (tc > 0 && tc < 1) cuts.push_back(tc);
        }
        for (double rs : rho.shells) {
            // |a + t dx| = rs
            double bq = a.dot(dx), cq = a.squaredNorm() - rs * rs, disc = bq * bq - dd * cq;
            if (dd == 0 || disc <= 0) continue;
            for (double sg : {-1.0, 1.0}) {
                double ts = (-bq + sg * std::sqrt(disc)) / dd;
                if (ts > 0 && ts < 1) cuts.push_back(ts);
            }
        }
        std::sort(cuts.begin(), cuts.end());
        for (auto& m : inner) m = MV(n);
        for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
            double t0 = cuts[c], len = cuts[c + 1] - t0;
            if (len <= 0) continue;
            for (int i = 0; i < q.t_nodes; ++i) {
                double t = t0 + 0.5 * len * (gt.x[i] + 1), wt = 0.5 * len * gt.w[i];
                Vec z = a + t * dx;
                Vec p = rho.forward(z);
                Mat J = rho.jacobian(z);
                for (std::size_t f = 0; f < F; ++f) {
                    MV fz = transform_form(J, fields[f](p));
                    for (Blade s = 1; s < fz.size(); ++s) {
                        if (fz[s] == 0) continue;
                        int l = grade_of(s);
                        double tp = 1;
                        for (int e = 1; e < l; ++e) tp *= t;
                        inner[f][s] += wt * tp * fz[s];
                    }
                }
            }
        }
        MV v = vector_mv(dx);
        for (std::size_t f = 0; f < F; ++f) out.R[f] += interior(v, inner[f]) * node.w;
    }
    return out;
}

// ---------------------------------------------------------------- glued potentials

struct GluedValue {
    std::vector<MV> R;  // R~ u_k (y)
    std::vector<MV> K;  // K~ u_k (y)
};

inline GluedValue glued_apply(const DomainAtlas& A, const std::vector<FormField>& fields, const Vec& y, const QuadratureSpec& q,
                              bool K_only = false) {
    q.validate();
    if (int(y.size()) != A.dim) throw std::invalid_argument("glued potential: point dimension mismatch");
    if (!A.contains(y)) throw std::domain_error("glued potential: point outside the domain");
    const std::size_t F = fields.size();
    GluedValue out;
    out.R.assign(F, MV(A.dim));
    out.K.assign(F, MV(A.dim));
    std::vector<double> chi;
    std::vector<Vec> grad;
    A.partition(y, chi, grad);
    for (std::size_t j = 0; j < A.charts.size(); ++j) {
        if (chi[j] == 0 && grad[j].norm() == 0) continue;
        const auto& rho = A.charts[j];
        Vec x = rho.inverse(y);
        Mat Kinv = rho.jacobian(x).inverse();
        // K~ needs R_B only through the gradient term
        const bool need_R = !K_only || grad[j].norm() > 0;
        auto bp = ball_potential(rho, fields, x, q, need_R);
        MV dchi = vector_mv(grad[j]);
        for (std::size_t f = 0; f < F; ++f) {
            MV w = transform_form(Kinv, bp.R[f]);
            out.R[f] += w * chi[j];
            out.K[f][0] += chi[j] * bp.K[f];
            out.K[f] -= wedge(dchi, w);
        }
    }
    return out;
}

inline MV glued_potential_apply(const DomainAtlas& A, const FormField& u, const Vec& y, const QuadratureSpec& q = {}) {
    return glued_apply(A, {u}, y, q).R[0];
}

inline MV glued_K_apply(const DomainAtlas& A, const FormField& u, const Vec& y, const QuadratureSpec& q = {}) {
    return glued_apply(A, {u}, y, q, true).K[0];
}

inline double fd_step(const DomainAtlas& A) { return 1e-4 * A.domain.diameter(); }

// source-side distance to chart kinks beyond which the difference stencil stays in one smooth piece
inline double fd_clearance(const DomainAtlas& A) {
    double lip = 1;
    for (const auto& c : A.charts) lip = std::max(lip, c.lip_inverse);
    return 4 * fd_step(A) * lip;
}

struct HomotopyDefect {
    MV dRu, Rdu, Ku, u;
    double defect = 0;  // max |dR u + R du - u + K u| over components
};

// dR~u + R~du = u - K~u at y, with d of R~u by centred differences
inline HomotopyDefect glued_homotopy_defect(const DomainAtlas& A, const FormField& u, const FormField& du, const Vec& y,
                                            const QuadratureSpec& q = {}) {
    HomotopyDefect h;
    auto centre = glued_apply(A, {u, du}, y, q);
    FormField Ru = [&](const Vec& z) { return glued_apply(A, {u}, z, q).R[0]; };
    h.dRu = fd_exterior_derivative(Ru, y, fd_step(A));
    h.Rdu = centre.R[1];
    h.Ku = centre.K[0];
    h.u = u(y);
    MV r = h.dRu + h.Rdu - h.u + h.Ku;
    for (auto c : r.coeffs()) h.defect = std::max(h.defect, std::abs(c));
    return h;
}

// depth m: R_m = (I + K~ + ... + K~^{m-1}) R~ and K_m = K~^m
struct IteratedGlued {
    int depth = 1;
    FormField R, K;
};

inline IteratedGlued iterate_glued(const DomainAtlas& A, const FormField& u, int depth, const QuadratureSpec& q = {}) {
    if (depth < 1 || depth > A.dim) throw std::invalid_argument("iterate_glued: depth must lie in 1..n");
    q.validate();
    auto K = [&A, q](const FormField& w) -> FormField { return [&A, q, w](const Vec& y) { return glued_apply(A, {w}, y, q, true).K[0]; }; };
    FormField R0 = [&A, q, u](const Vec& y) { return glued_apply(A, {u}, y, q).R[0]; };
    std::vector<FormField> terms{R0};
    for (int k = 1; k < depth; ++k) terms.push_back(K(terms.back()));
    FormField Km = u;
    for (int k = 0; k < depth; ++k) Km = K(Km);
    IteratedGlued it;
    it.depth = depth;
    it.R = [terms](const Vec& y) {
        MV acc = terms[0](y);
        for (std::size_t k = 1; k < terms.size(); ++k) acc += terms[k](y);
        return acc;
    };
    it.K = Km;
    return it;
}

// ---------------------------------------------------------------- smoothing map

struct Cutoff {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
};

namespace detail {

// 1 on s <= 0, 0 on s >= 1, C^2 in between
inline double smooth_drop(double s, double* ds) {
    if (s <= 0 || s >= 1) {
        if (ds) *ds = 0;
        return s <= 0 ? 1 : 0;
    }
    double p = s * s * s * (10 - 15 * s + 6 * s * s);
    if (ds) *ds = -30 * s * s * (1 - s) * (1 - s);
    return 1 - p;
}

}  // namespace detail

// product of C^2 drops: 1 where |x_i - c_i| <= inner_i, 0 beyond outer_i
inline Cutoff box_cutoff(const Vec& c, const Vec& inner, const Vec& outer) {
    for (int i = 0; i < int(c.size()); ++i)
        if (!(outer[i] > inner[i] && inner[i] >= 0)) throw std::invalid_argument("box_cutoff: need 0 <= inner < outer");
    Cutoff k;
    k.value = [=](const Vec& x) {
        double v = 1;
        for (int i = 0; i < int(x.size()); ++i) v *= detail::smooth_drop((std::abs(x[i] - c[i]) - inner[i]) / (outer[i] - inner[i]), nullptr);
        return v;
    };
    k.grad = [=](const Vec& x) {
        const int n = int(x.size());
        Vec vals(n), ders(n);
        for (int i = 0; i < n; ++i) {
            double w = outer[i] - inner[i], ds;
            vals[i] = detail::smooth_drop((std::abs(x[i] - c[i]) - inner[i]) / w, &ds);
            ders[i] = ds / w * (x[i] >= c[i] ? 1 : -1);
        }
        Vec g(n);
        for (int i = 0; i < n; ++i) {
            double p = ders[i];
            for (int k2 = 0; k2 < n; ++k2)
                if (k2 != i) p *= vals[k2];
            g[i] = p;
        }
        return g;
    };
    return k;
}

struct SmoothingMap {
    int dim = 0;
    double eps = 0, M = 0;
    std::function<double(const Vec&)> g, g_eps;
    Cutoff chi;
    BilipschitzMap alpha;

    double gap(const Vec& xp) const { return g(xp) - g_eps(xp); }
    double h(const Vec& xp, double t) const {
        Vec x(dim);
        x << xp, t;
        return t - chi.value(x) * gap(xp);
    }
    double h_prime(const Vec& xp, double t) const {
        Vec x(dim);
        x << xp, t;
        return 1 - chi.grad(x)[dim - 1] * gap(xp);
    }
};

// Lipschitz constant of g measured on a grid over [-window, window]^{n-1}
inline double measure_graph_lipschitz(const std::function<double(const Vec&)>& g, int m, double window, int grid = 401) {
    double M = 0;
    const double hstep = 2 * window / (grid - 1);
    std::vector<int> idx(m, 0);
    Vec x(m);
    while (true) {
        for (int i = 0; i < m; ++i) x[i] = -window + hstep * idx[i];
        double gx = g(x);
        for (int i = 0; i < m; ++i) {
            if (idx[i] + 1 >= grid) continue;
            Vec z = x;
            z[i] += hstep;
            M = std::max(M, std::abs(g(z) - gx) / hstep);
        }
        int i = 0;
        while (i < m && ++idx[i] == grid) idx[i++] = 0;
        if (i == m) break;
    }
    return M;
}

inline SmoothingMap smoothing_map(const std::function<double(const Vec&)>& g, int n, double eps, const Cutoff& chi, double window = 2.0,
                                  double M_override = -1) {
    if (n < 2 || n > 3) throw std::invalid_argument("smoothing_map: n must be 2 or 3");
    const int m = n - 1;
    SmoothingMap S;
    S.dim = n;
    S.eps = eps;
    S.g = g;
    S.chi = chi;
    S.M = M_override > 0 ? M_override : measure_graph_lipschitz(g, m, window, m == 1 ? 4001 : 201);
    if (!(eps > 0) || !(eps * S.M < 1)) throw std::invalid_argument("smoothing_map: need 0 < eps < 1/M");
    // cutoff slope bound, sampled
    {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-window, window);
        double worst = 0;
        for (int k = 0; k < 20000; ++k) {
            Vec x(n);
            for (auto& v : x) v = u(rng);
            worst = std::max(worst, std::abs(chi.grad(x)[n - 1]));
        }
        if (worst * 4 * eps * S.M > 1 + 1e-12) throw std::invalid_argument("smoothing_map: cutoff slope exceeds 1/(4 eps M)");
    }
    // mollifier exp(-1/(1-|s|^2)) normalised with the same rule used for the convolution
    std::vector<std::pair<Vec, double>> nodes;
    {
        auto eta = [](double r2) { return r2 >= 1 ? 0.0 : std::exp(-1 / (1 - r2)); };
        if (m == 1) {
            const auto& gl = gauss_legendre(96);
            for (int i = 0; i < 96; ++i) nodes.push_back({Vec::Constant(1, gl.x[i]), gl.w[i] * eta(gl.x[i] * gl.x[i])});
        } else {
            const auto& gr = gauss_legendre(32);
            const int na = 64;
            for (int i = 0; i < 32; ++i) {
                double r = 0.5 * (gr.x[i] + 1);
                for (int a = 0; a < na; ++a) {
                    double ph = 2 * std::numbers::pi * (a + 0.5) / na;
                    nodes.push_back({Vec{{r * std::cos(ph), r * std::sin(ph)}}, 0.5 * gr.w[i] * r * 2 * std::numbers::pi / na * eta(r * r)});
                }
            }
        }
        double tot = 0;
        for (auto& nd : nodes) tot += nd.second;
        for (auto& nd : nodes) nd.second /= tot;
    }
    const double M = S.M;
    S.g_eps = [g, nodes, eps, M](const Vec& xp) {
        double acc = 0;
        for (const auto& [s, w] : nodes) acc += w * g(xp - eps * s);
        return acc - eps * M;
    };
    auto self = std::make_shared<SmoothingMap>(S);
    S.alpha.dim = n;
    S.alpha.name = "smoothing";
    S.alpha.forward = [self](const Vec& x) {
        Vec y = x;
        y[self->dim - 1] = self->h(x.head(self->dim - 1), x[self->dim - 1]);
        return y;
    };
    S.alpha.inverse = [self](const Vec& y) {
        const int nn = self->dim;
        Vec xp = y.head(nn - 1);
        double target = y[nn - 1];
        double gp = self->gap(xp);
        // h(t) lies in [t - gap, t], so the root lies in [target, target + gap]
        double lo = target, hi = target + std::max(gp, 0.0) + 1e-12;
        auto F = [&](double t) { return self->h(xp, t) - target; };
        double flo = F(lo), fhi = F(hi);
        if (flo > 1e-14 || fhi < -1e-14) throw std::runtime_error("smoothing_map inverse: root not bracketed");
        double t = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            double ft = F(t);
            if (std::abs(ft) < 1e-15 * (1 + std::abs(target))) break;
            if (ft > 0)
                hi = t;
            else
                lo = t;
            double dp = self->h_prime(xp, t);
            double tn = t - ft / dp;
            t = (tn > lo && tn < hi) ? tn : 0.5 * (lo + hi);
            if (hi - lo < 1e-16 * (1 + std::abs(t))) break;
            if (it == 199) throw std::runtime_error("smoothing_map inverse: no convergence");
        }
        Vec x = y;
        x[nn - 1] = t;
        return x;
    };
    S.alpha.jacobian = [self](const Vec& x) {
        const int nn = self->dim;
        Mat J = Mat::Identity(nn, nn);
        Vec xp = x.head(nn - 1);
        const double step = 1e-6;
        for (int i = 0; i < nn - 1; ++i) {
            Vec p = x, q2 = x;
            p[i] += step;
            q2[i] -= step;
            J(nn - 1, i) = (self->h(p.head(nn - 1), p[nn - 1]) - self->h(q2.head(nn - 1), q2[nn - 1])) / (2 * step);
        }
        J(nn - 1, nn - 1) = self->h_prime(xp, x[nn - 1]);
        return J;
    };
    return S;
}

struct SmoothingReport {
    double h_prime_min = 0, h_prime_max = 0, roundtrip = 0;
    int lines = 0, samples = 0;
};

inline SmoothingReport check_smoothing_map(const SmoothingMap& S, double window, int lines = 50, int per_line = 400, int roundtrips = 1000,
                                           unsigned seed = 5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-window, window);
    SmoothingReport r;
    r.h_prime_min = std::numeric_limits<double>::infinity();
    r.h_prime_max = -r.h_prime_min;
    for (int l = 0; l < lines; ++l) {
        Vec xp(S.dim - 1);
        for (auto& v : xp) v = u(rng);
        for (int k = 0; k < per_line; ++k) {
            double t = -window + 2 * window * (k + 0.5) / per_line;
            double hp = S.h_prime(xp, t);
            r.h_prime_min = std::min(r.h_prime_min, hp);
            r.h_prime_max = std::max(r.h_prime_max, hp);
        }
        ++r.lines;
    }
    for (int k = 0; k < roundtrips; ++k) {
        Vec x(S.dim);
        for (auto& v : x) v = u(rng);
        r.roundtrip = std::max(r.roundtrip, (S.alpha.inverse(S.alpha.forward(x)) - x).norm());
        ++r.samples;
    }
    return r;
}

// ---------------------------------------------------------------- smooth ball domains

struct ImplicitDomain {
    int dim = 0;
    std::string name;
    std::function<double(const Vec&)> signed_dist;  // > 0 inside

    bool contains(const Vec& x) const { return signed_dist(x) > 0; }
    double dist_to_complement(const Vec& x) const { return std::max(0.0, signed_dist(x)); }
};

inline ImplicitDomain ball_domain(const Vec& centre, double radius) {
    if (!(radius > 0)) throw std::invalid_argument("ball_domain: radius must be positive");
    return {int(centre.size()), "ball", [centre, radius](const Vec& x) { return radius - (x - centre).norm(); }};
}

struct SmoothBallDomain {
    ImplicitDomain omega;
    Vec x0;
    double r = 0;

    double G(const Vec& x) const {
        double d = omega.dist_to_complement(x);
        double s = (x - x0).squaredNorm() - r * r;
        double tail = s > 0 ? s * s : 0.0;
        return 2 * r * r * d * d - tail;
    }
    bool contains(const Vec& x) const { return G(x) > 0; }
};

inline SmoothBallDomain smooth_ball_domain(const Vec& x0, double r, const ImplicitDomain& omega) {
    if (!(r > 0)) throw std::invalid_argument("smooth_ball_domain: r must be positive");
    if (std::abs(omega.signed_dist(x0)) > 1e-8) throw std::invalid_argument("smooth_ball_domain: x0 is not on the boundary");
    return {omega, x0, r};
}

struct ContainmentReport {
    int samples = 0, inner = 0, in_Q = 0;
    int inner_violations = 0;  // in B(x0,r) and Omega' but G <= 0
    int outer_violations = 0;  // G > 0 but outside B(x0,2r) or Omega'
};

inline ContainmentReport check_containments(const SmoothBallDomain& Q, int samples, unsigned seed) {
    std::mt19937_64 rng(seed);
    ContainmentReport rep;
    const int n = int(Q.x0.size());
    for (int k = 0; k < samples; ++k) {
        Vec x = Q.x0 + 2.5 * Q.r * detail::unit_ball_sample(n, rng);
        bool in_omega = Q.omega.contains(x);
        double dist = (x - Q.x0).norm();
        bool inQ = Q.contains(x);
        if (dist < Q.r && in_omega) {
            ++rep.inner;
            if (!inQ) ++rep.inner_violations;
        }
        if (inQ) {
            ++rep.in_Q;
            if (!(dist < 2 * Q.r && in_omega)) ++rep.outer_violations;
        }
        ++rep.samples;
    }
    return rep;
}

}  // namespace hdx
