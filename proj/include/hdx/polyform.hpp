#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "exterior.hpp"

namespace hdx {

// packed exponent vector, 8 bits per variable, n <= 8
using Mono = std::uint64_t;

inline int mono_exp(Mono m, int i) { return int((m >> (8 * i)) & 0xff); }
inline Mono mono_set(Mono m, int i, int e) {
    if (e < 0 || e > 255) throw std::overflow_error("monomial exponent out of range");
    return (m & ~(Mono(0xff) << (8 * i))) | (Mono(e) << (8 * i));
}
inline Mono mono_unit(int i) { return Mono(1) << (8 * i); }
inline int mono_degree(Mono m, int n) {
    int d = 0;
    for (int i = 0; i < n; ++i) d += mono_exp(m, i);
    return d;
}
inline Mono mono_from(const std::vector<int>& a) {
    if (a.size() > 8) throw std::invalid_argument("at most 8 variables");
    Mono m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = mono_set(m, int(i), a[i]);
    return m;
}
inline std::vector<int> mono_vec(Mono m, int n) {
    std::vector<int> a(n);
    for (int i = 0; i < n; ++i) a[i] = mono_exp(m, i);
    return a;
}

class Poly {
public:
    Poly() = default;
    explicit Poly(int n) : n_(n) {
        if (n < 1 || n > 8) throw std::invalid_argument("Poly supports 1..8 variables");
    }
    static Poly constant(int n, const Rational& c) {
        Poly p(n);
        p.add(0, c);
        return p;
    }
    static Poly var(int n, int i) {
        Poly p(n);
        p.add(mono_unit(i), Rational(1));
        return p;
    }
    static Poly monomial(int n, Mono m, const Rational& c) {
        Poly p(n);
        p.add(m, c);
        return p;
    }

    int nvars() const { return n_; }
    const std::map<Mono, Rational>& terms() const { return t_; }
    bool is_zero() const { return t_.empty(); }

    void add(Mono m, const Rational& c) {
        if (c == 0) return;
        auto it = t_.find(m);
        if (it == t_.end()) {
            t_.emplace(m, c);
        } else {
            it->second += c;
            if (it->second == 0) t_.erase(it);
        }
    }

    int degree() const {
        int d = -1;
        for (const auto& [m, c] : t_) d = std::max(d, mono_degree(m, n_));
        return d;
    }

    Poly& operator+=(const Poly& o) {
        for (const auto& [m, c] : o.t_) add(m, c);
        return *this;
    }
    Poly& operator-=(const Poly& o) {
        for (const auto& [m, c] : o.t_) add(m, -c);
        return *this;
    }
    Poly& operator*=(const Rational& s) {
        if (s == 0) {
            t_.clear();
            return *this;
        }
        for (auto& [m, c] : t_) c *= s;
        return *this;
    }
    friend Poly operator+(Poly a, const Poly& b) { return a += b; }
    friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
    friend Poly operator*(Poly a, const Rational& s) { return a *= s; }
    friend Poly operator*(const Rational& s, Poly a) { return a *= s; }
    Poly operator-() const { return *this * Rational(-1); }

    friend Poly operator*(const Poly& a, const Poly& b) {
        Poly out(a.n_);
        for (const auto& [ma, ca] : a.t_)
            for (const auto& [mb, cb] : b.t_) {
                Mono m = 0;
                for (int i = 0; i < a.n_; ++i) m = mono_set(m, i, mono_exp(ma, i) + mono_exp(mb, i));
                out.add(m, ca * cb);
            }
        return out;
    }
    friend bool operator==(const Poly& a, const Poly& b) { return a.n_ == b.n_ && a.t_ == b.t_; }

    Poly derivative(int j) const {
        Poly out(n_);
        for (const auto& [m, c] : t_) {
            int e = mono_exp(m, j);
            if (e == 0) continue;
            out.add(mono_set(m, j, e - 1), c * e);
        }
        return out;
    }

    Poly pow(int k) const {
        Poly r = constant(n_, 1);
        for (int i = 0; i < k; ++i) r = r * *this;
        return r;
    }

    // substitute x_i -> q[i]; the result lives in q's variables
    Poly compose(const std::vector<Poly>& q) const {
        if (int(q.size()) != n_) throw std::invalid_argument("compose: arity mismatch");
        const int m = q.front().nvars();
        Poly out(m);
        std::vector<std::vector<Poly>> powers(n_);
        for (const auto& [mono, c] : t_) {
            Poly term = constant(m, c);
            for (int i = 0; i < n_; ++i) {
                int e = mono_exp(mono, i);
                if (e == 0) continue;
                auto& pw = powers[i];
                if (pw.empty()) pw.push_back(constant(m, 1));
                while (int(pw.size()) <= e) pw.push_back(pw.back() * q[i]);
                term = term * pw[e];
            }
            out += term;
        }
        return out;
    }

    template <class T>
    T eval(const T* x) const {
        T acc(0);
        for (const auto& [m, c] : t_) {
            T v = static_cast<T>(c);
            for (int i = 0; i < n_; ++i) {
                int e = mono_exp(m, i);
                for (int k = 0; k < e; ++k) v *= x[i];
            }
            acc += v;
        }
        return acc;
    }

private:
    int n_ = 0;
    std::map<Mono, Rational> t_;
};

class PolyForm {
public:
    PolyForm() = default;
    explicit PolyForm(int n) : n_(n), c_(std::size_t(1) << n, Poly(n)) {}

    static PolyForm term(int n, Blade s, Mono alpha, const Rational& coeff) {
        PolyForm f(n);
        f.c_.at(s).add(alpha, coeff);
        return f;
    }
    static PolyForm term(int n, const std::vector<int>& blade, const std::vector<int>& alpha, const Rational& coeff) {
        if (int(alpha.size()) != n) throw std::invalid_argument("alpha length must equal n");
        return term(n, blade_from_indices(blade, n), mono_from(alpha), coeff);
    }
    static PolyForm scalar(const Poly& p) {
        PolyForm f(p.nvars());
        f.c_[0] = p;
        return f;
    }

    int dim() const { return n_; }
    Poly& operator[](Blade s) { return c_.at(s); }
    const Poly& operator[](Blade s) const { return c_.at(s); }
    std::size_t size() const { return c_.size(); }

    bool is_zero() const {
        for (const auto& p : c_)
            if (!p.is_zero()) return false;
        return true;
    }
    int degree() const {
        int d = -1;
        for (const auto& p : c_) d = std::max(d, p.degree());
        return d;
    }
    std::size_t term_count() const {
        std::size_t k = 0;
        for (const auto& p : c_) k += p.terms().size();
        return k;
    }
    PolyForm grade(int l) const {
        PolyForm out(n_);
        for (Blade s = 0; s < c_.size(); ++s)
            if (grade_of(s) == l) out.c_[s] = c_[s];
        return out;
    }

    PolyForm& operator+=(const PolyForm& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    PolyForm& operator-=(const PolyForm& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    PolyForm& operator*=(const Rational& s) {
        for (auto& p : c_) p *= s;
        return *this;
    }
    friend PolyForm operator+(PolyForm a, const PolyForm& b) { return a += b; }
    friend PolyForm operator-(PolyForm a, const PolyForm& b) { return a -= b; }
    friend PolyForm operator*(PolyForm a, const Rational& s) { return a *= s; }
    friend PolyForm operator*(const Rational& s, PolyForm a) { return a *= s; }
    PolyForm operator-() const { return *this * Rational(-1); }
    friend PolyForm operator*(const Poly& eta, const PolyForm& f) {
        PolyForm out(f.n_);
        for (std::size_t i = 0; i < f.c_.size(); ++i) out.c_[i] = eta * f.c_[i];
        return out;
    }
    friend bool operator==(const PolyForm& a, const PolyForm& b) { return a.n_ == b.n_ && a.c_ == b.c_; }

    void check(const PolyForm& o) const {
        if (o.n_ != n_) throw std::invalid_argument("PolyForm dimension mismatch");
    }

    template <class T>
    Multivector<T> eval(const T* x) const {
        Multivector<T> m(n_);
        for (Blade s = 0; s < c_.size(); ++s)
            if (!c_[s].is_zero()) m[s] = c_[s].eval(x);
        return m;
    }

private:
    int n_ = 0;
    std::vector<Poly> c_;
};

inline PolyForm ext_d(const PolyForm& f) {
    const int n = f.dim();
    PolyForm out(n);
    for (Blade s = 0; s < f.size(); ++s) {
        if (f[s].is_zero()) continue;
        for (int j = 0; j < n; ++j) {
            Blade bj = Blade(1) << j;
            if (s & bj) continue;
            Poly dj = f[s].derivative(j);
            if (wedge_sign(bj, s) > 0)
                out[s | bj] += dj;
            else
                out[s | bj] -= dj;
        }
    }
    return out;
}

inline PolyForm int_delta(const PolyForm& f) {
    const int n = f.dim();
    PolyForm out(n);
    for (Blade s = 0; s < f.size(); ++s) {
        if (f[s].is_zero()) continue;
        for (int j = 0; j < n; ++j) {
            Blade bj = Blade(1) << j;
            if (!(s & bj)) continue;
            Poly dj = f[s].derivative(j);
            if (interior_sign(j, s) > 0)
                out[s & ~bj] -= dj;
            else
                out[s & ~bj] += dj;
        }
    }
    return out;
}

inline PolyForm wedge(const PolyForm& u, const PolyForm& v) {
    u.check(v);
    PolyForm out(u.dim());
    for (Blade a = 0; a < u.size(); ++a) {
        if (u[a].is_zero()) continue;
        for (Blade b = 0; b < v.size(); ++b) {
            if ((a & b) || v[b].is_zero()) continue;
            Poly p = u[a] * v[b];
            if (wedge_sign(a, b) > 0)
                out[a | b] += p;
            else
                out[a | b] -= p;
        }
    }
    return out;
}

// a is read as a 1-form: a = sum_j a_j e_j
inline PolyForm interior(const PolyForm& a, const PolyForm& u) {
    a.check(u);
    const int n = u.dim();
    PolyForm out(n);
    for (int j = 0; j < n; ++j) {
        const Poly& aj = a[Blade(1) << j];
        if (aj.is_zero()) continue;
        Blade bj = Blade(1) << j;
        for (Blade s = 0; s < u.size(); ++s) {
            if (!(s & bj) || u[s].is_zero()) continue;
            Poly p = aj * u[s];
            if (interior_sign(j, s) > 0)
                out[s & ~bj] += p;
            else
                out[s & ~bj] -= p;
        }
    }
    return out;
}

inline PolyForm gradient(const Poly& eta) {
    PolyForm out(eta.nvars());
    for (int j = 0; j < eta.nvars(); ++j) out[Blade(1) << j] = eta.derivative(j);
    return out;
}

inline PolyForm hodge_star(const PolyForm& u) {
    const int n = u.dim();
    PolyForm out(n);
    const Blade full = full_blade(n);
    for (Blade s = 0; s < u.size(); ++s) {
        if (u[s].is_zero()) continue;
        if (star_sign(s, n) > 0)
            out[full & ~s] += u[s];
        else
            out[full & ~s] -= u[s];
    }
    return out;
}

struct PolyMap {
    std::vector<Poly> comp;  // rho_i(y)
    int dim() const { return int(comp.size()); }

    static PolyMap identity(int n) {
        PolyMap m;
        for (int i = 0; i < n; ++i) m.comp.push_back(Poly::var(n, i));
        return m;
    }
    // y -> A y + b
    static PolyMap affine(const std::vector<std::vector<Rational>>& A, const std::vector<Rational>& b) {
        const int n = int(b.size());
        PolyMap m;
        for (int i = 0; i < n; ++i) {
            Poly p = Poly::constant(n, b[i]);
            for (int j = 0; j < n; ++j) p += Poly::var(n, j) * A.at(i).at(j);
            m.comp.push_back(p);
        }
        return m;
    }
    bool is_affine() const {
        for (const auto& p : comp)
            if (p.degree() > 1) return false;
        return true;
    }
    std::vector<std::vector<Rational>> linear_part() const {
        const int n = dim();
        std::vector<std::vector<Rational>> A(n, std::vector<Rational>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                auto it = comp[i].terms().find(mono_unit(j));
                if (it != comp[i].terms().end()) A[i][j] = it->second;
            }
        return A;
    }
};

// (rho^* u)(y) = J(y)^T u(rho(y)), J^T extended multiplicatively: e_k -> d rho_k
inline PolyForm pullback(const PolyMap& rho, const PolyForm& u) {
    const int n = u.dim();
    if (rho.dim() != n) throw std::invalid_argument("pullback: map dimension mismatch");
    for (const auto& p : rho.comp)
        if (p.nvars() != n) throw std::invalid_argument("pullback: map must be R^n -> R^n");
    std::vector<PolyForm> drho;
    for (int k = 0; k < n; ++k) drho.push_back(ext_d(PolyForm::scalar(rho.comp[k])));
    PolyForm out(n);
    for (Blade s = 0; s < u.size(); ++s) {
        if (u[s].is_zero()) continue;
        PolyForm b = PolyForm::scalar(Poly::constant(n, 1));
        for (int k : blade_indices(s)) b = wedge(b, drho[k]);
        out += u[s].compose(rho.comp) * b;
    }
    return out;
}

inline std::vector<std::vector<Rational>> rational_inverse(std::vector<std::vector<Rational>> A, Rational* det_out) {
    const int n = int(A.size());
    std::vector<std::vector<Rational>> inv(n, std::vector<Rational>(n));
    for (int i = 0; i < n; ++i) inv[i][i] = 1;
    Rational det = 1;
    for (int c = 0; c < n; ++c) {
        int piv = -1;
        for (int r = c; r < n; ++r)
            if (A[r][c] != 0) {
                piv = r;
                break;
            }
        if (piv < 0) throw std::domain_error("non-invertible linear part");
        if (piv != c) {
            std::swap(A[piv], A[c]);
            std::swap(inv[piv], inv[c]);
            det = -det;
        }
        Rational p = A[c][c];
        det *= p;
        for (int j = 0; j < n; ++j) {
            A[c][j] /= p;
            inv[c][j] /= p;
        }
        for (int r = 0; r < n; ++r) {
            if (r == c || A[r][c] == 0) continue;
            Rational f = A[r][c];
            for (int j = 0; j < n; ++j) {
                A[r][j] -= f * A[c][j];
                inv[r][j] -= f * inv[c][j];
            }
        }
    }
    if (det_out) *det_out = det;
    return inv;
}

// Jac(rho) J^{-1} u(rho(y)) for affine invertible rho
inline PolyForm pushforward_tilde(const PolyMap& rho, const PolyForm& u) {
    const int n = u.dim();
    if (rho.dim() != n) throw std::invalid_argument("pushforward: map dimension mismatch");
    if (!rho.is_affine()) throw std::invalid_argument("pushforward: only affine maps are supported");
    Rational det;
    auto inv = rational_inverse(rho.linear_part(), &det);
    std::vector<Multivector<Rational>> col;
    for (int k = 0; k < n; ++k) {
        Multivector<Rational> v(n);
        for (int i = 0; i < n; ++i) v[Blade(1) << i] = inv[i][k];
        col.push_back(v);
    }
    PolyForm out(n);
    for (Blade s = 0; s < u.size(); ++s) {
        if (u[s].is_zero()) continue;
        Multivector<Rational> b = Multivector<Rational>::scalar(n, det);
        for (int k : blade_indices(s)) b = wedge(b, col[k]);
        Poly us = u[s].compose(rho.comp);
        for (Blade t = 0; t < b.size(); ++t)
            if (b[t] != 0) out[t] += us * b[t];
    }
    return out;
}

struct BumpSpec {
    int k = 2;  // theta(a) = c_k (1/4 - |a|^2)^k on |a| <= 1/2
};

namespace detail {

inline Rational rpow(Rational b, int e) {
    Rational r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

inline Rational radial_moment(int m, int k) {
    // int_0^{1/2} r^{m-1} (1/4 - r^2)^k dr
    const Rational R(1, 2);
    Rational acc = 0, binom = 1;
    for (int j = 0; j <= k; ++j) {
        if (j > 0) binom = binom * (k - j + 1) / j;
        int e = m + 2 * j;
        Rational term = binom * rpow(Rational(1, 4), k - j);
        Rational rp = rpow(R, e);
        term *= rp / e;
        if (j & 1)
            acc -= term;
        else
            acc += term;
    }
    return acc;
}

}  // namespace detail

// average of a^alpha over S^{n-1}
inline Rational sphere_average(const std::vector<int>& alpha) {
    const int n = int(alpha.size());
    int total = 0;
    Rational num = 1;
    for (int a : alpha) {
        if (a & 1) return 0;
        total += a;
        for (int q = a - 1; q > 0; q -= 2) num *= q;
    }
    Rational den = 1;
    for (int m = 0; m < total / 2; ++m) den *= (n + 2 * m);
    return num / den;
}

inline Rational ball_moment(const std::vector<int>& alpha, int k) {
    if (k < 0) throw std::invalid_argument("bump smoothness must be >= 0");
    const int n = int(alpha.size());
    Rational s = sphere_average(alpha);
    if (s == 0) return 0;
    int total = 0;
    for (int a : alpha) total += a;
    return s * detail::radial_moment(total + n, k) / detail::radial_moment(n, k);
}

// c_k in double precision, for pointwise use of theta
inline double bump_constant(int n, int k) {
    double area = 2.0 * std::pow(M_PI, n / 2.0) / std::tgamma(n / 2.0);
    return 1.0 / (area * detail::radial_moment(n, k).convert_to<double>());
}

inline double bump_value(const double* a, int n, int k, double ck) {
    double r2 = 0;
    for (int i = 0; i < n; ++i) r2 += a[i] * a[i];
    if (r2 >= 0.25) return 0.0;
    return ck * std::pow(0.25 - r2, k);
}

inline constexpr int kDegreeCap = 8;

class MomentTable {
public:
    MomentTable(int n, int k) : n_(n), k_(k) {}
    const Rational& operator()(Mono m) {
        auto it = cache_.find(m);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(m, ball_moment(mono_vec(m, n_), k_)).first->second;
    }

private:
    int n_, k_;
    std::map<Mono, Rational> cache_;
};

inline Rational factorial(int m) {
    Rational f = 1;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
}

// R_B f(y) = int theta(a) (y-a) _| int_0^1 t^{l-1} f(a + t(y-a)) dt da, R_B f_0 = 0
inline PolyForm poincare_RB(const PolyForm& f, BumpSpec theta = {}, int degree_cap = kDegreeCap) {
    const int n = f.dim();
    if (f.degree() + 1 > degree_cap) throw std::length_error("poincare_RB: degree cap exceeded");
    MomentTable M(n, theta.k);
    PolyForm out(n);
    std::vector<Rational> fact(2 * degree_cap + n + 4);
    fact[0] = 1;
    for (std::size_t i = 1; i < fact.size(); ++i) fact[i] = fact[i - 1] * int(i);
    for (Blade s = 1; s < f.size(); ++s) {
        if (f[s].is_zero()) continue;
        const int l = grade_of(s);
        for (const auto& [alpha, coeff] : f[s].terms()) {
            const int A = mono_degree(alpha, n);
            std::vector<int> av = mono_vec(alpha, n), kv(n, 0);
            while (true) {
                int K = 0;
                Rational binom = 1;
                for (int i = 0; i < n; ++i) {
                    K += kv[i];
                    binom *= fact[av[i]] / (fact[kv[i]] * fact[av[i] - kv[i]]);
                }
                Rational beta = fact[l + K - 1] * fact[A - K] / fact[l + A];
                Rational w = coeff * binom * beta;
                Mono rest = 0, yk = 0;
                for (int i = 0; i < n; ++i) {
                    rest = mono_set(rest, i, av[i] - kv[i]);
                    yk = mono_set(yk, i, kv[i]);
                }
                const Rational& m0 = M(rest);
                for (int j = 0; j < n; ++j) {
                    Blade bj = Blade(1) << j;
                    if (!(s & bj)) continue;
                    Rational sg = interior_sign(j, s) * w;
                    Poly p(n);
                    if (m0 != 0) p.add(yk + mono_unit(j), m0);
                    const Rational& m1 = M(rest + mono_unit(j));
                    if (m1 != 0) p.add(yk, -m1);
                    p *= sg;
                    out[s & ~bj] += p;
                }
                int i = 0;
                while (i < n && kv[i] == av[i]) kv[i++] = 0;
                if (i == n) break;
                ++kv[i];
            }
        }
    }
    return out;
}

// K_B f = <theta, f_0> e_empty
inline PolyForm poincare_KB(const PolyForm& f, BumpSpec theta = {}) {
    const int n = f.dim();
    MomentTable M(n, theta.k);
    Rational acc = 0;
    for (const auto& [alpha, c] : f[0].terms()) acc += c * M(alpha);
    return PolyForm::scalar(Poly::constant(n, acc));
}

inline std::string rational_str(const Rational& q) {
    std::string s = numerator(q).str();
    if (denominator(q) != 1) s += "/" + denominator(q).str();
    return s;
}

inline Rational parse_rational(const std::string& s) {
    try {
        auto slash = s.find('/');
        if (slash == std::string::npos) return Rational(boost::multiprecision::cpp_int(s));
        boost::multiprecision::cpp_int a(s.substr(0, slash)), b(s.substr(slash + 1));
        if (b == 0) throw std::invalid_argument("zero denominator");
        return Rational(a, b);
    } catch (const std::runtime_error&) {
        throw std::invalid_argument("bad rational: " + s);
    }
}

inline nlohmann::json to_json(const PolyForm& f) {
    nlohmann::json j;
    j["n"] = f.dim();
    j["terms"] = nlohmann::json::array();
    for (Blade s = 0; s < f.size(); ++s)
        for (const auto& [m, c] : f[s].terms()) {
            std::vector<int> blade;
            for (int i : blade_indices(s)) blade.push_back(i + 1);
            j["terms"].push_back({{"blade", blade}, {"alpha", mono_vec(m, f.dim())}, {"coeff", rational_str(c)}});
        }
    return j;
}

inline PolyForm polyform_from_json(const nlohmann::json& j) {
    const int n = j.at("n").get<int>();
    PolyForm f(n);
    for (const auto& t : j.at("terms")) {
        std::vector<int> blade;
        for (int i : t.at("blade").get<std::vector<int>>()) blade.push_back(i - 1);
        auto alpha = t.at("alpha").get<std::vector<int>>();
        if (int(alpha.size()) != n) throw std::invalid_argument("alpha length must equal n");
        const auto& cj = t.at("coeff");
        Rational c = cj.is_string() ? parse_rational(cj.get<std::string>()) : Rational(cj.get<long long>());
        f += PolyForm::term(n, blade, alpha, c);
    }
    return f;
}

}  // namespace hdx
