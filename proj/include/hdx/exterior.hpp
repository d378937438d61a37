#pragma once

#include <bit>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace hdx {

using Rational = boost::multiprecision::cpp_rational;

using Blade = std::uint32_t;

inline int grade_of(Blade s) { return std::popcount(s); }

inline Blade full_blade(int n) { return (Blade(1) << n) - 1; }

// parity of pairs (a in A, b in B) with a > b
inline int wedge_sign(Blade a, Blade b) {
    int inv = 0;
    while (b) {
        int j = std::countr_zero(b);
        b &= b - 1;
        inv += std::popcount(a >> (j + 1));
    }
    return (inv & 1) ? -1 : 1;
}

// e_j _| e_S = (-1)^{#{s in S : s < j}} e_{S\j}
inline int interior_sign(int j, Blade s) {
    return (std::popcount(s & ((Blade(1) << j) - 1)) & 1) ? -1 : 1;
}

inline int star_sign(Blade s, int n) { return wedge_sign(s, full_blade(n) & ~s); }

inline std::vector<int> blade_indices(Blade s) {
    std::vector<int> out;
    while (s) {
        out.push_back(std::countr_zero(s));
        s &= s - 1;
    }
    return out;
}

inline Blade blade_from_indices(const std::vector<int>& idx, int n) {
    Blade s = 0;
    for (int j : idx) {
        if (j < 0 || j >= n) throw std::invalid_argument("blade index out of range");
        if (s & (Blade(1) << j)) throw std::invalid_argument("repeated blade index");
        s |= Blade(1) << j;
    }
    return s;
}

inline std::vector<Blade> blades_of_grade(int n, int l) {
    std::vector<Blade> out;
    for (Blade s = 0; s <= full_blade(n); ++s)
        if (grade_of(s) == l) out.push_back(s);
    return out;
}

template <class T>
class Multivector {
public:
    Multivector() = default;
    explicit Multivector(int n) : n_(n), c_(std::size_t(1) << n, T(0)) {
        if (n < 1 || n > 16) throw std::invalid_argument("Multivector dimension out of range");
    }

    static Multivector blade(int n, Blade s, T coeff = T(1)) {
        Multivector m(n);
        m[s] = coeff;
        return m;
    }
    static Multivector scalar(int n, T v) { return blade(n, 0, v); }
    static Multivector basis(int n, int j) { return blade(n, Blade(1) << j); }

    int dim() const { return n_; }
    std::size_t size() const { return c_.size(); }
    T& operator[](Blade s) { return c_.at(s); }
    const T& operator[](Blade s) const { return c_.at(s); }
    const std::vector<T>& coeffs() const { return c_; }

    bool is_zero() const {
        for (const auto& v : c_)
            if (v != T(0)) return false;
        return true;
    }

    Multivector grade(int l) const {
        Multivector out(n_);
        for (Blade s = 0; s < c_.size(); ++s)
            if (grade_of(s) == l) out.c_[s] = c_[s];
        return out;
    }

    // -1 if mixed or zero
    int homogeneous_grade() const {
        int g = -1;
        for (Blade s = 0; s < c_.size(); ++s) {
            if (c_[s] == T(0)) continue;
            if (g >= 0 && g != grade_of(s)) return -1;
            g = grade_of(s);
        }
        return g;
    }

    Multivector& operator+=(const Multivector& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    Multivector& operator-=(const Multivector& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    Multivector& operator*=(const T& a) {
        for (auto& v : c_) v *= a;
        return *this;
    }
    friend Multivector operator+(Multivector a, const Multivector& b) { return a += b; }
    friend Multivector operator-(Multivector a, const Multivector& b) { return a -= b; }
    friend Multivector operator*(Multivector a, const T& s) { return a *= s; }
    friend Multivector operator*(const T& s, Multivector a) { return a *= s; }
    Multivector operator-() const {
        Multivector m(*this);
        for (auto& v : m.c_) v = -v;
        return m;
    }
    friend bool operator==(const Multivector& a, const Multivector& b) { return a.n_ == b.n_ && a.c_ == b.c_; }

    void check(const Multivector& o) const {
        if (o.n_ != n_) throw std::invalid_argument("Multivector dimension mismatch");
    }

    template <class U>
    Multivector<U> cast() const {
        Multivector<U> out(n_);
        for (Blade s = 0; s < c_.size(); ++s) out[s] = static_cast<U>(c_[s]);
        return out;
    }

    std::string str() const {
        std::ostringstream os;
        bool first = true;
        for (Blade s = 0; s < c_.size(); ++s) {
            if (c_[s] == T(0)) continue;
            if (!first) os << " + ";
            first = false;
            os << c_[s] << "·e{";
            auto idx = blade_indices(s);
            for (std::size_t k = 0; k < idx.size(); ++k) os << (k ? "," : "") << idx[k] + 1;
            os << "}";
        }
        if (first) os << "0";
        return os.str();
    }

private:
    int n_ = 0;
    std::vector<T> c_;
};

template <class T>
Multivector<T> wedge(const Multivector<T>& u, const Multivector<T>& v) {
    u.check(v);
    Multivector<T> out(u.dim());
    for (Blade a = 0; a < u.size(); ++a) {
        if (u[a] == T(0)) continue;
        for (Blade b = 0; b < v.size(); ++b) {
            if ((a & b) || v[b] == T(0)) continue;
            if (wedge_sign(a, b) > 0)
                out[a | b] += u[a] * v[b];
            else
                out[a | b] -= u[a] * v[b];
        }
    }
    return out;
}

// e_T _| u applies e_{t_1} first, then e_{t_2}, ..., so that <e_T ^ w, u> = <w, e_T _| u>
template <class T>
Multivector<T> interior_blade(Blade t, const Multivector<T>& u) {
    Multivector<T> cur = u;
    for (int j : blade_indices(t)) {
        Multivector<T> next(u.dim());
        Blade bj = Blade(1) << j;
        for (Blade s = 0; s < cur.size(); ++s) {
            if (!(s & bj) || cur[s] == T(0)) continue;
            if (interior_sign(j, s) > 0)
                next[s & ~bj] += cur[s];
            else
                next[s & ~bj] -= cur[s];
        }
        cur = std::move(next);
    }
    return cur;
}

template <class T>
Multivector<T> interior(const Multivector<T>& a, const Multivector<T>& u) {
    a.check(u);
    Multivector<T> out(u.dim());
    for (Blade t = 0; t < a.size(); ++t) {
        if (a[t] == T(0)) continue;
        out += interior_blade(t, u) * a[t];
    }
    return out;
}

template <class T>
Multivector<T> hodge_star(const Multivector<T>& u) {
    const int n = u.dim();
    Multivector<T> out(n);
    const Blade full = full_blade(n);
    for (Blade s = 0; s < u.size(); ++s) {
        if (u[s] == T(0)) continue;
        if (star_sign(s, n) > 0)
            out[full & ~s] += u[s];
        else
            out[full & ~s] -= u[s];
    }
    return out;
}

template <class T>
T inner(const Multivector<T>& u, const Multivector<T>& v) {
    u.check(v);
    T acc(0);
    for (Blade s = 0; s < u.size(); ++s) acc += u[s] * v[s];
    return acc;
}

}  // namespace hdx
