#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "hdx/polyform.hpp"

namespace hdx {

// an exponent in [1, inf]: exact rational or infinity
struct Exponent {
    bool infinite = false;
    Rational value = 1;

    static Exponent inf() { return {true, 0}; }
    static Exponent of(const Rational& r) { return {false, r}; }

    // 1/p with 1/inf = 0
    Rational reciprocal() const { return infinite ? Rational(0) : Rational(1) / value; }
    static Exponent from_reciprocal(const Rational& r) {
        if (r == 0) return inf();
        return of(Rational(1) / r);
    }
    double to_double() const { return infinite ? std::numeric_limits<double>::infinity() : value.convert_to<double>(); }
    std::string str() const { return infinite ? "inf" : rational_str(value); }
    friend bool operator==(const Exponent& a, const Exponent& b) {
        return a.infinite == b.infinite && (a.infinite || a.value == b.value);
    }
};

inline Exponent parse_exponent(const std::string& s) {
    if (s == "inf" || s == "infinity") return Exponent::inf();
    if (s.find('.') != std::string::npos || s.find('e') != std::string::npos) {
        // decimal input such as 1.4 is read exactly as 14/10
        std::string digits = s;
        auto dot = digits.find('.');
        if (digits.find('e') != std::string::npos) throw std::invalid_argument("exponent: use a fraction or plain decimal, got " + s);
        int scale = int(digits.size() - dot - 1);
        digits.erase(dot, 1);
        Rational den = 1;
        for (int i = 0; i < scale; ++i) den *= 10;
        return Exponent::of(Rational(boost::multiprecision::cpp_int(digits)) / den);
    }
    return Exponent::of(parse_rational(s));
}

struct ExponentSet {
    Exponent p, conjugate, lower_sobolev, trace, sobolev;
    int n = 0;
    bool sobolev_multivalued = false;  // p = n: p^S takes every value in [p, inf)

    nlohmann::json to_json() const {
        return {{"n", n},
                {"p", p.str()},
                {"p_prime", conjugate.str()},
                {"p_S", lower_sobolev.str()},
                {"p_star", trace.str()},
                {"p_upper_S", sobolev_multivalued ? "[" + p.str() + ",inf)" : sobolev.str()},
                {"p_upper_S_multivalued", sobolev_multivalued}};
    }
};

// p', p_S (1/p_S = 1/p + 1/n), p* = np/(n-1), p^S (1/p^S = 1/p - 1/n)
inline ExponentSet exponents(const Exponent& p, int n) {
    if (n < 2) throw std::invalid_argument("exponents: need n >= 2");
    if (!p.infinite && p.value < 1) throw std::invalid_argument("exponents: need p >= 1");
    ExponentSet e;
    e.n = n;
    e.p = p;
    const Rational ip = p.reciprocal(), in = Rational(1, n);
    e.conjugate = Exponent::from_reciprocal(1 - ip);
    e.lower_sobolev = Exponent::from_reciprocal(ip + in);
    e.trace = p.infinite ? Exponent::inf() : Exponent::of(Rational(n) * p.value / (n - 1));
    if (!p.infinite && p.value < n) {
        e.sobolev = Exponent::from_reciprocal(ip - in);
    } else if (!p.infinite && p.value == n) {
        e.sobolev_multivalued = true;
        e.sobolev = Exponent::inf();
    } else {
        e.sobolev = Exponent::inf();
    }
    return e;
}

inline ExponentSet exponents(const Rational& p, int n) { return exponents(Exponent::of(p), n); }

}  // namespace hdx
