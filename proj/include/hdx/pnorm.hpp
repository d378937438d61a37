#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <type_traits>

#include <Eigen/Dense>

namespace hdx {

struct NormEstimate {
    double value = 0;      // best lower bound found
    int iterations = 0;    // total over all starts
    int starts = 0;
    bool converged = false;  // every start met the stopping test before the cap
};

namespace detail {

template <class S>
double absval(const S& v) {
    return std::abs(v);
}

template <class Vec>
double pnorm_vec(const Vec& v, double p) {
    if (std::isinf(p)) return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
    double acc = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::pow(absval(v[i]), p);
    return std::pow(acc, 1.0 / p);
}

// dual vector: <dual(y), y> = ||y||_p and ||dual(y)||_q = 1
template <class Vec>
Vec dual_vec(const Vec& y, double p) {
    using S = typename Vec::Scalar;
    Vec out(y.size());
    double ny = pnorm_vec(y, p);
    if (ny == 0) return Vec::Zero(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double a = absval(y[i]);
        if (a == 0) {
            out[i] = S(0);
            continue;
        }
        double mag = std::pow(a / ny, p - 1);
        out[i] = S(mag) * (y[i] / S(a));
    }
    return out;
}

}  // namespace detail

// Boyd / Higham dual-exponent iteration for ||A||_{p->p}; optional projector restricts
// the search to range(P) and the ratio ||A P x|| / ||P x|| is what gets reported
template <class Vec>
NormEstimate boyd_pnorm(const std::function<Vec(const Vec&)>& A, const std::function<Vec(const Vec&)>& AH, Eigen::Index ncols, double p,
                        unsigned seed, int starts = 8, int max_iter = 200, const std::function<Vec(const Vec&)>& P = nullptr) {
    if (!(p > 1) || std::isinf(p)) throw std::invalid_argument("boyd_pnorm needs 1 < p < inf");
    using S = typename Vec::Scalar;
    const double q = p / (p - 1);
    NormEstimate est;
    est.converged = true;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    auto proj = [&](const Vec& x) { return P ? P(x) : x; };
    for (int s = 0; s < starts; ++s) {
        Vec x(ncols);
        if (s == 0) {
            for (Eigen::Index i = 0; i < ncols; ++i) x[i] = S(1.0 + double(i) / std::max<Eigen::Index>(1, ncols - 1));
        } else {
            for (Eigen::Index i = 0; i < ncols; ++i) {
                if constexpr (std::is_same_v<S, std::complex<double>>)
                    x[i] = S(g(rng), g(rng));
                else
                    x[i] = S(g(rng));
            }
        }
        double best = 0, prev = -1;
        bool done = false;
        for (int it = 0; it < max_iter; ++it) {
            ++est.iterations;
            Vec u = proj(x);
            double nu = detail::pnorm_vec(u, p);
            if (nu == 0) break;
            u /= S(nu);
            Vec y = A(u);
            double ratio = detail::pnorm_vec(y, p);
            best = std::max(best, ratio);
            Vec z = proj(AH(detail::dual_vec(y, p)));
            double nz = detail::pnorm_vec(z, q);
            double zx = std::real(z.dot(u));  // Eigen dot conjugates the first argument
            if (nz <= zx * (1 + 1e-12) || std::abs(ratio - prev) <= 1e-12 * ratio) {
                done = true;
                break;
            }
            prev = ratio;
            x = detail::dual_vec(z, q);
        }
        est.converged = est.converged && done;
        est.value = std::max(est.value, best);
        ++est.starts;
    }
    return est;
}

inline NormEstimate dense_pnorm(const Eigen::MatrixXd& M, double p, unsigned seed, int starts = 8, int max_iter = 200,
                                const Eigen::MatrixXd* proj = nullptr) {
    using V = Eigen::VectorXd;
    std::function<V(const V&)> A = [&](const V& x) -> V { return M * x; };
    std::function<V(const V&)> AT = [&](const V& x) -> V { return M.transpose() * x; };
    std::function<V(const V&)> P;
    if (proj) P = [proj](const V& x) -> V { return (*proj) * x; };
    return boyd_pnorm<V>(A, AT, M.cols(), p, seed, starts, max_iter, P);
}

}  // namespace hdx
