#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <json.hpp>

#include "discrete_ops.hpp"
#include "mesh.hpp"

namespace hdx {

using VoxelIndex = std::array<int, kMaxMeshDim>;

namespace detail {

// quadratic-in-support partition: sqrt of the cubic B-spline, so sum_m a(s-m)^2 = 1 exactly
inline double bspline3(double s) {
    s = std::abs(s);
    if (s >= 2) return 0;
    if (s >= 1) return (2 - s) * (2 - s) * (2 - s) / 6;
    return 2.0 / 3.0 - s * s + s * s * s / 2;
}

inline double sqrt_bspline3(double s) { return std::sqrt(bspline3(s)); }

}  // namespace detail

struct WhitneyCube {
    std::vector<double> center;  // centre of the lattice cube
    double side = 0;             // side of the lattice cube; the support is the 4x dilate
};

struct WhitneyCover {
    double t = 0;
    std::vector<WhitneyCube> cubes;
    std::vector<Eigen::SparseVector<double>> eta;  // per cube, values on operator indices
    int overlap = 0;                              // max number of supports containing a cell
    int min_overlap = 0;
    double partition_error = 0;                   // max |sum eta^2 - 1|
    double max_gradient_times_t = 0;              // max |eta(v1)-eta(v0)|/h over edges, times t
    double summability = 0;                       // max_k sum_j exp(-dist(Q_k,Q_j)/t)
    bool degenerate = false;
};

// lattice cubes of side t with corners on lo + tZ^n; eta_k = prod_i a((x_i - c_i)/t), support 4Q
inline WhitneyCover whitney_cover(const AssembledOperator& op, double t) {
    const auto& c = *op.complex;
    const int n = c.dim();
    const double h = c.h();
    if (t < h * (1 - 1e-12)) throw std::invalid_argument("whitney_cover: t must be at least h");
    WhitneyCover W;
    W.t = t;
    const int N = op.size();
    std::vector<std::vector<double>> xs(N);
    for (int l = 0; l <= n; ++l)
        for (int i = 0; i < int(op.cells[l].size()); ++i) xs[op.offsets[l] + i] = c.barycenter(l, op.cells[l][i]);
    const auto& dom = c.domain();
    if (t >= dom.diameter() * (1 - 1e-12)) {
        W.degenerate = true;
        WhitneyCube q;
        for (int i = 0; i < n; ++i) q.center.push_back(0.5 * (dom.lo[i] + dom.hi[i]));
        q.side = t;
        W.cubes.push_back(q);
        Eigen::SparseVector<double> e(N);
        for (int i = 0; i < N; ++i) e.insert(i) = 1.0;
        W.eta.push_back(e);
        W.overlap = W.min_overlap = 1;
        return W;
    }
    // lattice index range touching the domain box within two cube widths
    std::array<int, kMaxMeshDim> lo{}, cnt{};
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) {
        lo[i] = -2;
        cnt[i] = int(std::ceil((dom.hi[i] - dom.lo[i]) / t)) + 4;
        total *= cnt[i];
    }
    std::vector<std::vector<std::pair<int, double>>> entries(total);
    for (int idx = 0; idx < N; ++idx) {
        std::array<int, kMaxMeshDim> base{};
        for (int i = 0; i < n; ++i) base[i] = int(std::floor((xs[idx][i] - dom.lo[i]) / t - 0.5));
        // the 4^n lattice centres within distance 2t per axis
        int combos = 1 << (2 * n);
        for (int m = 0; m < combos; ++m) {
            double val = 1;
            std::size_t lin = 0, stride = 1;
            bool ok = true;
            for (int i = 0; i < n && ok; ++i) {
                int k = base[i] - 1 + ((m >> (2 * i)) & 3);
                double ctr = dom.lo[i] + (k + 0.5) * t;
                val *= detail::sqrt_bspline3((xs[idx][i] - ctr) / t);
                int off = k - lo[i];
                if (off < 0 || off >= cnt[i]) ok = false;
                lin += std::size_t(off) * stride;
                stride *= cnt[i];
            }
            if (!ok || val <= 0) continue;
            entries[lin].push_back({idx, val});
        }
    }
    std::vector<double> sumsq(N, 0.0);
    std::vector<int> cover(N, 0);
    for (std::size_t lin = 0; lin < total; ++lin) {
        if (entries[lin].empty()) continue;
        WhitneyCube q;
        std::size_t r = lin;
        for (int i = 0; i < n; ++i) {
            int k = int(r % cnt[i]) + lo[i];
            r /= cnt[i];
            q.center.push_back(dom.lo[i] + (k + 0.5) * t);
        }
        q.side = t;
        Eigen::SparseVector<double> e(N);
        auto ents = entries[lin];
        std::sort(ents.begin(), ents.end());
        for (auto [i, v] : ents) {
            e.insert(i) = v;
            sumsq[i] += v * v;
            ++cover[i];
        }
        W.cubes.push_back(q);
        W.eta.push_back(e);
    }
    W.overlap = *std::max_element(cover.begin(), cover.end());
    W.min_overlap = *std::min_element(cover.begin(), cover.end());
    for (double s : sumsq) W.partition_error = std::max(W.partition_error, std::abs(s - 1));
    // discrete gradient along edges, on vertex values
    std::vector<int> vloc(c.count(0), -1);
    for (int i = 0; i < int(op.cells[0].size()); ++i) vloc[op.cells[0][i]] = op.offsets[0] + i;
    for (const auto& e : W.eta) {
        Eigen::VectorXd full = Eigen::VectorXd(e);
        for (int id = 0; id < c.count(1); ++id) {
            const Cell& cell = c.cell(1, id);
            VoxelIndex a = cell.anchor, b = cell.anchor;
            for (int i = 0; i < n; ++i)
                if (cell.axes >> i & 1) ++b[i];
            int ia = c.find(a, 0), ib = c.find(b, 0);
            if (ia < 0 || ib < 0 || vloc[ia] < 0 || vloc[ib] < 0) continue;
            W.max_gradient_times_t = std::max(W.max_gradient_times_t, std::abs(full[vloc[ib]] - full[vloc[ia]]) / h * t);
        }
    }
    // exponential summability, distance between the lattice cubes
    for (std::size_t k = 0; k < W.cubes.size(); ++k) {
        double s = 0;
        for (std::size_t j = 0; j < W.cubes.size(); ++j) {
            double d2 = 0;
            for (int i = 0; i < n; ++i) {
                double g = std::max(0.0, std::abs(W.cubes[k].center[i] - W.cubes[j].center[i]) - t);
                d2 += g * g;
            }
            s += std::exp(-std::sqrt(d2) / t);
        }
        W.summability = std::max(W.summability, s);
    }
    return W;
}

// dyadic tree over a power-of-two box that holds the voxel grid centred with a margin of at least
// half its extent, so Whitney cubes can reach every face. Density per voxel is the largest |u_c|^p
// over the cells in the voxel's closure. Tree coordinates are voxel coordinates plus origin().
class DyadicMaximal {
public:
    DyadicMaximal(const Cochain& u, double p) : c_(u.complex), p_(p) {
        if (!(p >= 1)) throw std::invalid_argument("maximal_function: p must be at least 1");
        n_ = c_->dim();
        int m = 1;
        for (int i = 0; i < n_; ++i) m = std::max(m, c_->voxels_per_axis(i));
        J_ = 0;
        while ((1 << J_) < 2 * m) ++J_;
        side_ = 1 << J_;
        for (int i = 0; i < n_; ++i) origin_[i] = (side_ - c_->voxels_per_axis(i)) / 2;
        std::size_t nv = 1;
        for (int i = 0; i < n_; ++i) nv *= side_;
        density_.assign(nv, 0.0);
        for (int l = 0; l <= n_; ++l) {
            auto seg = u.grade(l);
            for (int id = 0; id < c_->count(l); ++id) {
                double val = std::pow(std::abs(seg[id]), p);
                if (val == 0) continue;
                const Cell& cell = c_->cell(l, id);
                for_closure_voxels(cell, [&](const VoxelIndex& v) {
                    double& d = density_[flat(to_tree(v), side_)];
                    d = std::max(d, val);
                });
            }
        }
        // pyramid of sums, level j has cubes of side 2^j
        sums_.push_back(density_);
        for (int j = 1; j <= J_; ++j) {
            int s = side_ >> j;
            std::size_t cnt = 1;
            for (int i = 0; i < n_; ++i) cnt *= s;
            std::vector<double> next(cnt, 0.0);
            const auto& prev = sums_.back();
            int ps = s * 2;
            std::size_t pc = prev.size();
            for (std::size_t lin = 0; lin < pc; ++lin) {
                VoxelIndex v = unflat(lin, ps);
                for (int i = 0; i < n_; ++i) v[i] >>= 1;
                next[flat(v, s)] += prev[lin];
            }
            sums_.push_back(std::move(next));
        }
        total_ = sums_.back()[0];
        maxf_.assign(density_.size(), 0.0);
        for (std::size_t lin = 0; lin < density_.size(); ++lin) {
            VoxelIndex v = unflat(lin, side_);
            double best = 0;
            for (int j = 0; j <= J_; ++j) {
                VoxelIndex a = v;
                for (int i = 0; i < n_; ++i) a[i] >>= j;
                double vol = std::pow(double(1 << j), n_);
                best = std::max(best, sums_[j][flat(a, side_ >> j)] / vol);
            }
            maxf_[lin] = best;
        }
    }

    int dim() const { return n_; }
    int levels() const { return J_; }
    int side() const { return side_; }
    double p() const { return p_; }
    double h() const { return c_->h(); }
    const VoxelIndex& origin() const { return origin_; }
    double total_mass() const { return total_ * std::pow(c_->h(), n_); }  // integral of the density

    VoxelIndex to_tree(VoxelIndex v) const {
        for (int i = 0; i < n_; ++i) v[i] += origin_[i];
        return v;
    }
    VoxelIndex from_tree(VoxelIndex v) const {
        for (int i = 0; i < n_; ++i) v[i] -= origin_[i];
        return v;
    }

    // value on a tree voxel, or the ancestor average outside the box (zero on the negative side)
    double tree_value(const VoxelIndex& v) const {
        int far = 0;
        for (int i = 0; i < n_; ++i) {
            if (v[i] < 0) return 0;
            far = std::max(far, v[i]);
        }
        if (far < side_) return maxf_[flat(v, side_)];
        int m = 0;
        while ((side_ << m) <= far) ++m;
        return total_ / std::pow(double(side_ << m), n_);
    }
    // value on a voxel of the complex grid
    double value(const VoxelIndex& v) const { return tree_value(to_tree(v)); }
    double density(const VoxelIndex& v) const { return density_[flat(to_tree(v), side_)]; }
    double cube_average(int level, const VoxelIndex& a) const {
        return sums_[level][flat(a, side_ >> level)] / std::pow(double(1 << level), n_);
    }

    // measure of {M > lambda} over R^n, padded box plus its dyadic ancestors
    double level_set_measure(double lambda) const {
        std::size_t cnt = 0;
        for (double v : maxf_) cnt += v > lambda;
        const double hn = std::pow(c_->h(), n_);
        double meas = cnt * hn;
        double box = std::pow(double(side_), n_);
        int m = 0;
        while (total_ / (box * std::pow(2.0, n_ * (m + 1))) > lambda) ++m;
        if (m > 0) meas += (box * std::pow(2.0, n_ * m) - box) * hn;
        return meas;
    }

    const std::vector<double>& values() const { return maxf_; }  // over the tree box

    template <class F>
    void for_closure_voxels(const Cell& cell, F&& f) const {
        const int free = n_ - grade_of(cell.axes);
        for (int m = 0; m < (1 << free); ++m) {
            VoxelIndex v = cell.anchor;
            int bit = 0;
            bool ok = true;
            for (int i = 0; i < n_; ++i) {
                if (cell.axes >> i & 1) continue;
                if (m >> bit++ & 1) v[i] -= 1;
                if (v[i] < 0 || v[i] >= c_->voxels_per_axis(i)) ok = false;
            }
            if (ok) f(v);
        }
    }

    std::size_t flat(const VoxelIndex& v, int s) const {
        std::size_t lin = 0, stride = 1;
        for (int i = 0; i < n_; ++i) {
            lin += std::size_t(v[i]) * stride;
            stride *= s;
        }
        return lin;
    }
    VoxelIndex unflat(std::size_t lin, int s) const {
        VoxelIndex v{};
        for (int i = 0; i < n_; ++i) {
            v[i] = int(lin % s);
            lin /= s;
        }
        return v;
    }

private:
    std::shared_ptr<const CubicalComplex> c_;
    double p_;
    int n_ = 0, J_ = 0, side_ = 1;
    VoxelIndex origin_{};
    double total_ = 0;
    std::vector<double> density_, maxf_;
    std::vector<std::vector<double>> sums_;
};

inline DyadicMaximal maximal_function(const Cochain& u, double p) { return DyadicMaximal(u, p); }

// |{M|u| > lambda}| lambda / ||u||_1, maximized over the given levels
inline double weak11_constant(const Cochain& u, const std::vector<double>& lambdas) {
    DyadicMaximal M(u, 1.0);
    double n1 = lp_norm(u, 1);
    double C = 0;
    for (double l : lambdas) C = std::max(C, M.level_set_measure(l) * l / n1);
    return C;
}

struct CZCube {
    VoxelIndex lo{};  // voxel index of the lowest corner
    int side = 1;     // in voxels
    double t = 0;     // side length
    bool fallback = false;
    std::vector<int> support;     // operator indices where eta_k != 0
    std::vector<double> eta;
    Eigen::SparseVector<double> w, v;
    double norm_u_p = 0, norm_w_q = 0, norm_v_q = 0;
    double ratio_w = 0, ratio_v = 0;
};

struct CZDecomposition {
    double alpha = 0, p = 1.5, q = 2;
    Eigen::VectorXd g;
    std::vector<CZCube> cubes;
    double exceptional_measure = 0;  // |E| over R^n, equal to the total Whitney cube measure
    double residual = 0;            // ||u - g - sum(B w_k + v_k/t_k)|| / ||u||, max norm
    double Cg = 0;                  // ||g||_inf / alpha
    double C_measure = 0;           // |E| alpha^p / ||u||_p^p
    double ratio_w_spread = 0, ratio_v_spread = 0;  // max/min over Whitney cubes with nonzero input
    int fallback_cubes = 0;                           // unit leftovers along the edge of E, excluded from the spreads
};

using PotentialMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// minimal-norm potential of a 1-cochain on a connected domain: pinned Neumann solve on the vertices
class NeumannPotential {
public:
    explicit NeumannPotential(const AssembledOperator& op) : op_(op) {
        if (op.bc != BoundaryCondition::tangential) throw std::invalid_argument("NeumannPotential needs the tangential operator");
        const SpMat& d0 = op.d[0];
        SpMat L = SpMat(d0.transpose()) * d0;
        const int m = int(L.rows());
        std::vector<Triplet> t;
        for (int k = 0; k < L.outerSize(); ++k)
            for (SpMat::InnerIterator it(L, k); it; ++it)
                if (it.row() > 0 && it.col() > 0) t.emplace_back(it.row() - 1, it.col() - 1, it.value());
        SpMat Lr(m - 1, m - 1);
        Lr.setFromTriplets(t.begin(), t.end());
        solver_.compute(Lr);
        if (solver_.info() != Eigen::Success) throw std::runtime_error("NeumannPotential: factorization failed (disconnected domain?)");
    }
    Eigen::VectorXd operator()(const Eigen::VectorXd& u) const {
        const int n0 = op_.grade_size(0), n1 = op_.grade_size(1);
        Eigen::VectorXd b = SpMat(op_.d[0].transpose()) * u.segment(op_.offsets[1], n1);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n0);
        x.tail(n0 - 1) = solver_.solve(b.tail(n0 - 1));
        x.array() -= x.mean();
        Eigen::VectorXd out = Eigen::VectorXd::Zero(u.size());
        out.head(n0) = x;
        return out;
    }

private:
    const AssembledOperator& op_;
    Eigen::SimplicialLDLT<SpMat> solver_;
};

namespace detail {

inline double lp_sparse(const Eigen::SparseVector<double>& v, double p, double mass) {
    double acc = 0;
    for (Eigen::SparseVector<double>::InnerIterator it(v); it; ++it) acc += std::pow(std::abs(it.value()), p);
    return std::pow(mass * acc, 1 / p);
}

inline double spread(const std::vector<double>& r) {
    if (r.empty()) return 1;
    auto [mn, mx] = std::minmax_element(r.begin(), r.end());
    return *mn > 0 ? *mx / *mn : std::numeric_limits<double>::infinity();
}

}  // namespace detail

// Calderon-Zygmund split u = g + sum_k (B w_k + v_k / t_k) at threshold alpha.
// E = {M(|u|^p) > alpha^p}; Whitney cubes are maximal dyadic Q with 2Q in E, leftovers become unit cubes;
// w_k = eta_k R(eta_k u), v_k = t_k (eta_k^2 u - B w_k)
inline CZDecomposition cz_decompose(const AssembledOperator& op, const Eigen::VectorXd& u, double alpha, const PotentialMap& R,
                                    const SpMat* B = nullptr, double p = 1.5, double q = 2.0, double range_tol = 1e-9) {
    if (!(alpha > 0)) throw std::invalid_argument("cz_decompose: alpha must be positive");
    if (op.bc != BoundaryCondition::tangential || op.size() != op.complex->total())
        throw std::invalid_argument("cz_decompose expects the tangential operator on all cells");
    const auto& c = *op.complex;
    const int n = c.dim();
    const double h = c.h(), hn = std::pow(h, n);
    SpMat dfull = op.d_full();
    const SpMat& Bop = B ? *B : dfull;
    Cochain uc(op.complex, u);
    double un = u.cwiseAbs().maxCoeff();
    {
        Eigen::VectorXd ru = dfull * R(u) - u;
        if (un > 0 && ru.cwiseAbs().maxCoeff() > range_tol * un) throw std::invalid_argument("cz_decompose: u is not in the range of d");
    }
    CZDecomposition out;
    out.alpha = alpha;
    out.p = p;
    out.q = q;
    DyadicMaximal M(uc, p);
    const double ap = std::pow(alpha, p);
    out.exceptional_measure = M.level_set_measure(ap);
    const int side = M.side();
    auto inE = [&](const VoxelIndex& v) { return M.value(v) > ap; };
    auto inE_tree = [&](const VoxelIndex& v) { return M.tree_value(v) > ap; };

    // selection runs in tree coordinates. E indicator on the tree box grown by side/2 on every face, with prefix sums for box queries
    const int pad = std::max(1, side / 2), ext = side + 2 * pad;
    std::size_t ecount = 1;
    for (int i = 0; i < n; ++i) ecount *= ext;
    std::vector<int> pre(ecount, 0);
    auto eflat = [&](const VoxelIndex& v) {
        std::size_t lin = 0, stride = 1;
        for (int i = 0; i < n; ++i) {
            lin += std::size_t(v[i] + pad) * stride;
            stride *= ext;
        }
        return lin;
    };
    for (std::size_t lin = 0; lin < ecount; ++lin) {
        VoxelIndex v{};
        std::size_t r = lin;
        for (int i = 0; i < n; ++i) {
            v[i] = int(r % ext) - pad;
            r /= ext;
        }
        pre[lin] = inE_tree(v) ? 0 : 1;  // count of non-E voxels
    }
    // n-dimensional inclusive prefix sums
    for (int i = 0; i < n; ++i) {
        std::size_t stride = 1;
        for (int k = 0; k < i; ++k) stride *= ext;
        for (std::size_t lin = 0; lin < ecount; ++lin)
            if ((lin / stride) % ext > 0) pre[lin] += pre[lin - stride];
    }
    auto box_clear = [&](VoxelIndex a, VoxelIndex b) {  // true iff no non-E voxel in [a, b)
        for (int i = 0; i < n; ++i) {
            a[i] = std::max(a[i], -pad);
            b[i] = std::min(b[i], side + pad);
            if (a[i] >= b[i]) return true;
        }
        long s = 0;
        for (int m = 0; m < (1 << n); ++m) {
            VoxelIndex v{};
            int sign = 1;
            bool skip = false;
            for (int i = 0; i < n; ++i) {
                if (m >> i & 1) {
                    v[i] = a[i] - 1;
                    sign = -sign;
                    if (v[i] < -pad) skip = true;
                } else {
                    v[i] = b[i] - 1;
                }
            }
            if (!skip) s += sign * pre[eflat(v)];
        }
        return s == 0;
    };

    // maximal dyadic cubes with 2Q in E, top-down
    std::vector<char> covered(std::size_t(std::pow(double(side), n)), 0);
    std::vector<std::pair<VoxelIndex, int>> chosen;
    auto mark = [&](const VoxelIndex& a, int s) {
        std::size_t cnt = std::size_t(std::pow(double(s), n));
        for (std::size_t k = 0; k < cnt; ++k) {
            VoxelIndex v = a;
            std::size_t r = k;
            for (int i = 0; i < n; ++i) {
                v[i] += int(r % s);
                r /= s;
            }
            covered[M.flat(v, side)] = 1;
        }
    };
    for (int j = M.levels(); j >= 0; --j) {
        const int s = 1 << j, ring = (s + 1) / 2;
        const int per = side >> j;
        std::size_t cnt = std::size_t(std::pow(double(per), n));
        for (std::size_t k = 0; k < cnt; ++k) {
            VoxelIndex a = M.unflat(k, per);
            for (int i = 0; i < n; ++i) a[i] *= s;
            if (covered[M.flat(a, side)]) continue;
            VoxelIndex lo = a, hi = a;
            for (int i = 0; i < n; ++i) {
                lo[i] -= ring;
                hi[i] += s + ring;
            }
            if (!box_clear(lo, hi)) continue;
            chosen.push_back({a, s});
            mark(a, s);
        }
    }
    std::vector<char> fallback_flag(chosen.size(), 0);
    for (std::size_t lin = 0; lin < covered.size(); ++lin) {
        if (covered[lin]) continue;
        VoxelIndex v = M.unflat(lin, side);
        if (!inE_tree(v)) continue;
        chosen.push_back({v, 1});
        fallback_flag.push_back(1);
        covered[lin] = 1;
    }
    for (auto& ch : chosen) ch.first = M.from_tree(ch.first);

    // which cells are E-cells: every incident grid voxel lies in E
    const int N = op.size();
    std::vector<char> ecell(N, 0);
    for (int l = 0; l <= n; ++l)
        for (int id = 0; id < c.count(l); ++id) {
            const Cell& cell = c.cell(l, id);
            bool all = true;
            const int free = n - grade_of(cell.axes);
            for (int m = 0; m < (1 << free) && all; ++m) {
                VoxelIndex v = cell.anchor;
                int bit = 0;
                for (int i = 0; i < n; ++i) {
                    if (cell.axes >> i & 1) continue;
                    if (m >> bit++ & 1) v[i] -= 1;
                }
                all = inE(v);
            }
            ecell[op.offsets[l] + id] = all;
        }

    // bump of each cube: 1 on the closed cube, linear decay over a ring of ceil(s/2) voxels
    std::vector<std::vector<std::pair<int, double>>> phi(chosen.size());
    std::vector<double> sumsq(N, 0.0);
    const auto& lo0 = c.domain().lo;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        auto [a, s] = chosen[k];
        const int ring = (s + 1) / 2;
        VoxelIndex va{}, vb{};
        bool any_omega = false;
        for (int i = 0; i < n; ++i) {
            va[i] = std::max(0, a[i] - ring);
            vb[i] = std::min(c.voxels_per_axis(i), a[i] + s + ring);  // vertex range [va, vb]
            if (va[i] > vb[i]) va[i] = vb[i];
        }
        // only cubes holding a domain voxel are materialized
        {
            std::size_t cnt = 1;
            VoxelIndex ca{}, cb{};
            for (int i = 0; i < n; ++i) {
                ca[i] = std::max(0, a[i]);
                cb[i] = std::min(c.voxels_per_axis(i), a[i] + s);
                if (ca[i] >= cb[i]) cnt = 0;
                else cnt *= cb[i] - ca[i];
            }
            for (std::size_t m = 0; m < cnt && !any_omega; ++m) {
                VoxelIndex v = ca;
                std::size_t r = m;
                for (int i = 0; i < n; ++i) {
                    v[i] += int(r % (cb[i] - ca[i]));
                    r /= (cb[i] - ca[i]);
                }
                any_omega = c.voxel_in(v);
            }
        }
        if (!any_omega) continue;
        std::size_t cnt = 1;
        for (int i = 0; i < n; ++i) cnt *= (vb[i] - va[i] + 1);
        for (std::size_t m = 0; m < cnt; ++m) {
            VoxelIndex vert = va;
            std::size_t r = m;
            for (int i = 0; i < n; ++i) {
                vert[i] += int(r % (vb[i] - va[i] + 1));
                r /= (vb[i] - va[i] + 1);
            }
            for (Blade S = 0; S <= full_blade(n); ++S) {
                int id = c.find(vert, S);
                if (id < 0) continue;
                int l = grade_of(S);
                int gi = op.offsets[l] + id;
                if (!ecell[gi]) continue;
                auto x = c.barycenter(l, id);
                double val = 1;
                for (int i = 0; i < n; ++i) {
                    double clo = lo0[i] + a[i] * h, chi = lo0[i] + (a[i] + s) * h;
                    double dist = std::max({0.0, clo - x[i], x[i] - chi});
                    val *= std::clamp(1 - dist / (ring * h), 0.0, 1.0);
                }
                if (val <= 0) continue;
                phi[k].push_back({gi, val});
                sumsq[gi] += val * val;
            }
        }
    }

    out.g = u;
    for (int i = 0; i < N; ++i)
        if (ecell[i]) out.g[i] = 0;
    Eigen::VectorXd recon = out.g;
    const double sexp = n * (1 / p - 1 / q) - 1;
    std::vector<double> rw, rv;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        if (phi[k].empty()) continue;
        CZCube cube;
        cube.lo = chosen[k].first;
        cube.side = chosen[k].second;
        cube.t = cube.side * h;
        cube.fallback = fallback_flag[k];
        Eigen::VectorXd eu = Eigen::VectorXd::Zero(N), eta = Eigen::VectorXd::Zero(N);
        double up = 0;
        for (auto [i, val] : phi[k]) {
            double e = val / std::sqrt(sumsq[i]);
            cube.support.push_back(i);
            cube.eta.push_back(e);
            eta[i] = e;
            eu[i] = e * u[i];
            up += std::pow(std::abs(u[i]), p);
        }
        cube.norm_u_p = std::pow(hn * up, 1 / p);
        Eigen::VectorXd w = eta.cwiseProduct(R(eu));
        Eigen::VectorXd Bw = Bop * w;
        Eigen::VectorXd v = cube.t * (eta.cwiseProduct(eu) - Bw);
        recon += Bw + v / cube.t;
        cube.w = w.sparseView(0.0);
        cube.v = v.sparseView(0.0);
        cube.norm_w_q = detail::lp_sparse(cube.w, q, hn);
        cube.norm_v_q = detail::lp_sparse(cube.v, q, hn);
        if (cube.norm_u_p > 0) {
            cube.ratio_w = cube.norm_w_q * std::pow(cube.t, sexp) / cube.norm_u_p;
            cube.ratio_v = cube.norm_v_q * std::pow(cube.t, sexp) / cube.norm_u_p;
            if (!cube.fallback) {
                rw.push_back(cube.ratio_w);
                rv.push_back(cube.ratio_v);
            }
        }
        out.fallback_cubes += cube.fallback;
        out.cubes.push_back(std::move(cube));
    }
    out.residual = un > 0 ? (u - recon).cwiseAbs().maxCoeff() / un : 0.0;
    out.Cg = out.g.size() ? out.g.cwiseAbs().maxCoeff() / alpha : 0.0;
    double upp = std::pow(lp_norm(uc, p), p);
    out.C_measure = upp > 0 ? out.exceptional_measure * ap / upp : 0.0;
    out.ratio_w_spread = detail::spread(rw);
    out.ratio_v_spread = detail::spread(rv);
    return out;
}

inline nlohmann::json cz_report(const CZDecomposition& cz) {
    nlohmann::json cubes = nlohmann::json::array();
    for (const auto& k : cz.cubes) {
        std::vector<int> lo(k.lo.begin(), k.lo.end());
        cubes.push_back({{"lo_voxel", lo},
                         {"side_voxels", k.side},
                         {"t", k.t},
                         {"fallback", k.fallback},
                         {"norm_u_p", k.norm_u_p},
                         {"norm_w_q", k.norm_w_q},
                         {"norm_v_q", k.norm_v_q},
                         {"ratio_w", k.ratio_w},
                         {"ratio_v", k.ratio_v}});
    }
    return {{"alpha", cz.alpha},         {"p", cz.p},
            {"q", cz.q},                 {"cube_count", cz.cubes.size()},
            {"exceptional_measure", cz.exceptional_measure},
            {"residual", cz.residual},   {"C_g", cz.Cg},
            {"C_measure", cz.C_measure}, {"ratio_w_spread", cz.ratio_w_spread},
            {"ratio_v_spread", cz.ratio_v_spread}, {"fallback_cubes", cz.fallback_cubes},
            {"cubes", cubes}};
}

}  // namespace hdx
