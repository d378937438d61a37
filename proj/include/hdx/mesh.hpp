#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include "domains.hpp"
#include "exterior.hpp"
#include "polyform.hpp"

namespace hdx {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr int kMaxMeshDim = 4;

struct Cell {
    std::array<int, kMaxMeshDim> anchor{};  // vertex-grid index of the lowest corner
    Blade axes = 0;
};

class CubicalComplex {
public:
    CubicalComplex(const DomainSpec& dom, double h, std::size_t cell_cap = 200000) : dom_(dom), h_(h) {
        if (!(h > 0)) throw std::invalid_argument("mesh spacing must be positive");
        n_ = dom.dim;
        if (n_ < 1 || n_ > kMaxMeshDim) throw std::invalid_argument("mesh dimension out of range");
        std::size_t nvox = 1;
        for (int i = 0; i < n_; ++i) {
            double len = dom.hi[i] - dom.lo[i];
            int m = int(std::llround(len / h));
            if (m < 1 || std::abs(m * h - len) > 1e-9 * len) throw std::invalid_argument("h must divide the bounding box of " + dom.name);
            nv_[i] = m;
            nvox *= m;
            if (nvox > 50 * cell_cap) throw std::length_error("cell cap exceeded");
        }
        origin_ = dom.lo;
        vox_.assign(nvox, 0);
        std::size_t count = 0;
        std::array<int, kMaxMeshDim> v{};
        for (std::size_t lin = 0; lin < nvox; ++lin) {
            unflatten_vox(lin, v);
            double c[kMaxMeshDim];
            for (int i = 0; i < n_; ++i) c[i] = origin_[i] + (v[i] + 0.5) * h_;
            if (dom.contains(c)) {
                vox_[lin] = 1;
                ++count;
            }
        }
        if (count == 0) throw std::invalid_argument("empty voxel set");
        nvox_in_ = count;

        // vertex grid has nv+1 points per axis; slot = vertex index * 2^n + axes
        std::size_t nvert = 1;
        for (int i = 0; i < n_; ++i) nvert *= std::size_t(nv_[i] + 1);
        slot_.assign(nvert << n_, -1);
        cells_.assign(n_ + 1, {});
        std::size_t total = 0;
        std::array<int, kMaxMeshDim> a{};
        for (std::size_t lv = 0; lv < nvert; ++lv) {
            unflatten_vert(lv, a);
            for (Blade s = 0; s <= full_blade(n_); ++s) {
                bool ok = true;
                for (int i = 0; i < n_ && ok; ++i)
                    if ((s >> i & 1) && a[i] >= nv_[i]) ok = false;
                if (!ok || !touches_voxel(a, s)) continue;
                int l = grade_of(s);
                slot_[(lv << n_) | s] = int(cells_[l].size());
                cells_[l].push_back(Cell{a, s});
                if (++total > cell_cap) throw std::length_error("cell cap exceeded");
            }
        }
        boundary_.assign(n_ + 1, {});
        for (int l = 0; l <= n_; ++l) {
            boundary_[l].resize(cells_[l].size());
            for (std::size_t c = 0; c < cells_[l].size(); ++c) boundary_[l][c] = !all_voxels_present(cells_[l][c]);
        }
        offsets_.assign(n_ + 2, 0);
        for (int l = 0; l <= n_; ++l) offsets_[l + 1] = offsets_[l] + int(cells_[l].size());
    }

    const DomainSpec& domain() const { return dom_; }
    int dim() const { return n_; }
    double h() const { return h_; }
    int count(int l) const { return int(cells_.at(l).size()); }
    int total() const { return offsets_.back(); }
    const std::vector<int>& offsets() const { return offsets_; }
    const Cell& cell(int l, int id) const { return cells_.at(l).at(id); }
    const std::vector<Cell>& cells(int l) const { return cells_.at(l); }
    bool on_boundary(int l, int id) const { return boundary_.at(l).at(id); }
    int voxels_per_axis(int i) const { return nv_[i]; }
    std::size_t voxel_count() const { return nvox_in_; }
    double mass() const { return std::pow(h_, n_); }

    long euler_characteristic() const {
        long chi = 0;
        for (int l = 0; l <= n_; ++l) chi += (l & 1) ? -count(l) : count(l);
        return chi;
    }

    // cell id of (anchor, axes) or -1
    int find(const std::array<int, kMaxMeshDim>& a, Blade s) const {
        for (int i = 0; i < n_; ++i)
            if (a[i] < 0 || a[i] > nv_[i]) return -1;
        return slot_[(flatten_vert(a) << n_) | s];
    }

    bool voxel_in(const std::array<int, kMaxMeshDim>& v) const {
        for (int i = 0; i < n_; ++i)
            if (v[i] < 0 || v[i] >= nv_[i]) return false;
        return vox_[flatten_vox(v)];
    }

    std::vector<double> barycenter(int l, int id) const {
        const Cell& c = cell(l, id);
        std::vector<double> x(n_);
        for (int i = 0; i < n_; ++i) x[i] = origin_[i] + (c.anchor[i] + ((c.axes >> i & 1) ? 0.5 : 0.0)) * h_;
        return x;
    }

    // integer coboundary d_l : C^l -> C^{l+1}, entries in {-1,0,1}
    SpMat coboundary(int l) const {
        if (l < 0 || l >= n_) throw std::out_of_range("coboundary grade out of range");
        std::vector<Triplet> trip;
        for (int r = 0; r < count(l + 1); ++r) {
            const Cell& c = cells_[l + 1][r];
            for (int j : blade_indices(c.axes)) {
                Blade face = c.axes & ~(Blade(1) << j);
                double sg = interior_sign(j, c.axes);
                auto hi = c.anchor;
                ++hi[j];
                int lo_id = find(c.anchor, face), hi_id = find(hi, face);
                if (lo_id < 0 || hi_id < 0) throw std::logic_error("incomplete cell closure");
                trip.emplace_back(r, hi_id, sg);
                trip.emplace_back(r, lo_id, -sg);
            }
        }
        SpMat d(count(l + 1), count(l));
        d.setFromTriplets(trip.begin(), trip.end());
        return d;
    }

    nlohmann::json summary() const {
        nlohmann::json j;
        j["domain"] = dom_.name;
        j["dim"] = n_;
        j["h"] = h_;
        j["voxels"] = nvox_in_;
        std::vector<int> counts, bcounts;
        for (int l = 0; l <= n_; ++l) {
            counts.push_back(count(l));
            int b = 0;
            for (bool f : boundary_[l]) b += f;
            bcounts.push_back(b);
        }
        j["cell_counts"] = counts;
        j["boundary_cell_counts"] = bcounts;
        j["total_cells"] = total();
        j["euler_characteristic"] = euler_characteristic();
        return j;
    }

private:
    bool touches_voxel(const std::array<int, kMaxMeshDim>& a, Blade s) const {
        bool any = false;
        for_incident_voxels(a, s, [&](const std::array<int, kMaxMeshDim>& v) { any = any || voxel_in(v); });
        return any;
    }
    bool all_voxels_present(const Cell& c) const {
        bool all = true;
        for_incident_voxels(c.anchor, c.axes, [&](const std::array<int, kMaxMeshDim>& v) { all = all && voxel_in(v); });
        return all;
    }
    template <class F>
    void for_incident_voxels(const std::array<int, kMaxMeshDim>& a, Blade s, F&& f) const {
        Blade free = full_blade(n_) & ~s;
        for (Blade sub = free;; sub = (sub - 1) & free) {
            auto v = a;
            for (int i = 0; i < n_; ++i)
                if (sub >> i & 1) --v[i];
            f(v);
            if (sub == 0) break;
        }
    }
    std::size_t flatten_vox(const std::array<int, kMaxMeshDim>& v) const {
        std::size_t lin = 0;
        for (int i = n_ - 1; i >= 0; --i) lin = lin * nv_[i] + v[i];
        return lin;
    }
    void unflatten_vox(std::size_t lin, std::array<int, kMaxMeshDim>& v) const {
        for (int i = 0; i < n_; ++i) {
            v[i] = int(lin % nv_[i]);
            lin /= nv_[i];
        }
    }
    std::size_t flatten_vert(const std::array<int, kMaxMeshDim>& a) const {
        std::size_t lin = 0;
        for (int i = n_ - 1; i >= 0; --i) lin = lin * (nv_[i] + 1) + a[i];
        return lin;
    }
    void unflatten_vert(std::size_t lin, std::array<int, kMaxMeshDim>& a) const {
        for (int i = 0; i < n_; ++i) {
            a[i] = int(lin % (nv_[i] + 1));
            lin /= (nv_[i] + 1);
        }
    }

    DomainSpec dom_;
    double h_;
    int n_ = 0;
    std::array<int, kMaxMeshDim> nv_{};
    std::vector<double> origin_;
    std::vector<char> vox_;
    std::size_t nvox_in_ = 0;
    std::vector<int> slot_;
    std::vector<std::vector<Cell>> cells_;
    std::vector<std::vector<char>> boundary_;
    std::vector<int> offsets_;
};

inline std::shared_ptr<const CubicalComplex> build_complex(const std::string& name, double h,
                                                           const nlohmann::json& params = nlohmann::json::object(),
                                                           std::size_t cap = 200000) {
    return std::make_shared<const CubicalComplex>(make_domain(name, params), h, cap);
}

// graded cochain: one scalar per cell, grades stacked by the complex offsets
struct Cochain {
    std::shared_ptr<const CubicalComplex> complex;
    Eigen::VectorXd values;

    explicit Cochain(std::shared_ptr<const CubicalComplex> c) : complex(std::move(c)), values(Eigen::VectorXd::Zero(complex->total())) {}
    Cochain(std::shared_ptr<const CubicalComplex> c, Eigen::VectorXd v) : complex(std::move(c)), values(std::move(v)) {
        if (values.size() != complex->total()) throw std::invalid_argument("cochain length does not match cell count");
    }
    auto grade(int l) { return values.segment(complex->offsets()[l], complex->count(l)); }
    auto grade(int l) const { return values.segment(complex->offsets()[l], complex->count(l)); }
};

template <class Vec>
double lp_norm_values(const Vec& v, double p, double mass) {
    if (!(p >= 1)) throw std::invalid_argument("p must be >= 1");
    if (std::isinf(p)) return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
    double acc = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]), p);
    return std::pow(mass * acc, 1.0 / p);
}

inline double lp_norm(const Cochain& u, double p) { return lp_norm_values(u.values, p, u.complex->mass()); }

// collocation of the S-component at the barycenter of each cell with axis set S
inline Cochain sample(const std::shared_ptr<const CubicalComplex>& c, const PolyForm& f) {
    if (f.dim() != c->dim()) throw std::invalid_argument("sample: dimension mismatch");
    Cochain u(c);
    for (int l = 0; l <= c->dim(); ++l)
        for (int id = 0; id < c->count(l); ++id) {
            auto x = c->barycenter(l, id);
            u.values[c->offsets()[l] + id] = f[c->cell(l, id).axes].eval(x.data());
        }
    return u;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_cochain_csv(std::ostream& os, const Cochain& u) {
    os << "cell_id,grade,value\n";
    const auto& c = *u.complex;
    for (int l = 0; l <= c.dim(); ++l)
        for (int id = 0; id < c.count(l); ++id) os << id << "," << l << "," << fmt17(u.values[c.offsets()[l] + id]) << "\n";
}

}  // namespace hdx
