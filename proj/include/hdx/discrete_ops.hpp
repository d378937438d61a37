#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include "linalg.hpp"
#include "mesh.hpp"

namespace hdx {

using SpMatC = Eigen::SparseMatrix<cdouble>;

enum class BoundaryCondition { tangential, normal };

inline std::string to_string(BoundaryCondition bc) { return bc == BoundaryCondition::tangential ? "tangential" : "normal"; }

inline BoundaryCondition parse_bc(const std::string& s) {
    if (s == "tangential") return BoundaryCondition::tangential;
    if (s == "normal") return BoundaryCondition::normal;
    throw std::invalid_argument("bc must be tangential or normal");
}

struct AssembledOperator {
    std::shared_ptr<const CubicalComplex> complex;
    BoundaryCondition bc = BoundaryCondition::tangential;
    SpMat D;                       // real operator (unperturbed)
    std::optional<SpMatC> Dc;      // complex operator (perturbed)
    std::vector<SpMat> d;          // d_h grade blocks on the kept cells, d[l]: grade l -> l+1
    std::vector<int> offsets;      // grading offsets in the operator's index space
    std::vector<std::vector<int>> cells;  // operator index -> cell id, per grade
    double mass = 1;               // uniform diagonal mass h^n

    int size() const { return offsets.back(); }
    int dim() const { return complex->dim(); }
    int grade_size(int l) const { return offsets[l + 1] - offsets[l]; }
    bool is_complex() const { return Dc.has_value(); }
    int grade_of_index(int i) const {
        for (int l = 0; l + 1 < int(offsets.size()); ++l)
            if (i < offsets[l + 1]) return l;
        throw std::out_of_range("index out of range");
    }

    // full d_h and delta_h as N x N matrices
    SpMat d_full() const {
        std::vector<Triplet> t;
        for (int l = 0; l < int(d.size()); ++l)
            for (int k = 0; k < d[l].outerSize(); ++k)
                for (SpMat::InnerIterator it(d[l], k); it; ++it) t.emplace_back(offsets[l + 1] + it.row(), offsets[l] + it.col(), it.value());
        SpMat m(size(), size());
        m.setFromTriplets(t.begin(), t.end());
        return m;
    }
    SpMat delta_full() const { return SpMat(d_full().transpose()); }

    Eigen::MatrixXd dense() const { return Eigen::MatrixXd(D); }

    // spectral cache for the self-adjoint case
    mutable std::optional<SymEigen> spectrum;
    static constexpr int kDenseCap = 6000;
    const SymEigen& eigen(bool vectors = true) const {
        if (is_complex()) throw std::logic_error("spectral cache only for self-adjoint operators");
        if (spectrum && (!vectors || spectrum->vectors.size() > 0)) return *spectrum;
        if (size() > kDenseCap) throw std::length_error("dense eigendecomposition limited to N <= 6000");
        spectrum = sym_eigen(dense(), vectors);
        return *spectrum;
    }
};

namespace detail {

inline AssembledOperator assemble_common(const std::shared_ptr<const CubicalComplex>& c, BoundaryCondition bc) {
    AssembledOperator op;
    op.complex = c;
    op.bc = bc;
    op.mass = c->mass();
    const int n = c->dim();
    std::vector<std::vector<int>> local(n + 1);  // cell id -> operator-local index or -1
    op.cells.assign(n + 1, {});
    op.offsets.assign(n + 2, 0);
    for (int l = 0; l <= n; ++l) {
        local[l].assign(c->count(l), -1);
        for (int id = 0; id < c->count(l); ++id) {
            if (bc == BoundaryCondition::normal && c->on_boundary(l, id)) continue;
            local[l][id] = int(op.cells[l].size());
            op.cells[l].push_back(id);
        }
        op.offsets[l + 1] = op.offsets[l] + int(op.cells[l].size());
    }
    const double inv_h = 1.0 / c->h();
    for (int l = 0; l < n; ++l) {
        SpMat full = c->coboundary(l);
        std::vector<Triplet> t;
        for (int k = 0; k < full.outerSize(); ++k)
            for (SpMat::InnerIterator it(full, k); it; ++it) {
                int r = local[l + 1][it.row()], q = local[l][it.col()];
                if (r < 0 || q < 0) continue;
                t.emplace_back(r, q, it.value() * inv_h);
            }
        SpMat dl(op.cells[l + 1].size(), op.cells[l].size());
        dl.setFromTriplets(t.begin(), t.end());
        op.d.push_back(std::move(dl));
    }
    return op;
}

}  // namespace detail

// tangential: d_h on all cells and its mass adjoint; normal: zero extension keeps interior cells only
inline AssembledOperator assemble_dirac(const std::shared_ptr<const CubicalComplex>& c, BoundaryCondition bc = BoundaryCondition::tangential) {
    AssembledOperator op = detail::assemble_common(c, bc);
    SpMat d = op.d_full();
    op.D = d + SpMat(d.transpose());
    return op;
}

inline SpMat hodge_laplacian(const AssembledOperator& D) {
    if (D.is_complex()) throw std::invalid_argument("hodge_laplacian expects the unperturbed operator");
    return SpMat(D.D * D.D);
}

struct CoefficientField {
    Eigen::VectorXcd b;  // diagonal of B per operator index (one Lambda-component per cell)
    double kappa = 0;

    double measured_coercivity() const {
        double m = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < b.size(); ++i) m = std::min(m, b[i].real());
        return m;
    }
};

inline CoefficientField constant_coefficient(const AssembledOperator& op, cdouble value) {
    CoefficientField f;
    f.b = Eigen::VectorXcd::Constant(op.size(), value);
    f.kappa = value.real();
    return f;
}

// smooth random diagonal field: each blade component gets its own random Fourier modes,
// Re B in [kappa, kappa + 1.5], Im B in [-1, 1]
inline CoefficientField random_coefficient_field(const AssembledOperator& op, unsigned seed, double kappa = 0.5, int modes = 3) {
    const auto& c = *op.complex;
    const int n = c.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    struct Mode {
        std::vector<double> k;
        double phase;
    };
    auto draw = [&]() {
        std::vector<Mode> ms(modes);
        for (auto& m : ms) {
            m.k.resize(n);
            for (auto& v : m.k) v = 2 * M_PI * (U(rng) * 2 - 1);
            m.phase = 2 * M_PI * U(rng);
        }
        return ms;
    };
    std::vector<std::vector<Mode>> re(std::size_t(1) << n), im(std::size_t(1) << n);
    for (Blade s = 0; s < re.size(); ++s) {
        re[s] = draw();
        im[s] = draw();
    }
    auto eval = [&](const std::vector<Mode>& ms, const std::vector<double>& x) {
        double acc = 0;
        for (const auto& m : ms) {
            double a = m.phase;
            for (int i = 0; i < n; ++i) a += m.k[i] * x[i];
            acc += std::sin(a);
        }
        return acc / ms.size();
    };
    CoefficientField f;
    f.kappa = kappa;
    f.b.resize(op.size());
    for (int l = 0; l <= n; ++l)
        for (int i = 0; i < int(op.cells[l].size()); ++i) {
            int id = op.cells[l][i];
            Blade s = c.cell(l, id).axes;
            auto x = c.barycenter(l, id);
            f.b[op.offsets[l] + i] = cdouble(kappa + 0.75 * (1 + eval(re[s], x)), eval(im[s], x));
        }
    return f;
}

// d_h + B^{-1} delta_h B
inline AssembledOperator assemble_perturbed(const std::shared_ptr<const CubicalComplex>& c, const CoefficientField& B) {
    AssembledOperator op = detail::assemble_common(c, BoundaryCondition::tangential);
    if (B.b.size() != op.size()) throw std::invalid_argument("coefficient field size mismatch");
    for (Eigen::Index i = 0; i < B.b.size(); ++i)
        if (std::abs(B.b[i]) == 0.0) throw std::domain_error("singular coefficient on a cell");
    SpMat d = op.d_full();
    SpMatC dc = d.cast<cdouble>();
    SpMatC delta = SpMatC(dc.transpose());
    Eigen::VectorXcd binv = B.b.cwiseInverse();
    SpMatC pert = binv.asDiagonal() * delta * B.b.asDiagonal();
    op.Dc = SpMatC(dc + pert);
    op.D = d + SpMat(d.transpose());
    return op;
}

inline void export_matrix_market(std::ostream& os, const AssembledOperator& op) {
    if (op.is_complex()) {
        const SpMatC& m = *op.Dc;
        os << "%%MatrixMarket matrix coordinate complex general\n" << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
        for (int k = 0; k < m.outerSize(); ++k)
            for (SpMatC::InnerIterator it(m, k); it; ++it)
                os << it.row() + 1 << " " << it.col() + 1 << " " << fmt17(it.value().real()) << " " << fmt17(it.value().imag()) << "\n";
    } else {
        const SpMat& m = op.D;
        os << "%%MatrixMarket matrix coordinate real general\n" << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
        for (int k = 0; k < m.outerSize(); ++k)
            for (SpMat::InnerIterator it(m, k); it; ++it) os << it.row() + 1 << " " << it.col() + 1 << " " << fmt17(it.value()) << "\n";
    }
}

inline nlohmann::json operator_sidecar(const AssembledOperator& op) {
    return {{"bc", to_string(op.bc)},
            {"h", op.complex->h()},
            {"domain", op.complex->domain().name},
            {"dim", op.dim()},
            {"size", op.size()},
            {"grading_offsets", op.offsets},
            {"mass", op.mass},
            {"perturbed", op.is_complex()}};
}

}  // namespace hdx
