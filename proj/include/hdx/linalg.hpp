#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <lapacke.h>

namespace hdx {

using cdouble = std::complex<double>;
using MatrixXc = Eigen::MatrixXcd;
using VectorXc = Eigen::VectorXcd;

struct SymEigen {
    Eigen::VectorXd values;  // ascending
    Eigen::MatrixXd vectors;
};

inline SymEigen sym_eigen(const Eigen::MatrixXd& A, bool want_vectors = true) {
    if (A.rows() != A.cols()) throw std::invalid_argument("sym_eigen: matrix not square");
    SymEigen out;
    const lapack_int n = lapack_int(A.rows());
    out.values.resize(n);
    if (n == 0) return out;
    Eigen::MatrixXd work = A;
    lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', 'U', n, work.data(), n, out.values.data());
    if (info != 0) throw std::runtime_error("dsyevd failed, info=" + std::to_string(info));
    if (want_vectors) out.vectors = std::move(work);
    return out;
}

struct ThinSVD {
    Eigen::MatrixXd U;
    Eigen::VectorXd S;  // descending
    Eigen::MatrixXd V;
};

inline ThinSVD thin_svd(const Eigen::MatrixXd& A) {
    ThinSVD out;
    const lapack_int m = lapack_int(A.rows()), n = lapack_int(A.cols());
    const lapack_int k = std::min(m, n);
    out.S.resize(k);
    out.U.resize(m, k);
    Eigen::MatrixXd vt(k, n);
    if (k == 0) {
        out.V.resize(n, 0);
        return out;
    }
    Eigen::MatrixXd work = A;
    lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', m, n, work.data(), m, out.S.data(), out.U.data(), m, vt.data(), k);
    if (info != 0) throw std::runtime_error("dgesdd failed, info=" + std::to_string(info));
    out.V = vt.transpose();
    return out;
}

inline VectorXc general_eigenvalues(const MatrixXc& A) {
    const lapack_int n = lapack_int(A.rows());
    VectorXc w(n);
    if (n == 0) return w;
    MatrixXc work = A;
    lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, reinterpret_cast<lapack_complex_double*>(work.data()), n,
                                    reinterpret_cast<lapack_complex_double*>(w.data()), nullptr, n, nullptr, n);
    if (info != 0) throw std::runtime_error("zgeev failed, info=" + std::to_string(info));
    return w;
}

// singular values of a complex matrix, descending
inline Eigen::VectorXd complex_singular_values(const MatrixXc& A) {
    const lapack_int m = lapack_int(A.rows()), n = lapack_int(A.cols());
    const lapack_int k = std::min(m, n);
    Eigen::VectorXd s(k);
    if (k == 0) return s;
    MatrixXc work = A;
    lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', m, n, reinterpret_cast<lapack_complex_double*>(work.data()), m, s.data(), nullptr, 1,
                                     nullptr, 1);
    if (info != 0) throw std::runtime_error("zgesdd failed, info=" + std::to_string(info));
    return s;
}

inline double opnorm2(const Eigen::MatrixXd& A) {
    if (A.size() == 0) return 0;
    return thin_svd(A).S[0];
}

}  // namespace hdx
