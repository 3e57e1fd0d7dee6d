#pragma once

#include <Eigen/Dense>
#include <complex>

#include "qmcr/error.hpp"
#include "qmcr/tolerances.hpp"

namespace qmcr {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using Index = Eigen::Index;

// Kronecker product with (kron(A,B))(i*rB+k, j*cB+l) = A(i,j) B(k,l).
CMat kron(const CMat& a, const CMat& b);

// Row-major vectorization: vec(A)(i*cols + j) = A(i,j), so vec(A X B^T) = kron(A,B) vec(X).
CVec vec(const CMat& a);
CMat unvec(const CVec& v, Index rows, Index cols);

// Dense solve A X = B. Reports the reciprocal condition estimate through rcond
// when requested; refuses matrices with condition estimate above tols().cond_limit.
CMat solve(const CMat& a, const CMat& b, double* rcond = nullptr);

// Same solve without the condition gate, for resolvent evaluations that are
// deliberately pushed toward a singular limit.
CMat solve_unchecked(const CMat& a, const CMat& b);

struct EigResult {
  CVec values;
  CMat vectors;  // columns
};

// Full nonsymmetric spectrum (Schur-form based).
EigResult eig(const CMat& a);

// Principal matrix square root: spectrum of the result in the closed right
// half-plane, zero eigenvalues map to zero, principal_sqrt(I) = I.
CMat principal_sqrt(const CMat& m);

// Sum of singular values.
double trace_norm(const CMat& m);

double min_singular_value(const CMat& m);

inline CMat identity(Index n) { return CMat::Identity(n, n); }
inline CMat zeros(Index r, Index c) { return CMat::Zero(r, c); }

inline bool is_hermitian(const CMat& m, double tol) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

// Orthonormal basis of the column span, rank-revealing (SVD with cutoff).
CMat orthonormal_span(const CMat& columns, double cutoff = tols().rank_cutoff);

}  // namespace qmcr
