#include "qmcr/densela.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>

namespace qmcr {

CMat kron(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CVec vec(const CMat& a) {
  CVec v(a.rows() * a.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) v(i * a.cols() + j) = a(i, j);
  return v;
}

CMat unvec(const CVec& v, Index rows, Index cols) {
  if (v.size() != rows * cols)
    fail(Errc::DimensionMismatch, "unvec: vector length " + std::to_string(v.size()) +
                                      " != " + std::to_string(rows) + "x" + std::to_string(cols));
  CMat a(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) a(i, j) = v(i * cols + j);
  return a;
}

CMat solve(const CMat& a, const CMat& b, double* rcond) {
  if (a.rows() != a.cols()) fail(Errc::DimensionMismatch, "solve: A must be square");
  if (a.rows() != b.rows()) fail(Errc::DimensionMismatch, "solve: A and B row mismatch");
  Eigen::PartialPivLU<CMat> lu(a);
  // rcond() is unreliable near singularity; fold in the smallest-pivot ratio
  double minp = INFINITY, maxp = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    double p = std::abs(lu.matrixLU()(i, i));
    minp = std::min(minp, p);
    maxp = std::max(maxp, p);
  }
  double rc = maxp > 0 ? minp / maxp : 0.0;
  double est = lu.rcond();
  if (std::isfinite(est) && est > 0 && est <= 1.0) rc = std::min(rc, est);
  if (rcond) *rcond = rc;
  if (!(rc > 0.0) || 1.0 / rc > tols().cond_limit)
    fail(Errc::SingularMatrix,
         "condition estimate " + std::to_string(rc > 0 ? 1.0 / rc : INFINITY) + " exceeds limit");
  return lu.solve(b);
}

CMat solve_unchecked(const CMat& a, const CMat& b) {
  return Eigen::PartialPivLU<CMat>(a).solve(b);
}

EigResult eig(const CMat& a) {
  if (a.rows() != a.cols()) fail(Errc::DimensionMismatch, "eig: matrix must be square");
  Eigen::ComplexEigenSolver<CMat> es(a, /*computeEigenvectors=*/true);
  if (es.info() != Eigen::Success) fail(Errc::NoConvergence, "eigensolver did not converge");
  return {es.eigenvalues(), es.eigenvectors()};
}

namespace {

// Denman-Beavers with determinant scaling; expects a nonsingular input.
CMat denman_beavers_sqrt(const CMat& m) {
  const Index n = m.rows();
  CMat y = m, z = identity(n);
  for (int it = 0; it < 120; ++it) {
    Eigen::PartialPivLU<CMat> luy(y), luz(z);
    // log|det| from the LU diagonal keeps the scaling overflow-free
    double logdet = 0.0;
    for (Index i = 0; i < n; ++i)
      logdet += std::log(std::abs(luy.matrixLU()(i, i))) + std::log(std::abs(luz.matrixLU()(i, i)));
    double mu = std::exp(-logdet / (2.0 * static_cast<double>(n)));
    CMat yinv = luy.solve(identity(n));
    CMat zinv = luz.solve(identity(n));
    CMat ynext = 0.5 * (mu * y + (1.0 / mu) * zinv);
    CMat znext = 0.5 * (mu * z + (1.0 / mu) * yinv);
    double step = (ynext - y).norm();
    y = ynext;
    z = znext;
    if (step <= 1e-14 * std::max(1.0, y.norm())) break;
  }
  return y;
}

}  // namespace

CMat principal_sqrt(const CMat& m) {
  if (m.rows() != m.cols()) fail(Errc::DimensionMismatch, "principal_sqrt: matrix must be square");
  const Index n = m.rows();
  if (n == 0) return m;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());

  if (is_hermitian(m, tols().hermitian_check)) {
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (m + m.adjoint()));
    RVec ev = es.eigenvalues();
    CVec root(n);
    for (Index i = 0; i < n; ++i) {
      if (ev(i) < -tols().real_axis * scale)
        fail(Errc::BranchCut, "eigenvalue on the negative real axis");
      root(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().adjoint();
  }

  EigResult e = eig(m);
  for (Index i = 0; i < n; ++i) {
    const Complex lam = e.values(i);
    if (lam.real() < -tols().real_axis * scale && std::abs(lam.imag()) <= tols().real_axis * scale)
      fail(Errc::BranchCut, "eigenvalue on the negative real axis");
  }

  Eigen::JacobiSVD<CMat> svd(e.vectors);
  const double smin = svd.singularValues()(n - 1);
  const double cond = smin > 0 ? svd.singularValues()(0) / smin : INFINITY;
  if (cond < tols().sqrt_eigvec_cond) {
    CVec root(n);
    for (Index i = 0; i < n; ++i) {
      const Complex lam = e.values(i);
      root(i) = std::abs(lam) <= tols().real_axis * scale ? Complex(0, 0) : std::sqrt(lam);
    }
    return e.vectors * root.asDiagonal() * solve_unchecked(e.vectors, identity(n));
  }

  double minabs = e.values.cwiseAbs().minCoeff();
  if (minabs <= tols().real_axis * scale)
    fail(Errc::NoConvergence, "principal_sqrt: singular non-diagonalizable input");
  CMat s = denman_beavers_sqrt(m);
  if ((s * s - m).norm() > tols().sqrt_residual * std::max(1.0, m.norm()) * 1e2)
    fail(Errc::NoConvergence, "principal_sqrt: iteration residual too large");
  return s;
}

double trace_norm(const CMat& m) {
  if (m.rows() != m.cols()) fail(Errc::DimensionMismatch, "trace_norm: matrix must be square");
  if (m.rows() == 0) return 0.0;
  return Eigen::JacobiSVD<CMat>(m).singularValues().sum();
}

double min_singular_value(const CMat& m) {
  if (m.rows() == 0) return 0.0;
  return Eigen::JacobiSVD<CMat>(m).singularValues().minCoeff();
}

CMat orthonormal_span(const CMat& columns, double cutoff) {
  if (columns.cols() == 0) return CMat(columns.rows(), 0);
  Eigen::JacobiSVD<CMat> svd(columns, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double top = sv.size() ? sv(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff * std::max(1.0, top)) ++rank;
  return svd.matrixU().leftCols(rank);
}

}  // namespace qmcr
