#include "qmcr/channels.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace qmcr {

KrausMap::KrausMap(Index d, std::vector<CMat> ops) : dim(d), kraus(std::move(ops)) {
  for (const auto& b : kraus)
    if (b.rows() != dim || b.cols() != dim)
      fail(Errc::DimensionMismatch, "Kraus operator is not dim x dim");
}

CMat KrausMap::apply(const CMat& rho) const {
  CMat out = zeros(dim, dim);
  for (const auto& b : kraus) out += b * rho * b.adjoint();
  return out;
}

CMat KrausMap::apply_dual(const CMat& x) const {
  CMat out = zeros(dim, dim);
  for (const auto& b : kraus) out += b.adjoint() * x * b;
  return out;
}

KrausMap scale(const KrausMap& m, double weight) {
  if (weight < 0) fail(Errc::BadWeights, "negative CP-map weight");
  if (weight == 0) return KrausMap(m.dim, {});
  KrausMap out(m.dim, {});
  const double s = std::sqrt(weight);
  out.kraus.reserve(m.kraus.size());
  for (const auto& b : m.kraus) out.kraus.push_back(s * b);
  return out;
}

KrausMap add(const KrausMap& a, const KrausMap& b) {
  if (a.dim != b.dim && !a.is_zero() && !b.is_zero())
    fail(Errc::DimensionMismatch, "CP sum of maps with different dimensions");
  KrausMap out(a.is_zero() ? b.dim : a.dim, {});
  out.kraus = a.kraus;
  out.kraus.insert(out.kraus.end(), b.kraus.begin(), b.kraus.end());
  return out;
}

CMat SuperOperator::apply(const CMat& rho) const {
  if (rho.rows() != dim || rho.cols() != dim)
    fail(Errc::DimensionMismatch, "SuperOperator::apply: wrong operand size");
  return unvec(mat * vec(rho), dim, dim);
}

SuperOperator to_superop(const KrausMap& phi) {
  SuperOperator s;
  s.dim = phi.dim;
  s.mat = zeros(phi.dim * phi.dim, phi.dim * phi.dim);
  for (const auto& b : phi.kraus) s.mat += conjugation_superop(b);
  return s;
}

KrausMap dual(const KrausMap& phi) {
  KrausMap out(phi.dim, {});
  out.kraus.reserve(phi.kraus.size());
  for (const auto& b : phi.kraus) out.kraus.push_back(b.adjoint());
  return out;
}

bool is_trace_preserving(const KrausMap& phi, double tol) {
  CMat acc = zeros(phi.dim, phi.dim);
  for (const auto& b : phi.kraus) acc += b.adjoint() * b;
  return (acc - identity(phi.dim)).cwiseAbs().maxCoeff() <= tol;
}

bool is_unital(const KrausMap& phi, double tol) {
  CMat acc = zeros(phi.dim, phi.dim);
  for (const auto& b : phi.kraus) acc += b * b.adjoint();
  return (acc - identity(phi.dim)).cwiseAbs().maxCoeff() <= tol;
}

CMat choi(const SuperOperator& s) {
  const Index d = s.dim;
  if (s.mat.rows() != d * d || s.mat.cols() != d * d)
    fail(Errc::DimensionMismatch, "choi: superoperator is not d^2 x d^2");
  CMat c(d * d, d * d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      for (Index k = 0; k < d; ++k)
        for (Index l = 0; l < d; ++l) c(i * d + j, k * d + l) = s.mat(i * d + k, j * d + l);
  return c;
}

bool is_completely_positive(const SuperOperator& s, double tol) {
  CMat c = choi(s);
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.adjoint()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (c + c.adjoint()),
                                         Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

KrausMap compose(const KrausMap& a, const KrausMap& b) {
  if (a.dim != b.dim) fail(Errc::DimensionMismatch, "compose: dimension mismatch");
  KrausMap out(a.dim, {});
  out.kraus.reserve(a.kraus.size() * b.kraus.size());
  for (const auto& ba : a.kraus)
    for (const auto& bb : b.kraus) out.kraus.push_back(ba * bb);
  return out;
}

KrausMap convex_combine(const std::vector<double>& weights, const std::vector<KrausMap>& maps) {
  if (weights.size() != maps.size() || maps.empty())
    fail(Errc::BadWeights, "convex_combine: weights/maps size mismatch");
  double total = 0;
  for (double w : weights) {
    if (w < 0) fail(Errc::BadWeights, "convex_combine: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > tols().weight_sum)
    fail(Errc::BadWeights, "convex_combine: weights sum to " + std::to_string(total));
  KrausMap out(maps[0].dim, {});
  for (size_t i = 0; i < maps.size(); ++i) out = add(out, scale(maps[i], weights[i]));
  out.dim = maps[0].dim;
  return out;
}

CMat hermitize(const CMat& m) { return 0.5 * (m + m.adjoint()); }

CMat positive_part(const CMat& hermitian) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian);
  RVec ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal().toDenseMatrix().cast<Complex>() *
         es.eigenvectors().adjoint();
}

namespace {

double fixed_point_residual(const CMat& smat, const CMat& rho) {
  CVec v = vec(rho);
  return (smat * v - v).norm();
}

// Gram-Schmidt in the Hilbert-Schmidt inner product.
void append_if_independent(std::vector<CMat>& basis, CMat cand) {
  for (const auto& h : basis) cand -= (h.adjoint() * cand).trace() * h;
  double n = cand.norm();
  if (n > 1e-8) basis.push_back(cand / n);
}

}  // namespace

std::vector<CMat> invariant_states(const SuperOperator& s) {
  const Index d = s.dim;
  EigResult e = eig(s.mat);
  std::vector<Index> ones;
  for (Index k = 0; k < e.values.size(); ++k)
    if (std::abs(e.values(k) - Complex(1, 0)) <= tols().fixed_point_cluster) ones.push_back(k);
  if (ones.empty()) fail(Errc::NoInvariantState, "no eigenvalue-1 eigenspace found");

  std::vector<CMat> herm;
  for (Index k : ones) {
    CMat m = unvec(e.vectors.col(k), d, d);
    append_if_independent(herm, hermitize(m));
    append_if_independent(herm, hermitize(Complex(0, -1) * m));
  }

  std::vector<CMat> out;
  auto push_checked = [&](const CMat& h) {
    CMat pos = positive_part(h);
    double tr = pos.trace().real();
    if (tr < 1e-12) return;
    CMat rho = pos / tr;
    if (fixed_point_residual(s.mat, rho) <= tols().fixed_point_cluster) out.push_back(rho);
  };
  for (const auto& h : herm) push_checked(h);

  if (out.empty()) {
    // Positive parts spoiled fixedness; project the maximally mixed state onto
    // the eigenvalue-1 spectral subspace instead.
    CVec w = solve_unchecked(e.vectors, vec(identity(d) / static_cast<double>(d)));
    for (Index k = 0; k < w.size(); ++k)
      if (std::abs(e.values(k) - Complex(1, 0)) > tols().fixed_point_cluster) w(k) = 0;
    CMat cand = hermitize(unvec(e.vectors * w, d, d));
    push_checked(cand);
  }
  if (out.empty()) fail(Errc::NoInvariantState, "eigenspace yields no positive fixed state");
  return out;
}

std::vector<CMat> invariant_states(const KrausMap& phi) { return invariant_states(to_superop(phi)); }

bool is_irreducible(const SuperOperator& s) {
  EigResult e = eig(s.mat);
  Index hit = -1;
  int count = 0;
  for (Index k = 0; k < e.values.size(); ++k) {
    if (std::abs(e.values(k) - Complex(1, 0)) <= tols().fixed_point_cluster) {
      hit = k;
      ++count;
    }
  }
  if (count != 1) return false;
  CMat rho = hermitize(unvec(e.vectors.col(hit), s.dim, s.dim));
  double tr = rho.trace().real();
  if (std::abs(tr) < 1e-12) return false;
  rho /= tr;
  Eigen::SelfAdjointEigenSolver<CMat> es(rho, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= tols().faithful_min_eig;
}

bool is_irreducible(const KrausMap& phi) { return is_irreducible(to_superop(phi)); }

CMat relevant_subspace(const KrausMap& phi, const CMat& basis0) {
  if (basis0.rows() != phi.dim) fail(Errc::DimensionMismatch, "relevant_subspace: basis rows != dim");
  CMat v = orthonormal_span(basis0);
  if (v.cols() == 0) fail(Errc::DimensionMismatch, "relevant_subspace: H0 is zero");
  for (Index it = 0; it < phi.dim; ++it) {
    CMat grown(phi.dim, v.cols() * (1 + static_cast<Index>(phi.kraus.size())));
    grown.leftCols(v.cols()) = v;
    Index at = v.cols();
    for (const auto& b : phi.kraus) {
      grown.middleCols(at, v.cols()) = b * v;
      at += v.cols();
    }
    CMat next = orthonormal_span(grown);
    if (next.cols() == v.cols()) return next;
    v = next;
  }
  return v;
}

}  // namespace qmcr
