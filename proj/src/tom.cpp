#include "qmcr/tom.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace qmcr {

const KrausMap* Tom::block(int i, int j) const {
  auto it = blocks.find({i, j});
  return it == blocks.end() ? nullptr : &it->second;
}

void Tom::set_block(int i, int j, KrausMap m) {
  if (m.is_zero()) {
    blocks.erase({i, j});
    return;
  }
  if (m.dim != dim) fail(Errc::DimensionMismatch, "Tom::set_block: wrong block dimension");
  blocks[{i, j}] = std::move(m);
}

int Tom::index_of(const std::string& label) const {
  for (int i = 0; i < size(); ++i)
    if (vertices[i] == label) return i;
  fail(Errc::DimensionMismatch, "unknown vertex label '" + label + "'");
}

double TomDensity::total_trace() const {
  double t = 0;
  for (const auto& b : site) t += b.trace().real();
  return t;
}

bool TomDensity::is_density(double tol) const {
  if (std::abs(total_trace() - 1.0) > tol) return false;
  for (const auto& b : site) {
    if ((b - b.adjoint()).cwiseAbs().maxCoeff() > tols().psd_floor) return false;
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(b), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().size() && es.eigenvalues().minCoeff() < -tols().psd_floor) return false;
  }
  return true;
}

bool TomDensity::supported_on(const std::vector<int>& sites, double tol) const {
  double off = 0;
  for (int i = 0; i < static_cast<int>(site.size()); ++i) {
    bool in = false;
    for (int s : sites) in = in || (s == i);
    if (!in) off += trace_norm(site[i]);
  }
  return off <= tol;
}

TomDensity site_density(int nsites, int site, const CMat& rho) {
  TomDensity out;
  out.site.assign(nsites, zeros(rho.rows(), rho.cols()));
  out.site[site] = rho;
  return out;
}

double TomValidation::worst_tp_residual() const {
  double w = 0;
  for (double r : column_tp_residual) w = std::max(w, r);
  return w;
}

bool TomValidation::ok(double tol) const {
  if (worst_tp_residual() > tol) return false;
  for (const auto& [k, cp] : block_cp)
    if (!cp) return false;
  return true;
}

TomValidation validate(const Tom& t) {
  TomValidation v;
  const int n = t.size();
  v.column_tp_residual.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    CMat acc = zeros(t.dim, t.dim);
    for (int i = 0; i < n; ++i) {
      const KrausMap* b = t.block(i, j);
      if (!b) continue;
      for (const auto& k : b->kraus) acc += k.adjoint() * k;
    }
    v.column_tp_residual[j] = (acc - identity(t.dim)).cwiseAbs().maxCoeff();
  }
  for (const auto& [key, map] : t.blocks)
    v.block_cp[key] = is_completely_positive(to_superop(map));
  return v;
}

TomDensity BlockSuperOperator::apply(const TomDensity& rho) const {
  return unstack_vec(mat * stack_vec(rho), d, n);
}

BlockSuperOperator block_superop(const Tom& t) {
  BlockSuperOperator s;
  s.d = t.dim;
  s.n = t.size();
  const Index b = t.dim * t.dim;
  s.mat = zeros(b * s.n, b * s.n);
  for (const auto& [key, map] : t.blocks) {
    CMat acc = zeros(b, b);
    for (const auto& k : map.kraus) acc += conjugation_superop(k);
    s.mat.block(key.first * b, key.second * b, b, b) = acc;
  }
  return s;
}

KrausMap embed_cptp(const Tom& t) {
  const int n = t.size();
  KrausMap out(t.dim * n, {});
  for (const auto& [key, map] : t.blocks) {
    CMat e = zeros(n, n);
    e(key.first, key.second) = 1.0;
    for (const auto& b : map.kraus) out.kraus.push_back(kron(b, e));
  }
  return out;
}

CMat block_diagonal_part(const CMat& rho, Index d, int nsites) {
  if (rho.rows() != d * nsites || rho.cols() != d * nsites)
    fail(Errc::DimensionMismatch, "block_diagonal_part: wrong operand size");
  CMat out = zeros(rho.rows(), rho.cols());
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b)
      for (int s = 0; s < nsites; ++s) out(a * nsites + s, b * nsites + s) = rho(a * nsites + s, b * nsites + s);
  return out;
}

CMat stack_to_full(const TomDensity& rho, Index d) {
  const int n = static_cast<int>(rho.site.size());
  CMat out = zeros(d * n, d * n);
  for (int s = 0; s < n; ++s)
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) out(a * n + s, b * n + s) = rho.site[s](a, b);
  return out;
}

TomDensity full_to_stack(const CMat& rho, Index d, int nsites) {
  TomDensity out;
  out.site.assign(nsites, zeros(d, d));
  for (int s = 0; s < nsites; ++s)
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) out.site[s](a, b) = rho(a * nsites + s, b * nsites + s);
  return out;
}

CVec stack_vec(const TomDensity& rho) {
  const Index d = rho.site.empty() ? 0 : rho.site[0].rows();
  CVec v(d * d * static_cast<Index>(rho.site.size()));
  for (size_t s = 0; s < rho.site.size(); ++s) v.segment(s * d * d, d * d) = vec(rho.site[s]);
  return v;
}

TomDensity unstack_vec(const CVec& v, Index d, int nsites) {
  if (v.size() != d * d * nsites) fail(Errc::DimensionMismatch, "unstack_vec: wrong length");
  TomDensity out;
  out.site.reserve(nsites);
  for (int s = 0; s < nsites; ++s) out.site.push_back(unvec(v.segment(s * d * d, d * d), d, d));
  return out;
}

Tom from_oqw(const OqwSpec& spec) {
  Tom t;
  t.vertices = spec.vertices;
  t.dim = spec.dim;
  const int n = t.size();
  for (int j = 0; j < n; ++j) {
    CMat acc = zeros(spec.dim, spec.dim);
    for (int i = 0; i < n; ++i) {
      auto it = spec.effects.find({i, j});
      if (it == spec.effects.end()) continue;
      acc += it->second.adjoint() * it->second;
      t.set_block(i, j, KrausMap(spec.dim, {it->second}));
    }
    if ((acc - identity(spec.dim)).cwiseAbs().maxCoeff() > tols().tp_check)
      fail(Errc::DimensionMismatch,
           "OQW column " + std::to_string(j) + " violates sum B*B = I");
  }
  return t;
}

Tom from_stochastic(const RMat& p, const std::vector<std::string>& labels) {
  if (p.rows() != p.cols()) fail(Errc::DimensionMismatch, "from_stochastic: matrix must be square");
  const int n = static_cast<int>(p.rows());
  for (int j = 0; j < n; ++j) {
    double col = p.col(j).sum();
    if (p.col(j).minCoeff() < -1e-14 || std::abs(col - 1.0) > tols().tp_check)
      fail(Errc::DimensionMismatch, "column " + std::to_string(j) + " is not stochastic");
  }
  Tom t;
  t.dim = 1;
  for (int i = 0; i < n; ++i)
    t.vertices.push_back(labels.size() == static_cast<size_t>(n) ? labels[i] : std::to_string(i));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (p(i, j) > 0) {
        CMat b(1, 1);
        b(0, 0) = std::sqrt(p(i, j));
        t.set_block(i, j, KrausMap(1, {b}));
      }
  return t;
}

bool is_irreducible(const Tom& t) {
  BlockSuperOperator s = block_superop(t);
  EigResult e = eig(s.mat);
  Index hit = -1;
  int count = 0;
  for (Index k = 0; k < e.values.size(); ++k)
    if (std::abs(e.values(k) - Complex(1, 0)) <= tols().fixed_point_cluster) {
      hit = k;
      ++count;
    }
  if (count != 1) return false;
  TomDensity chi = unstack_vec(e.vectors.col(hit), t.dim, t.size());
  // normalize and test per-site strict positivity
  double tr = 0;
  for (auto& b : chi.site) {
    b = hermitize(b);
    tr += b.trace().real();
  }
  if (std::abs(tr) < 1e-12) return false;
  for (auto& b : chi.site) {
    b /= tr;
    Eigen::SelfAdjointEigenSolver<CMat> es(b, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < tols().faithful_min_eig) return false;
  }
  return true;
}

TomDensity invariant_density(const Tom& t) {
  BlockSuperOperator s = block_superop(t);
  EigResult e = eig(s.mat);
  Index best = -1;
  double bestdist = 1e9;
  for (Index k = 0; k < e.values.size(); ++k) {
    double dist = std::abs(e.values(k) - Complex(1, 0));
    if (dist < bestdist) {
      bestdist = dist;
      best = k;
    }
  }
  if (best < 0 || bestdist > tols().fixed_point_cluster)
    fail(Errc::NoInvariantState, "no stacked eigenvalue-1 fixed point");
  TomDensity chi = unstack_vec(e.vectors.col(best), t.dim, t.size());
  double tr = 0;
  for (auto& b : chi.site) {
    b = hermitize(b);
    tr += b.trace().real();
  }
  if (std::abs(tr) < 1e-12) fail(Errc::NoInvariantState, "traceless fixed point");
  for (auto& b : chi.site) b /= tr;
  return chi;
}

}  // namespace qmcr
