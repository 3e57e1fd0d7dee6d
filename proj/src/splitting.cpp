#include "qmcr/splitting.hpp"

#include <algorithm>
#include <cmath>

namespace qmcr {

void Partition::check_against(const Tom& t) const {
  const int n = t.size();
  std::vector<int> seen(n, 0);
  auto mark = [&](const std::vector<int>& part) {
    for (int v : part) {
      if (v < 0 || v >= n) fail(Errc::InvalidPartition, "vertex index out of range");
      ++seen[v];
    }
  };
  mark(minus);
  mark(overlap);
  mark(plus);
  for (int v = 0; v < n; ++v)
    if (seen[v] != 1) fail(Errc::InvalidPartition, "partition must cover every vertex once");
  if (overlap.empty()) fail(Errc::InvalidPartition, "overlap set must be nonempty");
}

bool CpVector::is_cptp(double tol) const {
  if (comps.empty()) return false;
  const Index d = comps[0].dim;
  CMat acc = zeros(d, d);
  for (const auto& c : comps)
    for (const auto& b : c.kraus) acc += b.adjoint() * b;
  return (acc - identity(d)).cwiseAbs().maxCoeff() <= tol;
}

namespace {

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::vector<int> ordered_union(const Tom& t, const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  for (int v = 0; v < t.size(); ++v)
    if (contains(a, v) || contains(b, v)) out.push_back(v);
  return out;
}

Tom subgraph(const Tom& t, const std::vector<int>& verts) {
  Tom sub;
  sub.dim = t.dim;
  for (int v : verts) sub.vertices.push_back(t.vertices[v]);
  for (size_t i = 0; i < verts.size(); ++i)
    for (size_t j = 0; j < verts.size(); ++j) {
      const KrausMap* b = t.block(verts[i], verts[j]);
      if (b) sub.set_block(static_cast<int>(i), static_cast<int>(j), *b);
    }
  return sub;
}

std::vector<int> positions_of(const std::vector<int>& verts, const std::vector<int>& subset) {
  std::vector<int> pos;
  for (size_t i = 0; i < verts.size(); ++i)
    if (contains(subset, verts[i])) pos.push_back(static_cast<int>(i));
  return pos;
}

TomDensity restrict_density(const TomDensity& rho, const std::vector<int>& verts) {
  TomDensity out;
  out.site.reserve(verts.size());
  for (int v : verts) out.site.push_back(rho.site[v]);
  return out;
}

KrausMap column_sum(const Tom& t, const std::vector<int>& rows, int col) {
  KrausMap acc(t.dim, {});
  for (int i : rows) {
    const KrausMap* b = t.block(i, col);
    if (b) acc = add(acc, *b);
  }
  acc.dim = t.dim;
  return acc;
}

}  // namespace

bool decomposition_pattern_ok(const Tom& t, const Partition& p) {
  for (int i : p.minus)
    for (int j : p.plus)
      if (t.block(i, j) || t.block(j, i)) return false;
  return true;
}

std::vector<Partition> detect_decompositions(const Tom& t, int max_results) {
  const int n = t.size();
  if (n > 20) fail(Errc::DimensionMismatch, "exhaustive search capped at 20 vertices");

  // undirected adjacency as bitmasks (edge when either block is nonzero)
  std::vector<unsigned> adj(n, 0);
  for (const auto& [key, blk] : t.blocks) {
    if (key.first == key.second) continue;
    adj[key.first] |= 1u << key.second;
    adj[key.second] |= 1u << key.first;
  }

  std::vector<Partition> out;
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<int> v0, rest;
    for (int v = 0; v < n; ++v) ((mask >> v) & 1u ? v0 : rest).push_back(v);
    if (rest.size() < 2) continue;

    // connected components of the rest-graph
    const unsigned rest_mask = ~mask & ((1u << n) - 1u);
    std::vector<int> comp(rest.size(), -1);
    int ncomp = 0;
    for (size_t s = 0; s < rest.size(); ++s) {
      if (comp[s] >= 0) continue;
      unsigned frontier = 1u << rest[s];
      unsigned seen = frontier;
      while (frontier) {
        unsigned next = 0;
        for (int v = 0; v < n; ++v)
          if ((frontier >> v) & 1u) next |= adj[v];
        next &= rest_mask & ~seen;
        seen |= next;
        frontier = next;
      }
      for (size_t w = 0; w < rest.size(); ++w)
        if (comp[w] < 0 && ((seen >> rest[w]) & 1u)) comp[w] = ncomp;
      ++ncomp;
    }
    if (ncomp < 2) continue;

    // bipartitions of components; component 0 stays on the minus side (L/R swap)
    for (unsigned cmask = 0; cmask < (1u << (ncomp - 1)); ++cmask) {
      Partition p;
      p.overlap = v0;
      for (size_t s = 0; s < rest.size(); ++s) {
        bool to_plus = comp[s] > 0 && ((cmask >> (comp[s] - 1)) & 1u);
        (to_plus ? p.plus : p.minus).push_back(rest[s]);
      }
      if (p.minus.empty() || p.plus.empty()) continue;
      // holds by construction (different components share no block); kept as a guard
      if (!decomposition_pattern_ok(t, p)) continue;
      out.push_back(std::move(p));
      if (static_cast<int>(out.size()) >= max_results) return out;
    }
  }
  return out;
}

OverlapDecomposition build_decomposition(const Tom& t, const Partition& p,
                                         const OverlapSplitPolicy& policy) {
  p.check_against(t);
  if (!decomposition_pattern_ok(t, p))
    fail(Errc::InvalidPartition, "zero pattern does not admit an overlapping decomposition");

  OverlapSplitPolicy split = policy;
  if (!split)
    split = [](const KrausMap& total, int pieces) {
      std::vector<KrausMap> out;
      for (int i = 0; i < pieces; ++i) out.push_back(scale(total, 1.0 / pieces));
      return out;
    };

  OverlapDecomposition d;
  d.partition = p;
  d.left_vertices = ordered_union(t, p.minus, p.overlap);
  d.right_vertices = ordered_union(t, p.overlap, p.plus);
  d.left = subgraph(t, d.left_vertices);
  d.right = subgraph(t, d.right_vertices);

  std::vector<int> overlap_sorted;
  for (int v = 0; v < t.size(); ++v)
    if (contains(p.overlap, v)) overlap_sorted.push_back(v);

  d.overlap.dim = t.dim;
  for (int v : overlap_sorted) d.overlap.vertices.push_back(t.vertices[v]);
  for (size_t kj = 0; kj < overlap_sorted.size(); ++kj)
    for (size_t ki = 0; ki < overlap_sorted.size(); ++ki) {
      const KrausMap* b = t.block(overlap_sorted[ki], overlap_sorted[kj]);
      if (b) d.overlap.set_block(static_cast<int>(ki), static_cast<int>(kj), *b);
    }

  const int m = static_cast<int>(overlap_sorted.size());
  std::vector<int> ov_in_left = positions_of(d.left_vertices, p.overlap);
  std::vector<int> ov_in_right = positions_of(d.right_vertices, p.overlap);

  for (int kc = 0; kc < m; ++kc) {
    int col = overlap_sorted[kc];
    std::vector<KrausMap> a = split(column_sum(t, p.plus, col), m);
    std::vector<KrausMap> b = split(column_sum(t, p.minus, col), m);
    for (int jr = 0; jr < m; ++jr) {
      if (!a[jr].is_zero()) {
        KrausMap cur = d.left.block(ov_in_left[jr], ov_in_left[kc])
                           ? *d.left.block(ov_in_left[jr], ov_in_left[kc])
                           : KrausMap(t.dim, {});
        d.left.set_block(ov_in_left[jr], ov_in_left[kc], add(cur, a[jr]));
      }
      if (!b[jr].is_zero()) {
        KrausMap cur = d.right.block(ov_in_right[jr], ov_in_right[kc])
                           ? *d.right.block(ov_in_right[jr], ov_in_right[kc])
                           : KrausMap(t.dim, {});
        d.right.set_block(ov_in_right[jr], ov_in_right[kc], add(cur, b[jr]));
      }
      KrausMap total = KrausMap(t.dim, {});
      if (const KrausMap* e = d.overlap.block(jr, kc)) total = *e;
      total = add(add(total, a[jr]), b[jr]);
      d.overlap.set_block(jr, kc, total);
    }
  }

  if (verify_decomposition(t, d) > tols().reconstruction)
    fail(Errc::InvalidPartition, "constructed decomposition fails to reconstruct the chain");
  return d;
}

Tom extend_with_zero(const Tom& sub, const std::vector<int>& vertex_map, const Tom& full) {
  Tom out;
  out.vertices = full.vertices;
  out.dim = full.dim;
  for (const auto& [key, map] : sub.blocks)
    out.set_block(vertex_map[key.first], vertex_map[key.second], map);
  return out;
}

Tom extend_with_identity(const Tom& sub, const std::vector<int>& vertex_map, const Tom& full) {
  Tom out = extend_with_zero(sub, vertex_map, full);
  for (int v = 0; v < full.size(); ++v) {
    bool mapped = false;
    for (int w : vertex_map) mapped = mapped || (w == v);
    if (!mapped) out.set_block(v, v, KrausMap(full.dim, {identity(full.dim)}));
  }
  return out;
}

Tom tom_product(const Tom& a, const Tom& b) {
  if (a.size() != b.size() || a.dim != b.dim)
    fail(Errc::DimensionMismatch, "tom_product: shape mismatch");
  Tom out;
  out.vertices = a.vertices;
  out.dim = a.dim;
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < a.size(); ++j) {
      KrausMap acc(a.dim, {});
      for (int k = 0; k < a.size(); ++k) {
        const KrausMap* ai = a.block(i, k);
        const KrausMap* bj = b.block(k, j);
        if (ai && bj) acc = add(acc, compose(*ai, *bj));
      }
      if (!acc.is_zero()) out.set_block(i, j, acc);
    }
  return out;
}

double verify_decomposition(const Tom& t, const OverlapDecomposition& d) {
  std::vector<int> ov_sorted;
  for (int v = 0; v < t.size(); ++v)
    if (contains(d.partition.overlap, v)) ov_sorted.push_back(v);
  CMat lhs = block_superop(t).mat;
  CMat rhs = block_superop(extend_with_zero(d.left, d.left_vertices, t)).mat +
             block_superop(extend_with_zero(d.right, d.right_vertices, t)).mat -
             block_superop(extend_with_zero(d.overlap, ov_sorted, t)).mat;
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

double verify_factorization(const Tom& t, const OverlapFactorization& f) {
  CMat lhs = block_superop(t).mat;
  CMat rhs = block_superop(extend_with_identity(f.left, f.left_vertices, t)).mat *
             block_superop(extend_with_identity(f.right, f.right_vertices, t)).mat;
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

std::optional<Rank1Factor> factor_rank1(const std::vector<CpVector>& columns) {
  if (columns.empty()) return std::nullopt;
  const size_t ncomp = columns[0].comps.size();
  const Index d = columns[0].comps[0].dim;
  const int m = static_cast<int>(ncomp);

  Rank1Factor out;
  std::vector<CMat> reference;  // superoperators of the first column's components
  for (size_t jc = 0; jc < columns.size(); ++jc) {
    const CpVector& col = columns[jc];
    if (col.comps.size() != ncomp) return std::nullopt;

    CMat gram = zeros(d, d);
    for (const auto& c : col.comps)
      for (const auto& b : c.kraus) gram += b.adjoint() * b;
    CMat x = principal_sqrt(hermitize(gram));

    // pseudo-inverse of the PSD root; its kernel is shared by every Kraus operator
    Eigen::SelfAdjointEigenSolver<CMat> es(x);
    CVec inv_diag(d);
    CMat kernel_proj = zeros(d, d);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    for (Index i = 0; i < d; ++i) {
      if (es.eigenvalues()(i) > tols().rank_cutoff * std::max(1.0, top)) {
        inv_diag(i) = 1.0 / es.eigenvalues()(i);
      } else {
        inv_diag(i) = 0.0;
        kernel_proj += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
      }
    }
    CMat x_pinv = es.eigenvectors() * inv_diag.asDiagonal() * es.eigenvectors().adjoint();
    const bool singular = kernel_proj.cwiseAbs().maxCoeff() > 0.5;

    std::vector<KrausMap> u;
    for (const auto& c : col.comps) {
      KrausMap comp(d, {});
      for (const auto& b : c.kraus) comp.kraus.push_back(b * x_pinv);
      if (singular) comp.kraus.push_back(std::sqrt(1.0 / m) * kernel_proj);
      u.push_back(std::move(comp));
    }

    if (jc == 0) {
      for (const auto& c : u) reference.push_back(to_superop(c).mat);
      out.cptp_vector = u;
    } else {
      for (size_t i = 0; i < ncomp; ++i)
        if ((to_superop(u[i]).mat - reference[i]).norm() > tols().cp_vector_match)
          return std::nullopt;
    }
    out.coefficients.push_back(KrausMap(d, {x}));
  }

  CpVector u_as_vec{out.cptp_vector};
  if (!u_as_vec.is_cptp()) return std::nullopt;
  return out;
}

std::optional<OverlapFactorization> detect_factorization(const Tom& t, const Partition& p) {
  p.check_against(t);
  if (p.overlap.size() != 1)
    fail(Errc::InvalidPartition,
         "factorization synthesis is offered for single-vertex overlaps only; larger overlaps "
         "are verify-only");
  for (int i : p.plus)
    for (int j : p.minus)
      if (t.block(i, j)) return std::nullopt;

  std::vector<int> vl = ordered_union(t, p.minus, p.overlap);
  std::vector<int> vr = ordered_union(t, p.overlap, p.plus);
  const int v0 = p.overlap[0];

  std::vector<CpVector> cols;
  for (int j : vr) {
    CpVector col;
    for (int i : vl) {
      const KrausMap* b = t.block(i, j);
      col.comps.push_back(b ? *b : KrausMap(t.dim, {}));
    }
    cols.push_back(std::move(col));
  }

  std::optional<Rank1Factor> r1 = factor_rank1(cols);
  if (!r1) return std::nullopt;

  OverlapFactorization f;
  f.partition = p;
  f.left_vertices = vl;
  f.right_vertices = vr;
  f.left.dim = t.dim;
  f.right.dim = t.dim;
  for (int v : vl) f.left.vertices.push_back(t.vertices[v]);
  for (int v : vr) f.right.vertices.push_back(t.vertices[v]);

  const int v0_in_left = positions_of(vl, {v0})[0];
  const int v0_in_right = positions_of(vr, {v0})[0];
  for (size_t i = 0; i < vl.size(); ++i) {
    for (size_t j = 0; j < vl.size(); ++j) {
      if (!contains(p.minus, vl[j])) continue;
      const KrausMap* b = t.block(vl[i], vl[j]);
      if (b) f.left.set_block(static_cast<int>(i), static_cast<int>(j), *b);
    }
    f.left.set_block(static_cast<int>(i), v0_in_left, r1->cptp_vector[i]);
  }
  for (size_t j = 0; j < vr.size(); ++j) {
    f.right.set_block(v0_in_right, static_cast<int>(j), r1->coefficients[j]);
    for (size_t i = 0; i < vr.size(); ++i) {
      if (!contains(p.plus, vr[i])) continue;
      const KrausMap* b = t.block(vr[i], vr[j]);
      if (b) f.right.set_block(static_cast<int>(i), static_cast<int>(j), *b);
    }
  }

  if (verify_factorization(t, f) > 1e3 * tols().reconstruction) return std::nullopt;
  return f;
}

namespace {

RecurrenceReport overlap_metrics(const Tom& t, const std::vector<int>& overlap_sites,
                                 const TomDensity& rho) {
  return recurrence(t, sites_subspace(t.size(), t.dim, overlap_sites), rho);
}

}  // namespace

SplitDecMetrics split_metrics_decomposition(const Tom& t, const OverlapDecomposition& d,
                                            const TomDensity& rho) {
  if (!rho.supported_on(d.partition.overlap))
    fail(Errc::StateOutsideOverlap, "state must live on the overlap sum of sites");

  SplitDecMetrics m;
  RecurrenceReport full = overlap_metrics(t, d.partition.overlap, rho);
  m.pi = full.pi;
  m.tau = full.tau;

  TomDensity rho_l = restrict_density(rho, d.left_vertices);
  TomDensity rho_r = restrict_density(rho, d.right_vertices);
  RecurrenceReport left = overlap_metrics(d.left, positions_of(d.left_vertices, d.partition.overlap), rho_l);
  RecurrenceReport right = overlap_metrics(d.right, positions_of(d.right_vertices, d.partition.overlap), rho_r);
  m.pi_left = left.pi;
  m.tau_left = left.tau;
  m.pi_right = right.pi;
  m.tau_right = right.tau;

  if (std::abs(m.pi - (m.pi_left + m.pi_right - 1.0)) > tols().split_identity)
    fail(Errc::HypothesisViolated, "return-probability decomposition rule violated");
  if (std::isfinite(m.tau) && std::isfinite(m.tau_left) && std::isfinite(m.tau_right) &&
      std::abs(m.tau - (m.tau_left + m.tau_right - 1.0)) >
          tols().split_identity * std::max(1.0, std::abs(m.tau)))
    fail(Errc::HypothesisViolated, "return-time decomposition rule violated");
  return m;
}

SplitFacMetrics split_metrics_factorization(const Tom& t, const OverlapFactorization& f,
                                            const TomDensity& rho) {
  if (!rho.supported_on(f.partition.overlap))
    fail(Errc::StateOutsideOverlap, "state must live on the overlap sum of sites");

  SplitFacMetrics m;
  RecurrenceReport full = overlap_metrics(t, f.partition.overlap, rho);
  m.pi = full.pi;
  m.tau = full.tau;

  std::vector<int> ov_r = positions_of(f.right_vertices, f.partition.overlap);
  std::vector<int> ov_l = positions_of(f.left_vertices, f.partition.overlap);
  TomDensity rho_r = restrict_density(rho, f.right_vertices);

  MonitoredSystem sys_r = monitored_tom(f.right, sites_subspace(f.right.size(), t.dim, ov_r));
  SchurFn fr(sys_r);
  CVec sigma_vec = fr.reduced_eval(1.0) * stack_vec(rho_r);
  m.sigma = unstack_vec(sigma_vec, t.dim, f.right.size());
  m.pi_right = m.sigma.total_trace();

  RecurrenceReport right = overlap_metrics(f.right, ov_r, rho_r);
  m.tau_right = right.tau;

  double pr = m.pi_right;
  if (pr <= 1e-14) fail(Errc::NoConvergence, "pushed-through state has no mass");
  for (auto& b : m.sigma.site) b /= pr;

  // lift the normalized overlap state into the left graph's coordinates
  TomDensity sigma_l;
  sigma_l.site.assign(f.left_vertices.size(), zeros(t.dim, t.dim));
  for (size_t k = 0; k < f.partition.overlap.size(); ++k) {
    int v = f.partition.overlap[k];
    sigma_l.site[positions_of(f.left_vertices, {v})[0]] =
        m.sigma.site[positions_of(f.right_vertices, {v})[0]];
  }
  RecurrenceReport left = overlap_metrics(f.left, ov_l, sigma_l);
  m.pi_left = left.pi;
  m.tau_left = left.tau;

  if (std::abs(m.pi - m.pi_left * m.pi_right) > tols().split_identity)
    fail(Errc::HypothesisViolated, "return-probability factorization rule violated");
  bool left_recurrent = m.pi_left >= 1.0 - tols().pi_deficit;
  if (left_recurrent && std::isfinite(m.tau) && std::isfinite(m.tau_left) &&
      std::isfinite(m.tau_right) &&
      std::abs(m.tau - (m.tau_left + m.tau_right - 1.0)) >
          tols().split_identity * std::max(1.0, std::abs(m.tau)))
    fail(Errc::HypothesisViolated, "return-time factorization rule violated");
  return m;
}

namespace {

double pi_of_stacked(const CMat& mat, Index d, int nsites, const std::vector<int>& overlap,
                     const TomDensity& rho) {
  MonitoredSystem sys = monitored_stacked(mat, d, nsites, sites_subspace(nsites, d, overlap));
  return recurrence_metrics(sys, stack_vec(rho), 0).pi;
}

void require_left_recurrent(const Tom& left, const std::vector<int>& left_vertices,
                            const std::vector<int>& overlap, const TomDensity& rho) {
  TomDensity rho_l = restrict_density(rho, left_vertices);
  RecurrenceReport rep = recurrence(
      left, sites_subspace(left.size(), left.dim, positions_of(left_vertices, overlap)), rho_l);
  if (rep.pi < 1.0 - tols().pi_deficit)
    fail(Errc::LeftNotRecurrent, "overlap is not recurrent for the left chain");
}

}  // namespace

bool perturbation_invariance_check(const Tom& t, const OverlapDecomposition& d,
                                   const Tom& perturbed_left, const TomDensity& rho) {
  require_left_recurrent(d.left, d.left_vertices, d.partition.overlap, rho);
  require_left_recurrent(perturbed_left, d.left_vertices, d.partition.overlap, rho);

  std::vector<int> ov_sorted;
  for (int v = 0; v < t.size(); ++v)
    if (contains(d.partition.overlap, v)) ov_sorted.push_back(v);
  CMat rebuilt = block_superop(extend_with_zero(perturbed_left, d.left_vertices, t)).mat +
                 block_superop(extend_with_zero(d.right, d.right_vertices, t)).mat -
                 block_superop(extend_with_zero(d.overlap, ov_sorted, t)).mat;

  // rebuilt overlap blocks must stay CP for the perturbation to define a chain
  const Index b = t.dim * t.dim;
  for (int i : ov_sorted)
    for (int j : ov_sorted) {
      SuperOperator blockop{t.dim, rebuilt.block(i * b, j * b, b, b)};
      if (!is_completely_positive(blockop))
        fail(Errc::InvalidPartition, "perturbed overlap block is not completely positive");
    }

  double pi0 = overlap_metrics(t, d.partition.overlap, rho).pi;
  double pi1 = pi_of_stacked(rebuilt, t.dim, t.size(), d.partition.overlap, rho);
  return std::abs(pi0 - pi1) <= tols().split_identity;
}

bool perturbation_invariance_check(const Tom& t, const OverlapFactorization& f,
                                   const Tom& perturbed_left, const TomDensity& rho) {
  require_left_recurrent(f.left, f.left_vertices, f.partition.overlap, rho);
  require_left_recurrent(perturbed_left, f.left_vertices, f.partition.overlap, rho);

  Tom rebuilt = tom_product(extend_with_identity(perturbed_left, f.left_vertices, t),
                            extend_with_identity(f.right, f.right_vertices, t));
  double pi0 = overlap_metrics(t, f.partition.overlap, rho).pi;
  double pi1 = overlap_metrics(rebuilt, f.partition.overlap, rho).pi;
  return std::abs(pi0 - pi1) <= tols().split_identity;
}

}  // namespace qmcr
