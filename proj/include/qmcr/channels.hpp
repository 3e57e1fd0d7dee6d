#pragma once

#include <vector>

#include "qmcr/densela.hpp"

namespace qmcr {

// CP map between d-dimensional operator spaces, stored as its Kraus operators.
// An empty Kraus list is the zero map.
struct KrausMap {
  Index dim = 0;
  std::vector<CMat> kraus;

  KrausMap() = default;
  KrausMap(Index d, std::vector<CMat> ops);

  CMat apply(const CMat& rho) const;       // sum_i B_i rho B_i*
  CMat apply_dual(const CMat& x) const;    // sum_i B_i* x B_i
  bool is_zero() const { return kraus.empty(); }
};

// Superoperator of rho |-> B rho B* in the row-major vec convention.
inline CMat conjugation_superop(const CMat& b) { return kron(b, b.conjugate()); }

// weight * map, realized as Kraus scaling by sqrt(weight); weight >= 0.
KrausMap scale(const KrausMap& m, double weight);
// CP sum (Kraus concatenation).
KrausMap add(const KrausMap& a, const KrausMap& b);

struct SuperOperator {
  Index dim = 0;  // Hilbert-space dimension; mat is dim^2 x dim^2
  CMat mat;

  CMat apply(const CMat& rho) const;
};

SuperOperator to_superop(const KrausMap& phi);
KrausMap dual(const KrausMap& phi);

bool is_trace_preserving(const KrausMap& phi, double tol = tols().tp_check);
bool is_unital(const KrausMap& phi, double tol = tols().tp_check);

// Choi matrix by reshuffling the superoperator: C(i*d+j, k*d+l) = S(i*d+k, j*d+l).
CMat choi(const SuperOperator& s);
bool is_completely_positive(const SuperOperator& s, double tol = tols().psd_floor);

// compose(a, b) applies b first: rho |-> a(b(rho)).
KrausMap compose(const KrausMap& a, const KrausMap& b);
KrausMap convex_combine(const std::vector<double>& weights, const std::vector<KrausMap>& maps);

// Densities fixed by the map: hermitized eigenvalue-1 candidates, positive part
// extracted when needed, trace-normalized; every returned state satisfies
// ||Phi(rho) - rho||_1 <= tols().fixed_point_cluster.
std::vector<CMat> invariant_states(const SuperOperator& s);
std::vector<CMat> invariant_states(const KrausMap& phi);

// Finite-dimensional criterion: one-dimensional eigenvalue-1 eigenspace with a
// faithful invariant state.
bool is_irreducible(const SuperOperator& s);
bool is_irreducible(const KrausMap& phi);

// Minimal enclosure of span(basis0): orthonormal basis of the Kraus-orbit span
// span{ B_{i_n} ... B_{i_1} H0, n >= 0 }, as an isometry d x k.
CMat relevant_subspace(const KrausMap& phi, const CMat& basis0);

// Hermitian part / trace-1 normalization helpers shared by the fixed-point code.
CMat hermitize(const CMat& m);
CMat positive_part(const CMat& hermitian);

}  // namespace qmcr
