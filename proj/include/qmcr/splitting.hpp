#pragma once

#include <optional>

#include "qmcr/recurrence.hpp"

namespace qmcr {

struct Partition {
  std::vector<int> minus, overlap, plus;

  void check_against(const Tom& t) const;  // disjoint cover, overlap nonempty
};

// Column of CP maps sharing one internal dimension.
struct CpVector {
  std::vector<KrausMap> comps;

  bool is_cptp(double tol = tols().tp_check) const;
};

struct OverlapDecomposition {
  Partition partition;
  Tom left, right, overlap;              // TOMs on V-, V0 unions as below
  std::vector<int> left_vertices;        // original indices, ordered (V- then V0 order kept)
  std::vector<int> right_vertices;
};

struct OverlapFactorization {
  Partition partition;
  Tom left, right;
  std::vector<int> left_vertices, right_vertices;
};

// Structural zero test for a decomposition overlapping on the given partition.
bool decomposition_pattern_ok(const Tom& t, const Partition& p);

// All partitions (V- and V+ nonempty, up to L/R swap) whose zero pattern admits
// an overlapping decomposition. Exhaustive for |V| <= 20.
std::vector<Partition> detect_decompositions(const Tom& t, int max_results = 10000);

// Constructive decomposition: the missing column mass over V0 is distributed
// equally across the overlap vertices (pluggable-policy default).
using OverlapSplitPolicy = std::function<std::vector<KrausMap>(const KrausMap& total, int pieces)>;
OverlapDecomposition build_decomposition(const Tom& t, const Partition& p,
                                         const OverlapSplitPolicy& policy = {});

struct Rank1Factor {
  std::vector<KrausMap> cptp_vector;   // components of the common CPTP vector
  std::vector<KrausMap> coefficients;  // one Hermitian-PSD conjugation per column
};

// Lemma-style rank-1 test: each column j yields X_j = sqrt(sum B*B) and
// A = B X_j^+; present iff every column produces the same CPTP vector.
std::optional<Rank1Factor> factor_rank1(const std::vector<CpVector>& columns);

// Synthesis for |V0| = 1 (rank-1 construction); larger overlaps are
// verify-only (see verify_factorization).
std::optional<OverlapFactorization> detect_factorization(const Tom& t, const Partition& p);

// Residuals of the defining identities; small means valid.
double verify_decomposition(const Tom& t, const OverlapDecomposition& d);
double verify_factorization(const Tom& t, const OverlapFactorization& f);

// (E_L + I_+)(I_- + E_R)-style extensions and their product, used for the
// factorization identity and perturbation rebuilds.
Tom extend_with_identity(const Tom& sub, const std::vector<int>& vertex_map, const Tom& full);
Tom extend_with_zero(const Tom& sub, const std::vector<int>& vertex_map, const Tom& full);
Tom tom_product(const Tom& a, const Tom& b);

struct SplitDecMetrics {
  double pi = 0, tau = 0;
  double pi_left = 0, tau_left = 0;
  double pi_right = 0, tau_right = 0;
};

// Computes all six quantities independently and asserts pi = pi_L + pi_R - 1
// (and the tau rule when every term is finite).
SplitDecMetrics split_metrics_decomposition(const Tom& t, const OverlapDecomposition& d,
                                            const TomDensity& rho);

struct SplitFacMetrics {
  double pi = 0, tau = 0;
  double pi_left = 0, tau_left = 0;    // evaluated at the pushed-through state
  double pi_right = 0, tau_right = 0;
  TomDensity sigma;                    // normalized f_R(1)(rho)
};

SplitFacMetrics split_metrics_factorization(const Tom& t, const OverlapFactorization& f,
                                            const TomDensity& rho);

// Return probability must not move under a left-block replacement as long as
// the overlap stays recurrent for both left TOMs.
bool perturbation_invariance_check(const Tom& t, const OverlapDecomposition& d,
                                   const Tom& perturbed_left, const TomDensity& rho);
bool perturbation_invariance_check(const Tom& t, const OverlapFactorization& f,
                                   const Tom& perturbed_left, const TomDensity& rho);

}  // namespace qmcr
