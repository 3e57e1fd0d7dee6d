#pragma once

namespace qmcr {

// Every numerical threshold used by the library, in one place.
struct Tolerances {
  // densela
  double solve_residual = 1e-12;      // ||A X - B|| <= solve_residual * ||B||
  double cond_limit = 1e14;           // solve() refuses beyond this condition estimate
  double eig_residual = 1e-10;        // per eigenpair, relative to ||A||
  double sqrt_residual = 1e-10;       // ||S^2 - M|| relative to ||M||
  double sqrt_eigvec_cond = 1e8;      // eigendecomposition route allowed below this
  double real_axis = 1e-12;           // eigenvalue counts as on the negative real axis

  // channels / tom structure checks
  double tp_check = 1e-9;             // max-norm of sum B*B - I
  double psd_floor = 1e-9;            // min eigenvalue >= -psd_floor
  double hermitian_check = 1e-10;
  double density_trace = 1e-10;
  double fixed_point_cluster = 1e-9;  // |lambda - 1| for the invariant eigenspace
  double faithful_min_eig = 1e-10;    // strictly positive invariant state
  double rank_cutoff = 1e-10;         // singular-value cutoff for span computations
  double weight_sum = 1e-12;          // convex weights must sum to 1 within this

  // recurrence policy
  double resolvent_min_sv = 1e-10;    // direct solve at z = 1 above this, else extrapolate
  double state_support = 1e-9;        // ||Q rho Q||_1 gate for "supported in H0"
  double pi_deficit = 1e-7;           // recurrent iff pi >= 1 - pi_deficit
  double tau_divergence = 1e12;       // derivative sequence beyond this means tau = inf
  double extrapolation_stab = 1e-9;   // successive Aitken extrapolants agree within this
  int extrapolation_k_min = 8;        // grid x_k = 1 - 2^-k
  int extrapolation_k_max = 40;
  double kac_invariance = 1e-8;       // ||Phi(chi) - chi||_1 for Kac inputs
  double quantization_check = 1e-8;

  // splitting
  double reconstruction = 1e-10;      // decomposition/factorization rebuild residual
  double fr_identity = 1e-9;          // f = fL + fR - E0 and f = fL fR sampling checks
  double split_identity = 1e-7;       // pi/tau splitting-rule assertions
  double cp_vector_match = 1e-8;      // common-CPTP-vector Frobenius distance

  // chains1d
  double truncation = 1e-6;
  int truncation_max_sites = 4096;
  double iterate_roundtrip = 1e-9;
};

inline const Tolerances& tols() {
  static const Tolerances t{};
  return t;
}

}  // namespace qmcr
