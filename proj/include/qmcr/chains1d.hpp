#pragma once

#include "qmcr/recurrence.hpp"

namespace qmcr {

// Biased nearest-neighbour model: boundary blocks Phi0 (self), lambda*PhiPlus
// (into the boundary), PhiMinus (out of the boundary), homogeneous tail with
// lambda*Phi toward the boundary and (1-lambda)*Phi away from it.
struct HomogeneousParams {
  double lambda = 0.5;
  KrausMap phi, phi_plus, phi0, phi_minus;

  // CPTP/TP-sum structure plus invertibility of each superoperator.
  void validate() const;
};

// Nearest-neighbour TOM on {0, 1, 2, ...}: explicit blocks near the boundary,
// a repeating (sub, diag, super) triple past tail_start. Absent means zero.
struct HalfLineModel {
  Index dim = 0;
  std::map<std::pair<int, int>, KrausMap> boundary;
  int tail_start = 1;
  std::optional<KrausMap> tail_sub, tail_diag, tail_super;

  std::optional<KrausMap> block(int i, int j) const;
  static HalfLineModel homogeneous(const HomogeneousParams& p);
};

// Two-sided version with an explicit center window and two repeating tails.
struct LineModel {
  Index dim = 0;
  std::map<std::pair<int, int>, KrausMap> center;
  int right_tail_start = 1;  // tail applies when min(i,j) >= this
  int left_tail_end = -1;    // tail applies when max(i,j) <= this
  std::optional<KrausMap> right_sub, right_diag, right_super;
  std::optional<KrausMap> left_sub, left_diag, left_super;

  std::optional<KrausMap> block(int i, int j) const;
  static LineModel homogeneous(const HomogeneousParams& p);
};

// f_{i+1}(z) = z^{-1} I - E(i+1,i) (f_i(z) - E(i,i))^{-1} E(i,i+1), all as
// superoperator matrices sampled at z.
CMat iterate_schur(const CMat& f_hat, const CMat& sub_hat, const CMat& diag_hat,
                   const CMat& super_hat, Complex z);

// Inverse assembly f(z) = E(0,0) + z E(0,1) (I - z f1(z))^{-1} E(1,0).
CMat assemble_f0(const CMat& f1_hat, const CMat& diag0_hat, const CMat& super0_hat,
                 const CMat& sub0_hat, Complex z);

// Tail Schur iterate in closed form: (I - sqrt(I - 4 lambda(1-lambda) z^2 Phi^2)) / (2z),
// branch fixed by sqrt -> I as z -> 0.
CMat closed_form_f1(const HomogeneousParams& p, Complex z);

// Site-0 Schur function of the homogeneous half-line model.
CMat closed_form_f0(const HomogeneousParams& p, Complex z);

// Closed-form site metrics for the homogeneous model, sites 0 and 1.
RecurrenceReport halfline_site_metrics(const HomogeneousParams& p, int site, const CMat& rho);

// Closed-form site-0 metrics for the homogeneous line model; tau is infinite
// for every lambda (recurrent only at lambda = 1/2).
RecurrenceReport line_site0_metrics(const HomogeneousParams& p, const CMat& rho);

// Folding: combines sites i and -i-1 into one half-line site with internal
// space C^2 (x) H (component-major). Original site i >= 0 lives in the second
// component, i.e. states embed as kron(E11, rho) and the site projector is
// kron(E11, I).
HalfLineModel fold_to_halfline(const LineModel& m);

struct TruncationOptions {
  int n_min = 8;
  int n_max = tols().truncation_max_sites;
  double tol = tols().truncation;
  CMat site_projector;  // d x d; empty means the full site
  int series_len = 16;
};

// Absorbing truncation to a finite window, window size doubled until the
// return probability stabilizes; the doubling trace is Aitken-accelerated when
// the raw sequence has not converged by n_max (method flags Extrapolated).
RecurrenceReport truncate_numeric(const HalfLineModel& m, int site, const CMat& rho,
                                  const TruncationOptions& opt = {});
RecurrenceReport truncate_numeric(const LineModel& m, int site, const CMat& rho,
                                  const TruncationOptions& opt = {});

// For symmetric unital chains, pi(rho -> site i) may not depend on the first i
// columns; verified numerically through truncation. Throws HypothesisViolated
// when the two models are not symmetric unital chains agreeing on columns >= i.
bool symmetric_unital_invariance(const HalfLineModel& a, const HalfLineModel& b, int site,
                                 const CMat& rho, int check_window = 12);

}  // namespace qmcr
