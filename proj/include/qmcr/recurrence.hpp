#pragma once

#include <functional>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "qmcr/tom.hpp"

namespace qmcr {

// Return subspace: either a full-space isometry (general) or one projector per
// vertex (admissible, TOMs only).
struct SubspaceSpec {
  std::optional<CMat> isometry;
  std::optional<std::vector<CMat>> site_projectors;

  bool admissible() const { return site_projectors.has_value(); }
};

SubspaceSpec general_subspace(const CMat& span);
SubspaceSpec admissible_subspace(std::vector<CMat> projectors);
// Sum of sites: identity projector at the listed vertices, zero elsewhere.
SubspaceSpec sites_subspace(int nsites, Index d, const std::vector<int>& sites);

// P, Q = I - P on the ambient Hilbert space together with the superprojectors
// p = P.P and q = Q.Q. Note p + q is not the identity in general.
struct MonitorProjectors {
  CMat p, q;
  CMat p_super, q_super;
};

MonitorProjectors projectors(const SubspaceSpec& h0, Index ambient_dim, int nsites = 1);

enum class Method { DirectSolve, Extrapolated, ClosedForm, Truncated, MonteCarlo };

constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

struct RecurrenceReport {
  double pi = 0.0;
  double tau = kInfiniteTime;
  bool recurrent = false;
  bool positive_recurrent = false;
  std::vector<double> first_return;  // pi_n, n = 1..K
  std::vector<double> survival;      // s_n, n = 1..K (s_0 = 1 implicit)
  Method method = Method::DirectSolve;
  double min_singular_value = 0.0;   // of I - q Phi
  bool converged = true;
  // truncation traces (filled by chains1d)
  std::vector<int> trace_sites;
  std::vector<double> trace_pi, trace_tau;
};

// Evolution superoperator plus monitoring data in one of two representations:
// the full operator space of a channel, or the stacked site space of a TOM.
struct MonitoredSystem {
  enum class Rep { Channel, Stacked } rep = Rep::Channel;
  CMat op;             // evolution superoperator on the vec space
  CMat p_super, q_super;
  CVec trace_fn;       // trace(sigma) = trace_fn . vec(sigma)
  CVec p_vec;          // vec of the projector P in this rep
  Index h0_dim = 0;
  Index d = 0;         // ambient dim (Channel) or internal dim (Stacked)
  int nsites = 1;
  CMat p_amb;                    // Channel: P on the ambient space
  std::vector<CMat> p_sites;     // Stacked: per-site projectors

  double trace_of(const CVec& v) const;
  double trace_norm_of(const CVec& v) const;
};

MonitoredSystem monitored_channel(const SuperOperator& phi_hat, const SubspaceSpec& h0);
MonitoredSystem monitored_channel(const KrausMap& phi, const SubspaceSpec& h0);
// Admissible subspaces run on the stacked block representation, general ones on
// the CPTP embedding.
MonitoredSystem monitored_tom(const Tom& t, const SubspaceSpec& h0);
// Stacked evolution given directly as a matrix (rebuilt or truncated chains).
MonitoredSystem monitored_stacked(const CMat& block_mat, Index d, int nsites,
                                  const SubspaceSpec& admissible);

// Schur function of the monitored system, evaluated through one linear solve
// against I - z q Phi per point. Values are cached per evaluation point.
class SchurFn {
public:
  explicit SchurFn(MonitoredSystem sys) : sys_(std::move(sys)) {}

  const MonitoredSystem& system() const { return sys_; }
  // f(z) = (I-q) Phi (I - z q Phi)^{-1} (I-q), as a matrix on the vec space.
  CMat eval(Complex z) const;
  // F(z) = p Phi (I - z q Phi)^{-1} p.
  CMat reduced_eval(Complex z) const;
  // A_n = p Phi (q Phi)^{n-1} p.
  CMat coeff(int n) const;

private:
  MonitoredSystem sys_;
  mutable std::map<std::tuple<double, double, bool>, CMat> cache_;
  CMat resolvent_mat(Complex z) const;
};

// Survival probability s_n(rho) = Tr((q Phi)^n rho).
double survival(const MonitoredSystem& sys, const CVec& rho_vec, int n);

// pi, tau and the leading series terms under the shared limit policy: direct
// solve at z = 1 while I - q Phi keeps its smallest singular value above
// tols().resolvent_min_sv, geometric-grid Aitken extrapolation otherwise
// (or always, when forced).
RecurrenceReport recurrence_metrics(const MonitoredSystem& sys, const CVec& rho_vec,
                                    int series_len = 16, bool force_extrapolate = false);

double landing_probability(const MonitoredSystem& sys, const CVec& rho_vec, const CVec& psi);

// Tr((I - q Phi)^{-1}(P)) / dim H0, with the same limit policy.
double averaged_return_time(const MonitoredSystem& sys);

struct QuantizationResult {
  Index enclosure_dim = 0;
  double predicted = 0.0;
  double averaged = 0.0;
};

// Restricts the channel to the minimal enclosure of H0, demands unitality
// there, and checks the averaged return time against dim(enclosure)/dim(H0).
QuantizationResult unital_quantization_check(const KrausMap& phi, const SubspaceSpec& h0);

double kac_ideal(const CMat& chi, const CVec& psi);

struct KacResult {
  double ideal = 0.0;
  double correction = 0.0;
  double tau = 0.0;
};

KacResult kac_correction(const KrausMap& phi, const CMat& chi, const CVec& psi);

// Mean return time to a site conditioned on the stationary block, 1/Tr(chi_i),
// cross-checked against the monitored computation.
double kac_site(const Tom& t, int site);

struct PolyaDiagnostic {
  std::vector<double> partial_sums;
  bool diverging = false;
};

PolyaDiagnostic polya_series(const MonitoredSystem& sys, const CVec& rho_vec, int n_terms,
                             double threshold = 10.0, double increment_floor = 1e-3);

// Convenience wrappers.
RecurrenceReport recurrence(const KrausMap& phi, const SubspaceSpec& h0, const CMat& rho,
                            int series_len = 16);
RecurrenceReport recurrence(const Tom& t, const SubspaceSpec& h0, const TomDensity& rho,
                            int series_len = 16);
RecurrenceReport recurrence(const Tom& t, const SubspaceSpec& h0, const CMat& rho_full,
                            int series_len = 16);
double return_probability(const KrausMap& phi, const SubspaceSpec& h0, const CMat& rho);
double expected_return_time(const KrausMap& phi, const SubspaceSpec& h0, const CMat& rho);
double return_probability(const Tom& t, const SubspaceSpec& h0, const TomDensity& rho);
double expected_return_time(const Tom& t, const SubspaceSpec& h0, const TomDensity& rho);

// Aitken-accelerated limit of g(1 - 2^-k) over the shared grid; diverged means
// the sequence blew past divergence_threshold.
struct LimitResult {
  double value = 0.0;
  bool converged = false;
  bool diverged = false;
};

LimitResult extrapolate_to_one(const std::function<double(double)>& g,
                               double divergence_threshold = tols().tau_divergence);

LimitResult aitken_limit(const std::vector<double>& seq, double stab);

}  // namespace qmcr
