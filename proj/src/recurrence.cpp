#include "qmcr/recurrence.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <limits>

namespace qmcr {

SubspaceSpec general_subspace(const CMat& span) {
  CMat v = orthonormal_span(span);
  if (v.cols() == 0) fail(Errc::DimensionMismatch, "general_subspace: zero subspace");
  SubspaceSpec s;
  s.isometry = v;
  return s;
}

SubspaceSpec admissible_subspace(std::vector<CMat> projectors) {
  if (projectors.empty()) fail(Errc::DimensionMismatch, "admissible_subspace: no projectors");
  for (const auto& p : projectors) {
    if (p.rows() != p.cols()) fail(Errc::DimensionMismatch, "projector must be square");
    if ((p - p.adjoint()).cwiseAbs().maxCoeff() > tols().hermitian_check ||
        (p * p - p).cwiseAbs().maxCoeff() > tols().hermitian_check)
      fail(Errc::HypothesisViolated, "site projector is not an orthogonal projection");
  }
  SubspaceSpec s;
  s.site_projectors = std::move(projectors);
  return s;
}

SubspaceSpec sites_subspace(int nsites, Index d, const std::vector<int>& sites) {
  std::vector<CMat> proj(nsites, zeros(d, d));
  for (int s : sites) {
    if (s < 0 || s >= nsites) fail(Errc::DimensionMismatch, "sites_subspace: site out of range");
    proj[s] = identity(d);
  }
  return admissible_subspace(std::move(proj));
}

MonitorProjectors projectors(const SubspaceSpec& h0, Index ambient_dim, int nsites) {
  CMat p;
  if (h0.isometry) {
    const CMat& v = *h0.isometry;
    if (v.rows() != ambient_dim) fail(Errc::DimensionMismatch, "projectors: isometry row mismatch");
    p = v * v.adjoint();
  } else if (h0.site_projectors) {
    const auto& ps = *h0.site_projectors;
    if (static_cast<int>(ps.size()) != nsites)
      fail(Errc::DimensionMismatch, "projectors: one projector per site required");
    const Index d = ps[0].rows();
    if (d * nsites != ambient_dim) fail(Errc::DimensionMismatch, "projectors: dim mismatch");
    p = zeros(ambient_dim, ambient_dim);
    for (int s = 0; s < nsites; ++s) {
      CMat e = zeros(nsites, nsites);
      e(s, s) = 1.0;
      p += kron(ps[s], e);
    }
  } else {
    fail(Errc::DimensionMismatch, "projectors: empty subspace spec");
  }
  MonitorProjectors out;
  out.p = p;
  out.q = identity(ambient_dim) - p;
  out.p_super = conjugation_superop(out.p);
  out.q_super = conjugation_superop(out.q);
  return out;
}

double MonitoredSystem::trace_of(const CVec& v) const {
  // trace_fn is a real 0/1 mask of the diagonal slots
  return trace_fn.dot(v).real();
}

double MonitoredSystem::trace_norm_of(const CVec& v) const {
  if (rep == Rep::Channel) return trace_norm(unvec(v, d, d));
  double acc = 0;
  const Index b = d * d;
  for (int s = 0; s < nsites; ++s) acc += trace_norm(unvec(v.segment(s * b, b), d, d));
  return acc;
}

namespace {

CVec make_trace_fn(Index d, int nsites) {
  CVec t = CVec::Zero(d * d * nsites);
  for (int s = 0; s < nsites; ++s)
    for (Index a = 0; a < d; ++a) t(s * d * d + a * d + a) = 1.0;
  return t;
}

}  // namespace

MonitoredSystem monitored_channel(const SuperOperator& phi_hat, const SubspaceSpec& h0) {
  if (!h0.isometry) fail(Errc::DimensionMismatch, "channels take general subspaces");
  MonitoredSystem sys;
  sys.rep = MonitoredSystem::Rep::Channel;
  sys.d = phi_hat.dim;
  sys.nsites = 1;
  sys.op = phi_hat.mat;
  MonitorProjectors mp = projectors(h0, phi_hat.dim);
  sys.p_amb = mp.p;
  sys.p_super = mp.p_super;
  sys.q_super = mp.q_super;
  sys.trace_fn = make_trace_fn(phi_hat.dim, 1);
  sys.p_vec = vec(mp.p);
  sys.h0_dim = static_cast<Index>(std::lround(mp.p.trace().real()));
  return sys;
}

MonitoredSystem monitored_channel(const KrausMap& phi, const SubspaceSpec& h0) {
  return monitored_channel(to_superop(phi), h0);
}

MonitoredSystem monitored_stacked(const CMat& block_mat, Index d, int nsites,
                                  const SubspaceSpec& admissible) {
  if (!admissible.site_projectors)
    fail(Errc::DimensionMismatch, "monitored_stacked: admissible subspace required");
  const auto& ps = *admissible.site_projectors;
  if (static_cast<int>(ps.size()) != nsites)
    fail(Errc::DimensionMismatch, "monitored_stacked: one projector per site required");
  const Index b = d * d;
  if (block_mat.rows() != b * nsites || block_mat.cols() != b * nsites)
    fail(Errc::DimensionMismatch, "monitored_stacked: evolution matrix size mismatch");
  MonitoredSystem sys;
  sys.rep = MonitoredSystem::Rep::Stacked;
  sys.d = d;
  sys.nsites = nsites;
  sys.op = block_mat;
  sys.p_super = zeros(b * nsites, b * nsites);
  sys.q_super = zeros(b * nsites, b * nsites);
  sys.p_vec = CVec::Zero(b * nsites);
  Index dim0 = 0;
  sys.p_sites = ps;
  for (int s = 0; s < nsites; ++s) {
    CMat q = identity(d) - ps[s];
    sys.p_super.block(s * b, s * b, b, b) = conjugation_superop(ps[s]);
    sys.q_super.block(s * b, s * b, b, b) = conjugation_superop(q);
    sys.p_vec.segment(s * b, b) = vec(ps[s]);
    dim0 += static_cast<Index>(std::lround(ps[s].trace().real()));
  }
  sys.trace_fn = make_trace_fn(d, nsites);
  sys.h0_dim = dim0;
  return sys;
}

MonitoredSystem monitored_tom(const Tom& t, const SubspaceSpec& h0) {
  if (h0.admissible()) return monitored_stacked(block_superop(t).mat, t.dim, t.size(), h0);
  // General subspaces go through the CPTP embedding.
  return monitored_channel(to_superop(embed_cptp(t)), h0);
}

CMat SchurFn::resolvent_mat(Complex z) const {
  const Index n = sys_.op.rows();
  if (std::abs(z) > 1.0 + 1e-12)
    throw std::invalid_argument("SchurFn: evaluation outside the closed unit disk");
  CMat a = identity(n) - z * (sys_.q_super * sys_.op);
  if (std::abs(z) >= 1.0 - 1e-12 && min_singular_value(a) < tols().resolvent_min_sv)
    fail(Errc::ResolventSingular, "I - z q Phi numerically singular on the unit circle");
  return solve_unchecked(a, identity(n));
}

CMat SchurFn::eval(Complex z) const {
  auto key = std::make_tuple(z.real(), z.imag(), false);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  const Index n = sys_.op.rows();
  CMat ip = identity(n) - sys_.q_super;
  CMat f = ip * sys_.op * resolvent_mat(z) * ip;
  cache_.emplace(key, f);
  return f;
}

CMat SchurFn::reduced_eval(Complex z) const {
  auto key = std::make_tuple(z.real(), z.imag(), true);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  CMat f = sys_.p_super * sys_.op * resolvent_mat(z) * sys_.p_super;
  cache_.emplace(key, f);
  return f;
}

CMat SchurFn::coeff(int n) const {
  if (n < 1) fail(Errc::DimensionMismatch, "first-return coefficients start at n = 1");
  CMat acc = sys_.op * sys_.p_super;
  for (int k = 1; k < n; ++k) acc = sys_.op * (sys_.q_super * acc);
  return sys_.p_super * acc;
}

double survival(const MonitoredSystem& sys, const CVec& rho_vec, int n) {
  CVec w = rho_vec;
  for (int k = 0; k < n; ++k) w = sys.q_super * (sys.op * w);
  return sys.trace_of(w);
}

LimitResult aitken_limit(const std::vector<double>& seq, double stab) {
  LimitResult r;
  if (seq.empty()) return r;
  r.value = seq.back();
  if (seq.size() >= 2 && std::abs(seq[seq.size() - 1] - seq[seq.size() - 2]) <= stab) {
    r.converged = true;
    return r;
  }
  std::vector<double> cur = seq;
  for (int level = 0; level < 4 && cur.size() >= 3; ++level) {
    std::vector<double> next;
    next.reserve(cur.size() - 2);
    for (size_t k = 0; k + 2 < cur.size(); ++k) {
      double d1 = cur[k + 1] - cur[k];
      double d2 = cur[k + 2] - cur[k + 1];
      double den = d2 - d1;
      if (std::abs(den) < 1e-300)
        next.push_back(cur[k + 2]);
      else
        next.push_back(cur[k + 2] - d2 * d2 / den);
    }
    cur = std::move(next);
    r.value = cur.back();
    if (cur.size() >= 2 && std::abs(cur.back() - cur[cur.size() - 2]) <= stab) {
      r.converged = true;
      return r;
    }
  }
  return r;
}

LimitResult extrapolate_to_one(const std::function<double(double)>& g,
                               double divergence_threshold) {
  std::vector<double> vals;
  for (int k = tols().extrapolation_k_min; k <= tols().extrapolation_k_max; ++k) {
    double x = 1.0 - std::pow(2.0, -k);
    double v;
    try {
      v = g(x);
    } catch (const Error&) {
      break;  // resolvent too ill-conditioned; the grid hit its noise floor
    }
    if (!std::isfinite(v)) break;
    if (std::abs(v) > divergence_threshold) {
      LimitResult r;
      r.value = kInfiniteTime;
      r.diverged = true;
      r.converged = true;
      return r;
    }
    vals.push_back(v);
    if (vals.size() >= 2 &&
        std::abs(vals[vals.size() - 1] - vals[vals.size() - 2]) <=
            1e-13 * std::max(1.0, std::abs(v))) {
      LimitResult r;
      r.value = v;
      r.converged = true;
      return r;
    }
    if (vals.size() >= 5) {
      LimitResult r = aitken_limit(vals, tols().extrapolation_stab);
      if (r.converged) return r;
    }
  }
  return aitken_limit(vals, tols().extrapolation_stab * 10);
}

namespace {

struct ResolventAt {
  Eigen::PartialPivLU<CMat> lu;
  explicit ResolventAt(const MonitoredSystem& sys, double x)
      : lu(CMat(identity(sys.op.rows()) - x * (sys.q_super * sys.op))) {}
  CVec apply(const CVec& v) const { return lu.solve(v); }
};

double pi_at(const MonitoredSystem& sys, const CVec& rho_vec, double x) {
  ResolventAt r(sys, x);
  return sys.trace_of(sys.p_super * (sys.op * r.apply(rho_vec)));
}

double tau_at(const MonitoredSystem& sys, const CVec& rho_vec, double x) {
  ResolventAt r(sys, x);
  CVec inner = sys.q_super * (sys.op * r.apply(rho_vec));
  return 1.0 + sys.trace_of(sys.p_super * (sys.op * r.apply(inner)));
}

}  // namespace

RecurrenceReport recurrence_metrics(const MonitoredSystem& sys, const CVec& rho_vec,
                                    int series_len, bool force_extrapolate) {
  RecurrenceReport rep;
  if (sys.trace_norm_of(sys.q_super * rho_vec) > tols().state_support)
    fail(Errc::StateOutsideSubspace, "state has support outside the return subspace");

  const Index n = sys.op.rows();
  CMat a = identity(n) - sys.q_super * sys.op;
  rep.min_singular_value = min_singular_value(a);

  if (!force_extrapolate && rep.min_singular_value >= tols().resolvent_min_sv) {
    rep.method = Method::DirectSolve;
    CVec x = solve_unchecked(a, rho_vec);
    rep.pi = sys.trace_of(sys.p_super * (sys.op * x));
    rep.recurrent = rep.pi >= 1.0 - tols().pi_deficit;
    rep.tau = rep.recurrent ? sys.trace_of(x) : kInfiniteTime;
  } else {
    rep.method = Method::Extrapolated;
    LimitResult pi = extrapolate_to_one([&](double x) { return pi_at(sys, rho_vec, x); });
    rep.pi = pi.value;
    rep.converged = pi.converged;
    rep.recurrent = rep.pi >= 1.0 - tols().pi_deficit;
    if (rep.recurrent) {
      LimitResult tau = extrapolate_to_one([&](double x) { return tau_at(sys, rho_vec, x); });
      rep.tau = tau.diverged ? kInfiniteTime : tau.value;
      rep.converged = rep.converged && tau.converged;
    } else {
      rep.tau = kInfiniteTime;
    }
  }

  CVec w = rho_vec;
  rep.first_return.reserve(series_len);
  rep.survival.reserve(series_len);
  for (int k = 1; k <= series_len; ++k) {
    CVec step = sys.op * w;
    rep.first_return.push_back(sys.trace_of(sys.p_super * step));
    w = sys.q_super * step;
    rep.survival.push_back(sys.trace_of(w));
  }
  rep.positive_recurrent = rep.recurrent && std::isfinite(rep.tau);
  return rep;
}

double landing_probability(const MonitoredSystem& sys, const CVec& rho_vec, const CVec& psi) {
  // psi must lie in H0
  CVec p_psi;
  if (sys.rep == MonitoredSystem::Rep::Channel) {
    p_psi = sys.p_amb * psi;
  } else {
    p_psi = CVec::Zero(psi.size());
    const Index d = sys.d;
    for (int s = 0; s < sys.nsites; ++s) {
      CVec comp(d);
      for (Index a = 0; a < d; ++a) comp(a) = psi(a * sys.nsites + s);
      comp = sys.p_sites[s] * comp;
      for (Index a = 0; a < d; ++a) p_psi(a * sys.nsites + s) = comp(a);
    }
  }
  if ((p_psi - psi).norm() > tols().state_support)
    fail(Errc::StateOutsideSubspace, "landing vector outside the return subspace");

  auto value_at = [&](double x) {
    ResolventAt r(sys, x);
    CVec y = sys.p_super * (sys.op * r.apply(rho_vec));
    if (sys.rep == MonitoredSystem::Rep::Channel) {
      CMat sigma = unvec(y, sys.d, sys.d);
      return (psi.adjoint() * sigma * psi)(0, 0).real();
    }
    double acc = 0;
    const Index b = sys.d * sys.d;
    for (int s = 0; s < sys.nsites; ++s) {
      CMat sigma = unvec(y.segment(s * b, b), sys.d, sys.d);
      CVec comp(sys.d);
      for (Index a = 0; a < sys.d; ++a) comp(a) = psi(a * sys.nsites + s);
      acc += (comp.adjoint() * sigma * comp)(0, 0).real();
    }
    return acc;
  };

  CMat a = identity(sys.op.rows()) - sys.q_super * sys.op;
  if (min_singular_value(a) >= tols().resolvent_min_sv) return value_at(1.0);
  return extrapolate_to_one(value_at).value;
}

double averaged_return_time(const MonitoredSystem& sys) {
  auto value_at = [&](double x) {
    ResolventAt r(sys, x);
    return sys.trace_of(r.apply(sys.p_vec)) / static_cast<double>(sys.h0_dim);
  };
  CMat a = identity(sys.op.rows()) - sys.q_super * sys.op;
  if (min_singular_value(a) >= tols().resolvent_min_sv) return value_at(1.0);
  LimitResult r = extrapolate_to_one(value_at);
  return r.diverged ? kInfiniteTime : r.value;
}

QuantizationResult unital_quantization_check(const KrausMap& phi, const SubspaceSpec& h0) {
  if (!h0.isometry) fail(Errc::DimensionMismatch, "unital_quantization_check: general subspace required");
  const CMat& v0 = *h0.isometry;
  CMat w = relevant_subspace(phi, v0);
  const Index m = w.cols();
  KrausMap restricted(m, {});
  for (const auto& b : phi.kraus) restricted.kraus.push_back(w.adjoint() * b * w);
  if (!is_unital(restricted))
    fail(Errc::NotUnitalOnEnclosure, "channel restricted to the minimal enclosure is not unital");
  QuantizationResult out;
  out.enclosure_dim = m;
  out.predicted = static_cast<double>(m) / static_cast<double>(v0.cols());
  MonitoredSystem sys = monitored_channel(restricted, general_subspace(w.adjoint() * v0));
  out.averaged = averaged_return_time(sys);
  if (std::abs(out.averaged - out.predicted) > tols().quantization_check)
    fail(Errc::NoConvergence, "averaged return time deviates from the quantized prediction");
  return out;
}

double kac_ideal(const CMat& chi, const CVec& psi) {
  double overlap = (psi.adjoint() * chi * psi)(0, 0).real();
  if (overlap <= 1e-12) fail(Errc::BadWeights, "kac_ideal: <psi|chi psi> is not positive");
  return 1.0 / overlap;
}

KacResult kac_correction(const KrausMap& phi, const CMat& chi, const CVec& psi) {
  if (trace_norm(phi.apply(chi) - chi) > tols().kac_invariance)
    fail(Errc::NotInvariant, "chi is not invariant under the channel");
  const Index d = phi.dim;
  CMat rho_psi = psi * psi.adjoint();
  CMat q = identity(d) - rho_psi;
  KacResult out;
  out.ideal = kac_ideal(chi, psi);
  CMat phi_psi = q * chi * rho_psi + rho_psi * chi * q;

  MonitoredSystem sys = monitored_channel(phi, general_subspace(psi));
  CMat a = identity(sys.op.rows()) - sys.q_super * sys.op;
  CVec x;
  if (min_singular_value(a) >= tols().resolvent_min_sv) {
    x = solve_unchecked(a, vec(phi_psi));
    out.correction = 1.0 - sys.trace_of(x);
  } else {
    LimitResult r = extrapolate_to_one([&](double t) {
      ResolventAt res(sys, t);
      return 1.0 - sys.trace_of(res.apply(vec(phi_psi)));
    });
    out.correction = r.value;
  }
  out.tau = out.ideal * out.correction;
  return out;
}

double kac_site(const Tom& t, int site) {
  if (!is_irreducible(t)) fail(Errc::NotIrreducible, "kac_site requires an irreducible chain");
  TomDensity chi = invariant_density(t);
  double weight = chi.site[site].trace().real();
  if (weight <= 1e-14) fail(Errc::NoInvariantState, "stationary block has no mass at the site");
  double ideal = 1.0 / weight;

  TomDensity rho = site_density(t.size(), site, chi.site[site] / weight);
  double tau = expected_return_time(t, sites_subspace(t.size(), t.dim, {site}), rho);
  if (std::abs(tau - ideal) > tols().quantization_check)
    fail(Errc::NoConvergence, "site Kac value disagrees with the monitored return time");
  return ideal;
}

PolyaDiagnostic polya_series(const MonitoredSystem& sys, const CVec& rho_vec, int n_terms,
                             double threshold, double increment_floor) {
  PolyaDiagnostic out;
  CVec u = sys.p_super * rho_vec;
  double sum = 0;
  double last = 0;
  for (int n = 1; n <= n_terms; ++n) {
    u = sys.op * u;
    last = sys.trace_of(sys.p_super * u);
    sum += last;
    out.partial_sums.push_back(sum);
  }
  out.diverging = sum > threshold && last > increment_floor;
  return out;
}

RecurrenceReport recurrence(const KrausMap& phi, const SubspaceSpec& h0, const CMat& rho,
                            int series_len) {
  MonitoredSystem sys = monitored_channel(phi, h0);
  return recurrence_metrics(sys, vec(rho), series_len);
}

RecurrenceReport recurrence(const Tom& t, const SubspaceSpec& h0, const TomDensity& rho,
                            int series_len) {
  if (h0.admissible()) {
    MonitoredSystem sys = monitored_tom(t, h0);
    return recurrence_metrics(sys, stack_vec(rho), series_len);
  }
  return recurrence(t, h0, stack_to_full(rho, t.dim), series_len);
}

RecurrenceReport recurrence(const Tom& t, const SubspaceSpec& h0, const CMat& rho_full,
                            int series_len) {
  MonitoredSystem sys = monitored_tom(t, h0);
  return recurrence_metrics(sys, vec(rho_full), series_len);
}

double return_probability(const KrausMap& phi, const SubspaceSpec& h0, const CMat& rho) {
  return recurrence(phi, h0, rho, 0).pi;
}

double expected_return_time(const KrausMap& phi, const SubspaceSpec& h0, const CMat& rho) {
  return recurrence(phi, h0, rho, 0).tau;
}

double return_probability(const Tom& t, const SubspaceSpec& h0, const TomDensity& rho) {
  return recurrence(t, h0, rho, 0).pi;
}

double expected_return_time(const Tom& t, const SubspaceSpec& h0, const TomDensity& rho) {
  return recurrence(t, h0, rho, 0).tau;
}

}  // namespace qmcr
