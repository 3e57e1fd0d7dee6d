#include "qmcr/chains1d.hpp"

#include <Eigen/LU>
#include <cmath>

namespace qmcr {

void HomogeneousParams::validate() const {
  if (lambda <= 0.0 || lambda >= 1.0) fail(Errc::BadWeights, "lambda must lie in (0,1)");
  const Index d = phi.dim;
  if (phi_plus.dim != d || phi0.dim != d || phi_minus.dim != d)
    fail(Errc::DimensionMismatch, "internal dimensions disagree");
  if (!is_trace_preserving(phi) || !is_trace_preserving(phi_plus))
    fail(Errc::HypothesisViolated, "phi and phi_plus must be trace preserving");
  if (!is_trace_preserving(add(phi0, phi_minus)))
    fail(Errc::HypothesisViolated, "phi0 + phi_minus must be trace preserving");
  for (const KrausMap* m : {&phi, &phi_plus, &phi0, &phi_minus})
    if (min_singular_value(to_superop(*m).mat) < tols().resolvent_min_sv)
      fail(Errc::SingularMatrix, "model blocks must be invertible as superoperators");
}

std::optional<KrausMap> HalfLineModel::block(int i, int j) const {
  if (i < 0 || j < 0 || std::abs(i - j) > 1) return std::nullopt;
  auto it = boundary.find({i, j});
  if (it != boundary.end()) return it->second;
  if (std::min(i, j) >= tail_start) {
    if (i == j + 1) return tail_sub;
    if (j == i + 1) return tail_super;
    return tail_diag;
  }
  return std::nullopt;
}

HalfLineModel HalfLineModel::homogeneous(const HomogeneousParams& p) {
  p.validate();
  HalfLineModel m;
  m.dim = p.phi.dim;
  m.boundary[{0, 0}] = p.phi0;
  m.boundary[{0, 1}] = scale(p.phi_plus, p.lambda);
  m.boundary[{1, 0}] = p.phi_minus;
  m.tail_start = 1;
  m.tail_sub = scale(p.phi, 1.0 - p.lambda);
  m.tail_super = scale(p.phi, p.lambda);
  return m;
}

std::optional<KrausMap> LineModel::block(int i, int j) const {
  if (std::abs(i - j) > 1) return std::nullopt;
  auto it = center.find({i, j});
  if (it != center.end()) return it->second;
  if (std::min(i, j) >= right_tail_start) {
    if (i == j + 1) return right_sub;
    if (j == i + 1) return right_super;
    return right_diag;
  }
  if (std::max(i, j) <= left_tail_end) {
    if (i == j + 1) return left_sub;
    if (j == i + 1) return left_super;
    return left_diag;
  }
  return std::nullopt;
}

LineModel LineModel::homogeneous(const HomogeneousParams& p) {
  p.validate();
  LineModel m;
  m.dim = p.phi.dim;
  m.center[{0, 0}] = p.phi0;
  m.center[{-1, 0}] = scale(p.phi_minus, p.lambda);
  m.center[{1, 0}] = scale(p.phi_minus, 1.0 - p.lambda);
  m.center[{0, -1}] = scale(p.phi_plus, 1.0 - p.lambda);
  m.center[{0, 1}] = scale(p.phi_plus, p.lambda);
  m.right_tail_start = 1;
  m.left_tail_end = -1;
  m.right_sub = scale(p.phi, 1.0 - p.lambda);
  m.right_super = scale(p.phi, p.lambda);
  m.left_sub = scale(p.phi, 1.0 - p.lambda);  // toward the origin
  m.left_super = scale(p.phi, p.lambda);      // away from the origin
  return m;
}

namespace {

CMat superop_or_zero(const std::optional<KrausMap>& m, Index d) {
  if (!m) return zeros(d * d, d * d);
  return to_superop(*m).mat;
}

}  // namespace

CMat iterate_schur(const CMat& f_hat, const CMat& sub_hat, const CMat& diag_hat,
                   const CMat& super_hat, Complex z) {
  if (std::abs(z) < 1e-300) fail(Errc::SingularIterate, "iterate undefined at z = 0");
  const Index n = f_hat.rows();
  CMat shifted = f_hat - diag_hat;
  if (min_singular_value(shifted) < 1e-13)
    fail(Errc::SingularIterate, "f - E(i,i) is numerically singular");
  return (1.0 / z) * identity(n) - sub_hat * solve_unchecked(shifted, super_hat);
}

CMat assemble_f0(const CMat& f1_hat, const CMat& diag0_hat, const CMat& super0_hat,
                 const CMat& sub0_hat, Complex z) {
  const Index n = f1_hat.rows();
  CMat core = identity(n) - z * f1_hat;
  if (min_singular_value(core) < 1e-13) fail(Errc::SingularIterate, "I - z f1 is singular");
  return diag0_hat + z * (super0_hat * solve_unchecked(core, sub0_hat));
}

CMat closed_form_f1(const HomogeneousParams& p, Complex z) {
  if (std::abs(z) < 1e-300) fail(Errc::SingularIterate, "closed form undefined at z = 0");
  CMat phi_hat = to_superop(p.phi).mat;
  const Index n = phi_hat.rows();
  CMat psi = 4.0 * p.lambda * (1.0 - p.lambda) * (phi_hat * phi_hat);
  CMat root = principal_sqrt(identity(n) - (z * z) * psi);
  return (identity(n) - root) / (2.0 * z);
}

CMat closed_form_f0(const HomogeneousParams& p, Complex z) {
  CMat phi_hat = to_superop(p.phi).mat;
  CMat f1 = closed_form_f1(p, z);
  // Phi^-1 f1 Phi^-1 via two solves (right division through transposes)
  CMat left = solve_unchecked(phi_hat, f1);
  CMat both = solve_unchecked(phi_hat.transpose(), left.transpose()).transpose();
  return to_superop(p.phi0).mat +
         (to_superop(p.phi_plus).mat * both * to_superop(p.phi_minus).mat) / (1.0 - p.lambda);
}

namespace {

double trace_fraction(const KrausMap& m, const CMat& rho) {
  return m.apply(rho).trace().real();
}

RecurrenceReport closed_report(double pi, double tau, bool converged) {
  RecurrenceReport r;
  r.pi = pi;
  r.tau = tau;
  r.method = Method::ClosedForm;
  r.recurrent = pi >= 1.0 - tols().pi_deficit;
  r.positive_recurrent = r.recurrent && std::isfinite(tau);
  r.converged = converged;
  return r;
}

}  // namespace

RecurrenceReport halfline_site_metrics(const HomogeneousParams& p, int site, const CMat& rho) {
  p.validate();
  const double lam = p.lambda;
  const double t_minus = trace_fraction(p.phi_minus, rho);
  if (site == 0) {
    double pi = lam < 0.5 ? 1.0 - (1.0 - 2.0 * lam) / (1.0 - lam) * t_minus : 1.0;
    double tau = lam > 0.5 ? 1.0 + t_minus / (2.0 * lam - 1.0) : kInfiniteTime;
    return closed_report(pi, tau, true);
  }
  if (site == 1) {
    double pi = lam < 0.5 ? 2.0 * lam : 1.0;
    double tau = kInfiniteTime;
    if (lam > 0.5) {
      const Index d = p.phi.dim;
      CMat i_minus_phi0 = identity(d * d) - to_superop(p.phi0).mat;
      CVec w = solve_unchecked(i_minus_phi0, to_superop(p.phi_plus).mat * vec(rho));
      double inner = unvec(w, d, d).trace().real();
      tau = lam * (1.0 / (2.0 * lam - 1.0) + inner);
    }
    return closed_report(pi, tau, true);
  }
  fail(Errc::DimensionMismatch, "closed forms cover sites 0 and 1");
}

RecurrenceReport line_site0_metrics(const HomogeneousParams& p, const CMat& rho) {
  p.validate();
  const double t_minus = trace_fraction(p.phi_minus, rho);
  double pi = 1.0 - std::abs(1.0 - 2.0 * p.lambda) * t_minus;
  // positive recurrence never holds at site 0: tau diverges even at lambda = 1/2
  return closed_report(pi, kInfiniteTime, true);
}

HalfLineModel fold_to_halfline(const LineModel& m) {
  const Index d = m.dim;
  HalfLineModel f;
  f.dim = 2 * d;

  int extent = 1;
  for (const auto& [key, blk] : m.center)
    extent = std::max({extent, std::abs(key.first), std::abs(key.second)});
  const int w = extent + 1;

  auto folded_block = [&](int i, int j) -> std::optional<KrausMap> {
    struct Part {
      int row, col;  // component coordinates in the 2x2 grid
      std::optional<KrausMap> blk;
    };
    Part parts[4] = {
        {0, 0, m.block(-i - 1, -j - 1)},
        {0, 1, m.block(-i - 1, j)},
        {1, 0, m.block(i, -j - 1)},
        {1, 1, m.block(i, j)},
    };
    KrausMap out(2 * d, {});
    bool any = false;
    for (const Part& p : parts) {
      if (!p.blk) continue;
      any = true;
      CMat e = zeros(2, 2);
      e(p.row, p.col) = 1.0;
      for (const auto& b : p.blk->kraus) out.kraus.push_back(kron(e, b));
    }
    if (!any) return std::nullopt;
    return out;
  };

  for (int i = 0; i <= w; ++i)
    for (int j = std::max(0, i - 1); j <= std::min(w, i + 1); ++j)
      if (auto blk = folded_block(i, j)) f.boundary[{i, j}] = *blk;

  f.tail_start = w;
  // deep in the tail the cross components vanish and the fold is diagonal
  auto tail_pair = [&](const std::optional<KrausMap>& upper,
                       const std::optional<KrausMap>& lower) -> std::optional<KrausMap> {
    if (!upper && !lower) return std::nullopt;
    KrausMap out(2 * d, {});
    CMat e00 = zeros(2, 2), e11 = zeros(2, 2);
    e00(0, 0) = 1.0;
    e11(1, 1) = 1.0;
    if (upper)
      for (const auto& b : upper->kraus) out.kraus.push_back(kron(e00, b));
    if (lower)
      for (const auto& b : lower->kraus) out.kraus.push_back(kron(e11, b));
    return out;
  };
  f.tail_sub = tail_pair(m.left_super, m.right_sub);
  f.tail_super = tail_pair(m.left_sub, m.right_super);
  f.tail_diag = tail_pair(m.left_diag, m.right_diag);
  return f;
}

namespace {

struct Window {
  std::vector<CMat> sub, diag, super;  // sub[i] = E(i+1,i), super[i] = E(i,i+1)
  int monitored = 0;
};

struct WindowMetrics {
  double pi = 0, tau = 0;
  std::vector<double> first_return, survival;
};

// Block-tridiagonal Thomas solve of (I - q E) x = r, then pi and tau reads.
WindowMetrics evaluate_window(const Window& w, const CMat& p_site, const CVec& rho_vec,
                              int series_len) {
  const int m = static_cast<int>(w.diag.size());
  const Index b = w.diag[0].rows();
  const Index d = p_site.rows();
  const int k = w.monitored;

  CMat q_super = conjugation_superop(identity(d) - p_site);
  CMat p_super = conjugation_superop(p_site);
  auto gated = [&](int row, const CMat& blk) { return row == k ? CMat(q_super * blk) : blk; };

  std::vector<CVec> y(m, CVec::Zero(b));
  y[k] = rho_vec;

  std::vector<Eigen::PartialPivLU<CMat>> lu;
  lu.reserve(m);
  std::vector<CMat> dinv_super(m - 1 > 0 ? m - 1 : 0);
  CMat dcur = identity(b) - gated(0, w.diag[0]);
  lu.emplace_back(dcur);
  for (int i = 1; i < m; ++i) {
    CMat a_lower = -gated(i, w.sub[i - 1]);
    CMat a_upper = -gated(i - 1, w.super[i - 1]);
    dinv_super[i - 1] = lu[i - 1].solve(a_upper);
    dcur = identity(b) - gated(i, w.diag[i]) - a_lower * dinv_super[i - 1];
    y[i] -= a_lower * lu[i - 1].solve(y[i - 1]);
    lu.emplace_back(dcur);
  }
  std::vector<CVec> x(m);
  x[m - 1] = lu[m - 1].solve(y[m - 1]);
  for (int i = m - 2; i >= 0; --i) x[i] = lu[i].solve(y[i]) - dinv_super[i] * x[i + 1];

  auto apply_e_block = [&](const std::vector<CVec>& v, int i) {
    CVec out = CVec::Zero(b);
    if (i > 0) out += w.sub[i - 1] * v[i - 1];
    out += w.diag[i] * v[i];
    if (i + 1 < m) out += w.super[i] * v[i + 1];
    return out;
  };

  WindowMetrics out;
  CMat sigma = unvec(CVec(p_super * apply_e_block(x, k)), d, d);
  out.pi = sigma.trace().real();
  for (int i = 0; i < m; ++i) out.tau += unvec(x[i], d, d).trace().real();

  if (series_len > 0) {
    std::vector<CVec> v(m, CVec::Zero(b));
    v[k] = rho_vec;
    for (int n = 1; n <= series_len; ++n) {
      std::vector<CVec> next(m);
      for (int i = 0; i < m; ++i) next[i] = apply_e_block(v, i);
      out.first_return.push_back(unvec(CVec(p_super * next[k]), d, d).trace().real());
      next[k] = q_super * next[k];
      double s = 0;
      for (int i = 0; i < m; ++i) s += unvec(next[i], d, d).trace().real();
      out.survival.push_back(s);
      v = std::move(next);
    }
  }
  return out;
}

bool tau_diverging(const std::vector<double>& taus, double tol) {
  const size_t n = taus.size();
  if (!taus.empty() && taus.back() > tols().tau_divergence) return true;
  if (n < 3) return false;
  double d1 = taus[n - 2] - taus[n - 3];
  double d2 = taus[n - 1] - taus[n - 2];
  return d2 > tol * std::max(1.0, taus.back()) && d2 >= 0.8 * d1;
}

RecurrenceReport truncation_driver(const std::function<WindowMetrics(int)>& eval, int min_window,
                                   const TruncationOptions& opt) {
  RecurrenceReport rep;
  rep.method = Method::Truncated;
  std::vector<double> pis, taus;
  WindowMetrics last{};
  int n = std::max(opt.n_min, min_window);
  bool raw_pi_done = false;
  for (; n <= opt.n_max; n *= 2) {
    last = eval(n);
    rep.trace_sites.push_back(n);
    pis.push_back(last.pi);
    taus.push_back(last.tau);
    raw_pi_done = pis.size() >= 2 && std::abs(pis[pis.size() - 1] - pis[pis.size() - 2]) < opt.tol;
    bool tau_done = taus.size() >= 2 &&
                    std::abs(taus[taus.size() - 1] - taus[taus.size() - 2]) <
                        opt.tol * std::max(1.0, taus.back());
    if (raw_pi_done && (tau_done || tau_diverging(taus, opt.tol))) break;
  }
  rep.trace_pi = pis;
  rep.trace_tau = taus;
  rep.first_return = last.first_return;
  rep.survival = last.survival;

  if (raw_pi_done) {
    rep.pi = pis.back();
    rep.converged = true;
  } else {
    LimitResult acc = aitken_limit(pis, opt.tol * 1e-2);
    rep.pi = acc.value;
    rep.converged = acc.converged;
    rep.method = Method::Extrapolated;
  }

  // classification honors the truncation tolerance, not the exact-arithmetic gate
  rep.recurrent = rep.pi >= 1.0 - 10.0 * opt.tol;
  if (!rep.recurrent) {
    rep.tau = kInfiniteTime;
  } else if (tau_diverging(taus, opt.tol)) {
    rep.tau = kInfiniteTime;
  } else {
    bool tau_raw_done = taus.size() >= 2 &&
                        std::abs(taus[taus.size() - 1] - taus[taus.size() - 2]) <
                            opt.tol * std::max(1.0, taus.back());
    if (tau_raw_done) {
      rep.tau = taus.back();
    } else {
      LimitResult acc = aitken_limit(taus, opt.tol * std::max(1.0, taus.back()));
      if (acc.converged) {
        rep.tau = acc.value;
        rep.method = Method::Extrapolated;
      } else {
        rep.tau = kInfiniteTime;  // unresolved growth reads as divergence
        rep.converged = false;
      }
    }
  }
  rep.positive_recurrent = rep.recurrent && std::isfinite(rep.tau);
  return rep;
}

CMat effective_projector(const TruncationOptions& opt, Index d) {
  if (opt.site_projector.size() == 0) return identity(d);
  if (opt.site_projector.rows() != d || opt.site_projector.cols() != d)
    fail(Errc::DimensionMismatch, "site projector has the wrong dimension");
  return opt.site_projector;
}

void check_support(const CMat& rho, const CMat& p) {
  CMat q = identity(p.rows()) - p;
  if (trace_norm(q * rho * q) > tols().state_support)
    fail(Errc::StateOutsideSubspace, "state not supported in the monitored subspace");
}

}  // namespace

RecurrenceReport truncate_numeric(const HalfLineModel& m, int site, const CMat& rho,
                                  const TruncationOptions& opt) {
  const Index d = m.dim;
  CMat p = effective_projector(opt, d);
  check_support(rho, p);
  auto eval = [&](int nwin) {
    Window w;
    w.monitored = site;
    const int msites = nwin + 1;
    w.diag.reserve(msites);
    for (int i = 0; i < msites; ++i) {
      w.diag.push_back(superop_or_zero(m.block(i, i), d));
      if (i + 1 < msites) {
        w.sub.push_back(superop_or_zero(m.block(i + 1, i), d));
        w.super.push_back(superop_or_zero(m.block(i, i + 1), d));
      }
    }
    return evaluate_window(w, p, vec(rho), opt.series_len);
  };
  return truncation_driver(eval, site + 2, opt);
}

RecurrenceReport truncate_numeric(const LineModel& m, int site, const CMat& rho,
                                  const TruncationOptions& opt) {
  const Index d = m.dim;
  CMat p = effective_projector(opt, d);
  check_support(rho, p);
  auto eval = [&](int nwin) {
    Window w;
    w.monitored = site + nwin;
    const int msites = 2 * nwin + 1;
    w.diag.reserve(msites);
    for (int i = 0; i < msites; ++i) {
      const int oi = i - nwin;
      w.diag.push_back(superop_or_zero(m.block(oi, oi), d));
      if (i + 1 < msites) {
        w.sub.push_back(superop_or_zero(m.block(oi + 1, oi), d));
        w.super.push_back(superop_or_zero(m.block(oi, oi + 1), d));
      }
    }
    return evaluate_window(w, p, vec(rho), opt.series_len);
  };
  return truncation_driver(eval, std::abs(site) + 2, opt);
}

namespace {

bool blocks_equal(const std::optional<KrausMap>& a, const std::optional<KrausMap>& b, Index d) {
  CMat ma = superop_or_zero(a, d), mb = superop_or_zero(b, d);
  return (ma - mb).cwiseAbs().maxCoeff() <= 1e-9;
}

void require_symmetric_unital(const HalfLineModel& m, int window) {
  const Index d = m.dim;
  for (int i = 0; i <= window; ++i) {
    for (int j = std::max(0, i - 1); j <= i + 1; ++j)
      if (!blocks_equal(m.block(i, j), m.block(j, i), d))
        fail(Errc::HypothesisViolated, "chain is not symmetric");
    CMat row = zeros(d, d);
    for (int j = std::max(0, i - 1); j <= i + 1; ++j)
      if (auto b = m.block(i, j)) row += b->apply(identity(d));
    if ((row - identity(d)).cwiseAbs().maxCoeff() > 1e-9)
      fail(Errc::HypothesisViolated, "chain is not unital");
  }
}

}  // namespace

bool symmetric_unital_invariance(const HalfLineModel& a, const HalfLineModel& b, int site,
                                 const CMat& rho, int check_window) {
  require_symmetric_unital(a, check_window);
  require_symmetric_unital(b, check_window);
  for (int j = site; j <= check_window; ++j)
    for (int i = std::max(0, j - 1); i <= j + 1; ++i)
      if (!blocks_equal(a.block(i, j), b.block(i, j), a.dim))
        fail(Errc::HypothesisViolated, "models differ beyond the first columns");

  TruncationOptions opt;
  opt.tol = tols().truncation * 0.1;
  double pa = truncate_numeric(a, site, rho, opt).pi;
  double pb = truncate_numeric(b, site, rho, opt).pi;
  return std::abs(pa - pb) <= tols().truncation;
}

}  // namespace qmcr
