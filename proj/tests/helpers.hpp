#pragma once

#include <random>

#include "qmcr/chains1d.hpp"
#include "qmcr/mcsim.hpp"
#include "qmcr/model_io.hpp"
#include "qmcr/recurrence.hpp"
#include "qmcr/splitting.hpp"

namespace qt {

using namespace qmcr;
using Rng = std::mt19937_64;

inline double max_abs(const CMat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }
inline double max_diff(const CMat& a, const CMat& b) { return max_abs(a - b); }

inline CMat randn(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> g;
  CMat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = Complex(g(rng), g(rng));
  return m;
}

inline CVec random_unit(Index d, Rng& rng) {
  CVec v = randn(d, 1, rng);
  return v / v.norm();
}

inline CMat random_density(Index d, Rng& rng) {
  CMat g = randn(d, d, rng);
  CMat rho = g * g.adjoint();
  return rho / rho.trace().real();
}

inline CMat random_unitary(Index d, Rng& rng) {
  Eigen::HouseholderQR<CMat> qr(randn(d, d, rng));
  CMat q = qr.householderQ();
  CMat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < d; ++i) q.col(i) *= r(i, i) / std::abs(r(i, i));
  return q;
}

// Right-normalized Gaussian Kraus set: sum B*B = I exactly (up to roundoff).
inline KrausMap random_cptp(Index d, int nk, Rng& rng) {
  std::vector<CMat> g;
  CMat s = zeros(d, d);
  for (int i = 0; i < nk; ++i) {
    g.push_back(randn(d, d, rng));
    s += g.back().adjoint() * g.back();
  }
  CMat x = principal_sqrt(s);
  CMat xinv = solve(x, identity(d));
  KrausMap out(d, {});
  for (auto& b : g) out.kraus.push_back(b * xinv);
  return out;
}

// Random-unitary channel: CPTP and unital.
inline KrausMap random_unital_cptp(Index d, int nu, Rng& rng) {
  std::vector<double> w(nu);
  double total = 0;
  for (auto& x : w) {
    x = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
    total += x;
  }
  KrausMap out(d, {});
  for (int i = 0; i < nu; ++i) out.kraus.push_back(std::sqrt(w[i] / total) * random_unitary(d, rng));
  return out;
}

// ---- fixed models used across the suites ----

inline CMat pauli_x() {
  CMat m = zeros(2, 2);
  m(0, 1) = 1;
  m(1, 0) = 1;
  return m;
}
inline CMat pauli_y() {
  CMat m = zeros(2, 2);
  m(0, 1) = Complex(0, -1);
  m(1, 0) = Complex(0, 1);
  return m;
}
inline CMat pauli_z() {
  CMat m = identity(2);
  m(1, 1) = -1;
  return m;
}

// Two-site qubit chain with a depolarizing-like first column and a
// Hadamard-mixture second column; irreducible for all p, q in (0,1), unital
// iff p = 2q.
inline Tom two_site_model(double p, double q) {
  Tom t;
  t.dim = 2;
  t.vertices = {"1", "2"};
  CMat m12a(2, 2), m12b(2, 2), m22a(2, 2), m22b(2, 2);
  m12a << 1, 1, 0, 0;
  m12b << 0, 0, 1, -1;
  m22a << 1, 1, 0, 1;
  m22b << 1, 0, -1, 1;
  t.set_block(0, 0, KrausMap(2, {0.5 * std::sqrt(4 - 3 * p) * identity(2),
                                 0.5 * std::sqrt(p) * pauli_x()}));
  t.set_block(1, 0, KrausMap(2, {0.5 * std::sqrt(p) * pauli_y(), 0.5 * std::sqrt(p) * pauli_z()}));
  t.set_block(0, 1, KrausMap(2, {std::sqrt(q / 2) * m12a, std::sqrt(q / 2) * m12b}));
  t.set_block(1, 1, KrausMap(2, {std::sqrt((1 - q) / 3) * m22a, std::sqrt((1 - q) / 3) * m22b}));
  return t;
}

// Irreducible non-unital qubit channel with a closed-form fixed point.
inline KrausMap single_qubit_channel() {
  CMat b1(2, 2), b2(2, 2);
  const double s3 = 1.0 / std::sqrt(3.0), s2 = 1.0 / std::sqrt(2.0);
  b1 << s3, s2, s3, 0;
  b2 << s3, -s2, 0, 0;
  return KrausMap(2, {b1, b2});
}

inline CMat single_qubit_channel_fixed_point() {
  CMat chi(2, 2);
  const double off = (6.0 + std::sqrt(6.0)) / 5.0;
  chi << 3, off, off, 1;
  return 0.25 * chi;
}

// Three-site chain admitting a rank-1 overlapping factorization at the middle
// vertex (E(2,0) = 0, i.e. no direct 0 <- ... -> hop past the middle).
inline Tom three_site_chain() {
  Tom t;
  t.dim = 2;
  t.vertices = {"1", "2", "3"};
  t.set_block(0, 0, KrausMap(2, {std::sqrt(5.0 / 8.0) * identity(2),
                                 std::sqrt(1.0 / 8.0) * pauli_x()}));
  t.set_block(1, 0, KrausMap(2, {std::sqrt(1.0 / 8.0) * pauli_y(), std::sqrt(1.0 / 8.0) * pauli_z()}));
  CMat b01(2, 2), b11(2, 2), b21(2, 2), b02(2, 2), b12(2, 2), b22(2, 2);
  b01 << 0, 0, 1.0 / std::sqrt(6.0), 0;
  b11 << std::sqrt(1.0 / 6.0), std::sqrt(2.0 / 3.0), 0, 0;
  b21 << 1.0 / std::sqrt(3.0), 0, -1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0);
  b02 << 0, 0, std::sqrt(2.0 / 3.0), -std::sqrt(1.0 / 6.0);
  b12 << 0, 1.0 / std::sqrt(6.0), 0, 0;
  b22 << 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0), 0, 1.0 / std::sqrt(3.0);
  t.set_block(0, 1, KrausMap(2, {b01}));
  t.set_block(1, 1, KrausMap(2, {b11}));
  t.set_block(2, 1, KrausMap(2, {b21}));
  t.set_block(0, 2, KrausMap(2, {b02}));
  t.set_block(1, 2, KrausMap(2, {b12}));
  t.set_block(2, 2, KrausMap(2, {b22}));
  return t;
}

// Random TOM: each column gets CP mass on the allowed rows, then the whole
// column is right-normalized to a trace-preserving sum.
inline Tom random_tom(int nsites, Index d, Rng& rng,
                      const std::function<bool(int, int)>& allowed = {}) {
  Tom t;
  t.dim = d;
  for (int v = 0; v < nsites; ++v) t.vertices.push_back(std::to_string(v));
  for (int j = 0; j < nsites; ++j) {
    std::vector<std::pair<int, std::vector<CMat>>> col;
    CMat s = zeros(d, d);
    for (int i = 0; i < nsites; ++i) {
      if (allowed && !allowed(i, j)) continue;
      std::vector<CMat> ops;
      int nk = 1 + static_cast<int>(rng() % 2);
      for (int k = 0; k < nk; ++k) {
        ops.push_back(randn(d, d, rng));
        s += ops.back().adjoint() * ops.back();
      }
      col.emplace_back(i, std::move(ops));
    }
    CMat xinv = solve(principal_sqrt(s), identity(d));
    for (auto& [i, ops] : col) {
      for (auto& b : ops) b = b * xinv;
      t.set_block(i, j, KrausMap(d, ops));
    }
  }
  return t;
}

// Fixed internal channels for the 1d demos: unitary bulk motion, identity /
// bit-flip split at the boundary.
inline HomogeneousParams demo_homog(double lambda) {
  HomogeneousParams p;
  p.lambda = lambda;
  CMat h(2, 2);
  const double s = 1.0 / std::sqrt(2.0);
  h << s, s, s, -s;
  p.phi = KrausMap(2, {h});
  CMat rz(2, 2);
  rz << Complex(std::cos(0.3), -std::sin(0.3)), 0, 0, Complex(std::cos(0.3), std::sin(0.3));
  p.phi_plus = KrausMap(2, {rz});
  p.phi0 = KrausMap(2, {std::sqrt(0.5) * identity(2)});
  p.phi_minus = KrausMap(2, {std::sqrt(0.5) * pauli_x()});
  return p;
}

inline HomogeneousParams random_homog(double lambda, Rng& rng) {
  HomogeneousParams p;
  p.lambda = lambda;
  for (;;) {
    p.phi = random_cptp(2, 2, rng);
    if (min_singular_value(to_superop(p.phi).mat) > 1e-3) break;
  }
  for (;;) {
    p.phi_plus = random_cptp(2, 2, rng);
    if (min_singular_value(to_superop(p.phi_plus).mat) > 1e-3) break;
  }
  for (;;) {
    double c = std::uniform_real_distribution<double>(0.3, 0.7)(rng);
    KrausMap a = random_cptp(2, 2, rng), b = random_cptp(2, 2, rng);
    p.phi0 = scale(a, c);
    p.phi_minus = scale(b, 1.0 - c);
    if (min_singular_value(to_superop(p.phi0).mat) > 1e-3 &&
        min_singular_value(to_superop(p.phi_minus).mat) > 1e-3)
      break;
  }
  return p;
}

// Independent series oracle: sums n pi_n by raw power iteration on the
// superoperator matrices (no resolvent anywhere).
inline std::pair<double, double> series_pi_tau(const CMat& op, const CMat& p_super,
                                               const CMat& q_super, const CVec& trace_fn,
                                               const CVec& rho_vec, int max_n = 100000,
                                               double tail_tol = 1e-13) {
  CVec w = rho_vec;
  double pi = 0, tau = 0, s = 1;
  for (int n = 1; n <= max_n && s > tail_tol; ++n) {
    CVec step = op * w;
    double pn = trace_fn.dot(p_super * step).real();
    pi += pn;
    tau += n * pn;
    w = q_super * step;
    s = trace_fn.dot(w).real();
  }
  return {pi, tau};
}

}  // namespace qt
