#include "doctest.h"
#include "helpers.hpp"

using namespace qt;

namespace {

Complex random_disk_point(Rng& rng, double radius) {
  std::uniform_real_distribution<double> ur(0.0, 1.0);
  double r = radius * std::sqrt(ur(rng));
  double th = 2 * 3.14159265358979 * ur(rng);
  return {r * std::cos(th), r * std::sin(th)};
}

}  // namespace

TEST_CASE("iterate_schur and assemble_f0 are mutually inverse") {
  HomogeneousParams p = demo_homog(0.4);
  CMat phi0 = to_superop(p.phi0).mat;
  CMat sup0 = to_superop(scale(p.phi_plus, p.lambda)).mat;
  CMat sub0 = to_superop(p.phi_minus).mat;
  Rng rng(81);
  for (int k = 0; k < 10; ++k) {
    Complex z = random_disk_point(rng, 0.85);
    if (std::abs(z) < 0.05) z += 0.3;
    CMat f = closed_form_f0(p, z);
    CMat f1 = iterate_schur(f, sub0, phi0, sup0, z);
    CHECK(max_diff(f1, closed_form_f1(p, z)) < 1e-9);
    CHECK(max_diff(assemble_f0(f1, phi0, sup0, sub0, z), f) < 1e-9);
  }

  // vanishing off-diagonal boundary block: f stays at the self-transition map
  CMat zero = zeros(4, 4);
  CHECK(max_diff(assemble_f0(closed_form_f1(p, 0.5), phi0, zero, sub0, 0.5), phi0) < 1e-14);

  // homogeneous tail: the first and second iterates coincide
  CMat tail_sub = to_superop(scale(p.phi, 1 - p.lambda)).mat;
  CMat tail_sup = to_superop(scale(p.phi, p.lambda)).mat;
  for (double z : {0.3, 0.7}) {
    CMat f1 = closed_form_f1(p, z);
    CMat f2 = iterate_schur(f1, tail_sub, zeros(4, 4), tail_sup, z);
    CHECK(max_diff(f2, f1) < 1e-9);
  }
}

TEST_CASE("closed_form_f1: quadratic, commutation, scalar trace, series limit") {
  Rng rng(82);
  for (int rep = 0; rep < 4; ++rep) {
    HomogeneousParams p = rep == 0 ? demo_homog(0.35) : random_homog(0.2 + 0.2 * rep, rng);
    CMat phi_hat = to_superop(p.phi).mat;
    const double c = p.lambda * (1 - p.lambda);
    for (int k = 0; k < 5; ++k) {
      Complex z = random_disk_point(rng, 0.9);
      if (std::abs(z) < 0.05) z += 0.2;
      CMat f1 = closed_form_f1(p, z);
      CMat quad = f1 * f1 - f1 / z + c * (phi_hat * phi_hat);
      CHECK(max_abs(quad) < 1e-9);
      CHECK(max_abs(CMat(phi_hat * f1 - f1 * phi_hat)) < 1e-9);

      CMat rho = random_density(2, rng);
      Complex tr = Complex(0, 0);
      CVec v = f1 * vec(rho);
      tr = unvec(v, 2, 2).trace();
      Complex expect = (1.0 - std::sqrt(Complex(1.0, 0) - 4.0 * c * z * z)) / (2.0 * z);
      CHECK(std::abs(tr - expect) < 1e-10);
    }

    // leading series behavior near z = 0
    Complex z0(1e-3, 0);
    CMat f1 = closed_form_f1(p, z0);
    CHECK(max_diff(f1, CMat(c * z0 * (phi_hat * phi_hat))) < 1e-8);

    // fixed-point iteration oracle at z = 0.7
    Complex z(0.7, 0);
    CMat g = zeros(4, 4);
    for (int it = 0; it < 200; ++it)
      g = c * z * (phi_hat * solve_unchecked(CMat(identity(4) - z * g), phi_hat));
    CHECK(max_diff(g, closed_form_f1(p, z)) < 1e-11);
  }
}

TEST_CASE("halfline_site_metrics closed forms") {
  Rng rng(83);
  CMat rho = random_density(2, rng);

  HomogeneousParams p03 = demo_homog(0.3);
  RecurrenceReport s1 = halfline_site_metrics(p03, 1, rho);
  CHECK(s1.pi == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_FALSE(s1.recurrent);
  CHECK(s1.tau == kInfiniteTime);

  HomogeneousParams p075 = demo_homog(0.75);
  RecurrenceReport s0 = halfline_site_metrics(p075, 0, rho);
  double tm = p075.phi_minus.apply(rho).trace().real();
  CHECK(s0.pi == doctest::Approx(1.0));
  CHECK(s0.tau == doctest::Approx(1.0 + 2.0 * tm).epsilon(1e-12));
  CHECK(s0.positive_recurrent);

  HomogeneousParams p05 = demo_homog(0.5);
  RecurrenceReport b = halfline_site_metrics(p05, 0, rho);
  CHECK(b.pi == doctest::Approx(1.0));
  CHECK(b.recurrent);
  CHECK(b.tau == kInfiniteTime);
  CHECK_FALSE(b.positive_recurrent);
}

TEST_CASE("truncate_numeric matches the closed forms on the half-line") {
  Rng rng(84);
  for (double lambda : {0.2, 0.65}) {
    HomogeneousParams p = demo_homog(lambda);
    HalfLineModel m = HalfLineModel::homogeneous(p);
    CMat rho = random_density(2, rng);
    for (int site : {0, 1}) {
      RecurrenceReport closed = halfline_site_metrics(p, site, rho);
      RecurrenceReport num = truncate_numeric(m, site, rho);
      CHECK(num.pi == doctest::Approx(closed.pi).epsilon(2e-6));
      if (std::isfinite(closed.tau)) {
        REQUIRE(std::isfinite(num.tau));
        CHECK(num.tau == doctest::Approx(closed.tau).epsilon(2e-6));
      } else {
        CHECK(num.tau == kInfiniteTime);
      }
    }
  }
}

TEST_CASE("critical half-line point: slow monotone trace, accelerated limit") {
  HomogeneousParams p = demo_homog(0.5);
  HalfLineModel m = HalfLineModel::homogeneous(p);
  Rng rng(85);
  CMat rho = random_density(2, rng);
  RecurrenceReport r = truncate_numeric(m, 0, rho);
  REQUIRE(r.trace_pi.size() >= 3);
  for (size_t i = 1; i < r.trace_pi.size(); ++i) CHECK(r.trace_pi[i] >= r.trace_pi[i - 1] - 1e-12);
  CHECK(r.trace_pi.back() < 1.0);           // raw doubling alone does not get there
  CHECK(r.method == Method::Extrapolated);  // the accelerated limit does
  CHECK(r.pi == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.recurrent);
  CHECK(r.tau == kInfiniteTime);
}

TEST_CASE("nearest-neighbour locality: early series terms are window independent") {
  HomogeneousParams p = demo_homog(0.4);
  HalfLineModel m = HalfLineModel::homogeneous(p);
  Rng rng(86);
  CMat rho = random_density(2, rng);
  TruncationOptions small, wide;
  small.n_min = 4;
  small.n_max = 4;
  small.series_len = 4;
  wide.n_min = 64;
  wide.n_max = 64;
  wide.series_len = 4;
  RecurrenceReport a = truncate_numeric(m, 1, rho, small);
  RecurrenceReport b = truncate_numeric(m, 1, rho, wide);
  for (int n = 0; n < 3; ++n) CHECK(a.first_return[n] == doctest::Approx(b.first_return[n]).epsilon(1e-12));
}

TEST_CASE("line model: closed form and truncation") {
  Rng rng(87);
  CMat rho = random_density(2, rng);

  HomogeneousParams p05 = demo_homog(0.5);
  RecurrenceReport c05 = line_site0_metrics(p05, rho);
  CHECK(c05.pi == doctest::Approx(1.0));
  CHECK(c05.recurrent);
  CHECK(c05.tau == kInfiniteTime);

  HomogeneousParams p03 = demo_homog(0.3);
  double t = p03.phi_minus.apply(rho).trace().real();
  RecurrenceReport c03 = line_site0_metrics(p03, rho);
  CHECK(c03.pi == doctest::Approx(1 - 0.4 * t).epsilon(1e-12));

  LineModel l03 = LineModel::homogeneous(p03);
  RecurrenceReport n03 = truncate_numeric(l03, 0, rho);
  CHECK(n03.pi == doctest::Approx(c03.pi).epsilon(2e-6));

  LineModel l05 = LineModel::homogeneous(p05);
  RecurrenceReport n05 = truncate_numeric(l05, 0, rho);
  CHECK(n05.pi == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(n05.recurrent);
  CHECK(n05.tau == kInfiniteTime);
}

TEST_CASE("line decomposition cross-check: pi = pi_L + pi_R - 1") {
  // left and right half-line pieces of the line model are homogeneous models
  // in their own right (mirrored parameters on the left)
  Rng rng(88);
  CMat rho = random_density(2, rng);
  for (double lambda : {0.3, 0.7}) {
    HomogeneousParams p = demo_homog(lambda);
    double t = p.phi_minus.apply(rho).trace().real();

    HomogeneousParams right;
    right.lambda = lambda;
    right.phi = p.phi;
    right.phi_plus = p.phi_plus;
    right.phi0 = add(p.phi0, scale(p.phi_minus, lambda));
    right.phi_minus = scale(p.phi_minus, 1 - lambda);

    HomogeneousParams left;
    left.lambda = 1 - lambda;
    left.phi = p.phi;
    left.phi_plus = p.phi_plus;
    left.phi0 = add(p.phi0, scale(p.phi_minus, 1 - lambda));
    left.phi_minus = scale(p.phi_minus, lambda);

    double pi_l = halfline_site_metrics(left, 0, rho).pi;
    double pi_r = halfline_site_metrics(right, 0, rho).pi;
    double pi = line_site0_metrics(p, rho).pi;
    CHECK(pi == doctest::Approx(pi_l + pi_r - 1.0).epsilon(1e-12));
    CHECK(pi == doctest::Approx(1 - std::abs(1 - 2 * lambda) * t).epsilon(1e-12));

    // and the same through truncation of the half-line TOMs
    double pi_l_num = truncate_numeric(HalfLineModel::homogeneous(left), 0, rho).pi;
    double pi_r_num = truncate_numeric(HalfLineModel::homogeneous(right), 0, rho).pi;
    CHECK(pi_l_num == doctest::Approx(pi_l).epsilon(2e-6));
    CHECK(pi_r_num == doctest::Approx(pi_r).epsilon(2e-6));
  }
}

TEST_CASE("folding reproduces the line metrics") {
  Rng rng(89);
  CMat rho = random_density(2, rng);
  for (double lambda : {0.3, 0.7}) {
    HomogeneousParams p = demo_homog(lambda);
    LineModel l = LineModel::homogeneous(p);
    HalfLineModel folded = fold_to_halfline(l);
    CHECK(folded.dim == 4);

    CMat e11 = zeros(2, 2);
    e11(1, 1) = 1.0;
    CMat rho_f = kron(e11, rho);
    TruncationOptions opt;
    opt.site_projector = kron(e11, identity(2));
    RecurrenceReport via_fold = truncate_numeric(folded, 0, rho_f, opt);
    RecurrenceReport direct = truncate_numeric(l, 0, rho);
    CHECK(via_fold.pi == doctest::Approx(direct.pi).epsilon(2e-6));
    CHECK(via_fold.pi == doctest::Approx(line_site0_metrics(p, rho).pi).epsilon(2e-6));
  }

  // block-swap symmetry of the folded tails at the symmetric point
  HomogeneousParams p = demo_homog(0.5);
  HalfLineModel folded = fold_to_halfline(LineModel::homogeneous(p));
  CMat swap = zeros(2, 2);
  swap(0, 1) = swap(1, 0) = 1;
  CMat sw = conjugation_superop(kron(swap, identity(2)));
  CMat sub_hat = to_superop(*folded.tail_sub).mat;
  CMat sup_hat = to_superop(*folded.tail_super).mat;
  CHECK(max_diff(CMat(sw * sub_hat * sw), sup_hat) < 1e-12);
}

namespace {

// Finite window of a 1d model as an ordinary chain on {0..n} / {-n..n}.
Tom window_tom(const HalfLineModel& m, int n) {
  Tom t;
  t.dim = m.dim;
  for (int i = 0; i <= n; ++i) t.vertices.push_back(std::to_string(i));
  for (int i = 0; i <= n; ++i)
    for (int j = std::max(0, i - 1); j <= std::min(n, i + 1); ++j)
      if (auto b = m.block(i, j)) t.set_block(i, j, *b);
  // absorb the tail mass so the last column stays trace preserving
  if (auto out = m.block(n + 1, n)) {
    KrausMap cur = t.block(n, n) ? *t.block(n, n) : KrausMap(m.dim, {});
    t.set_block(n, n, add(cur, *out));
  }
  return t;
}

Tom window_tom(const LineModel& m, int n) {
  Tom t;
  t.dim = m.dim;
  for (int i = -n; i <= n; ++i) t.vertices.push_back(std::to_string(i));
  auto idx = [&](int i) { return i + n; };
  for (int i = -n; i <= n; ++i)
    for (int j = std::max(-n, i - 1); j <= std::min(n, i + 1); ++j)
      if (auto b = m.block(i, j)) t.set_block(idx(i), idx(j), *b);
  for (int edge : {-n, n}) {
    int out = edge == n ? n + 1 : -n - 1;
    if (auto b = m.block(out, edge)) {
      KrausMap cur = t.block(idx(edge), idx(edge)) ? *t.block(idx(edge), idx(edge))
                                                   : KrausMap(m.dim, {});
      t.set_block(idx(edge), idx(edge), add(cur, *b));
    }
  }
  return t;
}

}  // namespace

TEST_CASE("built decompositions reproduce the canonical boundary corrections") {
  const double lambda = 0.4;
  HomogeneousParams p = demo_homog(lambda);

  // half-line cut at site 1: the left block picks up the outgoing tail mass
  Tom hw = window_tom(HalfLineModel::homogeneous(p), 6);
  REQUIRE(validate(hw).ok());
  Partition cut1;
  cut1.minus = {0};
  cut1.overlap = {1};
  for (int v = 2; v <= 6; ++v) cut1.plus.push_back(v);
  OverlapDecomposition d = build_decomposition(hw, cut1);
  CHECK(max_diff(to_superop(*d.left.block(0, 0)).mat, to_superop(p.phi0).mat) < 1e-12);
  CHECK(max_diff(to_superop(*d.left.block(0, 1)).mat,
                 to_superop(scale(p.phi_plus, lambda)).mat) < 1e-12);
  CHECK(max_diff(to_superop(*d.left.block(1, 0)).mat, to_superop(p.phi_minus).mat) < 1e-12);
  CHECK(max_diff(to_superop(*d.left.block(1, 1)).mat,
                 to_superop(scale(p.phi, 1 - lambda)).mat) < 1e-12);
  CHECK(max_diff(to_superop(*d.right.block(0, 0)).mat,
                 to_superop(scale(p.phi_plus, lambda)).mat) < 1e-12);

  // line cut at site 0: diagonal corrections Phi0 + (1-lambda) PhiMinus on the
  // left chain and Phi0 + lambda PhiMinus on the right one
  Tom lw = window_tom(LineModel::homogeneous(p), 5);
  REQUIRE(validate(lw).ok());
  Partition cut0;
  for (int v = 0; v < 5; ++v) cut0.minus.push_back(v);
  cut0.overlap = {5};
  for (int v = 6; v <= 10; ++v) cut0.plus.push_back(v);
  OverlapDecomposition dl = build_decomposition(lw, cut0);
  int ov_left = static_cast<int>(dl.left_vertices.size()) - 1;
  CHECK(max_diff(to_superop(*dl.left.block(ov_left, ov_left)).mat,
                 to_superop(add(p.phi0, scale(p.phi_minus, 1 - lambda))).mat) < 1e-12);
  CHECK(max_diff(to_superop(*dl.right.block(0, 0)).mat,
                 to_superop(add(p.phi0, scale(p.phi_minus, lambda))).mat) < 1e-12);
}

TEST_CASE("site-1 return probability ignores the boundary column") {
  // two half-line models differing only in (Phi0, PhiMinus): pi at site 1 agrees
  CMat k0 = zeros(2, 2), l0 = zeros(2, 2);
  k0(0, 0) = std::sqrt(0.8);
  k0(1, 1) = std::sqrt(0.3);
  l0(0, 0) = std::sqrt(0.2);
  l0(1, 1) = std::sqrt(0.7);
  HomogeneousParams a = demo_homog(0.3);
  HomogeneousParams b = a;
  b.phi0 = KrausMap(2, {k0});
  b.phi_minus = KrausMap(2, {l0});
  Rng rng(91);
  CMat rho = random_density(2, rng);
  double pa = truncate_numeric(HalfLineModel::homogeneous(a), 1, rho).pi;
  double pb = truncate_numeric(HalfLineModel::homogeneous(b), 1, rho).pi;
  CHECK(pa == doctest::Approx(0.6).epsilon(2e-6));
  CHECK(pb == doctest::Approx(0.6).epsilon(2e-6));
}

TEST_CASE("symmetric unital invariance at an interior site") {
  // symmetric unital nearest-neighbour chains: half conjugations both ways
  auto build = [](const CMat& w, const CMat& u0) {
    HalfLineModel m;
    m.dim = 2;
    m.boundary[{0, 0}] = KrausMap(2, {std::sqrt(0.5) * w});
    m.boundary[{0, 1}] = KrausMap(2, {std::sqrt(0.5) * u0});
    m.boundary[{1, 0}] = KrausMap(2, {std::sqrt(0.5) * u0});
    m.tail_start = 1;
    CMat h(2, 2);
    const double s = 1.0 / std::sqrt(2.0);
    h << s, s, s, -s;
    m.tail_sub = KrausMap(2, {std::sqrt(0.5) * h});
    m.tail_super = KrausMap(2, {std::sqrt(0.5) * h});
    return m;
  };
  Rng rng(90);
  CMat rho = random_density(2, rng);
  HalfLineModel a = build(identity(2), pauli_x());
  HalfLineModel b = build(pauli_z(), pauli_y());
  CHECK(symmetric_unital_invariance(a, a, 2, rho));
  CHECK(symmetric_unital_invariance(a, b, 2, rho));

  // non-unital chains are rejected as out of hypothesis
  HomogeneousParams biased = demo_homog(0.3);
  HalfLineModel hb = HalfLineModel::homogeneous(biased);
  CHECK_THROWS_AS(symmetric_unital_invariance(hb, hb, 1, rho), Error);

  // and they genuinely break the invariance: reweighting the boundary split
  // changes pi at site 0 when lambda < 1/2
  CMat k0 = zeros(2, 2), l0 = zeros(2, 2);
  k0(0, 0) = std::sqrt(0.8);
  k0(1, 1) = std::sqrt(0.3);
  l0(0, 0) = std::sqrt(0.2);
  l0(1, 1) = std::sqrt(0.7);
  HomogeneousParams skew = biased;
  skew.phi0 = KrausMap(2, {k0});
  skew.phi_minus = KrausMap(2, {l0});
  HomogeneousParams alt = biased;
  alt.phi0 = KrausMap(2, {l0});
  alt.phi_minus = KrausMap(2, {k0});
  CMat pure0 = zeros(2, 2);
  pure0(0, 0) = 1.0;
  double pa = truncate_numeric(HalfLineModel::homogeneous(skew), 0, pure0).pi;
  double pb = truncate_numeric(HalfLineModel::homogeneous(alt), 0, pure0).pi;
  CHECK(std::abs(pa - pb) > 1e-3);
}
