#include "doctest.h"
#include "helpers.hpp"

using namespace qt;

TEST_CASE("to_superop: identity, bit flip, and the two-site block matrix") {
  CHECK(max_diff(to_superop(KrausMap(2, {identity(2)})).mat, identity(4)) == 0.0);

  CMat perm = to_superop(KrausMap(2, {pauli_x()})).mat;
  CMat direct = conjugation_superop(pauli_x());
  CHECK(max_diff(perm, direct) == 0.0);
  // row-major vec: the flip swaps slots 1<->4 and 2<->3
  CHECK(std::abs(perm(0, 3) - 1.0) < 1e-15);
  CHECK(std::abs(perm(1, 2) - 1.0) < 1e-15);
  CHECK(std::abs(perm(2, 1) - 1.0) < 1e-15);
  CHECK(std::abs(perm(3, 0) - 1.0) < 1e-15);

  // the two-site model assembles to its known 8x8 block matrix
  const double p = 0.4, q = 0.3;
  Tom t = two_site_model(p, q);
  CMat e = block_superop(t).mat;
  CMat e11(4, 4), e12(4, 4), e21(4, 4), e22(4, 4);
  e11 << 1 - 3 * p / 4, 0, 0, p / 4, 0, 1 - 3 * p / 4, p / 4, 0, 0, p / 4, 1 - 3 * p / 4, 0, p / 4,
      0, 0, 1 - 3 * p / 4;
  e12 << q / 2, q / 2, q / 2, q / 2, 0, 0, 0, 0, 0, 0, 0, 0, q / 2, -q / 2, -q / 2, q / 2;
  e21 << p / 4, 0, 0, p / 4, 0, -p / 4, -p / 4, 0, 0, -p / 4, -p / 4, 0, p / 4, 0, 0, p / 4;
  const double u = (1 - q) / 3;
  e22 << 2 * u, u, u, u, -u, 2 * u, 0, u, -u, 0, 2 * u, u, u, -u, -u, 2 * u;
  CHECK(max_diff(e.block(0, 0, 4, 4), e11) < 1e-14);
  CHECK(max_diff(e.block(0, 4, 4, 4), e12) < 1e-14);
  CHECK(max_diff(e.block(4, 0, 4, 4), e21) < 1e-14);
  CHECK(max_diff(e.block(4, 4, 4, 4), e22) < 1e-14);
}

TEST_CASE("dual: involution and the trace pairing") {
  KrausMap phi = single_qubit_channel();
  KrausMap phi_dd = dual(dual(phi));
  for (size_t i = 0; i < phi.kraus.size(); ++i)
    CHECK(max_diff(phi.kraus[i], phi_dd.kraus[i]) == 0.0);

  CHECK(max_diff(to_superop(dual(KrausMap(2, {identity(2)}))).mat, identity(4)) == 0.0);

  Rng rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    CMat rho = random_density(2, rng);
    CMat x = randn(2, 2, rng);
    // dual() lists B*, so its apply realizes the dual action on observables
    Complex lhs = (phi.apply(rho) * x).trace();
    Complex rhs = (rho * dual(phi).apply(x)).trace();
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("trace preservation and unitality flags") {
  CHECK(is_trace_preserving(KrausMap(2, {identity(2)})));
  CHECK(is_unital(KrausMap(2, {identity(2)})));

  // amplitude damping: TP but not unital
  const double gamma = 0.5;
  CMat k0 = identity(2), k1 = zeros(2, 2);
  k0(1, 1) = std::sqrt(1 - gamma);
  k1(0, 1) = std::sqrt(gamma);
  KrausMap ad(2, {k0, k1});
  CHECK(is_trace_preserving(ad));
  CHECK_FALSE(is_unital(ad));

  // two-site embedding: TP always, unital iff p = 2q
  for (auto [p, q] : std::vector<std::pair<double, double>>{{0.4, 0.3}, {0.5, 0.25}, {0.7, 0.2}}) {
    KrausMap phi = embed_cptp(two_site_model(p, q));
    CHECK(is_trace_preserving(phi));
    CHECK(is_unital(phi) == (std::abs(p - 2 * q) < 1e-12));
  }
}

TEST_CASE("choi: maximally entangled projector, transpose counterexample, CP checks") {
  SuperOperator id_s = to_superop(KrausMap(2, {identity(2)}));
  CMat c = choi(id_s);
  CMat omega = vec(identity(2)) * vec(identity(2)).adjoint();
  CHECK(max_diff(c, omega) < 1e-14);
  CHECK(is_completely_positive(id_s));

  // transpose map: vec(rho^T) permutation; not CP
  CMat tr = zeros(4, 4);
  tr(0, 0) = tr(3, 3) = 1;
  tr(1, 2) = tr(2, 1) = 1;
  CHECK_FALSE(is_completely_positive(SuperOperator{2, tr}));

  Tom t = three_site_chain();
  for (const auto& [key, blk] : t.blocks) CHECK(is_completely_positive(to_superop(blk)));
}

TEST_CASE("compose and convex_combine") {
  Rng rng(22);
  KrausMap id2(2, {identity(2)});
  KrausMap phi = random_cptp(2, 3, rng);
  CHECK(max_diff(to_superop(compose(phi, id2)).mat, to_superop(phi).mat) < 1e-14);
  CHECK(max_diff(to_superop(convex_combine({1.0}, {phi})).mat, to_superop(phi).mat) < 1e-14);

  for (int rep = 0; rep < 20; ++rep) {
    KrausMap a = random_cptp(3, 2, rng), b = random_cptp(3, 2, rng);
    CHECK(max_diff(to_superop(compose(a, b)).mat, CMat(to_superop(a).mat * to_superop(b).mat)) <
          1e-12);
  }
  CHECK_THROWS_AS(convex_combine({0.4, 0.4}, {phi, phi}), Error);
  CHECK_THROWS_AS(convex_combine({1.5, -0.5}, {phi, phi}), Error);
}

TEST_CASE("invariant_states: unique fixed points and the identity-channel family") {
  const double p = 0.4, q = 0.3;
  Tom t = two_site_model(p, q);
  // stacked fixed point: (q I2, p/2 I2) / (2q + p) blockwise
  REQUIRE(is_irreducible(t));
  TomDensity chi = invariant_density(t);
  CHECK(max_diff(chi.site[0], CMat(q / (2 * q + p) * identity(2))) < 1e-9);
  CHECK(max_diff(chi.site[1], CMat(p / (2 * (2 * q + p)) * identity(2))) < 1e-9);

  KrausMap single = single_qubit_channel();
  auto fix = invariant_states(single);
  REQUIRE(fix.size() == 1);
  CHECK(max_diff(fix[0], single_qubit_channel_fixed_point()) < 1e-9);
  CHECK(trace_norm(single.apply(fix[0]) - fix[0]) < 1e-9);

  auto family = invariant_states(KrausMap(2, {identity(2)}));
  CHECK(family.size() == 4);
  for (const auto& rho : family) CHECK(std::abs(rho.trace().real() - 1.0) < 1e-12);
}

TEST_CASE("invariant_states wrapper: SuperOperator carries the dimension") {
  KrausMap phi = single_qubit_channel();
  SuperOperator s = to_superop(phi);
  auto states = invariant_states(s);
  REQUIRE(states.size() == 1);
  CHECK(max_diff(states[0], single_qubit_channel_fixed_point()) < 1e-9);
}

TEST_CASE("is_irreducible") {
  for (auto [p, q] : std::vector<std::pair<double, double>>{{0.4, 0.3}, {0.5, 0.25}, {0.9, 0.8}}) {
    CHECK(is_irreducible(two_site_model(p, q)));
    CHECK(is_irreducible(embed_cptp(two_site_model(p, q))));
  }

  const double gamma = 0.4;
  CMat k0 = identity(2), k1 = zeros(2, 2);
  k0(1, 1) = std::sqrt(1 - gamma);
  k1(0, 1) = std::sqrt(gamma);
  CHECK_FALSE(is_irreducible(KrausMap(2, {k0, k1})));  // fixed state |0><0| not faithful

  CHECK_FALSE(is_irreducible(KrausMap(2, {identity(2)})));
}

TEST_CASE("relevant_subspace: dense orbits, full-space case, reducible block case") {
  // irreducible channel: any seed grows to the full space
  KrausMap phi = single_qubit_channel();
  CVec seed = CVec::Zero(2);
  seed(0) = 1;
  CHECK(relevant_subspace(phi, seed).cols() == 2);

  // two-site embedding with p = 2q from a single product vector: full space
  KrausMap emb = embed_cptp(two_site_model(0.5, 0.25));
  CVec psi = CVec::Zero(4);
  psi(0) = 1.0;  // e1 at the first site
  CHECK(relevant_subspace(emb, psi).cols() == 4);

  // block-diagonal Kraus set: the orbit stays in the seeded block
  CMat u = zeros(4, 4);
  u.block(0, 0, 2, 2) = pauli_x();
  u.block(2, 2, 2, 2) = identity(2);
  KrausMap blocku(4, {u});
  CVec e0 = CVec::Zero(4);
  e0(0) = 1;
  CMat span = relevant_subspace(blocku, e0);
  CHECK(span.cols() == 2);
  // basis confined to the first block
  CHECK(span.bottomRows(2).cwiseAbs().maxCoeff() < 1e-12);

  // invariance: each Kraus maps the span into itself
  Rng rng(23);
  KrausMap rph = random_cptp(3, 2, rng);
  CMat v = relevant_subspace(rph, randn(3, 1, rng));
  for (const auto& b : rph.kraus) {
    CMat img = b * v;
    CMat resid = img - v * (v.adjoint() * img);
    CHECK(max_abs(resid) < 1e-9);
  }
}

TEST_CASE("TP maps send densities to densities") {
  Rng rng(24);
  for (int rep = 0; rep < 50; ++rep) {
    KrausMap phi = random_cptp(3, 2, rng);
    CMat rho = random_density(3, rng);
    CMat out = phi.apply(rho);
    CHECK(std::abs(out.trace().real() - 1.0) < 1e-10);
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(out), Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
  }
}

TEST_CASE("duality pairing <Phi(rho), X> = <rho, Phi*(X)>") {
  Rng rng(25);
  KrausMap phi = random_cptp(2, 3, rng);
  for (int rep = 0; rep < 100; ++rep) {
    CMat rho = random_density(2, rng);
    CMat x = randn(2, 2, rng);
    Complex lhs = (phi.apply(rho) * x).trace();
    Complex rhs = (rho * phi.apply_dual(x)).trace();
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}
