#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gensm/errors.hpp"
#include "gensm/model.hpp"
#include "oracles.hpp"

using namespace gensm;

TEST_CASE("number of antenna group combinations") {
  CHECK(compute_num_agcs(4, 2) == 4);
  CHECK(compute_num_agcs(8, 2) == 16);
  CHECK(compute_num_agcs(5, 5) == 1);
  CHECK(compute_num_agcs(8, 1) == 8);
  CHECK(compute_num_agcs(6, 3) == 16);  // C(6,3) = 20
  CHECK_THROWS_AS(compute_num_agcs(2, 3), DimensionError);
  CHECK_THROWS_AS(compute_num_agcs(0, 0), DimensionError);
  CHECK(binomial(10, 3) == 120);
  CHECK(binomial(3, 5) == 0);
}

TEST_CASE("M is a power of two not exceeding C(n_m, n_rf) and above half of it") {
  for (int n_m = 1; n_m <= 16; ++n_m) {
    for (int n_rf = 1; n_rf <= n_m; ++n_rf) {
      const auto c = binomial(n_m, n_rf);
      const auto m = static_cast<std::uint64_t>(compute_num_agcs(n_m, n_rf));
      CHECK(std::has_single_bit(m));
      CHECK(m <= c);
      CHECK(2 * m > c);
    }
  }
}

TEST_CASE("AGC enumeration takes the first M combinations in lexicographic order") {
  const AgcTable t = enumerate_agcs(4, 2, 2);
  REQUIRE(t.size() == 4);
  CHECK(t.combos == std::vector<std::vector<int>>{{0, 1}, {0, 2}, {0, 3}, {1, 2}});

  for (auto [n_m, n_rf] : {std::pair{8, 2}, {6, 3}, {7, 4}, {5, 1}, {5, 5}}) {
    const auto all = oracle::lexicographic_subsets(n_m, n_rf);
    const AgcTable table = enumerate_agcs(n_m, n_rf, 1);
    REQUIRE(table.size() == static_cast<std::size_t>(compute_num_agcs(n_m, n_rf)));
    for (std::size_t i = 0; i < table.size(); ++i) CHECK(table.combos[i] == all[i]);
  }
}

TEST_CASE("selection matrix examples") {
  const AgcTable single = AgcTable::from_combos({{1}}, 4, 1);
  RMatrix e2 = RMatrix::Zero(4, 1);
  e2(1, 0) = 1;
  CHECK(single.selection[0] == e2);

  const AgcTable pair = AgcTable::from_combos({{0, 2}}, 4, 2);
  RMatrix expected = RMatrix::Zero(8, 2);
  expected(0, 0) = expected(1, 0) = 1;
  expected(4, 1) = expected(5, 1) = 1;
  CHECK(pair.selection[0] == expected);
}

TEST_CASE("selection matrices have disjoint unit-weight columns") {
  const AgcTable t = enumerate_agcs(8, 2, 4);
  for (std::size_t m = 0; m < t.size(); ++m) {
    const RMatrix& c = t.selection[m];
    CHECK(c.rows() == 32);
    CHECK(c.cols() == 2);
    // columns are disjoint and each covers one full group
    CHECK(c.transpose() * c == 4.0 * RMatrix::Identity(2, 2));
    const RMatrix d = t.group_projector(m);
    CHECK(d.trace() == doctest::Approx(8.0));
    CHECK(d * d == 4.0 * d);
    CHECK(d == d.transpose());
    CHECK((d.array() == 0.0 || d.array() == 1.0).all());
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j)
        if (d(i, j) != 0.0) CHECK(i / 4 == j / 4);  // nonzeros stay inside one group
  }
  const AgcTable k1 = enumerate_agcs(4, 2, 1);
  for (std::size_t m = 0; m < k1.size(); ++m) {
    const RMatrix d = k1.group_projector(m);
    CHECK(RMatrix(d.diagonal().asDiagonal()) == d);
  }
}

TEST_CASE("invalid AGC tables are rejected") {
  CHECK_THROWS_AS(AgcTable::from_combos({}, 4, 1), DimensionError);
  CHECK_THROWS_AS(AgcTable::from_combos({{0, 1}, {0, 1}}, 4, 1), DimensionError);
  CHECK_THROWS_AS(AgcTable::from_combos({{1, 0}}, 4, 1), DimensionError);
  CHECK_THROWS_AS(AgcTable::from_combos({{0, 4}}, 4, 1), DimensionError);
  CHECK_THROWS_AS(AgcTable::from_combos({{0, 1}, {2}}, 4, 1), DimensionError);
}

TEST_CASE("system configuration validation") {
  const SystemConfig cfg = SystemConfig::make(8, 2, 4, 2, 1.0);
  CHECK(cfg.n_t == 8);
  CHECK(cfg.m == 4);
  CHECK(cfg.streams() == 2);
  CHECK_THROWS_AS(SystemConfig::make(0, 2, 4, 2, 1.0), DimensionError);
  CHECK_THROWS_AS(SystemConfig::make(8, 2, 4, 5, 1.0), DimensionError);
  CHECK_THROWS_AS(SystemConfig::make(8, 2, 4, 2, -1.0), DimensionError);
  CHECK_THROWS_AS(SystemConfig::make(8, 2, 4, 2, std::nan("")), DimensionError);
  CHECK_THROWS_AS(SystemConfig::make(8, 2, 4, 2, 1.0, 0.0), DimensionError);
  CHECK(cfg.hash() == SystemConfig::make(8, 2, 4, 2, 1.0).hash());
  CHECK(cfg.hash() != cfg.with_rho(2.0).hash());
  CHECK(cfg.hash().size() == 16);
}

TEST_CASE("phase vectors wrap into [-pi, pi) and reject non-finite angles") {
  RVector v(3);
  v << 3 * std::numbers::pi, -std::numbers::pi, 7.0;
  const PhaseVector p(v);
  for (int i = 0; i < 3; ++i) {
    CHECK(p[i] >= -std::numbers::pi);
    CHECK(p[i] < std::numbers::pi);
  }
  CHECK(std::abs(std::polar(1.0, p[2]) - std::polar(1.0, 7.0)) < 1e-14);
  v[1] = INFINITY;
  CHECK_THROWS_AS(PhaseVector{v}, DimensionError);
}

TEST_CASE("analog precoder examples") {
  const CMatrix a0 = build_precoder_matrix(PhaseVector::zeros(8), 2);
  CHECK((a0 - CMatrix::Identity(8, 8) / std::sqrt(2.0)).norm() < 1e-15);

  const PhaseVector pi(RVector::Constant(4, std::numbers::pi));
  CHECK((build_precoder_matrix(pi, 1) + CMatrix::Identity(4, 4)).norm() < 1e-15);

  const CVector a = precoder_diagonal(oracle::random_phases(16, 3), 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(std::abs(a[i]) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("receive covariances") {
  const SystemConfig cfg = SystemConfig::make(4, 2, 4, 2, 3.0, 0.7);
  const AgcTable agc = enumerate_agcs(cfg);
  const PhaseVector psi = oracle::random_phases(cfg.n_t, 5);
  const CMatrix h = oracle::gaussian_matrix(cfg.n_r, cfg.n_t, 6);

  SUBCASE("no signal leaves only noise") {
    for (const auto& s : covariances(h, psi, cfg.with_rho(0.0), agc))
      CHECK((s - 0.7 * CMatrix::Identity(4, 4)).norm() == 0.0);
    for (const auto& s : covariances(CMatrix::Zero(4, 8), psi, cfg, agc))
      CHECK((s - 0.7 * CMatrix::Identity(4, 4)).norm() == 0.0);
  }
  SUBCASE("matches the loop oracle and is Hermitian positive definite above the noise floor") {
    const CovarianceSet sig = covariances(h, psi, cfg, agc);
    for (std::size_t m = 0; m < agc.size(); ++m) {
      const CMatrix ref = oracle::covariance_loops(h, psi.angles(), cfg.n_k, agc.combos[m], cfg.rho, cfg.sigma_n2);
      CHECK((sig[m] - ref).norm() <= 1e-12 * ref.norm());
      CHECK((sig[m] - sig[m].adjoint()).norm() == 0.0);
      Eigen::SelfAdjointEigenSolver<CMatrix> eig(sig[m]);
      CHECK(eig.eigenvalues().minCoeff() >= cfg.sigma_n2 - 1e-12);
      // dense precoder path agrees with the diagonal path
      const CMatrix dense = effective_covariance(h, build_precoder_matrix(psi, cfg.n_k), agc.selection[m], cfg);
      CHECK((dense - sig[m]).norm() <= 1e-12 * ref.norm());
    }
  }
  SUBCASE("deterministic and dimension-checked") {
    const CovarianceSet a = covariances(h, psi, cfg, agc);
    const CovarianceSet b = covariances(h, psi, cfg, agc);
    for (std::size_t m = 0; m < a.size(); ++m) CHECK(a[m] == b[m]);
    CHECK_THROWS_AS(covariances(CMatrix::Zero(4, 6), psi, cfg, agc), DimensionError);
    CHECK_THROWS_AS(covariances(h, PhaseVector::zeros(6), cfg, agc), DimensionError);
    CHECK_THROWS_AS(covariances(h, psi, cfg, enumerate_agcs(4, 2, 1)), DimensionError);
  }
}

TEST_CASE("linear algebra helpers") {
  const CMatrix g = oracle::gaussian_matrix(5, 5, 1);
  const CMatrix s = g * g.adjoint() + CMatrix::Identity(5, 5);
  CHECK(log_det_hpd(s) / std::log(2.0) == doctest::Approx(oracle::log2_det_eig(s)).epsilon(1e-12));
  CHECK_THROWS_AS(log_det_hpd(-s), NumericalError);
  const CMatrix l = cholesky_lower(s);
  CHECK((l * l.adjoint() - s).norm() < 1e-12 * s.norm());

  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  const std::vector<double> small{-1000.0, -1001.0};
  CHECK(log_sum_exp(small) == doctest::Approx(-1000.0 + std::log1p(std::exp(-1.0))));

  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(-std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(-std::numbers::pi));
  CHECK(wrap_angle(0.25) == 0.25);
}

TEST_CASE("rng substreams are deterministic and distinct") {
  Rng a = Rng::substream(7, {1, 3});
  Rng b = Rng::substream(7, {1, 3});
  Rng c = Rng::substream(7, {1, 4});
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());

  Rng r(11);
  double mean = 0, power = 0;
  bool in_range = true;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Complex z = r.complex_normal();
    mean += z.real() / n;
    power += std::norm(z) / n;
    const double u = r.uniform();
    in_range = in_range && u >= 0.0 && u < 1.0;
  }
  CHECK(in_range);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(power - 1.0) < 0.01);
}
