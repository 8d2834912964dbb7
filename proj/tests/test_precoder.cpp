#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gensm/errors.hpp"
#include "gensm/precoder.hpp"
#include "oracles.hpp"

using namespace gensm;

namespace {

SystemConfig reference_link(double snr_db, int n_r = 8) {
  return SystemConfig::make(n_r, 2, 4, 2, std::pow(10.0, snr_db / 10.0));
}

double max_fd_relative_error(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                             const AgcTable& agc) {
  const RVector analytic = phase_derivative(gradient_full(h, psi, cfg, agc), psi, cfg.n_k);
  auto f = [&](const PhaseVector& p) { return rate_closed_form(h, p, cfg, agc); };
  double worst = 0.0;
  for (int n = 0; n < cfg.n_t; ++n) {
    const double fd = oracle::central_difference(f, psi, n, 1e-6);
    worst = std::max(worst, std::abs(fd - analytic[n]) / std::max(std::abs(analytic[n]), 1e-3));
  }
  return worst;
}

}  // namespace

TEST_CASE("full gradient matches finite differences of the closed-form rate") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SystemConfig cfg = reference_link(0.0);
    const AgcTable agc = enumerate_agcs(cfg);
    const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 5, seed);
    const PhaseVector psi = oracle::random_phases(cfg.n_t, 100 + seed);
    CHECK(max_fd_relative_error(h, psi, cfg, agc) <= 1e-5);
  }
}

TEST_CASE("full gradient matches finite differences with single-antenna groups and n_rf = 1") {
  const SystemConfig full_switch = SystemConfig::make(4, 1, 8, 2, 3.0);
  const SystemConfig beam = SystemConfig::make(8, 8, 1, 1, 2.0);
  for (const auto& cfg : {full_switch, beam}) {
    const AgcTable agc = enumerate_agcs(cfg);
    const CMatrix h = oracle::gaussian_matrix(cfg.n_r, cfg.n_t, 7);
    CHECK(max_fd_relative_error(h, oracle::random_phases(cfg.n_t, 8), cfg, agc) <= 1e-5);
  }
}

TEST_CASE("gradient vanishes without signal") {
  const SystemConfig cfg = reference_link(0.0);
  const AgcTable agc = enumerate_agcs(cfg);
  const PhaseVector psi = oracle::random_phases(cfg.n_t, 3);
  const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 5, 3);

  CHECK(gradient_full(h, psi, cfg.with_rho(0.0), agc).norm() == 0.0);
  CHECK(gradient_full(CMatrix::Zero(cfg.n_r, cfg.n_t), psi, cfg, agc).norm() == 0.0);
  // prefactor rho_s shrinks the gradient linearly
  const double g1 = gradient_full(h, psi, cfg.with_rho(1e-6), agc).norm();
  const double g2 = gradient_full(h, psi, cfg.with_rho(1e-8), agc).norm();
  CHECK(g2 < g1 * 0.011);
}

TEST_CASE("reduced gradient follows the full gradient's phases at high SNR") {
  const SystemConfig cfg = reference_link(40.0);
  const AgcTable agc = enumerate_agcs(cfg);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const CMatrix h = oracle::gaussian_matrix(cfg.n_r, cfg.n_t, seed);
    const PhaseVector psi = oracle::random_phases(cfg.n_t, 50 + seed);
    const CVector full = gradient_full(h, psi, cfg, agc);
    const CVector reduced = gradient_reduced(h, psi, cfg, agc);
    for (int n = 0; n < cfg.n_t; ++n) {
      CHECK(std::abs(wrap_angle(std::arg(full[n]) - std::arg(reduced[n]))) <= 0.05);
    }
  }
}

TEST_CASE("reduced gradient phases are invariant to channel scaling") {
  const SystemConfig cfg = reference_link(10.0);
  const AgcTable agc = enumerate_agcs(cfg);
  const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 5, 11);
  const PhaseVector psi = oracle::random_phases(cfg.n_t, 12);
  const CVector g1 = gradient_reduced(h, psi, cfg, agc);
  const CVector g2 = gradient_reduced(3.7 * h, psi, cfg, agc);
  for (int n = 0; n < cfg.n_t; ++n) CHECK(std::abs(wrap_angle(std::arg(g1[n]) - std::arg(g2[n]))) < 1e-9);
}

TEST_CASE("reduced gradient rejects a rank-one channel") {
  const SystemConfig cfg = reference_link(10.0);
  const AgcTable agc = enumerate_agcs(cfg);
  const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 1, 5);
  CHECK_THROWS_AS(gradient_reduced(h, PhaseVector::zeros(cfg.n_t), cfg, agc), RankDeficiencyError);
  try {
    gradient_reduced(h, PhaseVector::zeros(cfg.n_t), cfg, agc);
  } catch (const RankDeficiencyError& e) {
    CHECK(e.agc_index() == 0);
  }

  OptimizerOptions opts;
  opts.gradient = GradientKind::reduced;
  Rng rng(1);
  const OptimizerTrace trace = optimize(h, cfg, agc, opts, rng);
  CHECK(trace.fell_back);
  CHECK(trace.best_r_cf >= trace.initial_r_cf);

  opts.fallback_to_full = false;
  CHECK_THROWS_AS(optimize(h, cfg, agc, opts, rng), RankDeficiencyError);
}

TEST_CASE("optimizer at zero power stops at the initial point") {
  const SystemConfig cfg = reference_link(0.0).with_rho(0.0);
  const AgcTable agc = enumerate_agcs(cfg);
  const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 5, 2);
  Rng rng(3);
  const OptimizerTrace trace = optimize(h, cfg, agc, OptimizerOptions{}, rng);
  CHECK(trace.iterations == 1);
  CHECK(trace.converged);
  CHECK(trace.best_psi.angles() == RVector::Zero(cfg.n_t));
  CHECK(std::abs(trace.best_r_cf) < 1e-9);
}

TEST_CASE("optimizer is deterministic, never worse than its start, and stops at a fixed point") {
  const SystemConfig cfg = reference_link(5.0);
  const AgcTable agc = enumerate_agcs(cfg);
  OptimizerOptions opts;
  opts.restarts = 3;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 5, seed);
    Rng a(seed), b(seed);
    const OptimizerTrace t1 = optimize(h, cfg, agc, opts, a);
    const OptimizerTrace t2 = optimize(h, cfg, agc, opts, b);
    REQUIRE(t1.records.size() == t2.records.size());
    for (std::size_t i = 0; i < t1.records.size(); ++i) CHECK(t1.records[i].r_cf == t2.records[i].r_cf);
    CHECK(t1.best_psi.angles() == t2.best_psi.angles());

    CHECK(t1.best_r_cf >= t1.initial_r_cf);
    double top = -1e300;
    for (const auto& r : t1.records) top = std::max(top, r.r_cf);
    CHECK(t1.best_r_cf == top);
    CHECK(rate_closed_form(h, t1.best_psi, cfg, agc) == doctest::Approx(t1.best_r_cf).epsilon(1e-12));

    const CVector g = gradient_full(h, t1.best_psi, cfg, agc);
    if (phase_residual(t1.best_psi, g) < opts.tol_phase) {
      const PhaseVector next = phase_update(t1.best_psi, g);
      CHECK(std::abs(rate_closed_form(h, next, cfg, agc) - t1.best_r_cf) < opts.tol_rate);
    }
  }
}

TEST_CASE("t_max = 0 evaluates the identity precoder") {
  const SystemConfig cfg = reference_link(0.0);
  const AgcTable agc = enumerate_agcs(cfg);
  const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 5, 9);
  OptimizerOptions opts;
  opts.t_max = 0;
  Rng rng(1);
  const OptimizerTrace trace = optimize(h, cfg, agc, opts, rng);
  CHECK(trace.records.size() == 1);
  CHECK(trace.best_r_cf == rate_closed_form(h, PhaseVector::zeros(cfg.n_t), cfg, agc));
}

TEST_CASE("optimizer options are validated") {
  OptimizerOptions o;
  o.restarts = 0;
  CHECK_THROWS_AS(o.validate(), DimensionError);
  o = {};
  o.tol_rate = 0;
  CHECK_THROWS_AS(o.validate(), DimensionError);
  o = {};
  o.t_max = -1;
  CHECK_THROWS_AS(o.validate(), DimensionError);
  CHECK_THROWS_AS(parse_gradient_kind("fast"), DimensionError);
}

TEST_CASE("trace serializes to JSON and a one-row CSV") {
  const SystemConfig cfg = reference_link(0.0);
  const AgcTable agc = enumerate_agcs(cfg);
  Rng rng(1);
  const OptimizerTrace trace = optimize(oracle::sv_channel(8, 8, 5, 4), cfg, agc, OptimizerOptions{}, rng);
  const auto j = to_json(trace);
  CHECK(j["records"].size() == trace.records.size());
  CHECK(j["best_psi"].size() == 8);
  CHECK(j["best_r_cf"].get<double>() == trace.best_r_cf);
  const std::string header = trace_csv_header();
  const auto header_fields = std::count(header.begin(), header.end(), ',');
  const std::string row = trace_csv_row(trace);
  CHECK(std::count(row.begin(), row.end(), ',') == header_fields);
}

TEST_CASE("waterfilling closed cases") {
  CHECK(waterfilling_capacity(CMatrix::Identity(2, 2), 2.0, 1.0, 2) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(waterfilling_capacity(CMatrix::Zero(3, 3), 5.0, 1.0, 2) == 0.0);

  const CVector u = oracle::gaussian_matrix(4, 1, 1);
  const CVector v = oracle::gaussian_matrix(6, 1, 2);
  const CMatrix rank1 = u * v.adjoint();
  const double lambda = rank1.squaredNorm();  // single nonzero eigenvalue of H^H H
  CHECK(waterfilling_capacity(rank1, 3.0, 0.5, 2) == doctest::Approx(std::log2(1.0 + 3.0 * lambda / 0.5)));
}

TEST_CASE("waterfilling matches an exhaustive power grid and satisfies KKT") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const CMatrix h = oracle::gaussian_matrix(4, 6, seed) * 0.3;
    for (double rho : {0.3, 2.0, 20.0}) {
      const WaterfillingResult wf = waterfill(h, rho, 1.0, 3);
      std::vector<double> gains(wf.gains.data(), wf.gains.data() + wf.gains.size());
      CHECK(std::abs(wf.capacity - oracle::waterfilling_grid(gains, rho, 1.0, 1e-3)) <= 1e-3);
      // KKT: active modes sit at the water level, inactive ones above it, power sums to rho
      CHECK(std::abs(wf.powers.sum() - rho) <= 1e-10);
      for (Eigen::Index i = 0; i < wf.powers.size(); ++i) {
        const double floor = 1.0 / wf.gains[i];
        if (wf.powers[i] > 0) {
          CHECK(std::abs(wf.powers[i] + floor - wf.water_level) <= 1e-10);
        } else {
          CHECK(floor >= wf.water_level - 1e-10);
        }
      }
    }
  }
}

TEST_CASE("baselines reuse the rate path on degenerate configurations") {
  const SystemConfig cfg = reference_link(0.0);
  const CMatrix h = oracle::sv_channel(cfg.n_t, cfg.n_r, 5, 21);
  Rng rng(4);
  const RateReport id = baseline_rate(BaselineScheme::identity_precoder, h, cfg, 2000, rng);
  CHECK(id.r_cf == rate_closed_form(h, PhaseVector::zeros(8), cfg, enumerate_agcs(cfg)));

  const SystemConfig full_switch = no_precoding_config(cfg);
  CHECK(full_switch.n_k == 1);
  CHECK(full_switch.n_m == 8);
  CHECK(full_switch.m == 16);

  for (auto scheme : {BaselineScheme::identity_precoder, BaselineScheme::no_precoding_full_switching}) {
    const RateReport r = baseline_rate(scheme, h, cfg.with_rho(0.0), 2000, rng);
    CHECK(std::abs(r.r_cf) < 1e-9);
    CHECK(std::abs(r.r_mc) <= 3 * r.r_mc_stderr + 1e-12);
  }
}
