#include "gensm/precoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gensm/errors.hpp"

namespace gensm {

CVector gradient_full(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                      const AgcTable& agc) {
  check_dimensions(h, psi, cfg, agc);
  const std::size_t m = agc.size();
  const int n_t = cfg.n_t;
  const double rho_s = cfg.rho / (cfg.sigma_n2 * cfg.streams());
  const CVector a = precoder_diagonal(psi, cfg.n_k);
  if (rho_s == 0.0) return CVector::Zero(n_t);

  // Sigma_m + Sigma_t = 2 sigma^2 B_mt with B_mt = I + (rho_s / 2) Gamma_mt.
  const CovarianceSet sigmas = covariances(h, psi, cfg, agc);
  const double inv_two_sigma2 = 0.5 / cfg.sigma_n2;

  // F_m = H A C_m, one n_r x n_rf block per AGC.
  std::vector<CMatrix> f;
  f.reserve(m);
  for (const auto& c : agc.selection) f.push_back(effective_channel(h, a, c));

  // For each pair: log w_mt = -ln|B_mt| and the diagonal of
  //   H^H B_mt^{-1} H A (D_m + D_t) = H^H B_mt^{-1} [F_m F_t] [C_m C_t]^H,
  // stored per ordered pair (m, t) as the C_m part and the C_t part.
  std::vector<std::vector<double>> log_w(m, std::vector<double>(m));
  std::vector<std::vector<CVector>> diag(m, std::vector<CVector>(m));
  const int n_rf = cfg.n_rf;
  CMatrix rhs(cfg.n_r, 2 * n_rf);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = i; t < m; ++t) {
      const CMatrix b = hermitian_part((sigmas[i] + sigmas[t]) * inv_two_sigma2);
      Eigen::LLT<CMatrix> llt(b);
      if (llt.info() != Eigen::Success) {
        throw NumericalError(fmt::format("I + (rho_s/2) Gamma_{}{} failed to factorize", i, t));
      }
      double ld = 0.0;
      for (Eigen::Index k = 0; k < b.rows(); ++k) ld += 2.0 * std::log(llt.matrixLLT()(k, k).real());
      rhs << f[i], f[t];
      const CMatrix g = h.adjoint() * llt.solve(rhs);  // n_t x 2 n_rf
      const CVector d = (g.leftCols(n_rf).cwiseProduct(agc.selection[i].cast<Complex>())).rowwise().sum() +
                        (g.rightCols(n_rf).cwiseProduct(agc.selection[t].cast<Complex>())).rowwise().sum();
      log_w[i][t] = log_w[t][i] = -ld;
      diag[i][t] = d;
      if (t != i) diag[t][i] = d;
    }
  }

  // Outer sum over m; the normalizer sums the same weights w_mt over t, i.e.
  // the denominator pairs with the numerator's outer index. This pairing is
  // the one whose diagonal matches finite differences of R_CF.
  CVector grad = CVector::Zero(n_t);
  std::vector<double> lw(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < m; ++t) lw[t] = log_w[i][t];
    const double norm = log_sum_exp(lw);
    for (std::size_t t = 0; t < m; ++t) grad += std::exp(lw[t] - norm) * diag[i][t];
  }
  grad *= rho_s * std::numbers::log2e / (2.0 * static_cast<double>(m));
  return grad;
}

CVector gradient_reduced(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                         const AgcTable& agc) {
  check_dimensions(h, psi, cfg, agc);
  const std::size_t m = agc.size();
  const CVector a = precoder_diagonal(psi, cfg.n_k);
  const CMatrix gram = h.adjoint() * h;

  CVector grad = CVector::Zero(cfg.n_t);
  for (std::size_t i = 0; i < m; ++i) {
    const CMatrix ac = a.asDiagonal() * agc.selection[i].cast<Complex>();  // A C_m
    const CMatrix v = gram * ac;                                          // H^H H A C_m
    const CMatrix p = hermitian_part(ac.adjoint() * v);                   // C^H A^H H^H H A C
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(p, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    const double bottom = eig.eigenvalues().minCoeff();
    if (!(top > 0.0) || bottom <= 1e-10 * top) {
      throw RankDeficiencyError(
          i, fmt::format("C_m^H A^H H^H H A C_m is singular for AGC {} (eigenvalue ratio {:.3g})", i,
                         top > 0.0 ? bottom / top : 0.0));
    }
    const CMatrix y = p.llt().solve(v.adjoint()).adjoint();  // V P^{-1}
    // diag(Y C_m^H): row n picks the column of the chain driving its group
    grad += (y.cwiseProduct(agc.selection[i].cast<Complex>())).rowwise().sum();
  }
  grad *= std::numbers::log2e / static_cast<double>(m);
  return grad;
}

RVector phase_derivative(const CVector& gradient_diag, const PhaseVector& psi, int n_k) {
  const CVector a = precoder_diagonal(psi, n_k);
  return 2.0 * (a.conjugate().array() * gradient_diag.array()).imag().matrix();
}

std::string to_string(GradientKind kind) { return kind == GradientKind::full ? "full" : "reduced"; }
std::string to_string(InitKind kind) { return kind == InitKind::identity ? "identity" : "random"; }

GradientKind parse_gradient_kind(const std::string& s) {
  if (s == "full") return GradientKind::full;
  if (s == "reduced") return GradientKind::reduced;
  throw DimensionError(fmt::format("unknown gradient kind '{}'", s));
}

InitKind parse_init_kind(const std::string& s) {
  if (s == "identity") return InitKind::identity;
  if (s == "random") return InitKind::random;
  throw DimensionError(fmt::format("unknown init kind '{}'", s));
}

void OptimizerOptions::validate() const {
  if (t_max < 0) throw DimensionError("t_max must be >= 0");
  if (!(tol_rate > 0.0) || !(tol_phase > 0.0)) throw DimensionError("tolerances must be > 0");
  if (restarts < 1) throw DimensionError("restarts must be >= 1");
}

double phase_residual(const PhaseVector& psi, const CVector& gradient_diag) {
  double worst = 0.0;
  for (int n = 0; n < psi.size(); ++n) {
    if (std::abs(gradient_diag[n]) < kZeroGradient) continue;
    worst = std::max(worst, std::abs(wrap_angle(psi[n] - std::arg(gradient_diag[n]))));
  }
  return worst;
}

PhaseVector phase_update(const PhaseVector& psi, const CVector& gradient_diag) {
  RVector next = psi.angles();
  for (int n = 0; n < psi.size(); ++n) {
    if (std::abs(gradient_diag[n]) >= kZeroGradient) next[n] = std::arg(gradient_diag[n]);
  }
  return PhaseVector(std::move(next));
}

OptimizerTrace optimize(const CMatrix& h, const SystemConfig& cfg, const AgcTable& agc,
                        const OptimizerOptions& opts, Rng& rng) {
  opts.validate();
  OptimizerTrace trace;
  trace.gradient = opts.gradient;
  GradientKind kind = opts.gradient;

  auto gradient = [&](const PhaseVector& psi) -> CVector {
    if (kind == GradientKind::reduced) {
      try {
        return gradient_reduced(h, psi, cfg, agc);
      } catch (const RankDeficiencyError&) {
        if (!opts.fallback_to_full) throw;
        kind = GradientKind::full;
        trace.fell_back = true;
      }
    }
    return gradient_full(h, psi, cfg, agc);
  };

  bool have_best = false;
  for (int r = 0; r < opts.restarts; ++r) {
    PhaseVector psi;
    if (r == 0 && opts.init == InitKind::identity) {
      psi = PhaseVector::zeros(cfg.n_t);
    } else {
      RVector angles(cfg.n_t);
      for (int n = 0; n < cfg.n_t; ++n) angles[n] = rng.uniform(-std::numbers::pi, std::numbers::pi);
      psi = PhaseVector(std::move(angles));
    }

    double rate = rate_closed_form(h, psi, cfg, agc);
    CVector grad = gradient(psi);
    double residual = phase_residual(psi, grad);
    trace.records.push_back({0, r, rate, residual});
    if (r == 0) trace.initial_r_cf = rate;

    PhaseVector best_psi = psi;
    double best_rate = rate;
    bool converged = residual < opts.tol_phase && opts.t_max == 0;
    for (int t = 1; t <= opts.t_max; ++t) {
      const PhaseVector next = phase_update(psi, grad);
      const double next_rate = rate_closed_form(h, next, cfg, agc);
      grad = gradient(next);
      residual = phase_residual(next, grad);
      trace.records.push_back({t, r, next_rate, residual});
      ++trace.iterations;
      if (next_rate > best_rate) {
        best_rate = next_rate;
        best_psi = next;
      }
      const bool settled = std::abs(next_rate - rate) < opts.tol_rate && residual < opts.tol_phase;
      psi = next;
      rate = next_rate;
      if (settled) {
        converged = true;
        break;
      }
    }

    if (!have_best || best_rate > trace.best_r_cf) {
      trace.best_r_cf = best_rate;
      trace.best_psi = best_psi;
      trace.converged = converged;
      have_best = true;
    }
  }
  return trace;
}

nlohmann::json to_json(const OptimizerTrace& trace) {
  nlohmann::json j;
  j["gradient"] = to_string(trace.gradient);
  j["fell_back"] = trace.fell_back;
  j["converged"] = trace.converged;
  j["iterations"] = trace.iterations;
  j["initial_r_cf"] = trace.initial_r_cf;
  j["best_r_cf"] = trace.best_r_cf;
  j["best_psi"] = std::vector<double>(trace.best_psi.angles().data(),
                                      trace.best_psi.angles().data() + trace.best_psi.size());
  auto records = nlohmann::json::array();
  for (const auto& rec : trace.records) {
    records.push_back({{"restart", rec.restart},
                       {"iteration", rec.iteration},
                       {"r_cf", rec.r_cf},
                       {"phase_residual", rec.phase_residual}});
  }
  j["records"] = std::move(records);
  return j;
}

std::string trace_csv_header() {
  return "gradient,restarts,iterations,converged,fell_back,initial_r_cf,best_r_cf,final_phase_residual";
}

std::string trace_csv_row(const OptimizerTrace& trace) {
  const int restarts = trace.records.empty() ? 0 : trace.records.back().restart + 1;
  const double residual = trace.records.empty() ? 0.0 : trace.records.back().phase_residual;
  return fmt::format("{},{},{},{},{},{},{},{}", to_string(trace.gradient), restarts, trace.iterations,
                     trace.converged ? 1 : 0, trace.fell_back ? 1 : 0, trace.initial_r_cf,
                     trace.best_r_cf, residual);
}

WaterfillingResult waterfill(const CMatrix& h, double rho, double sigma_n2, int n_rf) {
  if (n_rf < 1) throw DimensionError("n_rf must be >= 1");
  if (!(sigma_n2 > 0.0) || !(rho >= 0.0)) throw DimensionError("invalid power or noise variance");
  WaterfillingResult out;
  if (h.size() == 0) return out;

  Eigen::JacobiSVD<CMatrix> svd(h);
  const RVector s = svd.singularValues();  // descending
  const double tol = s.size() > 0 ? s[0] * std::max(h.rows(), h.cols()) * 1e-15 : 0.0;
  int rank = 0;
  while (rank < s.size() && s[rank] > tol) ++rank;
  const int k = std::min(n_rf, rank);
  if (k == 0 || rho == 0.0) {
    out.gains = s.head(k).array().square();
    out.powers = RVector::Zero(k);
    return out;
  }
  out.gains = s.head(k).array().square();

  // Drop the weakest mode until its inverse gain sits below the water level.
  int active = k;
  double level = 0.0;
  while (active > 0) {
    double inv_sum = 0.0;
    for (int i = 0; i < active; ++i) inv_sum += sigma_n2 / out.gains[i];
    level = (rho + inv_sum) / active;
    if (level > sigma_n2 / out.gains[active - 1]) break;
    --active;
  }
  out.water_level = level;
  out.powers = RVector::Zero(k);
  for (int i = 0; i < active; ++i) {
    out.powers[i] = level - sigma_n2 / out.gains[i];
    out.capacity += std::log2(1.0 + out.powers[i] * out.gains[i] / sigma_n2);
  }
  return out;
}

double waterfilling_capacity(const CMatrix& h, double rho, double sigma_n2, int n_rf) {
  return waterfill(h, rho, sigma_n2, n_rf).capacity;
}

SystemConfig no_precoding_config(const SystemConfig& cfg) {
  return SystemConfig::make(cfg.n_r, 1, cfg.n_t, cfg.n_rf, cfg.rho, cfg.sigma_n2);
}

RateReport baseline_rate(BaselineScheme scheme, const CMatrix& h, const SystemConfig& cfg,
                         std::int64_t n_samples, Rng& rng) {
  const SystemConfig used =
      scheme == BaselineScheme::identity_precoder ? cfg : no_precoding_config(cfg);
  return rate_true_mc(h, PhaseVector::zeros(used.n_t), used, enumerate_agcs(used), n_samples, rng);
}

}  // namespace gensm
