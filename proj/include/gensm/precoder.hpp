#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gensm/model.hpp"
#include "gensm/rate.hpp"
#include "gensm/rng.hpp"

namespace gensm {

/// Conjugate gradient of R_CF with respect to A*, restricted to its diagonal
/// (the only part a diagonal precoder can follow). Costs M(M+1)/2 N_R x N_R
/// factorizations.
CVector gradient_full(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                      const AgcTable& agc);

/// High-SNR approximation of the same diagonal,
///   (log2 e / M) sum_m diag(H^H H A C_m (C_m^H A^H H^H H A C_m)^{-1} C_m^H),
/// needing only M n_rf x n_rf inversions. Throws RankDeficiencyError when some
/// C_m^H A^H H^H H A C_m is singular (e.g. rank(H) < n_rf).
CVector gradient_reduced(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                         const AgcTable& agc);

/// d R_CF / d psi_n = 2 Im(conj(A_nn) g_n) for a conjugate-gradient diagonal g.
RVector phase_derivative(const CVector& gradient_diag, const PhaseVector& psi, int n_k);

enum class GradientKind { full, reduced };
enum class InitKind { identity, random };

std::string to_string(GradientKind kind);
std::string to_string(InitKind kind);
GradientKind parse_gradient_kind(const std::string& s);
InitKind parse_init_kind(const std::string& s);

struct OptimizerOptions {
  int t_max = 50;  // 0 evaluates the initial point only
  double tol_rate = 1e-8;
  double tol_phase = 1e-6;
  GradientKind gradient = GradientKind::full;
  InitKind init = InitKind::identity;
  int restarts = 1;
  bool fallback_to_full = true;  // reduced-gradient rank failure -> full gradient

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  int restart = 0;
  double r_cf = 0.0;
  double phase_residual = 0.0;
};

struct OptimizerTrace {
  std::vector<IterationRecord> records;
  PhaseVector best_psi;
  double best_r_cf = 0.0;
  double initial_r_cf = 0.0;  // at the first restart's starting point
  bool converged = false;
  int iterations = 0;  // total update steps over all restarts
  GradientKind gradient = GradientKind::full;
  bool fell_back = false;  // reduced gradient failed and full was used instead
};

/// Phase residual ||wrap(angle(diag A) - angle(g))||_inf. Entries with
/// |g_n| < kZeroGradient count as aligned.
double phase_residual(const PhaseVector& psi, const CVector& gradient_diag);

inline constexpr double kZeroGradient = 1e-14;

/// One fixed-point step: psi_n <- angle(g_n); entries with |g_n| < kZeroGradient
/// keep their previous phase.
PhaseVector phase_update(const PhaseVector& psi, const CVector& gradient_diag);

/// Alternates gradient evaluation and the phase-alignment update, keeping the
/// best iterate seen. Stops after t_max steps or when both the R_CF change and
/// the phase residual fall below their tolerances. `rng` is only used for
/// random initial points.
OptimizerTrace optimize(const CMatrix& h, const SystemConfig& cfg, const AgcTable& agc,
                        const OptimizerOptions& opts, Rng& rng);

nlohmann::json to_json(const OptimizerTrace& trace);
/// "gradient,restarts,iterations,converged,fell_back,initial_r_cf,best_r_cf,final_phase_residual"
std::string trace_csv_header();
std::string trace_csv_row(const OptimizerTrace& trace);

struct WaterfillingResult {
  double capacity = 0.0;
  RVector gains;  // eigenvalues of H^H H used, descending
  RVector powers;
  double water_level = 0.0;
};

/// Waterfilling of total power rho over the min(n_rf, rank H) strongest
/// eigenmodes of H^H H.
WaterfillingResult waterfill(const CMatrix& h, double rho, double sigma_n2, int n_rf);
double waterfilling_capacity(const CMatrix& h, double rho, double sigma_n2, int n_rf);

enum class BaselineScheme { identity_precoder, no_precoding_full_switching };

/// Config of the full-switching scheme: single-antenna groups (n_k = 1,
/// n_m = n_t), same n_rf, n_r and powers.
SystemConfig no_precoding_config(const SystemConfig& cfg);

/// Evaluates a baseline scheme through the same rate path as the optimized
/// precoder: psi = 0 on the given config, or psi = 0 on no_precoding_config.
RateReport baseline_rate(BaselineScheme scheme, const CMatrix& h, const SystemConfig& cfg,
                         std::int64_t n_samples, Rng& rng);

}  // namespace gensm
