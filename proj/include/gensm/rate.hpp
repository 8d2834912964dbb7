#pragma once

#include <cstdint>
#include <string>

#include "gensm/channel.hpp"
#include "gensm/model.hpp"
#include "gensm/rng.hpp"

namespace gensm {

/// N_R log2(2/e): the low-SNR value of the Jensen lower bound on the spatial
/// mutual information, where the true value is 0.
double spatial_bias(int n_r);

/// Mutual information carried by the symbol stream when the active AGC is
/// known: (1/M) sum_m log2 |Sigma_m / sigma^2|.
double apm_mi(const CovarianceSet& sigmas, double sigma_n2);

/// Jensen lower bound on I(y; m), before bias compensation:
/// log2(M / e^{N_R}) - (1/M) sum_n log2 sum_t |Sigma_n| / |Sigma_n + Sigma_t|.
double spatial_mi_lower_bound(const CovarianceSet& sigmas);

/// Closed-form SE approximation
///   R_CF = -(1/M) sum_n log2 sum_t ((2 sigma^2)^{N_R} / M) / |Sigma_n + Sigma_t|
/// evaluated with log-determinants and a shifted log-sum-exp. Cross-checked
/// against apm_mi + spatial_mi_lower_bound - spatial_bias; a mismatch throws
/// NumericalError.
double rate_closed_form(const CovarianceSet& sigmas, double sigma_n2);
double rate_closed_form(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                        const AgcTable& agc);

struct McEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Monte-Carlo estimate of I(y; m) for y | m ~ CN(0, Sigma_m), m uniform.
/// Each sample contributes log2 p(y|m) - log2((1/M) sum_t p(y|t)).
McEstimate spatial_mi_monte_carlo(const CovarianceSet& sigmas, std::int64_t n_samples, Rng& rng);

struct RateReport {
  double r_cf = 0.0;
  double apm_mi = 0.0;
  double spatial_lb = 0.0;  // before bias compensation
  double r_mc = 0.0;
  double r_mc_stderr = 0.0;
  std::int64_t n_samples = 0;
};

inline constexpr std::int64_t kDefaultMcSamples = 100000;

RateReport rate_true_mc(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                        const AgcTable& agc, std::int64_t n_samples, Rng& rng);

/// "config_hash,seed,snr_db,r_cf,apm_mi,spatial_lb,r_mc,r_mc_stderr,n_samples"
std::string rate_csv_header();
std::string rate_csv_row(const RateReport& report, const SystemConfig& cfg, std::uint64_t seed,
                         double snr_db);

}  // namespace gensm
