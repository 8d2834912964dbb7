#include "gensm/rate.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include <fmt/format.h>

#include "gensm/errors.hpp"

namespace gensm {

namespace {

constexpr double kLn2 = std::numbers::ln2;

void check_set(const CovarianceSet& sigmas) {
  if (sigmas.empty()) throw DimensionError("covariance set is empty");
  const auto n = sigmas.front().rows();
  for (const auto& s : sigmas) {
    if (s.rows() != n || s.cols() != n) throw DimensionError("covariances must share one square size");
  }
}

// ln|Sigma_n| and ln|Sigma_n + Sigma_t| for all pairs; the pair table is
// symmetric so only n <= t is factorized.
struct LogDets {
  std::vector<double> single;
  std::vector<std::vector<double>> pair;
};

LogDets log_dets(const CovarianceSet& sigmas, bool need_single) {
  const std::size_t m = sigmas.size();
  LogDets out;
  if (need_single) {
    out.single.reserve(m);
    for (const auto& s : sigmas) out.single.push_back(log_det_hpd(s));
  }
  out.pair.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t n = 0; n < m; ++n) {
    for (std::size_t t = n; t < m; ++t) {
      const double v = log_det_hpd(sigmas[n] + sigmas[t]);
      out.pair[n][t] = v;
      out.pair[t][n] = v;
    }
  }
  return out;
}

double apm_from(const LogDets& ld, int n_r, double sigma_n2) {
  double acc = 0.0;
  for (double v : ld.single) acc += v - n_r * std::log(sigma_n2);
  return acc / (static_cast<double>(ld.single.size()) * kLn2);
}

double lower_bound_from(const LogDets& ld, int n_r) {
  const std::size_t m = ld.pair.size();
  std::vector<double> terms(m);
  double acc = 0.0;
  for (std::size_t n = 0; n < m; ++n) {
    for (std::size_t t = 0; t < m; ++t) terms[t] = ld.single[n] - ld.pair[n][t];
    acc += log_sum_exp(terms);
  }
  const double md = static_cast<double>(m);
  return std::log2(md) - n_r * std::numbers::log2e - acc / (md * kLn2);
}

double closed_form_from(const LogDets& ld, int n_r, double sigma_n2) {
  const std::size_t m = ld.pair.size();
  const double md = static_cast<double>(m);
  const double numerator = n_r * std::log(2.0 * sigma_n2) - std::log(md);
  std::vector<double> terms(m);
  double acc = 0.0;
  for (std::size_t n = 0; n < m; ++n) {
    for (std::size_t t = 0; t < m; ++t) terms[t] = numerator - ld.pair[n][t];
    acc += log_sum_exp(terms);
  }
  return -acc / (md * kLn2);
}

}  // namespace

double spatial_bias(int n_r) { return n_r * std::log2(2.0 / std::numbers::e); }

double apm_mi(const CovarianceSet& sigmas, double sigma_n2) {
  check_set(sigmas);
  LogDets ld;
  for (const auto& s : sigmas) ld.single.push_back(log_det_hpd(s));
  return apm_from(ld, static_cast<int>(sigmas.front().rows()), sigma_n2);
}

double spatial_mi_lower_bound(const CovarianceSet& sigmas) {
  check_set(sigmas);
  return lower_bound_from(log_dets(sigmas, true), static_cast<int>(sigmas.front().rows()));
}

double rate_closed_form(const CovarianceSet& sigmas, double sigma_n2) {
  check_set(sigmas);
  const int n_r = static_cast<int>(sigmas.front().rows());
  const LogDets ld = log_dets(sigmas, true);
  const double r_cf = closed_form_from(ld, n_r, sigma_n2);
  // Compensating the low-SNR bias of the Jensen bound: R_CF = APM + LB - N_R log2(2/e).
  const double via_bound = apm_from(ld, n_r, sigma_n2) + lower_bound_from(ld, n_r) - spatial_bias(n_r);
  if (!std::isfinite(r_cf) || std::abs(r_cf - via_bound) > 1e-9 * std::max(1.0, std::abs(r_cf))) {
    throw NumericalError(fmt::format("closed-form rate {} disagrees with bound decomposition {}", r_cf,
                                     via_bound));
  }
  return r_cf;
}

double rate_closed_form(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                        const AgcTable& agc) {
  return rate_closed_form(covariances(h, psi, cfg, agc), cfg.sigma_n2);
}

McEstimate spatial_mi_monte_carlo(const CovarianceSet& sigmas, std::int64_t n_samples, Rng& rng) {
  check_set(sigmas);
  if (n_samples < 1) throw DimensionError("Monte-Carlo sample count must be >= 1");
  const std::size_t m = sigmas.size();
  const Eigen::Index n_r = sigmas.front().rows();

  // Stack the inverse Cholesky factors so one mat-vec whitens y under every
  // hypothesis: ||L_t^{-1} y||^2 is the Mahalanobis term of log p(y|t).
  std::vector<CMatrix> lower;
  lower.reserve(m);
  CMatrix whiten(static_cast<Eigen::Index>(m) * n_r, n_r);
  std::vector<double> log_det(m);
  for (std::size_t t = 0; t < m; ++t) {
    try {
      lower.push_back(cholesky_lower(sigmas[t]));
    } catch (const NumericalError&) {
      throw NumericalError(fmt::format("covariance {} is degenerate", t));
    }
    double ld = 0.0;
    for (Eigen::Index i = 0; i < n_r; ++i) ld += 2.0 * std::log(lower.back()(i, i).real());
    log_det[t] = ld;
    whiten.middleRows(static_cast<Eigen::Index>(t) * n_r, n_r) =
        lower.back().triangularView<Eigen::Lower>().solve(CMatrix::Identity(n_r, n_r));
  }

  const double log_m = std::log(static_cast<double>(m));
  CVector z(n_r), y(n_r), w(static_cast<Eigen::Index>(m) * n_r);
  std::vector<double> log_p(m);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const auto active = std::min<std::size_t>(m - 1, static_cast<std::size_t>(rng.uniform() * m));
    for (Eigen::Index k = 0; k < n_r; ++k) z[k] = rng.complex_normal();
    y.noalias() = lower[active].triangularView<Eigen::Lower>() * z;
    w.noalias() = whiten * y;
    for (std::size_t t = 0; t < m; ++t) {
      log_p[t] = -log_det[t] - w.segment(static_cast<Eigen::Index>(t) * n_r, n_r).squaredNorm();
    }
    const double sample = (log_p[active] - (log_sum_exp(log_p) - log_m)) / kLn2;
    const double delta = sample - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (sample - mean);
  }
  McEstimate est;
  est.value = mean;
  est.stderr_ = n_samples > 1
                    ? std::sqrt(m2 / static_cast<double>(n_samples - 1) / static_cast<double>(n_samples))
                    : 0.0;
  return est;
}

RateReport rate_true_mc(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                        const AgcTable& agc, std::int64_t n_samples, Rng& rng) {
  const CovarianceSet sigmas = covariances(h, psi, cfg, agc);
  const LogDets ld = log_dets(sigmas, true);
  RateReport r;
  r.apm_mi = apm_from(ld, cfg.n_r, cfg.sigma_n2);
  r.spatial_lb = lower_bound_from(ld, cfg.n_r);
  r.r_cf = rate_closed_form(sigmas, cfg.sigma_n2);
  const McEstimate spatial = spatial_mi_monte_carlo(sigmas, n_samples, rng);
  r.r_mc = r.apm_mi + spatial.value;
  r.r_mc_stderr = spatial.stderr_;
  r.n_samples = n_samples;
  if (!std::isfinite(r.r_mc) || !std::isfinite(r.r_mc_stderr)) {
    throw NumericalError("non-finite Monte-Carlo rate");
  }
  return r;
}

std::string rate_csv_header() {
  return "config_hash,seed,snr_db,r_cf,apm_mi,spatial_lb,r_mc,r_mc_stderr,n_samples";
}

std::string rate_csv_row(const RateReport& report, const SystemConfig& cfg, std::uint64_t seed,
                         double snr_db) {
  return fmt::format("{},{},{},{},{},{},{},{},{}", cfg.hash(), seed, snr_db, report.r_cf, report.apm_mi,
                     report.spatial_lb, report.r_mc, report.r_mc_stderr, report.n_samples);
}

}  // namespace gensm
