#include "gensm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "gensm/errors.hpp"

namespace gensm {

SystemConfig SystemConfig::make(int n_r, int n_k, int n_m, int n_rf, double rho, double sigma_n2) {
  if (n_r < 1 || n_k < 1 || n_m < 1 || n_rf < 1) {
    throw DimensionError(fmt::format("all antenna counts must be >= 1 (n_r={}, n_k={}, n_m={}, n_rf={})",
                                     n_r, n_k, n_m, n_rf));
  }
  if (n_rf > n_m) {
    throw DimensionError(fmt::format("n_rf={} exceeds the number of antenna groups n_m={}", n_rf, n_m));
  }
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    throw DimensionError(fmt::format("transmit power must be finite and >= 0, got {}", rho));
  }
  if (!(sigma_n2 > 0.0) || !std::isfinite(sigma_n2)) {
    throw DimensionError(fmt::format("noise variance must be finite and > 0, got {}", sigma_n2));
  }
  SystemConfig cfg;
  cfg.n_t = n_k * n_m;
  cfg.n_r = n_r;
  cfg.n_k = n_k;
  cfg.n_m = n_m;
  cfg.n_rf = n_rf;
  cfg.rho = rho;
  cfg.sigma_n2 = sigma_n2;
  cfg.m = compute_num_agcs(n_m, n_rf);
  return cfg;
}

SystemConfig SystemConfig::with_rho(double new_rho) const {
  return make(n_r, n_k, n_m, n_rf, new_rho, sigma_n2);
}

std::string SystemConfig::hash() const {
  const std::string canonical = fmt::format("n_t={};n_r={};n_k={};n_m={};n_rf={};rho={};sigma_n2={}",
                                            n_t, n_r, n_k, n_m, n_rf, rho, sigma_n2);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (int i = 1; i <= k; ++i) {
    c = c * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (c > static_cast<unsigned __int128>(UINT64_MAX)) {
      throw DimensionError(fmt::format("C({}, {}) overflows 64 bits", n, k));
    }
  }
  return static_cast<std::uint64_t>(c);
}

int compute_num_agcs(int n_m, int n_rf) {
  if (n_rf < 1 || n_m < 1) throw DimensionError("n_m and n_rf must be >= 1");
  if (n_rf > n_m) {
    throw DimensionError(fmt::format("n_rf={} exceeds n_m={}", n_rf, n_m));
  }
  const std::uint64_t c = binomial(n_m, n_rf);
  const int log2_floor = std::bit_width(c) - 1;
  if (log2_floor > 30) {
    throw DimensionError(fmt::format("M = 2^{} antenna group combinations is not tractable", log2_floor));
  }
  return 1 << log2_floor;
}

AgcTable AgcTable::from_combos(std::vector<std::vector<int>> combos, int n_m, int n_k) {
  if (combos.empty()) throw DimensionError("AGC table needs at least one combination");
  if (n_k < 1 || n_m < 1) throw DimensionError("n_k and n_m must be >= 1");
  const int n_rf = static_cast<int>(combos.front().size());
  if (n_rf < 1 || n_rf > n_m) throw DimensionError("combination length must be in [1, n_m]");

  std::set<std::vector<int>> seen;
  for (const auto& u : combos) {
    if (static_cast<int>(u.size()) != n_rf) {
      throw DimensionError("all combinations must have n_rf entries");
    }
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (u[j] < 0 || u[j] >= n_m) throw DimensionError("group index out of range");
      if (j > 0 && u[j] <= u[j - 1]) throw DimensionError("group indices must be strictly increasing");
    }
    if (!seen.insert(u).second) throw DimensionError("duplicate antenna group combination");
  }

  AgcTable table;
  table.n_k = n_k;
  table.n_m = n_m;
  table.n_rf = n_rf;
  const int n_t = n_k * n_m;
  for (const auto& u : combos) {
    RMatrix c = RMatrix::Zero(n_t, n_rf);
    for (int j = 0; j < n_rf; ++j) {
      c.block(u[j] * n_k, j, n_k, 1).setOnes();
    }
    table.selection.push_back(std::move(c));
  }
  table.combos = std::move(combos);
  return table;
}

AgcTable enumerate_agcs(int n_m, int n_rf, int n_k) {
  const int m = compute_num_agcs(n_m, n_rf);
  std::vector<std::vector<int>> combos;
  combos.reserve(m);

  std::vector<int> u(n_rf);
  for (int j = 0; j < n_rf; ++j) u[j] = j;
  while (static_cast<int>(combos.size()) < m) {
    combos.push_back(u);
    // advance to the next combination in lexicographic order
    int j = n_rf - 1;
    while (j >= 0 && u[j] == n_m - n_rf + j) --j;
    if (j < 0) break;
    ++u[j];
    for (int k = j + 1; k < n_rf; ++k) u[k] = u[k - 1] + 1;
  }
  return AgcTable::from_combos(std::move(combos), n_m, n_k);
}

AgcTable enumerate_agcs(const SystemConfig& cfg) { return enumerate_agcs(cfg.n_m, cfg.n_rf, cfg.n_k); }

PhaseVector::PhaseVector(RVector angles) : psi_(std::move(angles)) {
  for (Eigen::Index i = 0; i < psi_.size(); ++i) {
    if (!std::isfinite(psi_[i])) throw DimensionError("phase angles must be finite");
    psi_[i] = wrap_angle(psi_[i]);
  }
}

CVector precoder_diagonal(const PhaseVector& psi, int n_k) {
  if (n_k < 1) throw DimensionError("n_k must be >= 1");
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_k));
  CVector a(psi.size());
  for (int i = 0; i < psi.size(); ++i) a[i] = std::polar(scale, psi[i]);
  return a;
}

CMatrix build_precoder_matrix(const PhaseVector& psi, int n_k) {
  return precoder_diagonal(psi, n_k).asDiagonal();
}

CMatrix effective_channel(const CMatrix& h, const CVector& a_diag, const RMatrix& c_m) {
  if (h.cols() != a_diag.size() || c_m.rows() != a_diag.size()) {
    throw DimensionError("channel, precoder and selection matrix disagree on n_t");
  }
  return h * a_diag.asDiagonal() * c_m.cast<Complex>();
}

CMatrix effective_covariance(const CMatrix& h, const CMatrix& a, const RMatrix& c_m,
                             const SystemConfig& cfg) {
  if (h.rows() != cfg.n_r || h.cols() != cfg.n_t || a.rows() != cfg.n_t || a.cols() != cfg.n_t ||
      c_m.rows() != cfg.n_t || c_m.cols() != cfg.n_rf) {
    throw DimensionError("effective_covariance: inconsistent dimensions");
  }
  const CMatrix hac = h * a * c_m.cast<Complex>();
  CMatrix sigma = (cfg.rho / cfg.streams()) * (hac * hac.adjoint());
  sigma.diagonal().array() += cfg.sigma_n2;
  return hermitian_part(sigma);
}

void check_dimensions(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                      const AgcTable& agc) {
  if (h.rows() != cfg.n_r || h.cols() != cfg.n_t) {
    throw DimensionError(fmt::format("channel is {}x{}, config expects {}x{}", h.rows(), h.cols(),
                                     cfg.n_r, cfg.n_t));
  }
  if (psi.size() != cfg.n_t) {
    throw DimensionError(fmt::format("{} phases for {} transmit antennas", psi.size(), cfg.n_t));
  }
  if (agc.n_t() != cfg.n_t || agc.n_rf != cfg.n_rf || agc.n_k != cfg.n_k || agc.size() == 0) {
    throw DimensionError("AGC table does not match the system configuration");
  }
}

CovarianceSet covariances(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                          const AgcTable& agc) {
  check_dimensions(h, psi, cfg, agc);
  const CVector a = precoder_diagonal(psi, cfg.n_k);
  const double scale = cfg.rho / cfg.streams();
  CovarianceSet out;
  out.reserve(agc.size());
  for (const auto& c_m : agc.selection) {
    const CMatrix hac = effective_channel(h, a, c_m);
    CMatrix sigma = scale * (hac * hac.adjoint());
    sigma.diagonal().array() += cfg.sigma_n2;
    out.push_back(hermitian_part(sigma));
  }
  return out;
}

}  // namespace gensm
