#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gensm/linalg.hpp"

namespace gensm {

/// Dimensioning and power parameters of a GenSM-aided mmWave link.
///
/// The transmit array of n_t = n_k * n_m antennas is split into n_m groups of
/// n_k elements; n_rf RF chains are switched onto n_rf of the groups per
/// symbol. The number of active streams equals n_rf. Powers are linear.
struct SystemConfig {
  int n_t = 0;
  int n_r = 0;
  int n_k = 0;
  int n_m = 0;
  int n_rf = 0;
  double rho = 0.0;
  double sigma_n2 = 1.0;
  int m = 0;  // number of antenna group combinations in use

  /// Validates and derives n_t and m. Throws DimensionError.
  static SystemConfig make(int n_r, int n_k, int n_m, int n_rf, double rho, double sigma_n2 = 1.0);

  /// Same dimensions with a different transmit power.
  SystemConfig with_rho(double new_rho) const;

  int streams() const { return n_rf; }
  double snr() const { return rho / sigma_n2; }

  /// Stable 64-bit FNV-1a digest of the dimensions and powers, printed as 16
  /// hex digits. Used to tag CSV rows.
  std::string hash() const;
};

/// Binomial coefficient C(n, k); throws DimensionError on overflow.
std::uint64_t binomial(int n, int k);

/// M = 2^floor(log2 C(n_m, n_rf)).
int compute_num_agcs(int n_m, int n_rf);

/// The M antenna group combinations in use and their selection matrices.
///
/// combos[m] holds the 0-based indices of the active groups, strictly
/// increasing. selection[m] is the n_t x n_rf 0/1 matrix whose column j has
/// ones on the rows of group combos[m][j].
struct AgcTable {
  int n_k = 0;
  int n_m = 0;
  int n_rf = 0;
  std::vector<std::vector<int>> combos;
  std::vector<RMatrix> selection;

  std::size_t size() const { return combos.size(); }
  int n_t() const { return n_k * n_m; }

  /// D_m = C_m C_m^H: block diagonal, an all-ones n_k x n_k block per active
  /// group (diagonal only when n_k = 1).
  RMatrix group_projector(std::size_t m) const { return selection[m] * selection[m].transpose(); }

  /// Builds the table from explicit combinations (each of length n_rf, strictly
  /// increasing, 0-based, pairwise distinct).
  static AgcTable from_combos(std::vector<std::vector<int>> combos, int n_m, int n_k);
};

/// First M = compute_num_agcs(n_m, n_rf) combinations in lexicographic order.
AgcTable enumerate_agcs(int n_m, int n_rf, int n_k);
AgcTable enumerate_agcs(const SystemConfig& cfg);

/// Phase-shifter angles, one per transmit antenna, kept in [-pi, pi).
class PhaseVector {
 public:
  PhaseVector() = default;
  explicit PhaseVector(RVector angles);

  static PhaseVector zeros(int n_t) { return PhaseVector(RVector::Zero(n_t)); }

  const RVector& angles() const { return psi_; }
  int size() const { return static_cast<int>(psi_.size()); }
  double operator[](int i) const { return psi_[i]; }

 private:
  RVector psi_;
};

/// Diagonal of A = diag(e^{j psi}) / sqrt(n_k).
CVector precoder_diagonal(const PhaseVector& psi, int n_k);

/// Dense n_t x n_t form of the analog precoder.
CMatrix build_precoder_matrix(const PhaseVector& psi, int n_k);

/// H A C_m for a diagonal precoder given by its diagonal.
CMatrix effective_channel(const CMatrix& h, const CVector& a_diag, const RMatrix& c_m);

/// Sigma_m = sigma^2 I + (rho / n_rf) H A C_m C_m^H A^H H^H, returned Hermitian.
CMatrix effective_covariance(const CMatrix& h, const CMatrix& a, const RMatrix& c_m,
                             const SystemConfig& cfg);

using CovarianceSet = std::vector<CMatrix>;

/// All M receive covariances for a channel and precoder.
CovarianceSet covariances(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                          const AgcTable& agc);

void check_dimensions(const CMatrix& h, const PhaseVector& psi, const SystemConfig& cfg,
                      const AgcTable& agc);

}  // namespace gensm
