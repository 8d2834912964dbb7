#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gensm/linalg.hpp"
#include "gensm/model.hpp"
#include "gensm/rng.hpp"

namespace gensm {

/// Parameters of a narrowband Saleh-Valenzuela channel with l paths.
///
/// Both ends are uniform linear arrays with azimuth-only response; elevations
/// are drawn and stored but do not enter the response. Element gains are 1.
struct PathSet {
  int l = 0;
  std::vector<Complex> gains;
  std::vector<double> aod;
  std::vector<double> aoa;
  std::vector<double> elev_t;
  std::vector<double> elev_r;
  double gamma = 0.0;
  double element_gain_t = 1.0;
  double element_gain_r = 1.0;
  double spacing_over_lambda = 1.0;
};

struct ChannelMatrix {
  CMatrix h;  // n_r x n_t
};

struct ChannelRealization {
  PathSet paths;
  ChannelMatrix channel;
};

/// (1/sqrt(n)) [1, e^{j 2 pi d sin(angle)}, ..., e^{j 2 pi d (n-1) sin(angle)}]
CVector steering_vector(int n, double angle, double spacing_over_lambda = 1.0);

/// H = gamma * sum_l alpha_l b_r(aoa_l) b_t(aod_l)^H.
ChannelMatrix assemble_channel(const PathSet& paths, int n_t, int n_r);

/// Draws gains ~ CN(0, 1) and azimuths ~ U[-pi, pi) (elevations U[-pi/2, pi/2))
/// then assembles H, so that E||H||_F^2 = n_t n_r.
ChannelRealization sample_channel(const SystemConfig& cfg, int l, Rng& rng);
ChannelRealization sample_channel(int n_t, int n_r, int l, Rng& rng);

/// Replayable channel record.
///
/// JSON layout:
///   {
///     "format": "gensm-channel", "version": 1,
///     "n_t": 8, "n_r": 8, "l": 5,
///     "seed": 1, "stream": 0,            // optional provenance
///     "spacing_over_lambda": 1.0, "gamma": 1.788...,
///     "paths": [ {"gain": [re, im], "aod": .., "aoa": .., "elev_t": .., "elev_r": ..}, ...],
///     "h": [[re, im], ...]               // n_r * n_t entries, row-major
///   }
/// Doubles are written in shortest round-trip form, so import reproduces H
/// bit-exactly.
struct ChannelRecord {
  int n_t = 0;
  int n_r = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> stream;
  ChannelRealization realization;
};

nlohmann::json to_json(const ChannelRecord& record);
ChannelRecord channel_from_json(const nlohmann::json& j);

}  // namespace gensm
