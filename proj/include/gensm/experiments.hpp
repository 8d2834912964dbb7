#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gensm/channel.hpp"
#include "gensm/precoder.hpp"

namespace gensm {

// Substream tags. Channel k is always Rng::substream(seed, {kChannelStream, k}),
// so every scheme and SNR point sees the same realizations.
inline constexpr std::uint64_t kChannelStream = 1;
inline constexpr std::uint64_t kMonteCarloStream = 2;
inline constexpr std::uint64_t kOptimizerStream = 3;

enum class ExperimentKind { approx_accuracy, se_compare, param_select, optimize_one };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& s);

/// Everything needed to reproduce one experiment run.
///
/// JSON schema (every key optional; missing keys keep the experiment default):
///   {
///     "experiment": "approx-accuracy" | "se-compare" | "param-select" | "optimize-one",
///     "system": {"n_t": 8, "n_r": 8, "n_k": 2, "n_m": 4, "n_rf": 2, "sigma_n2": 1.0},
///     "paths": 5,
///     "snr_db": [-10, -5, 0, 5, 10],   // "-inf" selects rho = 0
///     "nr": [2, 4, 8],
///     "channels": 500,
///     "mc_samples": 100000,
///     "seed": 1,
///     "optimizer": {"t_max": 50, "tol_rate": 1e-8, "tol_phase": 1e-6,
///                   "gradient": "full", "init": "identity", "restarts": 1,
///                   "fallback_to_full": true},
///     "channel_index": 0,
///     "out": "out",
///     "threads": 0
///   }
/// snr_db is rho / sigma_n2 in dB. n_t must equal n_k * n_m; param-select
/// only uses n_t and n_rf and sweeps every factorization n_t = n_k * n_m.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::approx_accuracy;
  int n_t = 8;
  int n_r = 8;
  int n_k = 2;
  int n_m = 4;
  int n_rf = 2;
  double sigma_n2 = 1.0;
  int paths = 5;
  std::vector<double> snr_db;
  std::vector<int> nr_list;
  int channels = 500;
  std::int64_t mc_samples = kDefaultMcSamples;
  std::uint64_t seed = 1;
  OptimizerOptions optimizer;
  int channel_index = 0;
  std::string out_dir = "out";
  int threads = 0;  // 0 = hardware concurrency

  /// Defaults for one experiment (8x8 link with 4 groups of 2 and 2 RF chains, desk-scale budgets).
  static ExperimentSpec defaults(ExperimentKind kind);

  /// Throws DimensionError for anything that cannot produce valid configs.
  void validate() const;

  /// Config for one (n_r, snr) cell, using this spec's n_k, n_m and n_rf.
  SystemConfig config(int n_r_value, double snr_db_value) const;
};

/// Overlays `j` onto `base`. Throws DimensionError on malformed input.
ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec base);
nlohmann::json to_json(const ExperimentSpec& spec);

double db_to_linear(double db);

struct ApproxAccuracyRow {
  int n_r = 0;
  double snr_db = 0.0;
  double r_cf_mean = 0.0;
  double r_mc_mean = 0.0;
  double r_mc_stderr_mean = 0.0;
  int n_channels = 0;
};

struct SeCompareRow {
  int n_r = 0;
  double snr_db = 0.0;
  // true SE (Monte-Carlo) per scheme
  double full_mean = 0.0;
  double reduced_mean = 0.0;
  double identity_mean = 0.0;
  double no_precoding_mean = 0.0;
  double waterfilling_mean = 0.0;
  // closed-form SE per scheme
  double full_cf_mean = 0.0;
  double reduced_cf_mean = 0.0;
  double identity_cf_mean = 0.0;
  double no_precoding_cf_mean = 0.0;
  double max_stderr = 0.0;
  int reduced_fallbacks = 0;
  int n_channels = 0;
};

struct ParamSelectRow {
  int n_r = 0;
  double snr_db = 0.0;
  int n_k = 0;
  int n_m = 0;
  int m = 0;
  double r_cf_mean = 0.0;
  double r_cf_stderr = 0.0;
  bool best = false;
  int n_channels = 0;
};

std::vector<ApproxAccuracyRow> run_approx_accuracy(const ExperimentSpec& spec);
std::vector<SeCompareRow> run_se_compare(const ExperimentSpec& spec);
std::vector<ParamSelectRow> run_param_select(const ExperimentSpec& spec);

struct OptimizeOneResult {
  ChannelRecord channel;
  SystemConfig config;
  OptimizerTrace trace;
  RateReport optimized;
  RateReport identity;
};

/// Single-channel debug run at spec.snr_db.front() and spec.nr_list.front().
/// Uses `channel` when given, otherwise realization spec.channel_index.
OptimizeOneResult run_optimize_one(const ExperimentSpec& spec,
                                   const std::optional<ChannelRecord>& channel = std::nullopt);

std::string to_csv(const std::vector<ApproxAccuracyRow>& rows);
std::string to_csv(const std::vector<SeCompareRow>& rows);
std::string to_csv(const std::vector<ParamSelectRow>& rows);

/// Header line of each experiment's CSV; every row has as many fields.
std::string csv_header(ExperimentKind kind);

/// Writes `<out>/<name>.csv` and `<out>/manifest.json` (spec, seed, library
/// version, wall time). Creates the directory if needed.
void write_outputs(const ExperimentSpec& spec, const std::string& name, const std::string& csv,
                   double wall_seconds, const nlohmann::json& extra = nlohmann::json::object());

inline constexpr const char* kVersion = "1.0.0";

}  // namespace gensm
