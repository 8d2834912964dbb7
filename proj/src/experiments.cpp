#include "gensm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "gensm/errors.hpp"

namespace gensm {

namespace {

// Runs fn(i) for i in [0, n) on a small pool. Results must be written to
// slot i by the callee; the first exception is rethrown after joining.
template <class Fn>
void parallel_for(int n, int threads, Fn fn) {
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

CMatrix channel_for(const ExperimentSpec& spec, int n_t, int n_r, int k) {
  Rng rng = Rng::substream(spec.seed, {kChannelStream, static_cast<std::uint64_t>(k)});
  return sample_channel(n_t, n_r, spec.paths, rng).channel.h;
}

Rng mc_stream(const ExperimentSpec& spec, int n_r, std::size_t snr_idx, int k, std::uint64_t scheme) {
  return Rng::substream(spec.seed, {kMonteCarloStream, static_cast<std::uint64_t>(n_r), snr_idx,
                                    static_cast<std::uint64_t>(k), scheme});
}

Rng optimizer_stream(const ExperimentSpec& spec, int n_r, std::size_t snr_idx, int k,
                     std::uint64_t scheme) {
  return Rng::substream(spec.seed, {kOptimizerStream, static_cast<std::uint64_t>(n_r), snr_idx,
                                    static_cast<std::uint64_t>(k), scheme});
}

std::vector<std::pair<int, int>> factor_pairs(int n_t, int n_rf) {
  std::vector<std::pair<int, int>> out;  // (n_k, n_m), n_k descending
  for (int n_k = n_t; n_k >= 1; --n_k) {
    if (n_t % n_k == 0 && n_t / n_k >= n_rf) out.emplace_back(n_k, n_t / n_k);
  }
  return out;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::approx_accuracy: return "approx-accuracy";
    case ExperimentKind::se_compare: return "se-compare";
    case ExperimentKind::param_select: return "param-select";
    case ExperimentKind::optimize_one: return "optimize-one";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto kind : {ExperimentKind::approx_accuracy, ExperimentKind::se_compare,
                    ExperimentKind::param_select, ExperimentKind::optimize_one}) {
    if (to_string(kind) == s) return kind;
  }
  throw DimensionError(fmt::format("unknown experiment '{}'", s));
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

ExperimentSpec ExperimentSpec::defaults(ExperimentKind kind) {
  ExperimentSpec spec;
  spec.kind = kind;
  switch (kind) {
    case ExperimentKind::approx_accuracy:
      spec.snr_db = {-10, -5, 0, 5, 10};
      spec.nr_list = {2, 4, 8};
      break;
    case ExperimentKind::se_compare:
      spec.snr_db = {-10, -5, 0, 5, 10};
      spec.nr_list = {8};
      spec.channels = 200;
      break;
    case ExperimentKind::param_select:
      spec.n_rf = 1;
      spec.n_k = 8;
      spec.n_m = 1;
      spec.snr_db = {3, 6, 10};
      spec.nr_list = {4, 6, 8};
      break;
    case ExperimentKind::optimize_one:
      spec.snr_db = {0};
      spec.nr_list = {8};
      spec.channels = 1;
      break;
  }
  return spec;
}

void ExperimentSpec::validate() const {
  if (snr_db.empty()) throw DimensionError("SNR grid is empty");
  if (nr_list.empty()) throw DimensionError("receive-antenna list is empty");
  if (channels < 1) throw DimensionError("channel count must be >= 1");
  if (mc_samples < 1) throw DimensionError("Monte-Carlo sample count must be >= 1");
  if (paths < 1) throw DimensionError("path count must be >= 1");
  if (channel_index < 0) throw DimensionError("channel index must be >= 0");
  if (threads < 0) throw DimensionError("thread count must be >= 0");
  for (double s : snr_db) {
    // -inf dB is allowed and means rho = 0
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity()) {
      throw DimensionError("SNR values must be finite or -inf");
    }
  }
  optimizer.validate();
  if (kind == ExperimentKind::param_select) {
    if (n_t < 1 || n_rf < 1) throw DimensionError("n_t and n_rf must be >= 1");
    if (factor_pairs(n_t, n_rf).empty()) {
      throw DimensionError(fmt::format("no (n_k, n_m) factorization of n_t={} has n_m >= n_rf={}", n_t, n_rf));
    }
    for (int n_r : nr_list) SystemConfig::make(n_r, n_t, 1, 1, 0.0, sigma_n2);
    return;
  }
  if (n_k * n_m != n_t) {
    throw DimensionError(fmt::format("n_t={} must equal n_k * n_m = {} * {}", n_t, n_k, n_m));
  }
  for (int n_r : nr_list) config(n_r, snr_db.front());
}

SystemConfig ExperimentSpec::config(int n_r_value, double snr_db_value) const {
  return SystemConfig::make(n_r_value, n_k, n_m, n_rf, db_to_linear(snr_db_value) * sigma_n2, sigma_n2);
}

ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec base) {
  try {
    ExperimentSpec s = std::move(base);
    if (j.contains("experiment")) s.kind = parse_experiment_kind(j["experiment"].get<std::string>());
    if (j.contains("system")) {
      const auto& sys = j["system"];
      s.n_t = sys.value("n_t", s.n_t);
      s.n_r = sys.value("n_r", s.n_r);
      s.n_k = sys.value("n_k", s.n_k);
      s.n_m = sys.value("n_m", s.n_m);
      s.n_rf = sys.value("n_rf", s.n_rf);
      s.sigma_n2 = sys.value("sigma_n2", s.sigma_n2);
      if (sys.contains("n_r") && !j.contains("nr")) s.nr_list = {s.n_r};
    }
    s.paths = j.value("paths", s.paths);
    if (j.contains("snr_db")) {
      s.snr_db.clear();
      for (const auto& v : j["snr_db"]) {
        if (v.is_string() && v.get<std::string>() == "-inf") {
          s.snr_db.push_back(-std::numeric_limits<double>::infinity());
        } else {
          s.snr_db.push_back(v.get<double>());
        }
      }
    }
    if (j.contains("nr")) s.nr_list = j["nr"].get<std::vector<int>>();
    s.channels = j.value("channels", s.channels);
    s.mc_samples = j.value("mc_samples", s.mc_samples);
    s.seed = j.value("seed", s.seed);
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      s.optimizer.t_max = o.value("t_max", s.optimizer.t_max);
      s.optimizer.tol_rate = o.value("tol_rate", s.optimizer.tol_rate);
      s.optimizer.tol_phase = o.value("tol_phase", s.optimizer.tol_phase);
      if (o.contains("gradient")) s.optimizer.gradient = parse_gradient_kind(o["gradient"].get<std::string>());
      if (o.contains("init")) s.optimizer.init = parse_init_kind(o["init"].get<std::string>());
      s.optimizer.restarts = o.value("restarts", s.optimizer.restarts);
      s.optimizer.fallback_to_full = o.value("fallback_to_full", s.optimizer.fallback_to_full);
    }
    s.channel_index = j.value("channel_index", s.channel_index);
    s.out_dir = j.value("out", s.out_dir);
    s.threads = j.value("threads", s.threads);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DimensionError(fmt::format("malformed experiment config: {}", e.what()));
  }
}

nlohmann::json to_json(const ExperimentSpec& s) {
  auto snr = nlohmann::json::array();
  for (double v : s.snr_db) {
    if (std::isinf(v)) {
      snr.push_back("-inf");
    } else {
      snr.push_back(v);
    }
  }
  return {{"experiment", to_string(s.kind)},
          {"system",
           {{"n_t", s.n_t}, {"n_r", s.n_r}, {"n_k", s.n_k}, {"n_m", s.n_m}, {"n_rf", s.n_rf},
            {"sigma_n2", s.sigma_n2}}},
          {"paths", s.paths},
          {"snr_db", std::move(snr)},
          {"nr", s.nr_list},
          {"channels", s.channels},
          {"mc_samples", s.mc_samples},
          {"seed", s.seed},
          {"optimizer",
           {{"t_max", s.optimizer.t_max},
            {"tol_rate", s.optimizer.tol_rate},
            {"tol_phase", s.optimizer.tol_phase},
            {"gradient", to_string(s.optimizer.gradient)},
            {"init", to_string(s.optimizer.init)},
            {"restarts", s.optimizer.restarts},
            {"fallback_to_full", s.optimizer.fallback_to_full}}},
          {"channel_index", s.channel_index},
          {"out", s.out_dir},
          {"threads", s.threads}};
}

std::vector<ApproxAccuracyRow> run_approx_accuracy(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<ApproxAccuracyRow> rows;
  const std::size_t n_snr = spec.snr_db.size();
  for (int n_r : spec.nr_list) {
    // per channel, per SNR: (r_cf, r_mc, stderr)
    std::vector<std::vector<RateReport>> results(spec.channels, std::vector<RateReport>(n_snr));
    parallel_for(spec.channels, spec.threads, [&](int k) {
      const CMatrix h = channel_for(spec, spec.n_t, n_r, k);
      for (std::size_t s = 0; s < n_snr; ++s) {
        const SystemConfig cfg = spec.config(n_r, spec.snr_db[s]);
        Rng rng = mc_stream(spec, n_r, s, k, 0);
        results[k][s] = rate_true_mc(h, PhaseVector::zeros(cfg.n_t), cfg, enumerate_agcs(cfg),
                                     spec.mc_samples, rng);
      }
    });
    for (std::size_t s = 0; s < n_snr; ++s) {
      ApproxAccuracyRow row{n_r, spec.snr_db[s], 0.0, 0.0, 0.0, spec.channels};
      for (int k = 0; k < spec.channels; ++k) {
        row.r_cf_mean += results[k][s].r_cf;
        row.r_mc_mean += results[k][s].r_mc;
        row.r_mc_stderr_mean += results[k][s].r_mc_stderr;
      }
      row.r_cf_mean /= spec.channels;
      row.r_mc_mean /= spec.channels;
      row.r_mc_stderr_mean /= spec.channels;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<SeCompareRow> run_se_compare(const ExperimentSpec& spec) {
  spec.validate();
  enum Scheme : std::uint64_t { kFull = 0, kReduced = 1, kIdentity = 2, kNoPrecoding = 3 };
  struct Cell {
    RateReport full, reduced, identity, no_precoding;
    double waterfilling = 0.0;
    bool fell_back = false;
  };

  std::vector<SeCompareRow> rows;
  const std::size_t n_snr = spec.snr_db.size();
  for (int n_r : spec.nr_list) {
    std::vector<std::vector<Cell>> results(spec.channels, std::vector<Cell>(n_snr));
    parallel_for(spec.channels, spec.threads, [&](int k) {
      const CMatrix h = channel_for(spec, spec.n_t, n_r, k);
      for (std::size_t s = 0; s < n_snr; ++s) {
        const SystemConfig cfg = spec.config(n_r, spec.snr_db[s]);
        const AgcTable agc = enumerate_agcs(cfg);
        Cell& cell = results[k][s];

        for (Scheme scheme : {kFull, kReduced}) {
          OptimizerOptions opts = spec.optimizer;
          opts.gradient = scheme == kFull ? GradientKind::full : GradientKind::reduced;
          Rng opt_rng = optimizer_stream(spec, n_r, s, k, scheme);
          const OptimizerTrace trace = optimize(h, cfg, agc, opts, opt_rng);
          Rng rng = mc_stream(spec, n_r, s, k, scheme);
          RateReport report = rate_true_mc(h, trace.best_psi, cfg, agc, spec.mc_samples, rng);
          if (scheme == kFull) {
            cell.full = report;
          } else {
            cell.reduced = report;
            cell.fell_back = trace.fell_back;
          }
        }
        Rng id_rng = mc_stream(spec, n_r, s, k, kIdentity);
        cell.identity = baseline_rate(BaselineScheme::identity_precoder, h, cfg, spec.mc_samples, id_rng);
        Rng np_rng = mc_stream(spec, n_r, s, k, kNoPrecoding);
        cell.no_precoding =
            baseline_rate(BaselineScheme::no_precoding_full_switching, h, cfg, spec.mc_samples, np_rng);
        cell.waterfilling = waterfilling_capacity(h, cfg.rho, cfg.sigma_n2, cfg.n_rf);
      }
    });

    for (std::size_t s = 0; s < n_snr; ++s) {
      SeCompareRow row;
      row.n_r = n_r;
      row.snr_db = spec.snr_db[s];
      row.n_channels = spec.channels;
      for (int k = 0; k < spec.channels; ++k) {
        const Cell& c = results[k][s];
        row.full_mean += c.full.r_mc;
        row.reduced_mean += c.reduced.r_mc;
        row.identity_mean += c.identity.r_mc;
        row.no_precoding_mean += c.no_precoding.r_mc;
        row.waterfilling_mean += c.waterfilling;
        row.full_cf_mean += c.full.r_cf;
        row.reduced_cf_mean += c.reduced.r_cf;
        row.identity_cf_mean += c.identity.r_cf;
        row.no_precoding_cf_mean += c.no_precoding.r_cf;
        row.max_stderr = std::max({row.max_stderr, c.full.r_mc_stderr, c.reduced.r_mc_stderr,
                                   c.identity.r_mc_stderr, c.no_precoding.r_mc_stderr});
        row.reduced_fallbacks += c.fell_back ? 1 : 0;
      }
      const double n = spec.channels;
      for (double* v : {&row.full_mean, &row.reduced_mean, &row.identity_mean, &row.no_precoding_mean,
                        &row.waterfilling_mean, &row.full_cf_mean, &row.reduced_cf_mean,
                        &row.identity_cf_mean, &row.no_precoding_cf_mean}) {
        *v /= n;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<ParamSelectRow> run_param_select(const ExperimentSpec& spec) {
  spec.validate();
  const auto pairs = factor_pairs(spec.n_t, spec.n_rf);
  const std::size_t n_snr = spec.snr_db.size();
  std::vector<ParamSelectRow> rows;
  for (int n_r : spec.nr_list) {
    // results[k][s][p] = optimized r_cf
    std::vector<std::vector<std::vector<double>>> results(
        spec.channels, std::vector<std::vector<double>>(n_snr, std::vector<double>(pairs.size())));
    parallel_for(spec.channels, spec.threads, [&](int k) {
      const CMatrix h = channel_for(spec, spec.n_t, n_r, k);
      for (std::size_t s = 0; s < n_snr; ++s) {
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          const auto [n_k, n_m] = pairs[p];
          const SystemConfig cfg = SystemConfig::make(n_r, n_k, n_m, spec.n_rf,
                                                      db_to_linear(spec.snr_db[s]) * spec.sigma_n2,
                                                      spec.sigma_n2);
          Rng rng = optimizer_stream(spec, n_r, s, k, p);
          results[k][s][p] = optimize(h, cfg, enumerate_agcs(cfg), spec.optimizer, rng).best_r_cf;
        }
      }
    });

    for (std::size_t s = 0; s < n_snr; ++s) {
      const std::size_t first = rows.size();
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        ParamSelectRow row;
        row.n_r = n_r;
        row.snr_db = spec.snr_db[s];
        row.n_k = pairs[p].first;
        row.n_m = pairs[p].second;
        row.m = compute_num_agcs(row.n_m, spec.n_rf);
        row.n_channels = spec.channels;
        double sum = 0.0;
        double sum_sq = 0.0;
        for (int k = 0; k < spec.channels; ++k) {
          sum += results[k][s][p];
          sum_sq += results[k][s][p] * results[k][s][p];
        }
        const double n = spec.channels;
        row.r_cf_mean = sum / n;
        if (spec.channels > 1) {
          const double var = std::max(0.0, (sum_sq - n * row.r_cf_mean * row.r_cf_mean) / (n - 1.0));
          row.r_cf_stderr = std::sqrt(var / n);
        }
        rows.push_back(row);
      }
      auto best = std::max_element(rows.begin() + static_cast<std::ptrdiff_t>(first), rows.end(),
                                   [](const auto& a, const auto& b) { return a.r_cf_mean < b.r_cf_mean; });
      best->best = true;
    }
  }
  return rows;
}

OptimizeOneResult run_optimize_one(const ExperimentSpec& spec, const std::optional<ChannelRecord>& channel) {
  spec.validate();
  OptimizeOneResult out;
  const int n_r = channel ? channel->n_r : spec.nr_list.front();
  out.config = spec.config(n_r, spec.snr_db.front());
  if (channel) {
    if (channel->n_t != out.config.n_t) {
      throw DimensionError(fmt::format("channel record has n_t={}, config expects {}", channel->n_t,
                                       out.config.n_t));
    }
    out.channel = *channel;
  } else {
    Rng rng = Rng::substream(spec.seed, {kChannelStream, static_cast<std::uint64_t>(spec.channel_index)});
    out.channel.n_t = out.config.n_t;
    out.channel.n_r = n_r;
    out.channel.seed = spec.seed;
    out.channel.stream = static_cast<std::uint64_t>(spec.channel_index);
    out.channel.realization = sample_channel(out.config, spec.paths, rng);
  }
  const CMatrix& h = out.channel.realization.channel.h;
  const AgcTable agc = enumerate_agcs(out.config);
  const auto k = spec.channel_index;
  Rng opt_rng = optimizer_stream(spec, n_r, 0, k, 0);
  out.trace = optimize(h, out.config, agc, spec.optimizer, opt_rng);
  Rng rng = mc_stream(spec, n_r, 0, k, 0);
  out.optimized = rate_true_mc(h, out.trace.best_psi, out.config, agc, spec.mc_samples, rng);
  Rng id_rng = mc_stream(spec, n_r, 0, k, 2);
  out.identity = baseline_rate(BaselineScheme::identity_precoder, h, out.config, spec.mc_samples, id_rng);
  return out;
}

std::string csv_header(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::approx_accuracy:
      return "n_r,snr_db,r_cf_mean,r_mc_mean,r_mc_stderr_mean,n_channels";
    case ExperimentKind::se_compare:
      return "n_r,snr_db,proposed_full,proposed_reduced,identity_precoder,no_precoding,waterfilling,"
             "proposed_full_cf,proposed_reduced_cf,identity_precoder_cf,no_precoding_cf,max_stderr,"
             "reduced_fallbacks,n_channels";
    case ExperimentKind::param_select:
      return "n_r,snr_db,n_k,n_m,m,r_cf_mean,r_cf_stderr,best,n_channels";
    case ExperimentKind::optimize_one:
      return trace_csv_header() + ",r_mc,r_mc_stderr,identity_r_cf,identity_r_mc";
  }
  return {};
}

std::string to_csv(const std::vector<ApproxAccuracyRow>& rows) {
  std::string out = csv_header(ExperimentKind::approx_accuracy) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{}\n", r.n_r, r.snr_db, r.r_cf_mean, r.r_mc_mean, r.r_mc_stderr_mean,
                       r.n_channels);
  }
  return out;
}

std::string to_csv(const std::vector<SeCompareRow>& rows) {
  std::string out = csv_header(ExperimentKind::se_compare) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.n_r, r.snr_db, r.full_mean,
                       r.reduced_mean, r.identity_mean, r.no_precoding_mean, r.waterfilling_mean,
                       r.full_cf_mean, r.reduced_cf_mean, r.identity_cf_mean, r.no_precoding_cf_mean,
                       r.max_stderr, r.reduced_fallbacks, r.n_channels);
  }
  return out;
}

std::string to_csv(const std::vector<ParamSelectRow>& rows) {
  std::string out = csv_header(ExperimentKind::param_select) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.n_r, r.snr_db, r.n_k, r.n_m, r.m, r.r_cf_mean,
                       r.r_cf_stderr, r.best ? 1 : 0, r.n_channels);
  }
  return out;
}

void write_outputs(const ExperimentSpec& spec, const std::string& name, const std::string& csv,
                   double wall_seconds, const nlohmann::json& extra) {
  const std::filesystem::path dir(spec.out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / (name + ".csv"), std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write {}", (dir / (name + ".csv")).string()));
    f << csv;
  }
  nlohmann::json manifest = {{"experiment", to_string(spec.kind)},
                             {"spec", to_json(spec)},
                             {"seed", spec.seed},
                             {"version", kVersion},
                             {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                                                   EIGEN_MINOR_VERSION)},
                             {"wall_seconds", wall_seconds},
                             {"outputs", {name + ".csv"}}};
  for (const auto& [key, value] : extra.items()) manifest[key] = value;
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write manifest.json");
  f << manifest.dump(2) << "\n";
}

}  // namespace gensm
