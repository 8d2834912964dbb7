// gensm_cli: experiment driver.
//
//   gensm_cli approx-accuracy [--nr 2,4,8] [--snr-db -10,-5,0,5,10] [--channels 500]
//   gensm_cli se-compare      [--channels 200] [--mc-samples 100000]
//   gensm_cli param-select    [--nr 4,6,8] [--snr-db 3,6,10]
//   gensm_cli optimize-one    [--channel-index 0] [--channel-in rec.json]
//
// Every subcommand takes --config <json>, then flags override the file.
// Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "gensm/errors.hpp"
#include "gensm/experiments.hpp"

namespace {

constexpr int kExitInvalidConfig = 2;
constexpr int kExitNumerical = 3;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> channels;
  std::optional<std::int64_t> mc_samples;
  std::vector<double> snr_db;
  std::vector<int> nr;
  std::optional<std::string> out;
  std::optional<std::string> gradient;
  std::optional<int> restarts;
  std::optional<int> threads;
  std::optional<int> t_max;
  std::optional<int> channel_index;
  std::string channel_in;
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "ExperimentSpec JSON file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--channels", o.channels, "channel realizations per point");
  cmd->add_option("--mc-samples", o.mc_samples, "Monte-Carlo samples per rate evaluation");
  cmd->add_option("--snr-db", o.snr_db, "SNR grid in dB (rho / sigma^2)")->delimiter(',');
  cmd->add_option("--nr", o.nr, "receive antenna counts")->delimiter(',');
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--gradient", o.gradient, "full | reduced")->check(CLI::IsMember({"full", "reduced"}));
  cmd->add_option("--restarts", o.restarts, "optimizer restarts");
  cmd->add_option("--t-max", o.t_max, "optimizer iteration cap");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

gensm::ExperimentSpec resolve(gensm::ExperimentKind kind, const Overrides& o) {
  gensm::ExperimentSpec spec = gensm::ExperimentSpec::defaults(kind);
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw gensm::DimensionError(std::string("cannot parse config: ") + e.what());
    }
    spec = gensm::spec_from_json(j, spec);
    spec.kind = kind;
  }
  if (o.seed) spec.seed = *o.seed;
  if (o.channels) spec.channels = *o.channels;
  if (o.mc_samples) spec.mc_samples = *o.mc_samples;
  if (!o.snr_db.empty()) spec.snr_db = o.snr_db;
  if (!o.nr.empty()) spec.nr_list = o.nr;
  if (o.out) spec.out_dir = *o.out;
  if (o.gradient) spec.optimizer.gradient = gensm::parse_gradient_kind(*o.gradient);
  if (o.restarts) spec.optimizer.restarts = *o.restarts;
  if (o.t_max) spec.optimizer.t_max = *o.t_max;
  if (o.threads) spec.threads = *o.threads;
  if (o.channel_index) spec.channel_index = *o.channel_index;
  spec.validate();
  return spec;
}

int run(gensm::ExperimentKind kind, const Overrides& o) {
  const gensm::ExperimentSpec spec = resolve(kind, o);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const std::string name = gensm::to_string(kind);

  switch (kind) {
    case gensm::ExperimentKind::approx_accuracy: {
      const std::string csv = gensm::to_csv(gensm::run_approx_accuracy(spec));
      gensm::write_outputs(spec, name, csv, elapsed());
      std::cout << csv;
      break;
    }
    case gensm::ExperimentKind::se_compare: {
      const std::string csv = gensm::to_csv(gensm::run_se_compare(spec));
      gensm::write_outputs(spec, name, csv, elapsed());
      std::cout << csv;
      break;
    }
    case gensm::ExperimentKind::param_select: {
      const std::string csv = gensm::to_csv(gensm::run_param_select(spec));
      gensm::write_outputs(spec, name, csv, elapsed());
      std::cout << csv;
      break;
    }
    case gensm::ExperimentKind::optimize_one: {
      std::optional<gensm::ChannelRecord> record;
      if (!o.channel_in.empty()) {
        std::ifstream f(o.channel_in);
        try {
          record = gensm::channel_from_json(nlohmann::json::parse(f));
        } catch (const nlohmann::json::exception& e) {
          throw gensm::DimensionError(std::string("cannot parse channel record: ") + e.what());
        }
      }
      const auto result = gensm::run_optimize_one(spec, record);
      const std::string csv =
          gensm::csv_header(kind) + "\n" +
          fmt::format("{},{},{},{},{}\n", gensm::trace_csv_row(result.trace), result.optimized.r_mc,
                      result.optimized.r_mc_stderr, result.identity.r_cf, result.identity.r_mc);
      gensm::write_outputs(spec, name, csv, elapsed(), {{"outputs", {name + ".csv", "trace.json", "channel.json"}}});
      const std::filesystem::path dir(spec.out_dir);
      std::ofstream(dir / "trace.json") << gensm::to_json(result.trace).dump(2) << "\n";
      std::ofstream(dir / "channel.json") << gensm::to_json(result.channel).dump(2) << "\n";
      std::cout << csv;
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GenSM-aided mmWave MIMO: closed-form SE, Monte-Carlo SE and analog precoder design"};
  app.require_subcommand(1);

  Overrides o;
  struct Entry {
    gensm::ExperimentKind kind;
    const char* help;
  };
  const Entry entries[] = {
      {gensm::ExperimentKind::approx_accuracy, "closed-form vs Monte-Carlo SE with the trivial precoder"},
      {gensm::ExperimentKind::se_compare, "SE of optimized precoders against baselines"},
      {gensm::ExperimentKind::param_select, "best (n_k, n_m) split per (n_r, SNR)"},
      {gensm::ExperimentKind::optimize_one, "optimize one channel and dump the full trace"},
  };
  std::vector<std::pair<CLI::App*, gensm::ExperimentKind>> commands;
  for (const auto& e : entries) {
    CLI::App* cmd = app.add_subcommand(gensm::to_string(e.kind), e.help);
    add_common_flags(cmd, o);
    if (e.kind == gensm::ExperimentKind::optimize_one) {
      cmd->add_option("--channel-index", o.channel_index, "realization index to optimize");
      cmd->add_option("--channel-in", o.channel_in, "replay a channel JSON record")->check(CLI::ExistingFile);
    }
    commands.emplace_back(cmd, e.kind);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalidConfig;
  }

  try {
    for (const auto& [cmd, kind] : commands) {
      if (cmd->parsed()) return run(kind, o);
    }
  } catch (const gensm::DimensionError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const gensm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
