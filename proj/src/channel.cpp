#include "gensm/channel.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gensm/errors.hpp"

namespace gensm {

CVector steering_vector(int n, double angle, double spacing_over_lambda) {
  if (n < 1) throw DimensionError("steering vector length must be >= 1");
  const double step = 2.0 * std::numbers::pi * spacing_over_lambda * std::sin(angle);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  CVector b(n);
  for (int k = 0; k < n; ++k) b[k] = std::polar(scale, step * k);
  return b;
}

ChannelMatrix assemble_channel(const PathSet& paths, int n_t, int n_r) {
  if (paths.l < 1) throw DimensionError("channel needs at least one path");
  const auto l = static_cast<std::size_t>(paths.l);
  if (paths.gains.size() != l || paths.aod.size() != l || paths.aoa.size() != l) {
    throw DimensionError("path table columns disagree with the path count");
  }
  ChannelMatrix out{CMatrix::Zero(n_r, n_t)};
  for (std::size_t i = 0; i < l; ++i) {
    const CVector b_t = steering_vector(n_t, paths.aod[i], paths.spacing_over_lambda);
    const CVector b_r = steering_vector(n_r, paths.aoa[i], paths.spacing_over_lambda);
    const Complex weight = paths.gamma * paths.gains[i] * paths.element_gain_t * paths.element_gain_r;
    out.h.noalias() += weight * b_r * b_t.adjoint();
  }
  return out;
}

ChannelRealization sample_channel(int n_t, int n_r, int l, Rng& rng) {
  if (n_t < 1 || n_r < 1) throw DimensionError("array sizes must be >= 1");
  if (l < 1) throw DimensionError("channel needs at least one path");
  PathSet p;
  p.l = l;
  p.gamma = std::sqrt(static_cast<double>(n_t) * n_r / l);
  // draw order is part of the reproducibility contract
  for (int i = 0; i < l; ++i) {
    p.gains.push_back(rng.complex_normal());
    p.aod.push_back(rng.uniform(-std::numbers::pi, std::numbers::pi));
    p.aoa.push_back(rng.uniform(-std::numbers::pi, std::numbers::pi));
    p.elev_t.push_back(rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2));
    p.elev_r.push_back(rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2));
  }
  ChannelMatrix h = assemble_channel(p, n_t, n_r);
  return {std::move(p), std::move(h)};
}

ChannelRealization sample_channel(const SystemConfig& cfg, int l, Rng& rng) {
  return sample_channel(cfg.n_t, cfg.n_r, l, rng);
}

nlohmann::json to_json(const ChannelRecord& record) {
  const auto& p = record.realization.paths;
  const auto& h = record.realization.channel.h;
  nlohmann::json j;
  j["format"] = "gensm-channel";
  j["version"] = 1;
  j["n_t"] = record.n_t;
  j["n_r"] = record.n_r;
  j["l"] = p.l;
  if (record.seed) j["seed"] = *record.seed;
  if (record.stream) j["stream"] = *record.stream;
  j["spacing_over_lambda"] = p.spacing_over_lambda;
  j["gamma"] = p.gamma;
  j["element_gain_t"] = p.element_gain_t;
  j["element_gain_r"] = p.element_gain_r;
  auto paths = nlohmann::json::array();
  for (int i = 0; i < p.l; ++i) {
    paths.push_back({{"gain", {p.gains[i].real(), p.gains[i].imag()}},
                     {"aod", p.aod[i]},
                     {"aoa", p.aoa[i]},
                     {"elev_t", p.elev_t.empty() ? 0.0 : p.elev_t[i]},
                     {"elev_r", p.elev_r.empty() ? 0.0 : p.elev_r[i]}});
  }
  j["paths"] = std::move(paths);
  auto entries = nlohmann::json::array();
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
      entries.push_back({h(r, c).real(), h(r, c).imag()});
    }
  }
  j["h"] = std::move(entries);
  return j;
}

ChannelRecord channel_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gensm-channel") {
      throw DimensionError("not a gensm-channel record");
    }
    if (j.at("version").get<int>() != 1) throw DimensionError("unsupported channel record version");
    ChannelRecord rec;
    rec.n_t = j.at("n_t").get<int>();
    rec.n_r = j.at("n_r").get<int>();
    if (rec.n_t < 1 || rec.n_r < 1) throw DimensionError("array sizes must be >= 1");
    if (j.contains("seed")) rec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("stream")) rec.stream = j["stream"].get<std::uint64_t>();

    auto& p = rec.realization.paths;
    p.l = j.at("l").get<int>();
    p.gamma = j.at("gamma").get<double>();
    p.spacing_over_lambda = j.value("spacing_over_lambda", 1.0);
    p.element_gain_t = j.value("element_gain_t", 1.0);
    p.element_gain_r = j.value("element_gain_r", 1.0);
    const auto& paths = j.at("paths");
    if (static_cast<int>(paths.size()) != p.l) throw DimensionError("path table length != l");
    for (const auto& row : paths) {
      const auto& g = row.at("gain");
      p.gains.emplace_back(g.at(0).get<double>(), g.at(1).get<double>());
      p.aod.push_back(row.at("aod").get<double>());
      p.aoa.push_back(row.at("aoa").get<double>());
      p.elev_t.push_back(row.value("elev_t", 0.0));
      p.elev_r.push_back(row.value("elev_r", 0.0));
    }

    const auto& entries = j.at("h");
    if (entries.size() != static_cast<std::size_t>(rec.n_t) * rec.n_r) {
      throw DimensionError(fmt::format("channel record has {} entries, expected {}", entries.size(),
                                       rec.n_t * rec.n_r));
    }
    CMatrix h(rec.n_r, rec.n_t);
    std::size_t k = 0;
    for (int r = 0; r < rec.n_r; ++r) {
      for (int c = 0; c < rec.n_t; ++c, ++k) {
        h(r, c) = Complex(entries[k].at(0).get<double>(), entries[k].at(1).get<double>());
      }
    }
    rec.realization.channel.h = std::move(h);
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw DimensionError(fmt::format("malformed channel record: {}", e.what()));
  }
}

}  // namespace gensm
