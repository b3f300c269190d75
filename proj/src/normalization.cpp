#include "driftforge/normalization.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "driftforge/errors.hpp"
#include "driftforge/hashing.hpp"

namespace driftforge {

std::pair<double, double> compute_resistance_stats(const DriftDataset& d) {
  if (d.series.empty())
    throw ValidationError("resistance stats: empty dataset");
  double mu = 0.0;
  for (const auto& s : d.series) {
    if (s.values.empty())
      throw ValidationError("resistance stats: empty series");
    double acc = 0.0;
    for (double r : s.values) {
      if (!(r > 0.0) || !std::isfinite(r))
        throw ValidationError("resistance stats: non-positive resistance");
      acc += std::log(r);
    }
    mu += acc / static_cast<double>(s.values.size());
  }
  mu /= static_cast<double>(d.series.size());

  double var = 0.0;
  for (const auto& s : d.series) {
    double acc = 0.0;
    for (double r : s.values) {
      const double dev = std::log(r) - mu;
      acc += dev * dev;
    }
    var += acc / static_cast<double>(s.values.size());
  }
  var /= static_cast<double>(d.series.size());
  return {mu, std::sqrt(var)};
}

std::pair<double, double> compute_diff_stats(
    const std::vector<std::vector<double>>& normalized) {
  if (normalized.empty()) throw ValidationError("diff stats: empty dataset");
  for (const auto& s : normalized)
    if (s.size() < 2)
      throw ValidationError("diff stats: series needs at least 2 points");

  double mu = 0.0;
  for (const auto& s : normalized) {
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < s.size(); ++j) acc += s[j + 1] - s[j];
    mu += acc / static_cast<double>(s.size() - 1);
  }
  mu /= static_cast<double>(normalized.size());

  double var = 0.0;
  for (const auto& s : normalized) {
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < s.size(); ++j) {
      const double dev = (s[j + 1] - s[j]) - mu;
      acc += dev * dev;
    }
    var += acc / static_cast<double>(s.size() - 1);
  }
  var /= static_cast<double>(normalized.size());
  return {mu, std::sqrt(var)};
}

NormStats compute_stats(const DriftDataset& d) {
  NormStats out;
  std::tie(out.mu_r, out.sigma_r) = compute_resistance_stats(d);
  if (!(out.sigma_r > 0.0) || !std::isfinite(out.sigma_r) ||
      !std::isfinite(out.mu_r))
    throw ValidationError("stats: degenerate ln-resistance spread");

  std::vector<std::vector<double>> normalized(d.series.size());
  for (std::size_t i = 0; i < d.series.size(); ++i) {
    normalized[i].reserve(d.series[i].values.size());
    for (double r : d.series[i].values)
      normalized[i].push_back((std::log(r) - out.mu_r) / out.sigma_r);
  }
  std::tie(out.mu_diff, out.sigma_diff) = compute_diff_stats(normalized);
  if (!(out.sigma_diff > 0.0) || !std::isfinite(out.sigma_diff) ||
      !std::isfinite(out.mu_diff))
    throw ValidationError("stats: degenerate difference spread");
  return out;
}

double normalize_resistance(double r, const NormStats& s) {
  if (!(r > 0.0) || !std::isfinite(r))
    throw ValidationError("normalize_resistance: resistance must be > 0");
  return (std::log(r) - s.mu_r) / s.sigma_r;
}

double denormalize_resistance(double rbar, const NormStats& s) {
  return std::exp(s.sigma_r * rbar + s.mu_r);
}

double normalize_diff(double rbar_final, double rbar_init, const NormStats& s) {
  return (rbar_final - rbar_init) / s.sigma_diff;
}

double denormalize_diff(double diff, double rbar_init, const NormStats& s) {
  return rbar_init + diff * s.sigma_diff;
}

NormalizedDataset normalize_dataset(const DriftDataset& d, const NormStats& s) {
  NormalizedDataset out;
  out.rbar.resize(d.series.size());
  bool first = true;
  for (std::size_t i = 0; i < d.series.size(); ++i) {
    out.rbar[i].reserve(d.series[i].values.size());
    for (double r : d.series[i].values) {
      out.rbar[i].push_back(normalize_resistance(r, s));
      if (first || r < out.r_min) out.r_min = r;
      if (first || r > out.r_max) out.r_max = r;
      first = false;
    }
  }
  if (first) throw ValidationError("normalize_dataset: empty dataset");
  return out;
}

void write_stats(const StatsFile& sf, const std::string& path) {
  nlohmann::json j;
  j["mu_R"] = sf.stats.mu_r;
  j["sigma_R"] = sf.stats.sigma_r;
  j["mu_Dbar"] = sf.stats.mu_diff;
  j["sigma_Dbar"] = sf.stats.sigma_diff;
  j["dataset_hash"] = sf.dataset_hash;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write stats file: " + path);
  out << j.dump(2) << "\n";
}

StatsFile read_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read stats file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed stats file " + path + ": " + e.what());
  }
  StatsFile sf;
  try {
    sf.stats.mu_r = j.at("mu_R").get<double>();
    sf.stats.sigma_r = j.at("sigma_R").get<double>();
    sf.stats.mu_diff = j.at("mu_Dbar").get<double>();
    sf.stats.sigma_diff = j.at("sigma_Dbar").get<double>();
    sf.dataset_hash = j.at("dataset_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("stats file " + path + " missing fields: " + e.what());
  }
  if (!(sf.stats.sigma_r > 0.0) || !(sf.stats.sigma_diff > 0.0))
    throw ValidationError("stats file " + path + ": degenerate sigma");
  return sf;
}

std::uint64_t stats_fingerprint(const StatsFile& sf) {
  Fnv1a64 h;
  h.update(sf.stats.mu_r);
  h.update(sf.stats.sigma_r);
  h.update(sf.stats.mu_diff);
  h.update(sf.stats.sigma_diff);
  h.update(sf.dataset_hash);
  return h.digest();
}

}  // namespace driftforge
