#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "driftforge/device.hpp"

namespace driftforge {

struct NormStats {
  double mu_r = 0.0;      // mean of ln-resistance
  double sigma_r = 0.0;   // std dev of ln-resistance
  double mu_diff = 0.0;   // mean of consecutive normalized differences
  double sigma_diff = 0.0;
};

// Stats plus the fingerprint of the dataset they were computed from. A model
// trained against one stats file is unusable with any other.
struct StatsFile {
  NormStats stats;
  std::string dataset_hash;
};

// Two-level average: per-series mean first, then mean over series, so short
// and long series weigh equally.
std::pair<double, double> compute_resistance_stats(const DriftDataset& d);
std::pair<double, double> compute_diff_stats(
    const std::vector<std::vector<double>>& normalized);

// Both stat levels plus degeneracy checks; a zero or non-finite sigma is
// rejected here so the transforms never divide by zero later.
NormStats compute_stats(const DriftDataset& d);

double normalize_resistance(double r, const NormStats& s);
double denormalize_resistance(double rbar, const NormStats& s);
double normalize_diff(double rbar_final, double rbar_init, const NormStats& s);
double denormalize_diff(double diff, double rbar_init, const NormStats& s);

struct NormalizedDataset {
  std::vector<std::vector<double>> rbar;
  double r_min = 0.0;  // raw ohms, over every point in the dataset
  double r_max = 0.0;
};

NormalizedDataset normalize_dataset(const DriftDataset& d, const NormStats& s);

void write_stats(const StatsFile& sf, const std::string& path);
StatsFile read_stats(const std::string& path);
std::uint64_t stats_fingerprint(const StatsFile& sf);

}  // namespace driftforge
