#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "driftforge/cgan.hpp"

namespace driftforge {

// One conditional draw of a final resistance (ohms) after the given delay.
using Sampler = std::function<double(double r_init_ohms, double delay_s, Rng&)>;

Sampler make_oracle_sampler(const DeviceParams& p);
Sampler make_gan_sampler(GeneratorNet g, NormStats stats);

struct MomentRow {
  double r_init = 0.0;
  double delay = 0.0;
  std::string source;  // "gan" or "oracle"
  double mean_final = 0.0;
  double std_final = 0.0;
  int n_samples = 0;
};

struct ConsistencyRow {
  double r_init = 0.0;
  int d = 0;
  int steps = 0;  // d * steps always equals the total delay exactly
  double mean_change = 0.0;
  double std_change = 0.0;
  int total_delay = 0;
  int n_samples = 0;
};

// Same cumulative delay reached through different step sizes; a consistent
// model shows the same mean total change in every column.
std::vector<ConsistencyRow> delay_consistency(
    const GeneratorNet& g, const NormStats& stats,
    std::span<const double> r_inits, int total, std::span<const int> conditions,
    int n_samples, std::uint64_t seed);

std::vector<MomentRow> conditioned_moments(const Sampler& sampler,
                                           const std::string& source,
                                           std::span<const double> r_inits,
                                           std::span<const double> delays,
                                           int n, std::uint64_t seed,
                                           int threads = 1);

struct HistogramRow {
  double delay = 0.0;
  double lo = 0.0, hi = 0.0;
  long long count = 0;
};
struct HistogramStats {
  double delay = 0.0;
  double mean = 0.0, stddev = 0.0;
  long long n = 0;
};
struct HistogramReport {
  std::vector<HistogramRow> rows;
  std::vector<HistogramStats> stats;
};

// Histogram over explicit per-delay sample sets; each delay gets `bins` equal
// bins spanning its own sample range.
HistogramReport final_value_histogram(
    const std::vector<std::pair<double, std::vector<double>>>& samples, int bins);

// Final values of the dataset at time = delay, for every requested delay on
// the sampling grid.
std::vector<std::pair<double, std::vector<double>>> dataset_finals(
    const DriftDataset& ds, std::span<const double> delays);

struct SeriesDumpRow {
  int series_id = 0;
  double r_init = 0.0;
  double d = 0.0;
  int step = 0;
  double t = 0.0;
  double resistance = 0.0;
};

std::vector<SeriesDumpRow> series_dump(const GeneratorNet& g,
                                       const NormStats& stats,
                                       std::span<const double> r_inits,
                                       double d, int steps, int per_init,
                                       std::uint64_t seed);

struct MomentMatch {
  double mae_mu = 0.0;
  double mae_sigma = 0.0;
};

// Mean absolute log-space gap between two moment reports on the same grid.
MomentMatch moment_match_score(std::span<const MomentRow> gan,
                               std::span<const MomentRow> oracle);

extern const std::vector<double> kDefaultEvalRInits;
extern const std::vector<double> kDefaultEvalDelays;
extern const std::vector<int> kDefaultConsistencyConditions;
inline constexpr int kDefaultConsistencyTotal = 500;

void write_consistency_csv(const std::vector<ConsistencyRow>& rows,
                           const std::string& path);
void write_moments_csv(const std::vector<MomentRow>& rows,
                       const std::string& path);
void write_histogram_csv(const HistogramReport& report,
                         const std::string& rows_path,
                         const std::string& stats_path);
void write_series_csv(const std::vector<SeriesDumpRow>& rows,
                      const std::string& path);

}  // namespace driftforge
