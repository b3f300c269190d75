#include "driftforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "driftforge/errors.hpp"
#include "driftforge/util.hpp"

namespace driftforge {

const std::vector<double> kDefaultEvalRInits = {1e2, 1e3, 1e4, 1e5, 3e5, 7.5e5};
const std::vector<double> kDefaultEvalDelays = {1, 10, 100, 500, 1000};
const std::vector<int> kDefaultConsistencyConditions = {5, 10, 100, 250, 500};

Sampler make_oracle_sampler(const DeviceParams& p) {
  p.validate();
  return [p](double r_init, double delay, Rng& rng) {
    const DeviceState s{state_from_resistance(r_init, p)};
    const DeviceState f = step_exact(s, delay, p, rng);
    return resistance_from_state(static_cast<double>(f.n), p);
  };
}

Sampler make_gan_sampler(GeneratorNet g, NormStats stats) {
  return [g = std::move(g), stats](double r_init, double delay, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> z(static_cast<std::size_t>(g.z_dim));
    for (auto& v : z) v = normal(rng);
    const double rbar = normalize_resistance(r_init, stats);
    return denormalize_resistance(generator_sample(g, rbar, delay, z, stats),
                                  stats);
  };
}

namespace {

std::pair<double, double> mean_std(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double mu = 0.0;
  for (double x : xs) mu += x;
  mu /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mu) * (x - mu);
  var /= n;
  return {mu, std::sqrt(var)};
}

}  // namespace

std::vector<ConsistencyRow> delay_consistency(
    const GeneratorNet& g, const NormStats& stats,
    std::span<const double> r_inits, int total, std::span<const int> conditions,
    int n_samples, std::uint64_t seed) {
  if (n_samples < 2)
    throw ValidationError("delay_consistency: n_samples must be >= 2");
  for (int d : conditions)
    if (d < 1 || total % d != 0)
      throw ValidationError(
          "delay_consistency: every condition must divide the total delay");

  std::vector<ConsistencyRow> rows;
  rows.reserve(r_inits.size() * conditions.size());
  std::uint64_t cell = 0;
  for (double r0 : r_inits) {
    for (int d : conditions) {
      const int steps = total / d;
      Rng rng = make_rng(seed, streams::eval, cell++);
      std::vector<double> changes(static_cast<std::size_t>(n_samples));
      for (auto& c : changes) {
        const DriftSeries s = generate_sequence(g, r0, d, steps, stats, rng);
        c = s.values.back() - s.values.front();
      }
      const auto [mu, sd] = mean_std(changes);
      rows.push_back({r0, d, steps, mu, sd, total, n_samples});
    }
  }
  return rows;
}

std::vector<MomentRow> conditioned_moments(const Sampler& sampler,
                                           const std::string& source,
                                           std::span<const double> r_inits,
                                           std::span<const double> delays,
                                           int n, std::uint64_t seed,
                                           int threads) {
  if (n < 2) throw ValidationError("conditioned_moments: n must be >= 2");
  std::vector<MomentRow> rows(r_inits.size() * delays.size());
  parallel_for(rows.size(), threads, [&](std::size_t cell) {
    const double r0 = r_inits[cell / delays.size()];
    const double d = delays[cell % delays.size()];
    Rng rng = make_rng(seed, streams::eval, 1000 + cell);
    std::vector<double> finals(static_cast<std::size_t>(n));
    for (auto& f : finals) f = sampler(r0, d, rng);
    const auto [mu, sd] = mean_std(finals);
    rows[cell] = {r0, d, source, mu, sd, n};
  });
  return rows;
}

HistogramReport final_value_histogram(
    const std::vector<std::pair<double, std::vector<double>>>& samples,
    int bins) {
  if (bins < 1) throw ValidationError("final_value_histogram: bins must be >= 1");
  HistogramReport report;
  for (const auto& [delay, xs] : samples) {
    if (xs.empty())
      throw ValidationError("final_value_histogram: empty sample set");
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) hi = lo + 1.0;  // degenerate range still yields one full bin
    const double width = (hi - lo) / bins;
    std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
    for (double x : xs) {
      auto b = static_cast<std::size_t>((x - lo) / width);
      if (b >= counts.size()) b = counts.size() - 1;
      counts[b] += 1;
    }
    for (int b = 0; b < bins; ++b)
      report.rows.push_back(
          {delay, lo + b * width, lo + (b + 1) * width, counts[static_cast<std::size_t>(b)]});
    const auto [mu, sd] = mean_std(xs);
    report.stats.push_back({delay, mu, sd, static_cast<long long>(xs.size())});
  }
  return report;
}

std::vector<std::pair<double, std::vector<double>>> dataset_finals(
    const DriftDataset& ds, std::span<const double> delays) {
  std::vector<std::pair<double, std::vector<double>>> out;
  if (ds.series.empty()) throw ValidationError("dataset_finals: empty dataset");
  const auto len = ds.series.front().values.size();
  for (double d : delays) {
    const double idx_f = d / ds.t_sample;
    const auto idx = static_cast<std::size_t>(std::llround(idx_f));
    if (std::abs(idx_f - static_cast<double>(idx)) > 1e-9 || idx >= len)
      throw ValidationError("dataset_finals: delay not on the sampling grid");
    std::vector<double> finals;
    finals.reserve(ds.series.size());
    for (const auto& s : ds.series) finals.push_back(s.values[idx]);
    out.emplace_back(d, std::move(finals));
  }
  return out;
}

std::vector<SeriesDumpRow> series_dump(const GeneratorNet& g,
                                       const NormStats& stats,
                                       std::span<const double> r_inits,
                                       double d, int steps, int per_init,
                                       std::uint64_t seed) {
  if (per_init < 0) throw ValidationError("series_dump: per_init must be >= 0");
  std::vector<SeriesDumpRow> rows;
  int series_id = 0;
  std::uint64_t cell = 0;
  for (double r0 : r_inits) {
    for (int k = 0; k < per_init; ++k) {
      Rng rng = make_rng(seed, streams::eval, 2'000'000 + cell++);
      const DriftSeries s = generate_sequence(g, r0, d, steps, stats, rng);
      for (std::size_t j = 0; j < s.values.size(); ++j)
        rows.push_back({series_id, r0, d, static_cast<int>(j),
                        static_cast<double>(j) * d, s.values[j]});
      ++series_id;
    }
  }
  return rows;
}

MomentMatch moment_match_score(std::span<const MomentRow> gan,
                               std::span<const MomentRow> oracle) {
  if (gan.size() != oracle.size() || gan.empty())
    throw ValidationError("moment_match_score: reports do not share a grid");
  MomentMatch out;
  for (std::size_t i = 0; i < gan.size(); ++i) {
    if (gan[i].r_init != oracle[i].r_init || gan[i].delay != oracle[i].delay)
      throw ValidationError("moment_match_score: reports do not share a grid");
    const auto safe_log = [](double x) { return std::log(std::max(x, 1e-12)); };
    out.mae_mu += std::abs(safe_log(gan[i].mean_final) -
                           safe_log(oracle[i].mean_final));
    out.mae_sigma +=
        std::abs(safe_log(gan[i].std_final) - safe_log(oracle[i].std_final));
  }
  out.mae_mu /= static_cast<double>(gan.size());
  out.mae_sigma /= static_cast<double>(gan.size());
  return out;
}

namespace {
std::FILE* open_or_throw(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ValidationError("cannot write report: " + path);
  return f;
}
void close_or_throw(std::FILE* f, const std::string& path) {
  if (std::fclose(f) != 0)
    throw ValidationError("failed to flush report: " + path);
}
}  // namespace

void write_consistency_csv(const std::vector<ConsistencyRow>& rows,
                           const std::string& path) {
  std::FILE* f = open_or_throw(path);
  std::fputs(
      "r_init_ohms,delay_condition_s,steps,mean_change_ohms,std_change_ohms,"
      "total_delay_s,n_samples\n",
      f);
  for (const auto& r : rows)
    std::fprintf(f, "%.17g,%d,%d,%.17g,%.17g,%d,%d\n", r.r_init, r.d, r.steps,
                 r.mean_change, r.std_change, r.total_delay, r.n_samples);
  close_or_throw(f, path);
}

void write_moments_csv(const std::vector<MomentRow>& rows,
                       const std::string& path) {
  std::FILE* f = open_or_throw(path);
  std::fputs("r_init_ohms,delay_s,source,mean_final_ohms,std_final_ohms,n_samples\n", f);
  for (const auto& r : rows)
    std::fprintf(f, "%.17g,%.17g,%s,%.17g,%.17g,%d\n", r.r_init, r.delay,
                 r.source.c_str(), r.mean_final, r.std_final, r.n_samples);
  close_or_throw(f, path);
}

void write_histogram_csv(const HistogramReport& report,
                         const std::string& rows_path,
                         const std::string& stats_path) {
  std::FILE* f = open_or_throw(rows_path);
  std::fputs("delay_s,bin_low_ohms,bin_high_ohms,count\n", f);
  for (const auto& r : report.rows)
    std::fprintf(f, "%.17g,%.17g,%.17g,%lld\n", r.delay, r.lo, r.hi, r.count);
  close_or_throw(f, rows_path);
  std::FILE* g = open_or_throw(stats_path);
  std::fputs("delay_s,mean_ohms,std_ohms,n_samples\n", g);
  for (const auto& s : report.stats)
    std::fprintf(g, "%.17g,%.17g,%.17g,%lld\n", s.delay, s.mean, s.stddev, s.n);
  close_or_throw(g, stats_path);
}

void write_series_csv(const std::vector<SeriesDumpRow>& rows,
                      const std::string& path) {
  std::FILE* f = open_or_throw(path);
  std::fputs("series_id,r_init_ohms,delay_s,step,t_seconds,resistance_ohms\n", f);
  for (const auto& r : rows)
    std::fprintf(f, "%d,%.17g,%.17g,%d,%.17g,%.17g\n", r.series_id, r.r_init,
                 r.d, r.step, r.t, r.resistance);
  close_or_throw(f, path);
}

}  // namespace driftforge
