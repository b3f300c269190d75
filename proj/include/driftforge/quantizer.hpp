#pragma once

#include <span>
#include <string>
#include <vector>

#include "driftforge/evaluation.hpp"

namespace driftforge {

// Levels and interior decoding boundaries, all in the normalized log domain.
// Bin i is the half-open interval [B[i], B[i+1]) where B[0] = -inf and
// B[|L|] = +inf are implicit sentinels around `boundaries`.
struct QuantizationScheme {
  std::vector<double> levels;
  std::vector<double> boundaries;
  double delay = 0.0;
};

struct QuantizerConfig {
  double rho = 0.05;     // margin, normalized domain
  double lambda1 = 10.0; // ordering weight
  double lambda2 = 0.0;  // range weight; <= 0 resolves to num_levels / 2
  double r_qmin = 1e4;   // allowed level range, ohms
  double r_qmax = 5e5;
  int mc_trials = 32;
  double lr = 1e-3;
  int plateau_patience = 25;
  double lr_decay = 0.9;
  int max_steps = 10000;
  double convergence_tol = 1e-8;
  int convergence_window = 200;

  void validate() const;
  double resolved_lambda2(int num_levels) const;
};

void validate_scheme(const QuantizationScheme& sch);

// Levels seeded at the centers of equal subdivisions of the allowed range,
// boundaries at level midpoints: every constraint starts satisfied.
QuantizationScheme init_scheme(int num_levels, double delay,
                               const QuantizerConfig& cfg,
                               const NormStats& stats);

int decode(double r_ohms, const QuantizationScheme& sch,
           const NormStats& stats);

// [level][trial][z_dim], frozen for one loss evaluation so the analytic
// gradient is exact for the sampled objective.
using ZDraws = std::vector<std::vector<std::vector<double>>>;

ZDraws draw_quantizer_z(int num_levels, int trials, int z_dim, Rng& rng);

// Hinge losses in the normalized domain: per-level crossover mass outside
// [B[i]+rho, B[i+1]-rho) under the generator, level/boundary ordering, and
// the dynamic-range guard. Gradients accumulate into the two spans.
double quantization_loss(const QuantizationScheme& sch, double d,
                         const GeneratorNet& g, const NormStats& stats,
                         const QuantizerConfig& cfg, const ZDraws& zs,
                         std::span<double> grad_levels,
                         std::span<double> grad_boundaries);

struct OptimizeResult {
  QuantizationScheme scheme;
  double best_loss = 0.0;
  std::vector<double> trace;  // loss per step
  bool valid = false;         // ordering invariants of the returned scheme
};

OptimizeResult optimize(int num_levels, double d, const GeneratorNet& g,
                        const NormStats& stats, const QuantizerConfig& cfg,
                        Rng& rng);

// Mean over levels of P[decode(sample(level, d)) != level].
double evaluate_error(const QuantizationScheme& sch, double d,
                      const Sampler& sampler, const NormStats& stats,
                      int trials, Rng& rng);

struct LevelsEntry {
  int levels = 0;
  QuantizationScheme scheme;
  double error = 1.0;
};
struct MaxLevelsResult {
  int best = 1;
  std::vector<LevelsEntry> trace;
};

// Optimizes the bit-aligned ladder 1, 2, 4, 8, 16 and returns the largest
// size whose generator-sampled error stays within epsilon. A size whose
// optimization ends invalid is recorded with error 1 and never chosen.
MaxLevelsResult max_levels(double epsilon, double d, const GeneratorNet& g,
                           const NormStats& stats, const QuantizerConfig& cfg,
                           int trials, std::uint64_t seed);

void write_scheme(const QuantizationScheme& sch, const QuantizerConfig& cfg,
                  const NormStats& stats, const std::string& checkpoint_hash,
                  const std::string& path);
QuantizationScheme read_scheme(const std::string& path);

}  // namespace driftforge
