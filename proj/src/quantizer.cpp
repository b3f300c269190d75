#include "driftforge/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "driftforge/errors.hpp"

namespace driftforge {

using nlohmann::json;

void QuantizerConfig::validate() const {
  if (!(rho >= 0.0) || !std::isfinite(rho))
    throw ValidationError("quantizer: rho must be finite and >= 0");
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
    throw ValidationError("quantizer: lambda1 must be finite and >= 0");
  if (!std::isfinite(lambda2))
    throw ValidationError("quantizer: lambda2 must be finite");
  if (!(r_qmin > 0.0) || !(r_qmax > r_qmin))
    throw ValidationError("quantizer: need 0 < r_qmin < r_qmax");
  if (mc_trials < 1) throw ValidationError("quantizer: mc_trials must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("quantizer: lr must be > 0");
  if (plateau_patience < 1)
    throw ValidationError("quantizer: plateau_patience must be >= 1");
  if (!(lr_decay > 0.0) || !(lr_decay <= 1.0))
    throw ValidationError("quantizer: lr_decay must be in (0, 1]");
  if (max_steps < 1) throw ValidationError("quantizer: max_steps must be >= 1");
  if (!(convergence_tol > 0.0))
    throw ValidationError("quantizer: convergence_tol must be > 0");
  if (convergence_window < 1)
    throw ValidationError("quantizer: convergence_window must be >= 1");
}

double QuantizerConfig::resolved_lambda2(int num_levels) const {
  return lambda2 > 0.0 ? lambda2 : num_levels / 2.0;
}

void validate_scheme(const QuantizationScheme& sch) {
  const std::size_t n = sch.levels.size();
  if (n == 0) throw ValidationError("scheme: needs at least one level");
  if (sch.boundaries.size() + 1 != n)
    throw ValidationError("scheme: boundary count must be levels - 1");
  if (!(sch.delay > 0.0)) throw ValidationError("scheme: delay must be > 0");
  for (double v : sch.levels)
    if (!std::isfinite(v)) throw ValidationError("scheme: non-finite level");
  for (double v : sch.boundaries)
    if (!std::isfinite(v)) throw ValidationError("scheme: non-finite boundary");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(sch.levels[i] < sch.boundaries[i]))
      throw ValidationError("scheme: level must sit below its upper boundary");
    if (!(sch.boundaries[i] < sch.levels[i + 1]))
      throw ValidationError("scheme: boundary must sit below the next level");
  }
}

QuantizationScheme init_scheme(int num_levels, double delay,
                               const QuantizerConfig& cfg,
                               const NormStats& stats) {
  cfg.validate();
  if (num_levels < 1) throw ValidationError("init_scheme: num_levels >= 1");
  if (!(delay > 0.0)) throw ValidationError("init_scheme: delay must be > 0");
  const double lo = normalize_resistance(cfg.r_qmin, stats) + cfg.rho;
  const double hi = normalize_resistance(cfg.r_qmax, stats) - cfg.rho;
  if (!(lo < hi))
    throw ValidationError("init_scheme: usable range collapses under rho");
  QuantizationScheme sch;
  sch.delay = delay;
  sch.levels.resize(num_levels);
  for (int i = 0; i < num_levels; ++i)
    sch.levels[i] = lo + (hi - lo) * (i + 0.5) / num_levels;
  sch.boundaries.resize(num_levels - 1);
  for (int i = 0; i + 1 < num_levels; ++i)
    sch.boundaries[i] = 0.5 * (sch.levels[i] + sch.levels[i + 1]);
  return sch;
}

int decode(double r_ohms, const QuantizationScheme& sch,
           const NormStats& stats) {
  const double x = normalize_resistance(r_ohms, stats);
  auto it = std::upper_bound(sch.boundaries.begin(), sch.boundaries.end(), x);
  return static_cast<int>(it - sch.boundaries.begin());
}

ZDraws draw_quantizer_z(int num_levels, int trials, int z_dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ZDraws zs(num_levels);
  for (auto& per_level : zs) {
    per_level.resize(trials);
    for (auto& z : per_level) {
      z.resize(z_dim);
      for (double& v : z) v = normal(rng);
    }
  }
  return zs;
}

namespace {

// d/dx of min(x, 0)^2 is 2 min(x, 0); zero exactly on the feasible side.
inline double hinge(double x) { return std::min(x, 0.0); }

}  // namespace

double quantization_loss(const QuantizationScheme& sch, double d,
                         const GeneratorNet& g, const NormStats& stats,
                         const QuantizerConfig& cfg, const ZDraws& zs,
                         std::span<double> grad_levels,
                         std::span<double> grad_boundaries) {
  const std::size_t n = sch.levels.size();
  if (sch.boundaries.size() + 1 != n)
    throw ValidationError("quantization_loss: boundary count mismatch");
  if (zs.size() != n)
    throw ValidationError("quantization_loss: z draws per level mismatch");
  if (grad_levels.size() != n || grad_boundaries.size() != n - 1)
    throw ValidationError("quantization_loss: gradient span size mismatch");
  if (!(d > 0.0)) throw ValidationError("quantization_loss: delay must be > 0");

  std::fill(grad_levels.begin(), grad_levels.end(), 0.0);
  std::fill(grad_boundaries.begin(), grad_boundaries.end(), 0.0);

  const double lam1 = cfg.lambda1;
  const double lam2 = cfg.resolved_lambda2(static_cast<int>(n));
  double loss = 0.0;

  // Scratch parameter-gradient buffers for the generator backward pass; the
  // generator is frozen here so the accumulated values are never read.
  GenGrads scratch;
  scratch.reset(g);

  for (std::size_t i = 0; i < n; ++i) {
    if (zs[i].empty())
      throw ValidationError("quantization_loss: empty trial set");
    const double inv_t = 1.0 / static_cast<double>(zs[i].size());
    const bool has_lo = i > 0;
    const bool has_hi = i + 1 < n;
    const double b_lo = has_lo ? sch.boundaries[i - 1] : 0.0;
    const double b_hi = has_hi ? sch.boundaries[i] : 0.0;
    for (const auto& z : zs[i]) {
      GenTrace trace;
      const double out =
          generator_forward(g, sch.levels[i], d, z, stats, &trace);
      if (!std::isfinite(out))
        throw NumericalError("quantization_loss: generator output not finite");
      double d_out = 0.0;
      if (has_lo) {
        const double m = hinge(out - b_lo - cfg.rho);
        loss += inv_t * m * m;
        d_out += inv_t * 2.0 * m;
        grad_boundaries[i - 1] += inv_t * -2.0 * m;
      }
      if (has_hi) {
        const double m = hinge(b_hi - out - cfg.rho);
        loss += inv_t * m * m;
        d_out += inv_t * -2.0 * m;
        grad_boundaries[i] += inv_t * 2.0 * m;
      }
      if (d_out != 0.0)
        grad_levels[i] += generator_backward(g, trace, d_out, stats, scratch);
    }

    if (has_lo) {
      const double m = hinge(sch.levels[i] - b_lo - cfg.rho);
      loss += lam1 * m * m;
      grad_levels[i] += lam1 * 2.0 * m;
      grad_boundaries[i - 1] += lam1 * -2.0 * m;
    }
    if (has_hi) {
      const double m = hinge(b_hi - sch.levels[i] - cfg.rho);
      loss += lam1 * m * m;
      grad_levels[i] += lam1 * -2.0 * m;
      grad_boundaries[i] += lam1 * 2.0 * m;
    }
  }

  const double nmin = normalize_resistance(cfg.r_qmin, stats);
  const double nmax = normalize_resistance(cfg.r_qmax, stats);
  {
    const double m = hinge(sch.levels.front() - nmin - cfg.rho);
    loss += lam2 * m * m;
    grad_levels[0] += lam2 * 2.0 * m;
  }
  {
    const double m = hinge(nmax - sch.levels.back() - cfg.rho);
    loss += lam2 * m * m;
    grad_levels[n - 1] += lam2 * -2.0 * m;
  }
  if (!std::isfinite(loss))
    throw NumericalError("quantization_loss: loss not finite");
  return loss;
}

OptimizeResult optimize(int num_levels, double d, const GeneratorNet& g,
                        const NormStats& stats, const QuantizerConfig& cfg,
                        Rng& rng) {
  cfg.validate();
  QuantizationScheme sch = init_scheme(num_levels, d, cfg, stats);
  const std::size_t nl = sch.levels.size();
  const std::size_t nb = sch.boundaries.size();

  std::vector<double> params(nl + nb);
  std::copy(sch.levels.begin(), sch.levels.end(), params.begin());
  std::copy(sch.boundaries.begin(), sch.boundaries.end(),
            params.begin() + nl);
  std::vector<double> grads(params.size());
  AdamState adam = make_adam(params.size(), cfg.lr);

  OptimizeResult res;
  res.best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best = params;
  int last_improve = 0;       // any new best, feeds the plateau schedule
  int last_significant = 0;   // best improved by at least convergence_tol

  for (int step = 0; step < cfg.max_steps; ++step) {
    std::copy(params.begin(), params.begin() + nl, sch.levels.begin());
    std::copy(params.begin() + nl, params.end(), sch.boundaries.begin());
    ZDraws zs = draw_quantizer_z(num_levels, cfg.mc_trials, g.z_dim, rng);
    const double loss = quantization_loss(
        sch, d, g, stats, cfg, zs, std::span(grads.data(), nl),
        std::span(grads.data() + nl, nb));
    res.trace.push_back(loss);

    if (loss < res.best_loss) {
      if (res.best_loss - loss >= cfg.convergence_tol) last_significant = step;
      res.best_loss = loss;
      best = params;
      last_improve = step;
    }
    if (step - last_significant >= cfg.convergence_window) break;
    if (step - last_improve >= cfg.plateau_patience) {
      adam.lr *= cfg.lr_decay;
      last_improve = step;
    }
    adam_step(params, grads, adam);
  }

  std::copy(best.begin(), best.begin() + nl, sch.levels.begin());
  std::copy(best.begin() + nl, best.end(), sch.boundaries.begin());
  res.scheme = sch;
  try {
    validate_scheme(res.scheme);
    res.valid = true;
  } catch (const ValidationError&) {
    res.valid = false;
  }
  return res;
}

double evaluate_error(const QuantizationScheme& sch, double d,
                      const Sampler& sampler, const NormStats& stats,
                      int trials, Rng& rng) {
  validate_scheme(sch);
  if (trials < 1) throw ValidationError("evaluate_error: trials must be >= 1");
  if (!(d > 0.0)) throw ValidationError("evaluate_error: delay must be > 0");
  double total = 0.0;
  for (std::size_t i = 0; i < sch.levels.size(); ++i) {
    const double r_level = denormalize_resistance(sch.levels[i], stats);
    long miss = 0;
    for (int t = 0; t < trials; ++t) {
      const double r_final = sampler(r_level, d, rng);
      if (decode(r_final, sch, stats) != static_cast<int>(i)) ++miss;
    }
    total += static_cast<double>(miss) / trials;
  }
  return total / static_cast<double>(sch.levels.size());
}

MaxLevelsResult max_levels(double epsilon, double d, const GeneratorNet& g,
                           const NormStats& stats, const QuantizerConfig& cfg,
                           int trials, std::uint64_t seed) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw ValidationError("max_levels: epsilon must be finite and >= 0");
  Sampler sampler = make_gan_sampler(g, stats);
  MaxLevelsResult out;
  const int ladder[] = {1, 2, 4, 8, 16};
  for (int idx = 0; idx < 5; ++idx) {
    const int nl = ladder[idx];
    Rng opt_rng = make_rng(seed, streams::quantizer, nl, 0);
    OptimizeResult opt = optimize(nl, d, g, stats, cfg, opt_rng);
    LevelsEntry entry;
    entry.levels = nl;
    entry.scheme = opt.scheme;
    if (opt.valid) {
      Rng eval_rng = make_rng(seed, streams::quantizer, nl, 1);
      entry.error = evaluate_error(opt.scheme, d, sampler, stats, trials,
                                   eval_rng);
      if (entry.error <= epsilon) out.best = nl;
    }
    out.trace.push_back(std::move(entry));
  }
  return out;
}

void write_scheme(const QuantizationScheme& sch, const QuantizerConfig& cfg,
                  const NormStats& stats, const std::string& checkpoint_hash,
                  const std::string& path) {
  validate_scheme(sch);
  json j;
  j["delay"] = sch.delay;
  j["levels_normalized"] = sch.levels;
  j["boundaries_normalized"] = sch.boundaries;
  std::vector<double> lv(sch.levels.size());
  for (std::size_t i = 0; i < lv.size(); ++i)
    lv[i] = denormalize_resistance(sch.levels[i], stats);
  std::vector<double> bd(sch.boundaries.size());
  for (std::size_t i = 0; i < bd.size(); ++i)
    bd[i] = denormalize_resistance(sch.boundaries[i], stats);
  j["levels_ohms"] = lv;
  j["boundaries_ohms"] = bd;
  j["config"] = {{"rho", cfg.rho},
                 {"lambda1", cfg.lambda1},
                 {"lambda2", cfg.lambda2},
                 {"r_qmin", cfg.r_qmin},
                 {"r_qmax", cfg.r_qmax},
                 {"mc_trials", cfg.mc_trials},
                 {"lr", cfg.lr},
                 {"plateau_patience", cfg.plateau_patience},
                 {"lr_decay", cfg.lr_decay},
                 {"max_steps", cfg.max_steps},
                 {"convergence_tol", cfg.convergence_tol},
                 {"convergence_window", cfg.convergence_window}};
  j["checkpoint_hash"] = checkpoint_hash;
  std::ofstream out(path);
  if (!out) throw ValidationError("write_scheme: cannot open " + path);
  out << j.dump() << '\n';
  if (!out) throw ValidationError("write_scheme: write failed for " + path);
}

QuantizationScheme read_scheme(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("read_scheme: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("read_scheme: bad JSON in " + path + ": " +
                          e.what());
  }
  QuantizationScheme sch;
  try {
    sch.delay = j.at("delay").get<double>();
    sch.levels = j.at("levels_normalized").get<std::vector<double>>();
    sch.boundaries =
        j.at("boundaries_normalized").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ValidationError("read_scheme: missing field in " + path + ": " +
                          e.what());
  }
  validate_scheme(sch);
  return sch;
}

}  // namespace driftforge
