#include "driftforge/device.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "driftforge/errors.hpp"
#include "driftforge/util.hpp"

namespace driftforge {

void DeviceParams::validate() const {
  if (n_switches < 1) throw ValidationError("device: n_switches must be >= 1");
  if (n_thresh < 0 || n_thresh > n_switches)
    throw ValidationError("device: n_thresh must lie in [0, n_switches]");
  if (!(g_step > 0.0)) throw ValidationError("device: g_step must be > 0");
  if (!(g_parallel > 0.0))
    throw ValidationError("device: g_parallel must be > 0");
  if (!(temperature > 0.0))
    throw ValidationError("device: temperature must be > 0");
  if (!(k_boltzmann > 0.0) || !(q_electron > 0.0))
    throw ValidationError("device: physical constants must be > 0");
  if (!(attempt_rate >= 0.0))
    throw ValidationError("device: attempt_rate must be >= 0");
}

StepMethod step_method_from_string(const std::string& s) {
  if (s == "tau_leap") return StepMethod::tau_leap;
  if (s == "gillespie") return StepMethod::gillespie;
  if (s == "exact") return StepMethod::exact;
  throw ValidationError("unknown step method: " + s);
}

std::string to_string(StepMethod m) {
  switch (m) {
    case StepMethod::tau_leap: return "tau_leap";
    case StepMethod::gillespie: return "gillespie";
    case StepMethod::exact: return "exact";
  }
  return "?";
}

double resistance_from_state(double n, const DeviceParams& p) {
  const double conducting = std::max(n, static_cast<double>(p.n_thresh));
  return 1.0 / (p.g_step * conducting + p.g_parallel);
}

std::int64_t state_from_resistance(double r, const DeviceParams& p) {
  if (!std::isfinite(r) || r <= 0.0)
    throw ValidationError("state_from_resistance: resistance must be finite and > 0");
  const double n = (1.0 / r - p.g_parallel) / p.g_step;
  if (n <= static_cast<double>(p.n_thresh)) return p.n_thresh;
  if (n >= static_cast<double>(p.n_switches)) return p.n_switches;
  return static_cast<std::int64_t>(std::llround(n));
}

double equilibrium_state(const DeviceParams& p) {
  return static_cast<double>(p.n_switches) /
         (1.0 + std::exp(p.v_offset / p.thermal_voltage()));
}

double v_off_for_equilibrium(double n_eq, const DeviceParams& p) {
  const double big_n = static_cast<double>(p.n_switches);
  if (!(n_eq > 0.0) || !(n_eq < big_n))
    throw ValidationError("v_off_for_equilibrium: n_eq must lie in (0, n_switches)");
  return std::log((big_n - n_eq) / n_eq) * p.thermal_voltage();
}

SwitchRates switch_rates(const DeviceParams& p) {
  const double vt = p.thermal_voltage();
  return {p.attempt_rate * std::exp(-(p.v_barrier + p.v_offset / 2.0) / vt),
          p.attempt_rate * std::exp(-(p.v_barrier - p.v_offset / 2.0) / vt)};
}

namespace {

std::int64_t draw_binomial(std::int64_t trials, double prob, Rng& rng) {
  if (trials <= 0 || prob <= 0.0) return 0;
  if (prob >= 1.0) return trials;
  std::binomial_distribution<std::int64_t> dist(trials, prob);
  return dist(rng);
}

std::int64_t clamp_state(std::int64_t n, const DeviceParams& p) {
  return std::clamp<std::int64_t>(n, 0, p.n_switches);
}

}  // namespace

DeviceState step_tau_leap(DeviceState s, double dt, const DeviceParams& p,
                          Rng& rng) {
  if (!(dt > 0.0)) throw ValidationError("step_tau_leap: dt must be > 0");
  const auto [up, down] = switch_rates(p);
  const std::int64_t k_up =
      draw_binomial(p.n_switches - s.n, -std::expm1(-up * dt), rng);
  const std::int64_t k_down = draw_binomial(s.n, -std::expm1(-down * dt), rng);
  return {clamp_state(s.n + k_up - k_down, p)};
}

DeviceState step_gillespie(DeviceState s, double dt, const DeviceParams& p,
                           Rng& rng) {
  if (!(dt > 0.0)) throw ValidationError("step_gillespie: dt must be > 0");
  const auto [up, down] = switch_rates(p);
  std::int64_t n = s.n;
  double t = 0.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    const double rate_up = static_cast<double>(p.n_switches - n) * up;
    const double rate_total = rate_up + static_cast<double>(n) * down;
    if (rate_total <= 0.0) break;
    t += std::exponential_distribution<double>(rate_total)(rng);
    if (t > dt) break;
    n += (unit(rng) * rate_total < rate_up) ? 1 : -1;
  }
  return {clamp_state(n, p)};
}

DeviceState step_exact(DeviceState s, double dt, const DeviceParams& p,
                       Rng& rng) {
  if (!(dt > 0.0)) throw ValidationError("step_exact: dt must be > 0");
  const auto [up, down] = switch_rates(p);
  const double lambda = up + down;
  if (lambda <= 0.0) return s;
  const double p_eq = up / lambda;
  const double decay = std::exp(-lambda * dt);
  const double stay_on = p_eq + (1.0 - p_eq) * decay;
  const double turn_on = p_eq * (1.0 - decay);
  const std::int64_t n = draw_binomial(s.n, stay_on, rng) +
                         draw_binomial(p.n_switches - s.n, turn_on, rng);
  return {clamp_state(n, p)};
}

DeviceState step(DeviceState s, double dt, StepMethod m, const DeviceParams& p,
                 Rng& rng) {
  switch (m) {
    case StepMethod::tau_leap: return step_tau_leap(s, dt, p, rng);
    case StepMethod::gillespie: return step_gillespie(s, dt, p, rng);
    case StepMethod::exact: return step_exact(s, dt, p, rng);
  }
  throw ValidationError("step: unknown method");
}

DriftSeries simulate_series(double r_init, double t_tot, double t_sample,
                            StepMethod method, const DeviceParams& p,
                            Rng& rng) {
  p.validate();
  if (!(t_tot > 0.0) || !(t_sample > 0.0))
    throw ValidationError("simulate_series: t_tot and t_sample must be > 0");
  const auto steps = static_cast<std::int64_t>(std::llround(t_tot / t_sample));
  if (steps < 1 ||
      std::abs(static_cast<double>(steps) * t_sample - t_tot) >
          1e-9 * std::max(1.0, t_tot))
    throw ValidationError("simulate_series: t_tot must be a multiple of t_sample");

  DeviceState state{state_from_resistance(r_init, p)};
  DriftSeries out;
  out.t_sample = t_sample;
  out.values.reserve(static_cast<std::size_t>(steps) + 1);
  out.values.push_back(resistance_from_state(static_cast<double>(state.n), p));
  for (std::int64_t k = 0; k < steps; ++k) {
    state = step(state, t_sample, method, p, rng);
    out.values.push_back(resistance_from_state(static_cast<double>(state.n), p));
  }
  out.r_init = out.values.front();
  return out;
}

DriftDataset generate_dataset(std::int64_t count, double r_min, double r_max,
                              double t_tot, double t_sample,
                              const DeviceParams& p, std::uint64_t seed,
                              StepMethod method, int threads) {
  p.validate();
  if (count < 1) throw ValidationError("generate_dataset: count must be >= 1");
  if (!(r_min > 0.0) || !(r_max > r_min))
    throw ValidationError("generate_dataset: need 0 < r_min < r_max");
  if (r_max >= 1.0 / p.g_parallel)
    throw ValidationError(
        "generate_dataset: r_max outside the invertible readout range");

  DriftDataset ds;
  ds.t_tot = t_tot;
  ds.t_sample = t_sample;
  ds.seed = seed;
  ds.series.resize(static_cast<std::size_t>(count));
  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t i) {
    const double frac =
        count == 1 ? 0.0
                   : static_cast<double>(i) / static_cast<double>(count - 1);
    const double r0 = r_min + (r_max - r_min) * frac;
    Rng rng = make_rng(seed, streams::dataset, i);
    ds.series[i] = simulate_series(r0, t_tot, t_sample, method, p, rng);
  });
  return ds;
}

}  // namespace driftforge
