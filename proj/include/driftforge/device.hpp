#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftforge/rng.hpp"

namespace driftforge {

// Physical device description. Defaults describe the reference device:
// equilibrium near 500 kOhm, drift from the extreme state finished in ~1.5e3 s.
struct DeviceParams {
  std::int64_t n_switches = 1'800'000;
  std::int64_t n_thresh = 0;
  double v_barrier = 0.256;          // volts, sets the absolute switching rate
  double g_parallel = 1e-6;          // siemens
  double g_step = 1e-8;              // siemens per conducting switch
  double v_offset = 0.2532;          // volts, sets the up/down rate asymmetry
  double temperature = 300.0;        // kelvin
  double k_boltzmann = 1.38064e-23;  // joules per kelvin
  double q_electron = 1.602176e-19;  // coulombs
  double attempt_rate = 1.0;         // hertz

  double thermal_voltage() const {
    return k_boltzmann * temperature / q_electron;
  }
  void validate() const;
};

struct DeviceState {
  std::int64_t n = 0;  // switches currently conducting
};

struct SwitchRates {
  double up = 0.0;    // per idle switch, hertz
  double down = 0.0;  // per conducting switch, hertz
};

enum class StepMethod { tau_leap, gillespie, exact };

StepMethod step_method_from_string(const std::string& s);
std::string to_string(StepMethod m);

double resistance_from_state(double n, const DeviceParams& p);
std::int64_t state_from_resistance(double r, const DeviceParams& p);
double equilibrium_state(const DeviceParams& p);
double v_off_for_equilibrium(double n_eq, const DeviceParams& p);
SwitchRates switch_rates(const DeviceParams& p);

DeviceState step_tau_leap(DeviceState s, double dt, const DeviceParams& p,
                          Rng& rng);
DeviceState step_gillespie(DeviceState s, double dt, const DeviceParams& p,
                           Rng& rng);
// Draws the state after dt from the closed-form occupancy law of independent
// two-state switches. Statistically exact for any dt, O(1) cost in dt.
DeviceState step_exact(DeviceState s, double dt, const DeviceParams& p,
                       Rng& rng);
DeviceState step(DeviceState s, double dt, StepMethod m, const DeviceParams& p,
                 Rng& rng);

struct DriftSeries {
  double r_init = 0.0;
  double t_sample = 0.0;
  std::vector<double> values;
};

struct DriftDataset {
  std::vector<DriftSeries> series;
  double t_tot = 0.0;
  double t_sample = 0.0;
  std::uint64_t seed = 0;
};

DriftSeries simulate_series(double r_init, double t_tot, double t_sample,
                            StepMethod method, const DeviceParams& p, Rng& rng);

// Initial resistances on a deterministic even grid over [r_min, r_max];
// series i always draws from the stream (seed, dataset, i), so the result is
// independent of the thread count.
DriftDataset generate_dataset(std::int64_t count, double r_min, double r_max,
                              double t_tot, double t_sample,
                              const DeviceParams& p, std::uint64_t seed,
                              StepMethod method = StepMethod::tau_leap,
                              int threads = 1);

}  // namespace driftforge
