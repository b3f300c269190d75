#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "driftforge/dense_net.hpp"
#include "driftforge/device.hpp"
#include "driftforge/normalization.hpp"

namespace driftforge {

struct TrainConfig {
  double lr = 1e-4;
  int epochs = 1000;
  int steps_per_epoch = 500;
  int batch = 64;
  int s_main = 10;      // sequence length scored by the main discriminator
  int s_dd = 2;         // pair length scored by the delay discriminator
  int q_max = 20;       // largest recurrent split factor
  int d_min = 1;        // integer delay range for real subsequences
  int d_max = 90;
  double dd_min = 1.0;  // real-valued delay range for delay discrimination
  double dd_max = 500.0;
  int n_pack = 2;       // sequences one discriminator input scores jointly
  int z_dim = 20;
  std::uint64_t seed = 1;
  bool ablation_no_dd = false;
  int checkpoint_every = 50;  // epochs between periodic checkpoints
  int g_embed = 64;           // generator processor width
  int g_hidden = 128;         // generator combined head width
  int d_hidden = 128;         // discriminator width

  void validate() const;
};

struct GeneratorNet {
  DenseNet delay_proc;  // raw delay -> embedding
  DenseNet res_proc;    // normalized resistance -> embedding
  DenseNet combined;    // [delay emb, res emb, z] -> normalized difference
  int z_dim = 20;
};

struct DiscriminatorNet {
  DenseNet cond_proc;  // per packed sequence: initial resistance and delay
  DenseNet seq_proc;   // per packed sequence: s-1 resistances and s-1 diffs
  DenseNet combined;   // both embeddings -> probability (sigmoid)
  int n_pack = 2;
  int s = 10;
};

GeneratorNet make_generator(const TrainConfig& cfg, Rng& rng);
DiscriminatorNet make_discriminator(const TrainConfig& cfg, int s, Rng& rng);

// One conditional draw in normalized space. The head predicts a normalized
// difference; the residual connection adds it onto rbar_init.
double generator_sample(const GeneratorNet& g, double rbar_init, double d,
                        std::span<const double> z, const NormStats& stats);

struct GenTrace {
  ForwardTrace delay, res, combined;
};

double generator_forward(const GeneratorNet& g, double rbar_init, double d,
                         std::span<const double> z, const NormStats& stats,
                         GenTrace* trace);

struct GenGrads {
  std::vector<double> delay, res, combined;
  void reset(const GeneratorNet& g);
};

// Backward through one draw. upstream is dL/d(rbar_final); the return value
// is dL/d(rbar_init), which carries both the residual path and the processor
// path so draws can be chained.
double generator_backward(const GeneratorNet& g, const GenTrace& trace,
                          double upstream, const NormStats& stats,
                          GenGrads& grads);

// Closed-loop rollout: every output is fed back as the next input.
DriftSeries generate_sequence(const GeneratorNet& g, double r_init_ohms,
                              double d, int steps, const NormStats& stats,
                              Rng& rng);

struct SequenceSample {
  std::vector<double> rbar;   // s normalized resistances; rbar[0] conditions
  std::vector<double> diffs;  // s-1 normalized consecutive differences
  double d = 1.0;             // delay between elements, raw seconds
};

double discriminator_score(const DiscriminatorNet& dnet,
                           std::span<const SequenceSample> pack);

// Random stride-d windows of the real data, d restricted to the sampling grid.
std::vector<SequenceSample> sample_real_subsequences(
    const NormalizedDataset& nd, int d, int s, int count,
    const NormStats& stats, Rng& rng);

struct DiscGrads {
  std::vector<double> cond, seq, combined;
  void reset(const DiscriminatorNet& d);
};

struct GenOptimizer {
  AdamState delay, res, combined;
};
struct DiscOptimizer {
  AdamState cond, seq, combined;
};

GenOptimizer make_gen_optimizer(const GeneratorNet& g, double lr);
DiscOptimizer make_disc_optimizer(const DiscriminatorNet& d, double lr);
void apply_grads(GeneratorNet& g, const GenGrads& grads, GenOptimizer& opt);
void apply_grads(DiscriminatorNet& d, const DiscGrads& grads,
                 DiscOptimizer& opt);

struct GanBundle {
  GeneratorNet g;
  DiscriminatorNet d;     // sequence realism
  DiscriminatorNet d_dd;  // delay-splitting consistency
};

struct TrainState {
  GanBundle nets;
  GenOptimizer opt_g;
  DiscOptimizer opt_d, opt_ddd;
  long long step_count = 0;
};

TrainState init_train_state(const TrainConfig& cfg);

struct StepLosses {
  double loss_d = 0.0;
  double loss_g_main = 0.0;
  double loss_ddd = 0.0;
  double loss_g_dd = 0.0;
};

// Updates the main discriminator, then accumulates the generator's
// adversarial gradient into g_grads. The caller applies g_grads, so several
// objectives can share a single optimizer step.
StepLosses train_main_step(TrainState& ts, const NormalizedDataset& nd,
                           const TrainConfig& cfg, const NormStats& stats,
                           GenGrads& g_grads, Rng& rng);

// Single-shot draws at delay d against q chained draws at d/q. Updates the
// delay discriminator and accumulates the generator's gradient from the
// single-shot side into g_grads.
StepLosses train_delay_discriminator_step(TrainState& ts,
                                          const NormalizedDataset& nd,
                                          const TrainConfig& cfg,
                                          const NormStats& stats,
                                          GenGrads& g_grads, Rng& rng);

// Full alternating step: main discriminator, delay discriminator, then one
// generator update from the summed gradients.
StepLosses train_step(TrainState& ts, const NormalizedDataset& nd,
                      const TrainConfig& cfg, const NormStats& stats,
                      Rng& rng);

struct TrainLogRow {
  int epoch = 0;
  long long step = 0;
  double loss_d = 0.0, loss_g_main = 0.0, loss_ddd = 0.0, loss_g_dd = 0.0;
  bool has_dd = true;
};

void write_train_log(const std::vector<TrainLogRow>& rows,
                     const std::string& path);

struct Checkpoint {
  int format_version = 1;
  GanBundle nets;
  TrainConfig config;
  StatsFile stats;
  long long step_count = 0;
  GenOptimizer opt_g;
  DiscOptimizer opt_d, opt_ddd;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

// Runs training up to cfg.epochs total epochs (a resumed state continues its
// step count). Epoch-mean losses are logged per epoch. A non-finite loss
// saves a diagnostic checkpoint into out_dir (when given) and raises
// NumericalError.
TrainResult train(const DriftDataset& data, const StatsFile& stats,
                  const TrainConfig& cfg, const std::string& out_dir = "",
                  const Checkpoint* resume = nullptr);

}  // namespace driftforge
