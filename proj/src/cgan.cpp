#include "driftforge/cgan.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "driftforge/checkpoint.hpp"
#include "driftforge/errors.hpp"

namespace driftforge {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("train config: lr must be > 0");
  if (epochs < 0) throw ValidationError("train config: epochs must be >= 0");
  if (steps_per_epoch < 1)
    throw ValidationError("train config: steps_per_epoch must be >= 1");
  if (batch < 1) throw ValidationError("train config: batch must be >= 1");
  if (n_pack < 1 || batch % n_pack != 0)
    throw ValidationError("train config: n_pack must divide batch");
  if (s_main < 2) throw ValidationError("train config: s_main must be >= 2");
  if (s_dd != 2)
    throw ValidationError("train config: delay discrimination scores pairs, s_dd must be 2");
  if (q_max < 2) throw ValidationError("train config: q_max must be >= 2");
  if (d_min < 1 || d_max < d_min)
    throw ValidationError("train config: need 1 <= d_min <= d_max");
  if (!(dd_min > 0.0) || !(dd_max >= dd_min))
    throw ValidationError("train config: need 0 < dd_min <= dd_max");
  if (dd_max < static_cast<double>(d_max))
    throw ValidationError("train config: dd_max must cover d_max");
  if (z_dim < 1) throw ValidationError("train config: z_dim must be >= 1");
  if (g_embed < 1 || g_hidden < 1 || d_hidden < 1)
    throw ValidationError("train config: widths must be >= 1");
  if (checkpoint_every < 1)
    throw ValidationError("train config: checkpoint_every must be >= 1");
}

GeneratorNet make_generator(const TrainConfig& cfg, Rng& rng) {
  const int e = cfg.g_embed;
  const int h = cfg.g_hidden;
  GeneratorNet g;
  g.z_dim = cfg.z_dim;
  g.delay_proc = make_net({{1, e, Activation::relu}, {e, e, Activation::relu}}, rng);
  g.res_proc = make_net({{1, e, Activation::relu}, {e, e, Activation::relu}}, rng);
  g.combined = make_net({{2 * e + cfg.z_dim, h, Activation::relu},
                         {h, h, Activation::relu},
                         {h, h, Activation::relu},
                         {h, 1, Activation::identity}},
                        rng);
  // start as the identity map so early rollouts stay bounded
  zero_layer(g.combined, g.combined.layers.size() - 1);
  return g;
}

DiscriminatorNet make_discriminator(const TrainConfig& cfg, int s, Rng& rng) {
  if (s < 2) throw ValidationError("make_discriminator: s must be >= 2");
  const int h = cfg.d_hidden;
  DiscriminatorNet d;
  d.n_pack = cfg.n_pack;
  d.s = s;
  d.cond_proc = make_net(
      {{cfg.n_pack * 2, h, Activation::relu}, {h, h, Activation::relu}}, rng);
  d.seq_proc = make_net({{cfg.n_pack * 2 * (s - 1), h, Activation::relu},
                         {h, h, Activation::relu}},
                        rng);
  d.combined = make_net({{2 * h, h, Activation::relu},
                         {h, h, Activation::relu},
                         {h, 1, Activation::sigmoid}},
                        rng);
  return d;
}

double generator_forward(const GeneratorNet& g, double rbar_init, double d,
                         std::span<const double> z, const NormStats& stats,
                         GenTrace* trace) {
  if (static_cast<int>(z.size()) != g.z_dim)
    throw ValidationError("generator: z size mismatch");
  const double din[1] = {d};
  const double rin[1] = {rbar_init};
  const auto ed = forward(g.delay_proc, din, trace ? &trace->delay : nullptr);
  const auto er = forward(g.res_proc, rin, trace ? &trace->res : nullptr);
  std::vector<double> cat;
  cat.reserve(ed.size() + er.size() + z.size());
  cat.insert(cat.end(), ed.begin(), ed.end());
  cat.insert(cat.end(), er.begin(), er.end());
  cat.insert(cat.end(), z.begin(), z.end());
  const auto out =
      forward(g.combined, cat, trace ? &trace->combined : nullptr);
  return denormalize_diff(out[0], rbar_init, stats);
}

double generator_sample(const GeneratorNet& g, double rbar_init, double d,
                        std::span<const double> z, const NormStats& stats) {
  return generator_forward(g, rbar_init, d, z, stats, nullptr);
}

void GenGrads::reset(const GeneratorNet& g) {
  delay.assign(g.delay_proc.param_count(), 0.0);
  res.assign(g.res_proc.param_count(), 0.0);
  combined.assign(g.combined.param_count(), 0.0);
}

double generator_backward(const GeneratorNet& g, const GenTrace& trace,
                          double upstream, const NormStats& stats,
                          GenGrads& grads) {
  const double d_out[1] = {upstream * stats.sigma_diff};
  const auto d_cat = backward(g.combined, trace.combined, d_out, grads.combined);
  const std::size_t e_delay = static_cast<std::size_t>(g.delay_proc.output_size());
  const std::size_t e_res = static_cast<std::size_t>(g.res_proc.output_size());
  const std::span<const double> cat_span(d_cat);
  backward(g.delay_proc, trace.delay, cat_span.subspan(0, e_delay), grads.delay);
  const auto d_rin = backward(g.res_proc, trace.res,
                              cat_span.subspan(e_delay, e_res), grads.res);
  return upstream + d_rin[0];
}

DriftSeries generate_sequence(const GeneratorNet& g, double r_init_ohms,
                              double d, int steps, const NormStats& stats,
                              Rng& rng) {
  if (steps < 1) throw ValidationError("generate_sequence: steps must be >= 1");
  if (!(d > 0.0)) throw ValidationError("generate_sequence: d must be > 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(static_cast<std::size_t>(g.z_dim));
  DriftSeries out;
  out.t_sample = d;
  out.values.reserve(static_cast<std::size_t>(steps) + 1);
  out.values.push_back(r_init_ohms);
  double rbar = normalize_resistance(r_init_ohms, stats);
  for (int k = 0; k < steps; ++k) {
    for (auto& v : z) v = normal(rng);
    rbar = generator_sample(g, rbar, d, z, stats);
    out.values.push_back(denormalize_resistance(rbar, stats));
  }
  out.r_init = out.values.front();
  return out;
}

namespace {

struct DiscTrace {
  ForwardTrace cond, seq, combined;
};

void check_pack(const DiscriminatorNet& dn,
                std::span<const SequenceSample> pack) {
  if (static_cast<int>(pack.size()) != dn.n_pack)
    throw ValidationError("discriminator: pack size mismatch");
  for (const auto& sample : pack) {
    if (static_cast<int>(sample.rbar.size()) != dn.s ||
        static_cast<int>(sample.diffs.size()) != dn.s - 1)
      throw ValidationError("discriminator: sequence length mismatch");
  }
}

double disc_forward(const DiscriminatorNet& dn,
                    std::span<const SequenceSample> pack, DiscTrace* trace) {
  check_pack(dn, pack);
  std::vector<double> cond_in, seq_in;
  cond_in.reserve(pack.size() * 2);
  seq_in.reserve(pack.size() * 2 * (static_cast<std::size_t>(dn.s) - 1));
  for (const auto& sample : pack) {
    cond_in.push_back(sample.rbar[0]);
    cond_in.push_back(sample.d);
  }
  for (const auto& sample : pack) {
    seq_in.insert(seq_in.end(), sample.rbar.begin() + 1, sample.rbar.end());
    seq_in.insert(seq_in.end(), sample.diffs.begin(), sample.diffs.end());
  }
  const auto e1 =
      forward(dn.cond_proc, cond_in, trace ? &trace->cond : nullptr);
  const auto e2 = forward(dn.seq_proc, seq_in, trace ? &trace->seq : nullptr);
  std::vector<double> cat;
  cat.reserve(e1.size() + e2.size());
  cat.insert(cat.end(), e1.begin(), e1.end());
  cat.insert(cat.end(), e2.begin(), e2.end());
  return forward(dn.combined, cat, trace ? &trace->combined : nullptr)[0];
}

// Gradients of the score with respect to every packed input element.
struct PackInputGrads {
  std::vector<std::vector<double>> rbar;   // [member][0..s)
  std::vector<std::vector<double>> diffs;  // [member][0..s-1)
};

PackInputGrads disc_backward(const DiscriminatorNet& dn, const DiscTrace& trace,
                             double upstream, DiscGrads* grads) {
  std::vector<double> scratch_cond, scratch_seq, scratch_comb;
  std::span<double> g_cond, g_seq, g_comb;
  if (grads) {
    g_cond = grads->cond;
    g_seq = grads->seq;
    g_comb = grads->combined;
  } else {
    scratch_cond.assign(dn.cond_proc.param_count(), 0.0);
    scratch_seq.assign(dn.seq_proc.param_count(), 0.0);
    scratch_comb.assign(dn.combined.param_count(), 0.0);
    g_cond = scratch_cond;
    g_seq = scratch_seq;
    g_comb = scratch_comb;
  }
  const double up[1] = {upstream};
  const auto d_cat = backward(dn.combined, trace.combined, up, g_comb);
  const std::size_t e1 = static_cast<std::size_t>(dn.cond_proc.output_size());
  const std::size_t e2 = static_cast<std::size_t>(dn.seq_proc.output_size());
  const std::span<const double> cat_span(d_cat);
  const auto d_cond_in =
      backward(dn.cond_proc, trace.cond, cat_span.subspan(0, e1), g_cond);
  const auto d_seq_in =
      backward(dn.seq_proc, trace.seq, cat_span.subspan(e1, e2), g_seq);

  PackInputGrads out;
  const std::size_t n = static_cast<std::size_t>(dn.n_pack);
  const std::size_t s = static_cast<std::size_t>(dn.s);
  out.rbar.assign(n, std::vector<double>(s, 0.0));
  out.diffs.assign(n, std::vector<double>(s - 1, 0.0));
  for (std::size_t m = 0; m < n; ++m) {
    out.rbar[m][0] = d_cond_in[m * 2];
    const std::size_t base = m * 2 * (s - 1);
    for (std::size_t k = 0; k + 1 < s; ++k) {
      out.rbar[m][k + 1] = d_seq_in[base + k];
      out.diffs[m][k] = d_seq_in[base + (s - 1) + k];
    }
  }
  return out;
}

struct FakeSequence {
  SequenceSample sample;
  std::vector<GenTrace> traces;  // traces[k] produced rbar[k+1] from rbar[k]
};

std::vector<double> draw_z(int z_dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(static_cast<std::size_t>(z_dim));
  for (auto& v : z) v = normal(rng);
  return z;
}

double random_real_point(const NormalizedDataset& nd, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick_series(0, nd.rbar.size() - 1);
  const auto& s = nd.rbar[pick_series(rng)];
  std::uniform_int_distribution<std::size_t> pick_index(0, s.size() - 1);
  return s[pick_index(rng)];
}

FakeSequence roll_fake(const GeneratorNet& g, const NormalizedDataset& nd,
                       const TrainConfig& cfg, const NormStats& stats,
                       Rng& rng) {
  FakeSequence out;
  std::uniform_int_distribution<int> pick_d(cfg.d_min, cfg.d_max);
  out.sample.d = static_cast<double>(pick_d(rng));
  out.sample.rbar.resize(static_cast<std::size_t>(cfg.s_main));
  out.sample.diffs.resize(static_cast<std::size_t>(cfg.s_main) - 1);
  out.traces.resize(static_cast<std::size_t>(cfg.s_main) - 1);
  out.sample.rbar[0] = random_real_point(nd, rng);
  for (int k = 1; k < cfg.s_main; ++k) {
    const auto z = draw_z(cfg.z_dim, rng);
    out.sample.rbar[static_cast<std::size_t>(k)] = generator_forward(
        g, out.sample.rbar[static_cast<std::size_t>(k) - 1], out.sample.d, z,
        stats, &out.traces[static_cast<std::size_t>(k) - 1]);
  }
  for (int k = 0; k + 1 < cfg.s_main; ++k)
    out.sample.diffs[static_cast<std::size_t>(k)] =
        normalize_diff(out.sample.rbar[static_cast<std::size_t>(k) + 1],
                       out.sample.rbar[static_cast<std::size_t>(k)], stats);
  return out;
}

// Routes discriminator input gradients back through a closed-loop rollout.
// rbar[0] is a data point, so gradient flow stops there.
void backprop_rollout(const GeneratorNet& g, const NormStats& stats,
                      const FakeSequence& fake,
                      std::span<const double> d_rbar,
                      std::span<const double> d_diffs, GenGrads& grads) {
  const std::size_t s = fake.sample.rbar.size();
  std::vector<double> grad_r(d_rbar.begin(), d_rbar.end());
  for (std::size_t k = 0; k + 1 < s; ++k) {
    grad_r[k + 1] += d_diffs[k] / stats.sigma_diff;
    grad_r[k] -= d_diffs[k] / stats.sigma_diff;
  }
  for (std::size_t k = s - 1; k >= 1; --k) {
    if (grad_r[k] == 0.0) continue;
    grad_r[k - 1] +=
        generator_backward(g, fake.traces[k - 1], grad_r[k], stats, grads);
  }
}

}  // namespace

double discriminator_score(const DiscriminatorNet& dnet,
                           std::span<const SequenceSample> pack) {
  return disc_forward(dnet, pack, nullptr);
}

std::vector<SequenceSample> sample_real_subsequences(
    const NormalizedDataset& nd, int d, int s, int count,
    const NormStats& stats, Rng& rng) {
  if (nd.rbar.empty())
    throw ValidationError("sample_real_subsequences: empty dataset");
  if (d < 1) throw ValidationError("sample_real_subsequences: d must be >= 1");
  if (s < 2) throw ValidationError("sample_real_subsequences: s must be >= 2");
  const std::size_t len = nd.rbar.front().size();
  const std::size_t span = static_cast<std::size_t>(d) *
                           (static_cast<std::size_t>(s) - 1);
  if (span + 1 > len)
    throw ValidationError(
        "sample_real_subsequences: window exceeds the series length");
  std::uniform_int_distribution<std::size_t> pick_series(0, nd.rbar.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_start(0, len - 1 - span);
  std::vector<SequenceSample> out(static_cast<std::size_t>(count));
  for (auto& sample : out) {
    const auto& series = nd.rbar[pick_series(rng)];
    const std::size_t j = pick_start(rng);
    sample.d = static_cast<double>(d);
    sample.rbar.resize(static_cast<std::size_t>(s));
    sample.diffs.resize(static_cast<std::size_t>(s) - 1);
    for (int k = 0; k < s; ++k)
      sample.rbar[static_cast<std::size_t>(k)] =
          series[j + static_cast<std::size_t>(k) * static_cast<std::size_t>(d)];
    for (int k = 0; k + 1 < s; ++k)
      sample.diffs[static_cast<std::size_t>(k)] =
          normalize_diff(sample.rbar[static_cast<std::size_t>(k) + 1],
                         sample.rbar[static_cast<std::size_t>(k)], stats);
  }
  return out;
}

void DiscGrads::reset(const DiscriminatorNet& d) {
  cond.assign(d.cond_proc.param_count(), 0.0);
  seq.assign(d.seq_proc.param_count(), 0.0);
  combined.assign(d.combined.param_count(), 0.0);
}

GenOptimizer make_gen_optimizer(const GeneratorNet& g, double lr) {
  return {make_adam(g.delay_proc.param_count(), lr),
          make_adam(g.res_proc.param_count(), lr),
          make_adam(g.combined.param_count(), lr)};
}

DiscOptimizer make_disc_optimizer(const DiscriminatorNet& d, double lr) {
  return {make_adam(d.cond_proc.param_count(), lr),
          make_adam(d.seq_proc.param_count(), lr),
          make_adam(d.combined.param_count(), lr)};
}

void apply_grads(GeneratorNet& g, const GenGrads& grads, GenOptimizer& opt) {
  adam_step(g.delay_proc.params, grads.delay, opt.delay);
  adam_step(g.res_proc.params, grads.res, opt.res);
  adam_step(g.combined.params, grads.combined, opt.combined);
}

void apply_grads(DiscriminatorNet& d, const DiscGrads& grads,
                 DiscOptimizer& opt) {
  adam_step(d.cond_proc.params, grads.cond, opt.cond);
  adam_step(d.seq_proc.params, grads.seq, opt.seq);
  adam_step(d.combined.params, grads.combined, opt.combined);
}

TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState ts;
  Rng rng_g = make_rng(cfg.seed, streams::net_init, 0);
  Rng rng_d = make_rng(cfg.seed, streams::net_init, 1);
  Rng rng_dd = make_rng(cfg.seed, streams::net_init, 2);
  ts.nets.g = make_generator(cfg, rng_g);
  ts.nets.d = make_discriminator(cfg, cfg.s_main, rng_d);
  ts.nets.d_dd = make_discriminator(cfg, cfg.s_dd, rng_dd);
  ts.opt_g = make_gen_optimizer(ts.nets.g, cfg.lr);
  ts.opt_d = make_disc_optimizer(ts.nets.d, cfg.lr);
  ts.opt_ddd = make_disc_optimizer(ts.nets.d_dd, cfg.lr);
  return ts;
}

StepLosses train_main_step(TrainState& ts, const NormalizedDataset& nd,
                           const TrainConfig& cfg, const NormStats& stats,
                           GenGrads& g_grads, Rng& rng) {
  const int packs = cfg.batch / cfg.n_pack;
  const double inv_packs = 1.0 / static_cast<double>(packs);
  StepLosses losses;

  std::vector<std::vector<FakeSequence>> fakes(
      static_cast<std::size_t>(packs));
  DiscGrads d_grads;
  d_grads.reset(ts.nets.d);
  std::vector<SequenceSample> pack_view(static_cast<std::size_t>(cfg.n_pack));
  std::uniform_int_distribution<int> pick_d(cfg.d_min, cfg.d_max);

  for (int p = 0; p < packs; ++p) {
    for (int m = 0; m < cfg.n_pack; ++m)
      pack_view[static_cast<std::size_t>(m)] = std::move(
          sample_real_subsequences(nd, pick_d(rng), cfg.s_main, 1, stats,
                                   rng)[0]);
    DiscTrace tr;
    const double score_real = disc_forward(ts.nets.d, pack_view, &tr);
    losses.loss_d += bce(1.0, score_real) * inv_packs;
    disc_backward(ts.nets.d, tr, bce_grad(1.0, score_real) * inv_packs,
                  &d_grads);

    auto& fake_pack = fakes[static_cast<std::size_t>(p)];
    fake_pack.reserve(static_cast<std::size_t>(cfg.n_pack));
    for (int m = 0; m < cfg.n_pack; ++m)
      fake_pack.push_back(roll_fake(ts.nets.g, nd, cfg, stats, rng));
    for (int m = 0; m < cfg.n_pack; ++m)
      pack_view[static_cast<std::size_t>(m)] =
          fake_pack[static_cast<std::size_t>(m)].sample;
    DiscTrace trf;
    const double score_fake = disc_forward(ts.nets.d, pack_view, &trf);
    losses.loss_d += bce(0.0, score_fake) * inv_packs;
    disc_backward(ts.nets.d, trf, bce_grad(0.0, score_fake) * inv_packs,
                  &d_grads);
  }
  apply_grads(ts.nets.d, d_grads, ts.opt_d);

  // generator objective against the freshly updated discriminator, reusing
  // the rollouts (the generator itself has not changed yet)
  for (int p = 0; p < packs; ++p) {
    const auto& fake_pack = fakes[static_cast<std::size_t>(p)];
    for (int m = 0; m < cfg.n_pack; ++m)
      pack_view[static_cast<std::size_t>(m)] =
          fake_pack[static_cast<std::size_t>(m)].sample;
    DiscTrace tr;
    const double score = disc_forward(ts.nets.d, pack_view, &tr);
    losses.loss_g_main += bce(1.0, score) * inv_packs;
    const auto input_grads = disc_backward(
        ts.nets.d, tr, bce_grad(1.0, score) * inv_packs, nullptr);
    for (int m = 0; m < cfg.n_pack; ++m)
      backprop_rollout(ts.nets.g, stats,
                       fake_pack[static_cast<std::size_t>(m)],
                       input_grads.rbar[static_cast<std::size_t>(m)],
                       input_grads.diffs[static_cast<std::size_t>(m)],
                       g_grads);
  }
  return losses;
}

StepLosses train_delay_discriminator_step(TrainState& ts,
                                          const NormalizedDataset& nd,
                                          const TrainConfig& cfg,
                                          const NormStats& stats,
                                          GenGrads& g_grads, Rng& rng) {
  const int packs = cfg.batch / cfg.n_pack;
  const double inv_packs = 1.0 / static_cast<double>(packs);
  StepLosses losses;

  std::uniform_int_distribution<int> pick_q(2, cfg.q_max);
  const int q = pick_q(rng);  // one split factor per batch
  std::uniform_real_distribution<double> pick_d(cfg.dd_min, cfg.dd_max);
  std::uniform_real_distribution<double> pick_r(nd.r_min, nd.r_max);

  struct Item {
    double rbar0 = 0.0, d = 1.0, single = 0.0, recurrent = 0.0;
    GenTrace trace;
  };
  std::vector<Item> items(static_cast<std::size_t>(cfg.batch));
  for (auto& it : items) {
    it.rbar0 = normalize_resistance(pick_r(rng), stats);
    it.d = pick_d(rng);
    it.single = generator_forward(ts.nets.g, it.rbar0, it.d,
                                  draw_z(cfg.z_dim, rng), stats, &it.trace);
    double rbar = it.rbar0;
    for (int k = 0; k < q; ++k)
      rbar = generator_sample(ts.nets.g, rbar, it.d / q,
                              draw_z(cfg.z_dim, rng), stats);
    it.recurrent = rbar;
  }

  auto as_pair = [&](const Item& it, double r_final) {
    SequenceSample s;
    s.d = it.d;
    s.rbar = {it.rbar0, r_final};
    s.diffs = {normalize_diff(r_final, it.rbar0, stats)};
    return s;
  };

  DiscGrads dd_grads;
  dd_grads.reset(ts.nets.d_dd);
  std::vector<SequenceSample> pack_view(static_cast<std::size_t>(cfg.n_pack));
  for (int p = 0; p < packs; ++p) {
    for (int m = 0; m < cfg.n_pack; ++m) {
      const auto& it = items[static_cast<std::size_t>(p * cfg.n_pack + m)];
      pack_view[static_cast<std::size_t>(m)] = as_pair(it, it.single);
    }
    DiscTrace tr_s;
    const double score_single = disc_forward(ts.nets.d_dd, pack_view, &tr_s);
    losses.loss_ddd += bce(0.0, score_single) * inv_packs;
    disc_backward(ts.nets.d_dd, tr_s, bce_grad(0.0, score_single) * inv_packs,
                  &dd_grads);

    for (int m = 0; m < cfg.n_pack; ++m) {
      const auto& it = items[static_cast<std::size_t>(p * cfg.n_pack + m)];
      pack_view[static_cast<std::size_t>(m)] = as_pair(it, it.recurrent);
    }
    DiscTrace tr_r;
    const double score_rec = disc_forward(ts.nets.d_dd, pack_view, &tr_r);
    losses.loss_ddd += bce(1.0, score_rec) * inv_packs;
    disc_backward(ts.nets.d_dd, tr_r, bce_grad(1.0, score_rec) * inv_packs,
                  &dd_grads);
  }
  apply_grads(ts.nets.d_dd, dd_grads, ts.opt_ddd);

  // generator gradient: make the single shot look like the recurrent composite
  for (int p = 0; p < packs; ++p) {
    for (int m = 0; m < cfg.n_pack; ++m) {
      const auto& it = items[static_cast<std::size_t>(p * cfg.n_pack + m)];
      pack_view[static_cast<std::size_t>(m)] = as_pair(it, it.single);
    }
    DiscTrace tr;
    const double score = disc_forward(ts.nets.d_dd, pack_view, &tr);
    losses.loss_g_dd += bce(1.0, score) * inv_packs;
    const auto input_grads = disc_backward(
        ts.nets.d_dd, tr, bce_grad(1.0, score) * inv_packs, nullptr);
    for (int m = 0; m < cfg.n_pack; ++m) {
      const auto& it = items[static_cast<std::size_t>(p * cfg.n_pack + m)];
      const double d_single =
          input_grads.rbar[static_cast<std::size_t>(m)][1] +
          input_grads.diffs[static_cast<std::size_t>(m)][0] /
              stats.sigma_diff;
      if (d_single != 0.0)
        generator_backward(ts.nets.g, it.trace, d_single, stats, g_grads);
    }
  }
  return losses;
}

StepLosses train_step(TrainState& ts, const NormalizedDataset& nd,
                      const TrainConfig& cfg, const NormStats& stats,
                      Rng& rng) {
  GenGrads g_grads;
  g_grads.reset(ts.nets.g);
  StepLosses losses = train_main_step(ts, nd, cfg, stats, g_grads, rng);
  if (!cfg.ablation_no_dd) {
    const StepLosses dd =
        train_delay_discriminator_step(ts, nd, cfg, stats, g_grads, rng);
    losses.loss_ddd = dd.loss_ddd;
    losses.loss_g_dd = dd.loss_g_dd;
  }
  apply_grads(ts.nets.g, g_grads, ts.opt_g);
  ts.step_count += 1;
  return losses;
}

void write_train_log(const std::vector<TrainLogRow>& rows,
                     const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ValidationError("cannot write train log: " + path);
  std::fputs("epoch,step,loss_D,loss_G_main,loss_Ddd,loss_G_dd\n", f);
  for (const auto& r : rows) {
    if (r.has_dd) {
      std::fprintf(f, "%d,%lld,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.step,
                   r.loss_d, r.loss_g_main, r.loss_ddd, r.loss_g_dd);
    } else {
      std::fprintf(f, "%d,%lld,%.17g,%.17g,,\n", r.epoch, r.step, r.loss_d,
                   r.loss_g_main);
    }
  }
  if (std::fclose(f) != 0)
    throw ValidationError("failed to flush train log: " + path);
}

TrainResult train(const DriftDataset& data, const StatsFile& stats,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const Checkpoint* resume) {
  cfg.validate();
  const NormalizedDataset nd = normalize_dataset(data, stats.stats);

  TrainResult res;
  TrainState ts;
  if (resume) {
    ts.nets = resume->nets;
    ts.opt_g = resume->opt_g;
    ts.opt_d = resume->opt_d;
    ts.opt_ddd = resume->opt_ddd;
    ts.step_count = resume->step_count;
  } else {
    ts = init_train_state(cfg);
  }

  Rng rng = make_rng(cfg.seed, streams::train);
  const auto assemble = [&]() {
    Checkpoint ck;
    ck.nets = ts.nets;
    ck.config = cfg;
    ck.stats = stats;
    ck.step_count = ts.step_count;
    ck.opt_g = ts.opt_g;
    ck.opt_d = ts.opt_d;
    ck.opt_ddd = ts.opt_ddd;
    return ck;
  };

  const int start_epoch =
      static_cast<int>(ts.step_count / cfg.steps_per_epoch);
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    StepLosses sums;
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      const StepLosses l = train_step(ts, nd, cfg, stats.stats, rng);
      const bool finite = std::isfinite(l.loss_d) &&
                          std::isfinite(l.loss_g_main) &&
                          std::isfinite(l.loss_ddd) &&
                          std::isfinite(l.loss_g_dd);
      if (!finite) {
        if (!out_dir.empty()) {
          const Checkpoint ck = assemble();
          save_checkpoint(
              ck, (std::filesystem::path(out_dir) / "checkpoint.diagnostic.json")
                      .string());
        }
        throw NumericalError("training: non-finite loss at step " +
                             std::to_string(ts.step_count));
      }
      sums.loss_d += l.loss_d;
      sums.loss_g_main += l.loss_g_main;
      sums.loss_ddd += l.loss_ddd;
      sums.loss_g_dd += l.loss_g_dd;
    }
    const double n = static_cast<double>(cfg.steps_per_epoch);
    res.log.push_back({epoch + 1, ts.step_count, sums.loss_d / n,
                       sums.loss_g_main / n, sums.loss_ddd / n,
                       sums.loss_g_dd / n, !cfg.ablation_no_dd});
    if (!out_dir.empty() && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      save_checkpoint(assemble(),
                      (std::filesystem::path(out_dir) / "checkpoint.json")
                          .string());
      write_train_log(res.log, (std::filesystem::path(out_dir) / "train_log.csv")
                                   .string());
    }
  }
  res.checkpoint = assemble();
  return res;
}

}  // namespace driftforge
