#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "driftforge/checkpoint.hpp"
#include "driftforge/dataset_io.hpp"
#include "driftforge/errors.hpp"
#include "driftforge/evaluation.hpp"
#include "driftforge/hashing.hpp"
#include "driftforge/quantizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace driftforge;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("bad JSON in " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw ValidationError("config root must be a JSON object: " + path);
  return j;
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field '") + key +
                          "': " + e.what());
  }
}

void apply_device_json(const json& j, DeviceParams& p) {
  maybe_get(j, "n_switches", p.n_switches);
  maybe_get(j, "n_thresh", p.n_thresh);
  maybe_get(j, "v_barrier", p.v_barrier);
  maybe_get(j, "g_parallel", p.g_parallel);
  maybe_get(j, "g_step", p.g_step);
  maybe_get(j, "v_offset", p.v_offset);
  maybe_get(j, "temperature", p.temperature);
  maybe_get(j, "k_boltzmann", p.k_boltzmann);
  maybe_get(j, "q_electron", p.q_electron);
  maybe_get(j, "attempt_rate", p.attempt_rate);
}

json device_to_json(const DeviceParams& p) {
  return {{"n_switches", p.n_switches},
          {"n_thresh", p.n_thresh},
          {"v_barrier", p.v_barrier},
          {"g_parallel", p.g_parallel},
          {"g_step", p.g_step},
          {"v_offset", p.v_offset},
          {"temperature", p.temperature},
          {"k_boltzmann", p.k_boltzmann},
          {"q_electron", p.q_electron},
          {"attempt_rate", p.attempt_rate}};
}

void apply_train_json(const json& j, TrainConfig& c) {
  maybe_get(j, "lr", c.lr);
  maybe_get(j, "epochs", c.epochs);
  maybe_get(j, "steps_per_epoch", c.steps_per_epoch);
  maybe_get(j, "batch", c.batch);
  maybe_get(j, "s_main", c.s_main);
  maybe_get(j, "s_dd", c.s_dd);
  maybe_get(j, "q_max", c.q_max);
  maybe_get(j, "d_min", c.d_min);
  maybe_get(j, "d_max", c.d_max);
  maybe_get(j, "dd_min", c.dd_min);
  maybe_get(j, "dd_max", c.dd_max);
  maybe_get(j, "n_pack", c.n_pack);
  maybe_get(j, "z_dim", c.z_dim);
  maybe_get(j, "seed", c.seed);
  maybe_get(j, "ablation_no_dd", c.ablation_no_dd);
  maybe_get(j, "checkpoint_every", c.checkpoint_every);
  maybe_get(j, "g_embed", c.g_embed);
  maybe_get(j, "g_hidden", c.g_hidden);
  maybe_get(j, "d_hidden", c.d_hidden);
}

json train_to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"batch", c.batch},
          {"s_main", c.s_main},
          {"s_dd", c.s_dd},
          {"q_max", c.q_max},
          {"d_min", c.d_min},
          {"d_max", c.d_max},
          {"dd_min", c.dd_min},
          {"dd_max", c.dd_max},
          {"n_pack", c.n_pack},
          {"z_dim", c.z_dim},
          {"seed", c.seed},
          {"ablation_no_dd", c.ablation_no_dd},
          {"checkpoint_every", c.checkpoint_every},
          {"g_embed", c.g_embed},
          {"g_hidden", c.g_hidden},
          {"d_hidden", c.d_hidden}};
}

void apply_quantizer_json(const json& j, QuantizerConfig& q) {
  maybe_get(j, "rho", q.rho);
  maybe_get(j, "lambda1", q.lambda1);
  maybe_get(j, "lambda2", q.lambda2);
  maybe_get(j, "r_qmin", q.r_qmin);
  maybe_get(j, "r_qmax", q.r_qmax);
  maybe_get(j, "mc_trials", q.mc_trials);
  maybe_get(j, "lr", q.lr);
  maybe_get(j, "plateau_patience", q.plateau_patience);
  maybe_get(j, "lr_decay", q.lr_decay);
  maybe_get(j, "max_steps", q.max_steps);
  maybe_get(j, "convergence_tol", q.convergence_tol);
  maybe_get(j, "convergence_window", q.convergence_window);
}

json quantizer_to_json(const QuantizerConfig& q) {
  return {{"rho", q.rho},
          {"lambda1", q.lambda1},
          {"lambda2", q.lambda2},
          {"r_qmin", q.r_qmin},
          {"r_qmax", q.r_qmax},
          {"mc_trials", q.mc_trials},
          {"lr", q.lr},
          {"plateau_patience", q.plateau_patience},
          {"lr_decay", q.lr_decay},
          {"max_steps", q.max_steps},
          {"convergence_tol", q.convergence_tol},
          {"convergence_window", q.convergence_window}};
}

int resolve_threads(const CLI::Option* opt, int flag_val) {
  if (opt != nullptr && opt->count() > 0) {
    if (flag_val < 1) throw ValidationError("--threads must be >= 1");
    return flag_val;
  }
  if (const char* env = std::getenv("DRIFTFORGE_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ValidationError("DRIFTFORGE_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return 1;
}

fs::path prep_out(const std::string& out) {
  fs::path p = out.empty() ? fs::path(".") : fs::path(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p))
    throw ValidationError("cannot create output directory: " + out);
  return p;
}

void write_manifest(const fs::path& out_dir, const json& m) {
  const fs::path path = out_dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << m.dump(2) << '\n';
  if (!out) throw ValidationError("write failed for " + path.string());
}

json hash_outputs(const fs::path& out_dir,
                  const std::vector<std::string>& names) {
  json h = json::object();
  for (const auto& name : names)
    h[name] = hash_file_hex((out_dir / name).string());
  return h;
}

struct GenArgs {
  std::string config, out = ".", method = "tau_leap";
  std::uint64_t seed = 1;
  std::int64_t count = 5000;
  double rmin = 100.0, rmax = 750000.0, ttot = 1000.0, tsample = 1.0;
  int threads = 1;
};

void setup_gen(CLI::App& app) {
  auto* cmd = app.add_subcommand("gen-dataset",
                                 "simulate a drift dataset onto disk");
  auto a = std::make_shared<GenArgs>();
  cmd->add_option("--config", a->config, "JSON config file");
  cmd->add_option("--out", a->out, "output directory");
  auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");
  auto* o_count = cmd->add_option("--count", a->count, "number of series");
  auto* o_rmin = cmd->add_option("--rmin", a->rmin, "lowest initial resistance, ohms");
  auto* o_rmax = cmd->add_option("--rmax", a->rmax, "highest initial resistance, ohms");
  auto* o_ttot = cmd->add_option("--ttot", a->ttot, "series duration, seconds");
  auto* o_tsample = cmd->add_option("--tsample", a->tsample, "sampling interval, seconds");
  auto* o_method =
      cmd->add_option("--method", a->method, "tau_leap, gillespie or exact");
  auto* o_threads = cmd->add_option("--threads", a->threads, "simulation fan-out");

  cmd->callback([=] {
    json cfg = a->config.empty() ? json::object() : load_json_file(a->config);
    std::uint64_t seed = 1;
    std::int64_t count = 5000;
    double rmin = 100.0, rmax = 750000.0, ttot = 1000.0, tsample = 1.0;
    std::string method = "tau_leap";
    DeviceParams dev;
    maybe_get(cfg, "seed", seed);
    maybe_get(cfg, "count", count);
    maybe_get(cfg, "r_min", rmin);
    maybe_get(cfg, "r_max", rmax);
    maybe_get(cfg, "t_tot", ttot);
    maybe_get(cfg, "t_sample", tsample);
    maybe_get(cfg, "method", method);
    if (cfg.contains("device")) apply_device_json(cfg.at("device"), dev);
    if (o_seed->count()) seed = a->seed;
    if (o_count->count()) count = a->count;
    if (o_rmin->count()) rmin = a->rmin;
    if (o_rmax->count()) rmax = a->rmax;
    if (o_ttot->count()) ttot = a->ttot;
    if (o_tsample->count()) tsample = a->tsample;
    if (o_method->count()) method = a->method;
    const int threads = resolve_threads(o_threads, a->threads);
    const StepMethod m = step_method_from_string(method);

    const fs::path out = prep_out(a->out);
    DriftDataset ds = generate_dataset(count, rmin, rmax, ttot, tsample, dev,
                                       seed, m, threads);
    write_dataset_csv(ds, (out / "dataset.csv").string());
    write_dataset_meta(ds, dev, (out / "dataset.meta.json").string());

    json manifest = {
        {"command", "gen-dataset"},
        {"config",
         {{"seed", seed},
          {"count", count},
          {"r_min", rmin},
          {"r_max", rmax},
          {"t_tot", ttot},
          {"t_sample", tsample},
          {"method", to_string(m)},
          {"threads", threads},
          {"device", device_to_json(dev)}}},
        {"inputs", json::object()},
        {"outputs", hash_outputs(out, {"dataset.csv", "dataset.meta.json"})}};
    write_manifest(out, manifest);
    std::cout << "wrote " << ds.series.size() << " series, "
              << ds.series.size() * (ds.series.empty() ? 0 : ds.series[0].values.size())
              << " rows to " << (out / "dataset.csv").string() << "\n";
  });
}

struct StatsArgs {
  std::string dataset, out = ".";
};

void setup_stats(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "stats", "compute normalization statistics for a dataset");
  auto a = std::make_shared<StatsArgs>();
  cmd->add_option("--dataset", a->dataset, "dataset CSV")->required();
  cmd->add_option("--out", a->out, "output directory");

  cmd->callback([=] {
    DriftDataset ds = read_dataset_csv(a->dataset);
    StatsFile sf;
    sf.stats = compute_stats(ds);
    sf.dataset_hash = hash_file_hex(a->dataset);
    const fs::path out = prep_out(a->out);
    write_stats(sf, (out / "stats.json").string());
    json manifest = {{"command", "stats"},
                     {"config", json::object()},
                     {"inputs", {{"dataset", sf.dataset_hash}}},
                     {"outputs", hash_outputs(out, {"stats.json"})},
                     {"results",
                      {{"mu_R", sf.stats.mu_r},
                       {"sigma_R", sf.stats.sigma_r},
                       {"mu_Dbar", sf.stats.mu_diff},
                       {"sigma_Dbar", sf.stats.sigma_diff}}}};
    write_manifest(out, manifest);
    std::cout << "stats: mu_R=" << sf.stats.mu_r
              << " sigma_R=" << sf.stats.sigma_r
              << " mu_Dbar=" << sf.stats.mu_diff
              << " sigma_Dbar=" << sf.stats.sigma_diff << "\n";
  });
}

struct TrainArgs {
  std::string dataset, stats, config, out = ".", resume;
  int epochs = 0, steps_per_epoch = 0, batch = 0, checkpoint_every = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  bool ablation = false;
};

void setup_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "train the drift model");
  auto a = std::make_shared<TrainArgs>();
  cmd->add_option("--dataset", a->dataset, "dataset CSV")->required();
  cmd->add_option("--stats", a->stats, "normalization stats JSON")->required();
  cmd->add_option("--config", a->config, "JSON config file");
  cmd->add_option("--out", a->out, "output directory");
  cmd->add_option("--resume", a->resume, "checkpoint to continue from");
  auto* o_epochs = cmd->add_option("--epochs", a->epochs, "total epochs");
  auto* o_spe = cmd->add_option("--steps-per-epoch", a->steps_per_epoch, "");
  auto* o_batch = cmd->add_option("--batch", a->batch, "sequences per step");
  auto* o_ck = cmd->add_option("--checkpoint-every", a->checkpoint_every,
                               "epochs between periodic checkpoints");
  auto* o_lr = cmd->add_option("--lr", a->lr, "Adam learning rate");
  auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");
  auto* o_dd = cmd->add_flag("--ablation-no-dd", a->ablation,
                             "train without the delay discriminator");

  cmd->callback([=] {
    Checkpoint resume_ck;
    const bool resuming = !a->resume.empty();
    TrainConfig tc;
    if (resuming) {
      resume_ck = load_checkpoint(a->resume);
      tc = resume_ck.config;
    }
    json cfg = a->config.empty() ? json::object() : load_json_file(a->config);
    apply_train_json(cfg, tc);
    if (o_epochs->count()) tc.epochs = a->epochs;
    if (o_spe->count()) tc.steps_per_epoch = a->steps_per_epoch;
    if (o_batch->count()) tc.batch = a->batch;
    if (o_ck->count()) tc.checkpoint_every = a->checkpoint_every;
    if (o_lr->count()) tc.lr = a->lr;
    if (o_seed->count()) tc.seed = a->seed;
    if (o_dd->count()) tc.ablation_no_dd = true;

    DriftDataset ds = read_dataset_csv(a->dataset);
    StatsFile sf = read_stats(a->stats);
    const std::string ds_hash = hash_file_hex(a->dataset);
    if (sf.dataset_hash != ds_hash)
      throw ValidationError(
          "stats file was computed from a different dataset (hash " +
          sf.dataset_hash + " vs " + ds_hash + ")");
    if (resuming) require_stats_match(resume_ck, sf);

    const fs::path out = prep_out(a->out);
    TrainResult res =
        train(ds, sf, tc, out.string(), resuming ? &resume_ck : nullptr);
    save_checkpoint(res.checkpoint, (out / "checkpoint.json").string());
    write_train_log(res.log, (out / "train_log.csv").string());

    json inputs = {{"dataset", ds_hash}, {"stats", hash_file_hex(a->stats)}};
    if (resuming) inputs["resume"] = hash_file_hex(a->resume);
    json manifest = {
        {"command", "train"},
        {"config", train_to_json(tc)},
        {"inputs", inputs},
        {"outputs", hash_outputs(out, {"checkpoint.json", "train_log.csv"})},
        {"results", {{"step_count", res.checkpoint.step_count}}}};
    write_manifest(out, manifest);
    std::cout << "trained to step " << res.checkpoint.step_count << ", wrote "
              << (out / "checkpoint.json").string() << "\n";
  });
}

struct EvalArgs {
  std::string checkpoint, dataset, out = ".", sampler = "gan";
  std::vector<double> rinits;
  std::vector<double> delays;
  std::vector<int> conditions;
  double rinit = 2e5, delay = 100.0;
  int total = kDefaultConsistencyTotal;
  int samples = 1000, steps = 10, per_init = 5, bins = 50, threads = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

Sampler build_sampler(const EvalArgs& a, Checkpoint& ck, bool& have_ck,
                      std::string& source) {
  if (a.sampler == "gan") {
    if (a.checkpoint.empty())
      throw ValidationError("--sampler gan requires --checkpoint");
    ck = load_checkpoint(a.checkpoint);
    have_ck = true;
    source = "gan";
    return make_gan_sampler(ck.nets.g, ck.stats.stats);
  }
  if (a.sampler == "oracle") {
    DeviceParams p;
    if (!a.dataset.empty()) p = read_dataset_meta(meta_path_for(a.dataset));
    source = "oracle";
    return make_oracle_sampler(p);
  }
  throw ValidationError("unknown --sampler: " + a.sampler);
}

std::uint64_t eval_seed(const EvalArgs& a, bool have_ck, const Checkpoint& ck) {
  if (a.seed_given) return a.seed;
  return have_ck ? ck.config.seed : 1;
}

void setup_eval(CLI::App& app) {
  auto* eval = app.add_subcommand("eval", "evaluation reports");
  eval->require_subcommand(1);

  {
    auto* cmd = eval->add_subcommand(
        "consistency", "same total delay reached through different step sizes");
    auto a = std::make_shared<EvalArgs>();
    a->rinits = kDefaultEvalRInits;
    a->conditions = kDefaultConsistencyConditions;
    cmd->add_option("--checkpoint", a->checkpoint, "model checkpoint")
        ->required();
    cmd->add_option("--out", a->out, "output directory");
    cmd->add_option("--rinits", a->rinits, "initial resistances, ohms")
        ->delimiter(',');
    cmd->add_option("--total", a->total, "total delay, seconds");
    cmd->add_option("--conditions", a->conditions,
                    "per-step delays; each must divide the total")
        ->delimiter(',');
    cmd->add_option("--samples", a->samples, "sequences per cell");
    auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");
    cmd->callback([=] {
      a->seed_given = o_seed->count() > 0;
      Checkpoint ck = load_checkpoint(a->checkpoint);
      const std::uint64_t seed = eval_seed(*a, true, ck);
      auto rows = delay_consistency(ck.nets.g, ck.stats.stats, a->rinits,
                                    a->total, a->conditions, a->samples, seed);
      const fs::path out = prep_out(a->out);
      write_consistency_csv(rows, (out / "consistency.csv").string());
      json manifest = {{"command", "eval consistency"},
                       {"config",
                        {{"r_inits", a->rinits},
                         {"total", a->total},
                         {"conditions", a->conditions},
                         {"samples", a->samples},
                         {"seed", seed}}},
                       {"inputs", {{"checkpoint", hash_file_hex(a->checkpoint)}}},
                       {"outputs", hash_outputs(out, {"consistency.csv"})}};
      write_manifest(out, manifest);
      std::cout << "wrote " << rows.size() << " consistency rows\n";
    });
  }

  {
    auto* cmd = eval->add_subcommand(
        "moments", "conditioned mean and spread of final resistance");
    auto a = std::make_shared<EvalArgs>();
    a->rinits = kDefaultEvalRInits;
    a->delays = kDefaultEvalDelays;
    cmd->add_option("--checkpoint", a->checkpoint, "model checkpoint");
    cmd->add_option("--dataset", a->dataset,
                    "dataset CSV; its sidecar supplies oracle device params");
    cmd->add_option("--sampler", a->sampler, "gan or oracle");
    cmd->add_option("--out", a->out, "output directory");
    cmd->add_option("--rinits", a->rinits, "initial resistances, ohms")
        ->delimiter(',');
    cmd->add_option("--delays", a->delays, "delays, seconds")->delimiter(',');
    cmd->add_option("--samples", a->samples, "draws per cell");
    auto* o_threads = cmd->add_option("--threads", a->threads, "cell fan-out");
    auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");
    cmd->callback([=] {
      a->seed_given = o_seed->count() > 0;
      Checkpoint ck;
      bool have_ck = false;
      std::string source;
      Sampler sampler = build_sampler(*a, ck, have_ck, source);
      const std::uint64_t seed = eval_seed(*a, have_ck, ck);
      const int threads = resolve_threads(o_threads, a->threads);
      auto rows = conditioned_moments(sampler, source, a->rinits, a->delays,
                                      a->samples, seed, threads);
      const fs::path out = prep_out(a->out);
      write_moments_csv(rows, (out / "moments.csv").string());
      json inputs = json::object();
      if (have_ck) inputs["checkpoint"] = hash_file_hex(a->checkpoint);
      if (!a->dataset.empty())
        inputs["dataset_meta"] = hash_file_hex(meta_path_for(a->dataset));
      json manifest = {{"command", "eval moments"},
                       {"config",
                        {{"sampler", source},
                         {"r_inits", a->rinits},
                         {"delays", a->delays},
                         {"samples", a->samples},
                         {"threads", threads},
                         {"seed", seed}}},
                       {"inputs", inputs},
                       {"outputs", hash_outputs(out, {"moments.csv"})}};
      write_manifest(out, manifest);
      std::cout << "wrote " << rows.size() << " moment rows\n";
    });
  }

  {
    auto* cmd = eval->add_subcommand(
        "histogram", "distribution of final resistance per delay");
    auto a = std::make_shared<EvalArgs>();
    a->delays = kDefaultEvalDelays;
    cmd->add_option("--checkpoint", a->checkpoint, "model checkpoint");
    cmd->add_option("--dataset", a->dataset,
                    "dataset CSV, required for --sampler data");
    cmd->add_option("--sampler", a->sampler, "gan, oracle or data");
    cmd->add_option("--out", a->out, "output directory");
    cmd->add_option("--rinit", a->rinit, "initial resistance, ohms");
    cmd->add_option("--delays", a->delays, "delays, seconds")->delimiter(',');
    cmd->add_option("--samples", a->samples, "draws per delay");
    cmd->add_option("--bins", a->bins, "histogram bins per delay");
    auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");
    cmd->callback([=] {
      a->seed_given = o_seed->count() > 0;
      std::vector<std::pair<double, std::vector<double>>> sets;
      json inputs = json::object();
      Checkpoint ck;
      bool have_ck = false;
      std::string source = "data";
      std::uint64_t seed = 1;
      if (a->sampler == "data") {
        if (a->dataset.empty())
          throw ValidationError("--sampler data requires --dataset");
        DriftDataset ds = read_dataset_csv(a->dataset);
        sets = dataset_finals(ds, a->delays);
        inputs["dataset"] = hash_file_hex(a->dataset);
      } else {
        Sampler sampler = build_sampler(*a, ck, have_ck, source);
        seed = eval_seed(*a, have_ck, ck);
        if (have_ck) inputs["checkpoint"] = hash_file_hex(a->checkpoint);
        if (!a->dataset.empty())
          inputs["dataset_meta"] = hash_file_hex(meta_path_for(a->dataset));
        if (a->samples < 1)
          throw ValidationError("--samples must be >= 1");
        for (std::size_t di = 0; di < a->delays.size(); ++di) {
          Rng rng = make_rng(seed, streams::eval, 3'000'000 + di, 0);
          std::vector<double> finals(a->samples);
          for (auto& v : finals)
            v = sampler(a->rinit, a->delays[di], rng);
          sets.emplace_back(a->delays[di], std::move(finals));
        }
      }
      HistogramReport report = final_value_histogram(sets, a->bins);
      const fs::path out = prep_out(a->out);
      write_histogram_csv(report, (out / "histogram.csv").string(),
                          (out / "histogram_stats.csv").string());
      json manifest = {
          {"command", "eval histogram"},
          {"config",
           {{"sampler", source},
            {"r_init", a->rinit},
            {"delays", a->delays},
            {"samples", a->samples},
            {"bins", a->bins},
            {"seed", seed}}},
          {"inputs", inputs},
          {"outputs",
           hash_outputs(out, {"histogram.csv", "histogram_stats.csv"})}};
      write_manifest(out, manifest);
      std::cout << "wrote " << report.rows.size() << " histogram rows\n";
    });
  }

  {
    auto* cmd = eval->add_subcommand("series", "sampled model trajectories");
    auto a = std::make_shared<EvalArgs>();
    a->rinits = kDefaultEvalRInits;
    cmd->add_option("--checkpoint", a->checkpoint, "model checkpoint")
        ->required();
    cmd->add_option("--out", a->out, "output directory");
    cmd->add_option("--rinits", a->rinits, "initial resistances, ohms")
        ->delimiter(',');
    cmd->add_option("--delay", a->delay, "delay per step, seconds");
    cmd->add_option("--steps", a->steps, "steps per trajectory");
    cmd->add_option("--per-init", a->per_init, "trajectories per start point");
    auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");
    cmd->callback([=] {
      a->seed_given = o_seed->count() > 0;
      Checkpoint ck = load_checkpoint(a->checkpoint);
      const std::uint64_t seed = eval_seed(*a, true, ck);
      auto rows = series_dump(ck.nets.g, ck.stats.stats, a->rinits, a->delay,
                              a->steps, a->per_init, seed);
      const fs::path out = prep_out(a->out);
      write_series_csv(rows, (out / "series.csv").string());
      json manifest = {{"command", "eval series"},
                       {"config",
                        {{"r_inits", a->rinits},
                         {"delay", a->delay},
                         {"steps", a->steps},
                         {"per_init", a->per_init},
                         {"seed", seed}}},
                       {"inputs", {{"checkpoint", hash_file_hex(a->checkpoint)}}},
                       {"outputs", hash_outputs(out, {"series.csv"})}};
      write_manifest(out, manifest);
      std::cout << "wrote " << rows.size() << " trajectory rows\n";
    });
  }
}

struct QuantArgs {
  std::string checkpoint, config, out = ".";
  int levels = 0, trials = 10000, repeats = 5;
  double delay = 0.0;
  std::vector<int> bits = {1, 2, 3, 4};
  std::vector<double> delays = {1.0, 10.0, 100.0};
  std::uint64_t seed = 0;
};

void setup_quantize(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "quantize", "optimize a storage scheme against the trained model");
  auto a = std::make_shared<QuantArgs>();
  cmd->add_option("--checkpoint", a->checkpoint, "model checkpoint")
      ->required();
  cmd->add_option("--levels", a->levels, "number of storage levels")
      ->required();
  cmd->add_option("--delay", a->delay, "read delay, seconds")->required();
  cmd->add_option("--config", a->config, "JSON config file");
  cmd->add_option("--out", a->out, "output directory");
  cmd->add_option("--trials", a->trials, "error-estimate draws per level");
  auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");

  cmd->callback([=] {
    Checkpoint ck = load_checkpoint(a->checkpoint);
    QuantizerConfig qc;
    if (!a->config.empty()) apply_quantizer_json(load_json_file(a->config), qc);
    const std::uint64_t seed = o_seed->count() ? a->seed : ck.config.seed;

    Rng opt_rng = make_rng(seed, streams::quantizer,
                           static_cast<std::uint64_t>(a->levels), 0);
    OptimizeResult opt =
        optimize(a->levels, a->delay, ck.nets.g, ck.stats.stats, qc, opt_rng);
    if (!opt.valid)
      throw ValidationError(
          "optimization ended on an invariant-violating scheme; widen the "
          "resistance range or reduce the level count");
    Sampler sampler = make_gan_sampler(ck.nets.g, ck.stats.stats);
    Rng eval_rng = make_rng(seed, streams::quantizer,
                            static_cast<std::uint64_t>(a->levels), 1);
    const double err = evaluate_error(opt.scheme, a->delay, sampler,
                                      ck.stats.stats, a->trials, eval_rng);

    const fs::path out = prep_out(a->out);
    write_scheme(opt.scheme, qc, ck.stats.stats, hash_file_hex(a->checkpoint),
                 (out / "scheme.json").string());
    json manifest = {
        {"command", "quantize"},
        {"config",
         {{"levels", a->levels},
          {"delay", a->delay},
          {"trials", a->trials},
          {"seed", seed},
          {"quantizer", quantizer_to_json(qc)}}},
        {"inputs", {{"checkpoint", hash_file_hex(a->checkpoint)}}},
        {"outputs", hash_outputs(out, {"scheme.json"})},
        {"results",
         {{"best_loss", opt.best_loss},
          {"steps", opt.trace.size()},
          {"error_gan", err}}}};
    write_manifest(out, manifest);
    std::cout << "levels=" << a->levels << " delay=" << a->delay
              << " error=" << err << "\n";
  });
}

void setup_sweep(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "quantize-sweep", "optimize schemes over a bits x delays grid");
  auto a = std::make_shared<QuantArgs>();
  cmd->add_option("--checkpoint", a->checkpoint, "model checkpoint")
      ->required();
  cmd->add_option("--bits", a->bits, "bit widths, 2^b levels each")
      ->delimiter(',');
  cmd->add_option("--delays", a->delays, "read delays, seconds")
      ->delimiter(',');
  cmd->add_option("--repeats", a->repeats, "experiments per cell");
  cmd->add_option("--trials", a->trials, "error-estimate draws per level");
  cmd->add_option("--config", a->config, "JSON config file");
  cmd->add_option("--out", a->out, "output directory");
  auto* o_seed = cmd->add_option("--seed", a->seed, "base RNG seed");

  cmd->callback([=] {
    if (a->repeats < 1) throw ValidationError("--repeats must be >= 1");
    for (int b : a->bits)
      if (b < 1 || b > 16) throw ValidationError("--bits entries must be in [1, 16]");
    Checkpoint ck = load_checkpoint(a->checkpoint);
    QuantizerConfig qc;
    if (!a->config.empty()) apply_quantizer_json(load_json_file(a->config), qc);
    const std::uint64_t seed = o_seed->count() ? a->seed : ck.config.seed;
    Sampler sampler = make_gan_sampler(ck.nets.g, ck.stats.stats);

    const fs::path out = prep_out(a->out);
    const fs::path csv_path = out / "sweep.csv";
    std::FILE* f = std::fopen(csv_path.string().c_str(), "w");
    if (!f) throw ValidationError("cannot write " + csv_path.string());
    std::fputs("bits,levels,delay,error_mean,error_stderr,experiments\n", f);
    json cells = json::array();
    for (int b : a->bits) {
      const int levels = 1 << b;
      for (std::size_t di = 0; di < a->delays.size(); ++di) {
        const double d = a->delays[di];
        std::vector<double> errs;
        for (int rep = 0; rep < a->repeats; ++rep) {
          const std::uint64_t cell =
              static_cast<std::uint64_t>(b) * 1000 + di;
          Rng opt_rng = make_rng(seed, streams::quantizer, cell, rep);
          OptimizeResult opt =
              optimize(levels, d, ck.nets.g, ck.stats.stats, qc, opt_rng);
          double err = 1.0;
          if (opt.valid) {
            Rng eval_rng =
                make_rng(seed, streams::quantizer, cell, 100'000 + rep);
            err = evaluate_error(opt.scheme, d, sampler, ck.stats.stats,
                                 a->trials, eval_rng);
          }
          errs.push_back(err);
        }
        double mean = 0.0;
        for (double e : errs) mean += e;
        mean /= errs.size();
        double se = 0.0;
        if (errs.size() > 1) {
          double ss = 0.0;
          for (double e : errs) ss += (e - mean) * (e - mean);
          se = std::sqrt(ss / (errs.size() - 1.0) / errs.size());
        }
        std::fprintf(f, "%d,%d,%.17g,%.17g,%.17g,%zu\n", b, levels, d, mean,
                     se, errs.size());
        cells.push_back({{"bits", b},
                         {"delay", d},
                         {"errors", errs}});
        std::cout << "bits=" << b << " delay=" << d << " error=" << mean
                  << "\n";
      }
    }
    if (std::fclose(f) != 0)
      throw ValidationError("write failed for " + csv_path.string());

    json manifest = {{"command", "quantize-sweep"},
                     {"config",
                      {{"bits", a->bits},
                       {"delays", a->delays},
                       {"repeats", a->repeats},
                       {"trials", a->trials},
                       {"seed", seed},
                       {"quantizer", quantizer_to_json(qc)}}},
                     {"inputs", {{"checkpoint", hash_file_hex(a->checkpoint)}}},
                     {"outputs", hash_outputs(out, {"sweep.csv"})},
                     {"results", {{"cells", cells}}}};
    write_manifest(out, manifest);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metastable-switch drift simulator, generative drift model and "
               "storage-scheme optimizer"};
  app.require_subcommand(1);
  setup_gen(app);
  setup_stats(app);
  setup_train(app);
  setup_eval(app);
  setup_quantize(app);
  setup_sweep(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
