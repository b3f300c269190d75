#include "driftforge/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "driftforge/errors.hpp"
#include "driftforge/hashing.hpp"

namespace driftforge {

namespace {

using nlohmann::json;

json net_to_json(const DenseNet& net) {
  json layers = json::array();
  for (const auto& l : net.layers)
    layers.push_back({{"in", l.in}, {"out", l.out}, {"act", to_string(l.act)}});
  return {{"layers", layers}, {"params", net.params}};
}

DenseNet net_from_json(const json& j) {
  DenseNet net;
  std::size_t total = 0;
  for (const auto& lj : j.at("layers")) {
    LayerSpec spec;
    spec.in = lj.at("in").get<int>();
    spec.out = lj.at("out").get<int>();
    spec.act = activation_from_string(lj.at("act").get<std::string>());
    if (spec.in < 1 || spec.out < 1)
      throw ValidationError("checkpoint: bad layer dimensions");
    if (!net.layers.empty() && spec.in != net.layers.back().out)
      throw ValidationError("checkpoint: layer dimensions do not chain");
    net.offsets.push_back(total);
    total += static_cast<std::size_t>(spec.out) * spec.in + spec.out;
    net.layers.push_back(spec);
  }
  net.params = j.at("params").get<std::vector<double>>();
  if (net.params.size() != total)
    throw ValidationError("checkpoint: parameter count does not match architecture");
  return net;
}

json adam_to_json(const AdamState& st) {
  return {{"m", st.m},       {"v", st.v},         {"t", st.t},
          {"lr", st.lr},     {"beta1", st.beta1}, {"beta2", st.beta2},
          {"eps", st.eps}};
}

AdamState adam_from_json(const json& j, std::size_t n_params) {
  AdamState st;
  st.m = j.at("m").get<std::vector<double>>();
  st.v = j.at("v").get<std::vector<double>>();
  st.t = j.at("t").get<long long>();
  st.lr = j.at("lr").get<double>();
  st.beta1 = j.at("beta1").get<double>();
  st.beta2 = j.at("beta2").get<double>();
  st.eps = j.at("eps").get<double>();
  if (st.m.size() != n_params || st.v.size() != n_params)
    throw ValidationError("checkpoint: optimizer state does not match parameters");
  return st;
}

json config_to_json(const TrainConfig& c) {
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

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  c.batch = j.at("batch").get<int>();
  c.s_main = j.at("s_main").get<int>();
  c.s_dd = j.at("s_dd").get<int>();
  c.q_max = j.at("q_max").get<int>();
  c.d_min = j.at("d_min").get<int>();
  c.d_max = j.at("d_max").get<int>();
  c.dd_min = j.at("dd_min").get<double>();
  c.dd_max = j.at("dd_max").get<double>();
  c.n_pack = j.at("n_pack").get<int>();
  c.z_dim = j.at("z_dim").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ablation_no_dd = j.at("ablation_no_dd").get<bool>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.g_embed = j.at("g_embed").get<int>();
  c.g_hidden = j.at("g_hidden").get<int>();
  c.d_hidden = j.at("d_hidden").get<int>();
  return c;
}

json stats_to_json(const StatsFile& sf) {
  return {{"mu_R", sf.stats.mu_r},
          {"sigma_R", sf.stats.sigma_r},
          {"mu_Dbar", sf.stats.mu_diff},
          {"sigma_Dbar", sf.stats.sigma_diff},
          {"dataset_hash", sf.dataset_hash}};
}

StatsFile stats_from_json(const json& j) {
  StatsFile sf;
  sf.stats.mu_r = j.at("mu_R").get<double>();
  sf.stats.sigma_r = j.at("sigma_R").get<double>();
  sf.stats.mu_diff = j.at("mu_Dbar").get<double>();
  sf.stats.sigma_diff = j.at("sigma_Dbar").get<double>();
  sf.dataset_hash = j.at("dataset_hash").get<std::string>();
  return sf;
}

constexpr int kFormatVersion = 1;

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  json j;
  j["format_version"] = kFormatVersion;
  j["step_count"] = ck.step_count;
  j["config"] = config_to_json(ck.config);
  j["stats"] = stats_to_json(ck.stats);
  j["stats_hash"] = hash_hex(stats_fingerprint(ck.stats));
  j["nets"] = {{"generator",
                {{"z_dim", ck.nets.g.z_dim},
                 {"delay_proc", net_to_json(ck.nets.g.delay_proc)},
                 {"res_proc", net_to_json(ck.nets.g.res_proc)},
                 {"combined", net_to_json(ck.nets.g.combined)}}},
               {"discriminator",
                {{"n_pack", ck.nets.d.n_pack},
                 {"s", ck.nets.d.s},
                 {"cond_proc", net_to_json(ck.nets.d.cond_proc)},
                 {"seq_proc", net_to_json(ck.nets.d.seq_proc)},
                 {"combined", net_to_json(ck.nets.d.combined)}}},
               {"delay_discriminator",
                {{"n_pack", ck.nets.d_dd.n_pack},
                 {"s", ck.nets.d_dd.s},
                 {"cond_proc", net_to_json(ck.nets.d_dd.cond_proc)},
                 {"seq_proc", net_to_json(ck.nets.d_dd.seq_proc)},
                 {"combined", net_to_json(ck.nets.d_dd.combined)}}}};
  j["optimizers"] = {{"generator",
                      {{"delay", adam_to_json(ck.opt_g.delay)},
                       {"res", adam_to_json(ck.opt_g.res)},
                       {"combined", adam_to_json(ck.opt_g.combined)}}},
                     {"discriminator",
                      {{"cond", adam_to_json(ck.opt_d.cond)},
                       {"seq", adam_to_json(ck.opt_d.seq)},
                       {"combined", adam_to_json(ck.opt_d.combined)}}},
                     {"delay_discriminator",
                      {{"cond", adam_to_json(ck.opt_ddd.cond)},
                       {"seq", adam_to_json(ck.opt_ddd.seq)},
                       {"combined", adam_to_json(ck.opt_ddd.combined)}}}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
  if (!out) throw ValidationError("failed to flush checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("malformed checkpoint " + path + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw ValidationError("checkpoint " + path + ": unsupported format version");
    Checkpoint ck;
    ck.format_version = kFormatVersion;
    ck.step_count = j.at("step_count").get<long long>();
    ck.config = config_from_json(j.at("config"));
    ck.stats = stats_from_json(j.at("stats"));
    const auto& nets = j.at("nets");
    const auto& gj = nets.at("generator");
    ck.nets.g.z_dim = gj.at("z_dim").get<int>();
    ck.nets.g.delay_proc = net_from_json(gj.at("delay_proc"));
    ck.nets.g.res_proc = net_from_json(gj.at("res_proc"));
    ck.nets.g.combined = net_from_json(gj.at("combined"));
    const auto load_disc = [](const json& dj) {
      DiscriminatorNet d;
      d.n_pack = dj.at("n_pack").get<int>();
      d.s = dj.at("s").get<int>();
      d.cond_proc = net_from_json(dj.at("cond_proc"));
      d.seq_proc = net_from_json(dj.at("seq_proc"));
      d.combined = net_from_json(dj.at("combined"));
      return d;
    };
    ck.nets.d = load_disc(nets.at("discriminator"));
    ck.nets.d_dd = load_disc(nets.at("delay_discriminator"));
    const auto& opts = j.at("optimizers");
    const auto& og = opts.at("generator");
    ck.opt_g.delay =
        adam_from_json(og.at("delay"), ck.nets.g.delay_proc.param_count());
    ck.opt_g.res = adam_from_json(og.at("res"), ck.nets.g.res_proc.param_count());
    ck.opt_g.combined =
        adam_from_json(og.at("combined"), ck.nets.g.combined.param_count());
    const auto load_disc_opt = [](const json& oj, const DiscriminatorNet& d) {
      DiscOptimizer o;
      o.cond = adam_from_json(oj.at("cond"), d.cond_proc.param_count());
      o.seq = adam_from_json(oj.at("seq"), d.seq_proc.param_count());
      o.combined = adam_from_json(oj.at("combined"), d.combined.param_count());
      return o;
    };
    ck.opt_d = load_disc_opt(opts.at("discriminator"), ck.nets.d);
    ck.opt_ddd = load_disc_opt(opts.at("delay_discriminator"), ck.nets.d_dd);
    const std::string recorded = j.at("stats_hash").get<std::string>();
    if (recorded != hash_hex(stats_fingerprint(ck.stats)))
      throw ValidationError("checkpoint " + path + ": stats fingerprint mismatch");
    return ck;
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint " + path + " missing fields: " + e.what());
  }
}

void require_stats_match(const Checkpoint& ck, const StatsFile& external) {
  const auto a = stats_fingerprint(ck.stats);
  const auto b = stats_fingerprint(external);
  if (a != b)
    throw ValidationError(
        "stats fingerprint mismatch: checkpoint was trained with stats " +
        hash_hex(a) + " but was given stats " + hash_hex(b) +
        "; rerun with the stats file the model was trained against");
}

}  // namespace driftforge
