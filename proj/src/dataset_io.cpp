#include "driftforge/dataset_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftforge/errors.hpp"
#include "driftforge/hashing.hpp"

namespace driftforge {

std::string hash_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read file for hashing: " + path);
  Fnv1a64 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  return hash_hex(h.digest());
}

std::string meta_path_for(const std::string& csv_path) {
  const std::string suffix = ".csv";
  if (csv_path.size() > suffix.size() &&
      csv_path.compare(csv_path.size() - suffix.size(), suffix.size(),
                       suffix) == 0)
    return csv_path.substr(0, csv_path.size() - suffix.size()) + ".meta.json";
  return csv_path + ".meta.json";
}

void write_dataset_csv(const DriftDataset& ds, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ValidationError("cannot write dataset csv: " + path);
  std::fputs("series_id,t_seconds,resistance_ohms\n", f);
  for (std::size_t i = 0; i < ds.series.size(); ++i) {
    const auto& s = ds.series[i];
    for (std::size_t j = 0; j < s.values.size(); ++j) {
      // %.17g keeps the doubles lossless across the write/read round trip
      std::fprintf(f, "%zu,%.15g,%.17g\n", i,
                   static_cast<double>(j) * ds.t_sample, s.values[j]);
    }
  }
  if (std::fclose(f) != 0)
    throw ValidationError("failed to flush dataset csv: " + path);
}

namespace {

nlohmann::json params_to_json(const DeviceParams& p) {
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

DeviceParams params_from_json(const nlohmann::json& j) {
  DeviceParams p;
  p.n_switches = j.at("n_switches").get<std::int64_t>();
  p.n_thresh = j.at("n_thresh").get<std::int64_t>();
  p.v_barrier = j.at("v_barrier").get<double>();
  p.g_parallel = j.at("g_parallel").get<double>();
  p.g_step = j.at("g_step").get<double>();
  p.v_offset = j.at("v_offset").get<double>();
  p.temperature = j.at("temperature").get<double>();
  p.k_boltzmann = j.at("k_boltzmann").get<double>();
  p.q_electron = j.at("q_electron").get<double>();
  p.attempt_rate = j.at("attempt_rate").get<double>();
  return p;
}

}  // namespace

void write_dataset_meta(const DriftDataset& ds, const DeviceParams& p,
                        const std::string& path) {
  nlohmann::json j;
  j["seed"] = ds.seed;
  j["params"] = params_to_json(p);
  j["t_tot"] = ds.t_tot;
  j["t_sample"] = ds.t_sample;
  j["count"] = ds.series.size();
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dataset meta: " + path);
  out << j.dump(2) << "\n";
}

DriftDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read dataset csv: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("series_id,t_seconds,resistance_ohms", 0) != 0)
    throw ValidationError("dataset csv " + path + ": bad header");

  DriftDataset ds;
  long long current_id = -1;
  double first_t = 0.0, second_t = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const char* s = line.c_str();
    char* end = nullptr;
    const long long id = std::strtoll(s, &end, 10);
    if (end == s || *end != ',')
      throw ValidationError("dataset csv " + path + ": bad row: " + line);
    s = end + 1;
    const double t = std::strtod(s, &end);
    if (end == s || *end != ',')
      throw ValidationError("dataset csv " + path + ": bad row: " + line);
    s = end + 1;
    const double r = std::strtod(s, &end);
    if (end == s)
      throw ValidationError("dataset csv " + path + ": bad row: " + line);
    if (id != current_id) {
      if (id != current_id + 1)
        throw ValidationError("dataset csv " + path + ": series ids not consecutive");
      current_id = id;
      ds.series.emplace_back();
      first_t = t;
    } else if (ds.series.back().values.size() == 1) {
      second_t = t;
    }
    if (!(r > 0.0) || !std::isfinite(r))
      throw ValidationError("dataset csv " + path + ": non-positive resistance");
    ds.series.back().values.push_back(r);
  }
  if (ds.series.empty())
    throw ValidationError("dataset csv " + path + ": no data rows");

  const std::size_t len = ds.series.front().values.size();
  for (auto& s : ds.series) {
    if (s.values.size() != len)
      throw ValidationError("dataset csv " + path + ": ragged series lengths");
    s.r_init = s.values.front();
  }
  if (len < 1) throw ValidationError("dataset csv " + path + ": empty series");
  ds.t_sample = len > 1 ? second_t - first_t : 1.0;
  for (auto& s : ds.series) s.t_sample = ds.t_sample;
  ds.t_tot = ds.t_sample * static_cast<double>(len - 1);
  return ds;
}

DeviceParams read_dataset_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read dataset meta: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed dataset meta " + path + ": " + e.what());
  }
  try {
    return params_from_json(j.at("params"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset meta " + path + " missing fields: " + e.what());
  }
}

LoadedDataset load_dataset(const std::string& csv_path) {
  LoadedDataset out;
  out.data = read_dataset_csv(csv_path);
  const std::string meta = meta_path_for(csv_path);
  if (std::ifstream probe(meta); probe.good()) {
    out.params = read_dataset_meta(meta);
    std::ifstream in(meta);
    nlohmann::json j;
    in >> j;
    if (j.contains("seed")) out.data.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("t_tot")) out.data.t_tot = j["t_tot"].get<double>();
    if (j.contains("t_sample")) {
      out.data.t_sample = j["t_sample"].get<double>();
      for (auto& s : out.data.series) s.t_sample = out.data.t_sample;
    }
  }
  return out;
}

}  // namespace driftforge
