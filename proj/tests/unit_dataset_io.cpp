#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "driftforge/dataset_io.hpp"
#include "driftforge/errors.hpp"
#include "driftforge/hashing.hpp"

using namespace driftforge;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("meta path derivation") {
  CHECK(meta_path_for("dataset.csv") == "dataset.meta.json");
  CHECK(meta_path_for("runs/a/dataset.csv") == "runs/a/dataset.meta.json");
  CHECK(meta_path_for("archive.bin") == "archive.bin.meta.json");
  CHECK(meta_path_for(".csv") == ".csv.meta.json");
}

TEST_CASE("file hashing is fnv-1a over raw bytes") {
  const std::string empty = tmp_path("df_hash_empty.bin");
  write_text(empty, "");
  CHECK(hash_file_hex(empty) == "cbf29ce484222325");
  const std::string abc = tmp_path("df_hash_abc.bin");
  write_text(abc, "abc");
  CHECK(hash_file_hex(abc) == "e71fa2190541574b");
  CHECK_THROWS_AS(hash_file_hex(tmp_path("df_hash_missing.bin")),
                  ValidationError);
  Fnv1a64 h;
  CHECK(hash_hex(h.digest()) == "cbf29ce484222325");
}

TEST_CASE("csv round trip is lossless and rewrites are byte identical") {
  DeviceParams p;
  const DriftDataset ds = generate_dataset(4, 100.0, 1000.0, 6.0, 2.0, p, 7);
  const std::string a = tmp_path("df_ds_a.csv");
  const std::string b = tmp_path("df_ds_b.csv");
  write_dataset_csv(ds, a);
  write_dataset_csv(ds, b);
  CHECK(hash_file_hex(a) == hash_file_hex(b));

  const DriftDataset back = read_dataset_csv(a);
  REQUIRE(back.series.size() == ds.series.size());
  for (std::size_t i = 0; i < ds.series.size(); ++i) {
    CHECK(back.series[i].values == ds.series[i].values);
    CHECK(back.series[i].r_init == ds.series[i].values.front());
    CHECK(back.series[i].t_sample == 2.0);
  }
  CHECK(back.t_sample == 2.0);
  CHECK(back.t_tot == 6.0);

  write_dataset_csv(back, b);
  CHECK(hash_file_hex(a) == hash_file_hex(b));
}

TEST_CASE("single-sample series fall back to unit spacing") {
  DriftDataset ds;
  ds.t_tot = 0.0;
  ds.t_sample = 5.0;
  ds.series.push_back({300.0, 5.0, {300.0}});
  ds.series.push_back({400.0, 5.0, {400.0}});
  const std::string path = tmp_path("df_ds_single.csv");
  write_dataset_csv(ds, path);
  const DriftDataset back = read_dataset_csv(path);
  CHECK(back.series.size() == 2);
  CHECK(back.t_sample == 1.0);
  CHECK(back.t_tot == 0.0);
}

TEST_CASE("meta sidecar round trips every device field") {
  DeviceParams p;
  p.n_switches = 123;
  p.n_thresh = 7;
  p.v_barrier = 0.3;
  p.g_parallel = 2e-6;
  p.g_step = 3e-8;
  p.v_offset = 0.11;
  p.temperature = 310.0;
  p.k_boltzmann = 1.4e-23;
  p.q_electron = 1.6e-19;
  p.attempt_rate = 44.0;
  DriftDataset ds;
  ds.seed = 99;
  ds.t_tot = 8.0;
  ds.t_sample = 4.0;
  ds.series.push_back({100.0, 4.0, {100.0, 110.0, 120.0}});
  const std::string csv = tmp_path("df_meta_round.csv");
  write_dataset_csv(ds, csv);
  write_dataset_meta(ds, p, meta_path_for(csv));

  const DeviceParams q = read_dataset_meta(meta_path_for(csv));
  CHECK(q.n_switches == 123);
  CHECK(q.n_thresh == 7);
  CHECK(q.v_barrier == 0.3);
  CHECK(q.g_parallel == 2e-6);
  CHECK(q.g_step == 3e-8);
  CHECK(q.v_offset == 0.11);
  CHECK(q.temperature == 310.0);
  CHECK(q.k_boltzmann == 1.4e-23);
  CHECK(q.q_electron == 1.6e-19);
  CHECK(q.attempt_rate == 44.0);

  const LoadedDataset loaded = load_dataset(csv);
  CHECK(loaded.params.n_switches == 123);
  CHECK(loaded.data.seed == 99);
  CHECK(loaded.data.t_tot == 8.0);
  CHECK(loaded.data.t_sample == 4.0);
  CHECK(loaded.data.series[0].t_sample == 4.0);
}

TEST_CASE("load without a sidecar keeps default params") {
  DriftDataset ds;
  ds.t_sample = 1.0;
  ds.series.push_back({100.0, 1.0, {100.0, 101.0}});
  const std::string csv = tmp_path("df_no_meta.csv");
  std::filesystem::remove(meta_path_for(csv));
  write_dataset_csv(ds, csv);
  const LoadedDataset loaded = load_dataset(csv);
  CHECK(loaded.params.n_switches == 1'800'000);
  CHECK(loaded.data.t_sample == 1.0);
}

TEST_CASE("malformed csv inputs are rejected") {
  const std::string path = tmp_path("df_bad.csv");
  const std::string head = "series_id,t_seconds,resistance_ohms\n";

  write_text(path, "time,resistance\n0,0,100\n");
  CHECK_THROWS_AS(read_dataset_csv(path), ValidationError);

  write_text(path, head);
  CHECK_THROWS_AS(read_dataset_csv(path), ValidationError);

  write_text(path, head + "0,zero,100\n");
  CHECK_THROWS_AS(read_dataset_csv(path), ValidationError);

  write_text(path, head + "0,0,100\n2,0,100\n");
  CHECK_THROWS_AS(read_dataset_csv(path), ValidationError);

  write_text(path, head + "0,0,100\n0,1,110\n1,0,100\n");
  CHECK_THROWS_AS(read_dataset_csv(path), ValidationError);

  write_text(path, head + "0,0,100\n0,1,-4\n");
  CHECK_THROWS_AS(read_dataset_csv(path), ValidationError);

  CHECK_THROWS_AS(read_dataset_csv(tmp_path("df_absent.csv")),
                  ValidationError);

  write_text(path, "{not json");
  CHECK_THROWS_AS(read_dataset_meta(path), ValidationError);
  write_text(path, "{\"seed\": 1}");
  CHECK_THROWS_AS(read_dataset_meta(path), ValidationError);
}

TEST_CASE("custom spacing is reconstructed from the time column") {
  DriftDataset ds;
  ds.t_tot = 7.5;
  ds.t_sample = 2.5;
  ds.series.push_back({10.0, 2.5, {10.0, 11.0, 12.0, 13.0}});
  const std::string path = tmp_path("df_spacing.csv");
  write_dataset_csv(ds, path);
  const DriftDataset back = read_dataset_csv(path);
  CHECK(back.t_sample == 2.5);
  CHECK(back.t_tot == 7.5);
}
