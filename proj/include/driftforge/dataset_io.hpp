#pragma once

#include <string>

#include "driftforge/device.hpp"

namespace driftforge {

// dataset.csv carries the trajectories; a sidecar JSON next to it carries
// seed, device parameters, and timing so downstream stages can rebuild the
// exact generating process.
std::string meta_path_for(const std::string& csv_path);

void write_dataset_csv(const DriftDataset& ds, const std::string& path);
void write_dataset_meta(const DriftDataset& ds, const DeviceParams& p,
                        const std::string& path);

DriftDataset read_dataset_csv(const std::string& path);
DeviceParams read_dataset_meta(const std::string& path);

struct LoadedDataset {
  DriftDataset data;
  DeviceParams params;
};
LoadedDataset load_dataset(const std::string& csv_path);

}  // namespace driftforge
