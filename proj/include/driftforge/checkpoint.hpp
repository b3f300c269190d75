#pragma once

#include <string>

#include "driftforge/cgan.hpp"

namespace driftforge {

// Versioned JSON bundle of all three networks, optimizer state, the training
// config echo, and the normalization stats (plus their fingerprint). Loading
// reproduces parameters bit-exactly.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Refuses a checkpoint/stats pairing whose fingerprints disagree.
void require_stats_match(const Checkpoint& ck, const StatsFile& external);

}  // namespace driftforge
