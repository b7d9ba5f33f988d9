#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsfpo/curriculum.hpp"
#include "dsfpo/tensor.hpp"

namespace dsfpo {

// Everything needed to resume a run exactly: parameters, optimizer moments,
// curriculum support, named rng stream states and per-environment state
// blobs. Binary, little-endian, versioned.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string config_text;
  uint64_t config_hash = 0;
  uint64_t iteration = 0;

  std::vector<std::pair<std::string, Tensor>> params;

  struct AdamBlob {
    long step = 0;
    std::vector<std::pair<std::string, Tensor>> m;
    std::vector<std::pair<std::string, Tensor>> v;
  };
  AdamBlob rl_opt;
  AdamBlob est_opt;

  // Curriculum support bitmaps.
  int grid_cells_per_axis = 0;
  std::vector<uint8_t> grid_cmd_weight;
  std::vector<uint8_t> grid_level_weight;

  std::vector<std::pair<std::string, std::array<uint64_t, 4>>> rng_streams;

  // Opaque per-environment resume state (world state, accumulators, feature
  // history), written by the trainer.
  std::vector<std::vector<double>> env_blobs;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
// Throws CheckpointError: corrupt on truncation/bad magic, version_mismatch
// on unknown versions.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dsfpo
