#pragma once
#include <cstdint>
#include <vector>

#include "dsfpo/rng.hpp"

namespace dsfpo {

struct CurriculumConfig {
  double cmd_range = 1.5;       // command grid spans [-cmd_range, cmd_range]^2
  double cmd_cell = 0.1;        // m/s per cell
  double init_cmd_range = 0.5;  // initially unlocked box
  int max_difficulty = 5;
  int init_difficulty_max = 1;
  double d_th1 = 3.0;           // ball displacement along the command, m
  double d_th2 = 1.0;           // final robot-ball distance, m
  double gate_kernel_threshold = 0.5;

  void validate() const;
};

// Binary-weight sampling lattice over commands and difficulty levels. The two
// factors are sampled independently; renormalization is implicit in sampling
// uniformly over weight-1 cells. Weights only ever move 0 -> 1.
struct CurriculumGrid {
  CurriculumConfig cfg;
  int cells_per_axis = 0;
  std::vector<uint8_t> cmd_weight;    // [cells_per_axis^2], index = y * cells + x
  std::vector<uint8_t> level_weight;  // [max_difficulty + 1]

  bool cmd_unlocked(int x, int y) const {
    return cmd_weight[std::size_t(y) * std::size_t(cells_per_axis) + std::size_t(x)] != 0;
  }
  double cell_center(int i) const {
    return -cfg.cmd_range + cfg.cmd_cell * (double(i) + 0.5);
  }
  int unlocked_cmd_cells() const;
  int unlocked_levels() const;
  double command_unlocked_fraction() const;
  double difficulty_unlocked_fraction() const;
};

struct CurriculumSample {
  double cmd_x = 0, cmd_y = 0;
  int difficulty = 0;
  int cell_x = 0, cell_y = 0;
};

// Reduction of one finished episode, enough to evaluate both gates.
struct EpisodeStats {
  double kernel_mean = 0.0;            // episode mean of the velocity-error kernel
  double ball_disp_along_cmd = 0.0;    // m
  double final_robot_ball_dist = 0.0;  // m
  int cell_x = 0, cell_y = 0;
  int difficulty = 0;
};

struct EpisodeOutcome {
  bool cmd_success = false;
  bool difficulty_success = false;
  int cell_x = 0, cell_y = 0;
  int difficulty = 0;
};

CurriculumGrid init_grid(const CurriculumConfig& cfg);

// Uniform over weight-1 command cells (then uniform inside the cell), and
// independently uniform over weight-1 difficulty levels.
CurriculumSample curriculum_sample(const CurriculumGrid& grid, Rng& rng);

EpisodeOutcome evaluate_gates(const EpisodeStats& stats, const CurriculumConfig& cfg);

// Success unlocks the four axis neighbors of the source cell (command gate)
// and the next difficulty level (terrain gate); failures change nothing.
void curriculum_update(CurriculumGrid& grid, const EpisodeOutcome& outcome);

}  // namespace dsfpo
