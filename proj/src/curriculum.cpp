#include "dsfpo/curriculum.hpp"

#include <cmath>

#include "dsfpo/errors.hpp"

namespace dsfpo {

void CurriculumConfig::validate() const {
  if (cmd_range <= 0 || cmd_cell <= 0) throw ConfigError("curriculum: ranges must be positive");
  const double cells = 2.0 * cmd_range / cmd_cell;
  if (std::fabs(cells - std::round(cells)) > 1e-9)
    throw ConfigError("curriculum: cmd_cell must divide the command range");
  if (max_difficulty < 0 || init_difficulty_max < 0 || init_difficulty_max > max_difficulty)
    throw ConfigError("curriculum: bad difficulty bounds");
  if (init_cmd_range <= 0 || init_cmd_range > cmd_range)
    throw ConfigError("curriculum: init_cmd_range outside grid");
}

CurriculumGrid init_grid(const CurriculumConfig& cfg) {
  cfg.validate();
  CurriculumGrid g;
  g.cfg = cfg;
  g.cells_per_axis = int(std::round(2.0 * cfg.cmd_range / cfg.cmd_cell));
  g.cmd_weight.assign(std::size_t(g.cells_per_axis) * std::size_t(g.cells_per_axis), 0);
  for (int y = 0; y < g.cells_per_axis; ++y)
    for (int x = 0; x < g.cells_per_axis; ++x) {
      const bool inside = std::fabs(g.cell_center(x)) <= cfg.init_cmd_range + 1e-9 &&
                          std::fabs(g.cell_center(y)) <= cfg.init_cmd_range + 1e-9;
      if (inside)
        g.cmd_weight[std::size_t(y) * std::size_t(g.cells_per_axis) + std::size_t(x)] = 1;
    }
  g.level_weight.assign(std::size_t(cfg.max_difficulty) + 1, 0);
  for (int t = 0; t <= cfg.init_difficulty_max; ++t) g.level_weight[std::size_t(t)] = 1;
  return g;
}

int CurriculumGrid::unlocked_cmd_cells() const {
  int n = 0;
  for (uint8_t w : cmd_weight) n += w != 0;
  return n;
}

int CurriculumGrid::unlocked_levels() const {
  int n = 0;
  for (uint8_t w : level_weight) n += w != 0;
  return n;
}

double CurriculumGrid::command_unlocked_fraction() const {
  return double(unlocked_cmd_cells()) / double(cmd_weight.size());
}

double CurriculumGrid::difficulty_unlocked_fraction() const {
  return double(unlocked_levels()) / double(level_weight.size());
}

CurriculumSample curriculum_sample(const CurriculumGrid& grid, Rng& rng) {
  const int n_cells = grid.unlocked_cmd_cells();
  const int n_levels = grid.unlocked_levels();
  if (n_cells == 0 || n_levels == 0)
    throw ConfigError("curriculum: no unlocked cells to sample");
  CurriculumSample s;
  int pick = int(rng.uniform_index(uint64_t(n_cells)));
  for (int y = 0; y < grid.cells_per_axis && pick >= 0; ++y)
    for (int x = 0; x < grid.cells_per_axis; ++x) {
      if (!grid.cmd_unlocked(x, y)) continue;
      if (pick == 0) {
        s.cell_x = x;
        s.cell_y = y;
        pick = -1;
        break;
      }
      --pick;
    }
  const double half = grid.cfg.cmd_cell / 2.0;
  s.cmd_x = grid.cell_center(s.cell_x) + rng.uniform(-half, half);
  s.cmd_y = grid.cell_center(s.cell_y) + rng.uniform(-half, half);

  pick = int(rng.uniform_index(uint64_t(n_levels)));
  for (int t = 0; t < int(grid.level_weight.size()); ++t) {
    if (!grid.level_weight[std::size_t(t)]) continue;
    if (pick == 0) {
      s.difficulty = t;
      break;
    }
    --pick;
  }
  return s;
}

EpisodeOutcome evaluate_gates(const EpisodeStats& stats, const CurriculumConfig& cfg) {
  EpisodeOutcome o;
  o.cell_x = stats.cell_x;
  o.cell_y = stats.cell_y;
  o.difficulty = stats.difficulty;
  o.cmd_success = stats.kernel_mean > cfg.gate_kernel_threshold;
  o.difficulty_success =
      stats.ball_disp_along_cmd > cfg.d_th1 && stats.final_robot_ball_dist < cfg.d_th2;
  return o;
}

void curriculum_update(CurriculumGrid& grid, const EpisodeOutcome& outcome) {
  if (outcome.cmd_success) {
    const int n = grid.cells_per_axis;
    const auto unlock = [&](int x, int y) {
      if (x < 0 || x >= n || y < 0 || y >= n) return;  // boundary clamp
      grid.cmd_weight[std::size_t(y) * std::size_t(n) + std::size_t(x)] = 1;
    };
    unlock(outcome.cell_x - 1, outcome.cell_y);
    unlock(outcome.cell_x + 1, outcome.cell_y);
    unlock(outcome.cell_x, outcome.cell_y - 1);
    unlock(outcome.cell_x, outcome.cell_y + 1);
  }
  if (outcome.difficulty_success) {
    const int next = outcome.difficulty + 1;
    if (next < int(grid.level_weight.size())) grid.level_weight[std::size_t(next)] = 1;
  }
}

}  // namespace dsfpo
