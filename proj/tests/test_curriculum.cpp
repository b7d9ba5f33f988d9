#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "dsfpo/curriculum.hpp"
#include "dsfpo/errors.hpp"

using namespace dsfpo;

TEST_CASE("initial grid") {
  const auto g = init_grid(CurriculumConfig{});
  CHECK(g.cells_per_axis == 30);
  // 10 x 10 cells centered at +-0.05 ... +-0.45.
  CHECK(g.unlocked_cmd_cells() == 100);
  // The cell containing (1.0, 1.0) lies outside the initial box.
  const int far = int(std::floor((1.0 + 1.5) / 0.1));
  CHECK(g.cell_center(far) == doctest::Approx(1.05).epsilon(1e-12));
  CHECK_FALSE(g.cmd_unlocked(far, far));
  // Difficulty levels 0 and 1 only.
  CHECK(g.level_weight[0] == 1);
  CHECK(g.level_weight[1] == 1);
  CHECK(g.level_weight[2] == 0);
  CHECK(g.unlocked_levels() == 2);
}

TEST_CASE("bad cell size is rejected") {
  CurriculumConfig cfg;
  cfg.cmd_cell = 0.07;
  CHECK_THROWS_AS(init_grid(cfg), ConfigError);
}

TEST_CASE("sampling stays inside the unlocked support") {
  auto g = init_grid(CurriculumConfig{});
  SUBCASE("single cell") {
    std::fill(g.cmd_weight.begin(), g.cmd_weight.end(), 0);
    g.cmd_weight[std::size_t(7) * 30 + 21] = 1;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      const auto s = curriculum_sample(g, rng);
      CHECK(s.cell_x == 21);
      CHECK(s.cell_y == 7);
      CHECK(std::fabs(s.cmd_x - g.cell_center(21)) <= 0.05 + 1e-12);
      CHECK(std::fabs(s.cmd_y - g.cell_center(7)) <= 0.05 + 1e-12);
    }
  }
  SUBCASE("initial box bound") {
    Rng rng(2);
    double max_abs = 0;
    for (int i = 0; i < 100000; ++i) {
      const auto s = curriculum_sample(g, rng);
      max_abs = std::max({max_abs, std::fabs(s.cmd_x), std::fabs(s.cmd_y)});
    }
    CHECK(max_abs <= 0.5);
  }
  SUBCASE("two levels are sampled evenly") {
    Rng rng(3);
    int level1 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
      if (curriculum_sample(g, rng).difficulty == 1) ++level1;
    CHECK(std::fabs(double(level1) / n - 0.5) < 0.01);
  }
}

TEST_CASE("gates") {
  const CurriculumConfig cfg;
  SUBCASE("perfect tracking passes the command gate") {
    EpisodeStats s;
    s.kernel_mean = 1.0;
    CHECK(evaluate_gates(s, cfg).cmd_success);
  }
  SUBCASE("a motionless ball fails the difficulty gate") {
    EpisodeStats s;
    s.ball_disp_along_cmd = 0.0;
    s.final_robot_ball_dist = 0.5;
    CHECK_FALSE(evaluate_gates(s, cfg).difficulty_success);
  }
  SUBCASE("the command gate is strict at the threshold") {
    EpisodeStats s;
    s.kernel_mean = 0.5;
    CHECK_FALSE(evaluate_gates(s, cfg).cmd_success);
    s.kernel_mean = std::nextafter(0.5, 1.0);
    CHECK(evaluate_gates(s, cfg).cmd_success);
  }
  SUBCASE("difficulty gate needs both displacement and possession") {
    EpisodeStats s;
    s.ball_disp_along_cmd = 3.5;
    s.final_robot_ball_dist = 1.5;
    CHECK_FALSE(evaluate_gates(s, cfg).difficulty_success);
    s.final_robot_ball_dist = 0.5;
    CHECK(evaluate_gates(s, cfg).difficulty_success);
  }
}

TEST_CASE("update rule") {
  auto g = init_grid(CurriculumConfig{});
  SUBCASE("corner success unlocks the out-of-box neighbors") {
    // (10, 10) is the lower-left corner of the initial box.
    EpisodeOutcome o;
    o.cmd_success = true;
    o.cell_x = 10;
    o.cell_y = 10;
    curriculum_update(g, o);
    CHECK(g.cmd_unlocked(9, 10));
    CHECK(g.cmd_unlocked(10, 9));
    CHECK(g.unlocked_cmd_cells() == 102);
  }
  SUBCASE("failures leave the grid bit-identical") {
    const auto before_cmd = g.cmd_weight;
    const auto before_lvl = g.level_weight;
    EpisodeOutcome o;
    o.cmd_success = false;
    o.difficulty_success = false;
    o.cell_x = 12;
    o.cell_y = 12;
    o.difficulty = 1;
    curriculum_update(g, o);
    CHECK(g.cmd_weight == before_cmd);
    CHECK(g.level_weight == before_lvl);
  }
  SUBCASE("difficulty success unlocks the next level, clamped at the top") {
    EpisodeOutcome o;
    o.difficulty_success = true;
    o.difficulty = 1;
    curriculum_update(g, o);
    CHECK(g.level_weight[2] == 1);
    o.difficulty = 5;
    const auto before = g.level_weight;
    curriculum_update(g, o);  // no level 6 to unlock
    CHECK(g.level_weight == before);
  }
  SUBCASE("grid boundary clamps the neighbor rule") {
    // Unlock everything, then succeed at the true grid corner.
    for (auto& w : g.cmd_weight) w = 1;
    EpisodeOutcome o;
    o.cmd_success = true;
    o.cell_x = 0;
    o.cell_y = 0;
    curriculum_update(g, o);  // must not touch out-of-range memory
    CHECK(g.unlocked_cmd_cells() == 900);
  }
}

TEST_CASE("expansion is monotone and reaches the full grid under successes") {
  auto g = init_grid(CurriculumConfig{});
  int prev_cells = g.unlocked_cmd_cells();
  int prev_levels = g.unlocked_levels();
  int rounds = 0;
  // Drive a success from every unlocked cell and level each round.
  while ((g.unlocked_cmd_cells() < 900 || g.unlocked_levels() < 6) && rounds < 200) {
    ++rounds;
    std::vector<std::pair<int, int>> cells;
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 30; ++x)
        if (g.cmd_unlocked(x, y)) cells.push_back({x, y});
    for (auto [x, y] : cells) {
      EpisodeOutcome o;
      o.cmd_success = true;
      o.cell_x = x;
      o.cell_y = y;
      curriculum_update(g, o);
    }
    for (int t = 5; t >= 0; --t)
      if (g.level_weight[std::size_t(t)]) {
        EpisodeOutcome o;
        o.difficulty_success = true;
        o.difficulty = t;
        curriculum_update(g, o);
        break;
      }
    CHECK(g.unlocked_cmd_cells() >= prev_cells);
    CHECK(g.unlocked_levels() >= prev_levels);
    prev_cells = g.unlocked_cmd_cells();
    prev_levels = g.unlocked_levels();
  }
  CHECK(g.unlocked_cmd_cells() == 900);
  CHECK(g.unlocked_levels() == 6);
  // Span is 3.0 per axis: (3.0 / 0.1) + 5 rounds suffice.
  CHECK(rounds <= 35);
}

TEST_CASE("command and difficulty draws are independent") {
  // Frozen grid with 4 unlocked command cells and 3 levels; chi-square
  // independence test on the joint counts at significance 0.01.
  auto g = init_grid(CurriculumConfig{});
  std::fill(g.cmd_weight.begin(), g.cmd_weight.end(), 0);
  const std::vector<std::pair<int, int>> cells = {{3, 4}, {15, 20}, {27, 8}, {9, 9}};
  for (auto [x, y] : cells) g.cmd_weight[std::size_t(y) * 30 + std::size_t(x)] = 1;
  g.level_weight = {1, 0, 1, 0, 0, 1};

  Rng rng(4242);
  const int n = 100000;
  std::map<std::pair<int, int>, int> joint;  // (cell index, level) -> count
  for (int i = 0; i < n; ++i) {
    const auto s = curriculum_sample(g, rng);
    int ci = -1;
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (cells[c] == std::pair<int, int>{s.cell_x, s.cell_y}) ci = int(c);
    REQUIRE(ci >= 0);
    joint[{ci, s.difficulty}] += 1;
  }
  const std::vector<int> levels = {0, 2, 5};
  double chi2 = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    int row = 0;
    for (int l : levels) row += joint[{int(c), l}];
    for (int l : levels) {
      int col = 0;
      for (std::size_t c2 = 0; c2 < cells.size(); ++c2) col += joint[{int(c2), l}];
      const double expected = double(row) * double(col) / double(n);
      const double observed = joint[{int(c), l}];
      chi2 += (observed - expected) * (observed - expected) / expected;
    }
  }
  // df = (4-1)(3-1) = 6; upper 1% point via the Wilson-Hilferty cube
  // approximation (exact value 16.81).
  const double df = 6.0, z99 = 2.3263478740;
  const double crit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z99 * std::sqrt(2.0 / (9.0 * df)), 3);
  CHECK(chi2 < crit);
}
