#pragma once
#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dsfpo/config.hpp"

namespace dsfpo {

// One line per training iteration, append-only. Wall-clock time is printed to
// the console instead of the file so that (config, seed) fixes the log bytes.
struct MetricsRecord {
  long iteration = 0;
  double mean_reward = 0.0;          // mean total reward of episodes finished this iteration
  double mean_episode_length = 0.0;  // in high-level steps
  long episodes_completed = 0;
  double surrogate_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double grad_norm = 0.0;
  double estimator_loss = 0.0;
  std::array<double, 4> skill_usage{};
  double curriculum_command_unlocked = 0.0;
  double curriculum_difficulty_unlocked = 0.0;
};

class MetricsWriter {
 public:
  // Opens (truncates) the log and writes the header line. Throws ConfigError
  // if the file cannot be created.
  MetricsWriter(const std::string& path, const RunConfig& cfg);
  void append(const MetricsRecord& r);

 private:
  std::ofstream out_;
};

struct MetricsLog {
  std::string algo;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  std::string config_text;
  std::vector<MetricsRecord> records;
  int skipped_lines = 0;  // malformed records encountered while parsing
};

// Parses a metrics log; malformed record lines are skipped and counted.
// Throws ConfigError when the header is missing or unreadable.
MetricsLog read_metrics_log(const std::string& path);

std::string record_to_json(const MetricsRecord& r);

}  // namespace dsfpo
