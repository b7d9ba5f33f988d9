#include "dsfpo/metrics.hpp"

#include <json.hpp>

#include "dsfpo/errors.hpp"

namespace dsfpo {

using ordered_json = nlohmann::ordered_json;

std::string record_to_json(const MetricsRecord& r) {
  ordered_json j;
  j["iteration"] = r.iteration;
  j["mean_reward"] = r.mean_reward;
  j["mean_episode_length"] = r.mean_episode_length;
  j["episodes_completed"] = r.episodes_completed;
  j["surrogate_loss"] = r.surrogate_loss;
  j["value_loss"] = r.value_loss;
  j["entropy"] = r.entropy;
  j["clip_fraction"] = r.clip_fraction;
  j["mean_ratio"] = r.mean_ratio;
  j["grad_norm"] = r.grad_norm;
  j["estimator_loss"] = r.estimator_loss;
  j["skill_usage"] = r.skill_usage;
  j["curriculum_command_unlocked"] = r.curriculum_command_unlocked;
  j["curriculum_difficulty_unlocked"] = r.curriculum_difficulty_unlocked;
  return j.dump();
}

MetricsWriter::MetricsWriter(const std::string& path, const RunConfig& cfg)
    : out_(path, std::ios::trunc) {
  if (!out_) throw ConfigError("metrics: cannot open '" + path + "' for writing");
  ordered_json header;
  header["type"] = "header";
  header["format"] = 1;
  header["algo"] = cfg.algo;
  header["seed"] = cfg.seed;
  header["config_hash"] = config_hash(cfg);
  header["config"] = serialize_config(cfg);
  out_ << header.dump() << "\n";
  out_.flush();
}

void MetricsWriter::append(const MetricsRecord& r) {
  out_ << record_to_json(r) << "\n";
  out_.flush();
}

MetricsLog read_metrics_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("metrics: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("metrics: empty log '" + path + "'");
  MetricsLog log;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("type", "") != "header") throw ConfigError("metrics: first line is not a header");
    log.algo = header.value("algo", "");
    log.seed = header.value("seed", uint64_t(0));
    log.config_hash = header.value("config_hash", uint64_t(0));
    log.config_text = header.value("config", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("metrics: bad header in '" + path + "': " + e.what());
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MetricsRecord r;
      r.iteration = j.at("iteration").get<long>();
      r.mean_reward = j.at("mean_reward").get<double>();
      r.mean_episode_length = j.at("mean_episode_length").get<double>();
      r.episodes_completed = j.at("episodes_completed").get<long>();
      r.surrogate_loss = j.at("surrogate_loss").get<double>();
      r.value_loss = j.at("value_loss").get<double>();
      r.entropy = j.at("entropy").get<double>();
      r.clip_fraction = j.at("clip_fraction").get<double>();
      r.mean_ratio = j.at("mean_ratio").get<double>();
      r.grad_norm = j.at("grad_norm").get<double>();
      r.estimator_loss = j.at("estimator_loss").get<double>();
      const auto& usage = j.at("skill_usage");
      for (std::size_t k = 0; k < 4 && k < usage.size(); ++k)
        r.skill_usage[k] = usage[k].get<double>();
      r.curriculum_command_unlocked = j.at("curriculum_command_unlocked").get<double>();
      r.curriculum_difficulty_unlocked = j.at("curriculum_difficulty_unlocked").get<double>();
      log.records.push_back(r);
    } catch (const nlohmann::json::exception&) {
      ++log.skipped_lines;
    }
  }
  return log;
}

}  // namespace dsfpo
