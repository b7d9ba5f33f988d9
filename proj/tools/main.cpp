#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "dsfpo/checkpoint.hpp"
#include "dsfpo/config.hpp"
#include "dsfpo/plots.hpp"
#include "dsfpo/trainer.hpp"

namespace {

// Precedence: explicit flags > --set pairs > config file > defaults.
dsfpo::RunConfig assemble_config(const std::string& config_path,
                                 const std::vector<std::string>& sets,
                                 const std::optional<uint64_t>& seed,
                                 const std::optional<std::string>& algo,
                                 const std::optional<int>& iterations,
                                 const std::optional<std::string>& out_dir) {
  dsfpo::RunConfig cfg;
  if (!config_path.empty()) cfg = dsfpo::load_config_file(config_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw dsfpo::ConfigError("--set expects key=value, got '" + kv + "'");
    dsfpo::set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  if (algo) cfg.algo = *algo;
  if (iterations) cfg.iterations = *iterations;
  if (out_dir) cfg.out_dir = *out_dir;
  return cfg;
}

int cmd_inspect(const std::string& path) {
  const auto ckpt = dsfpo::load_checkpoint(path);
  std::printf("version: %u\n", dsfpo::Checkpoint::kVersion);
  std::printf("config_hash: %llu\n", (unsigned long long)ckpt.config_hash);
  std::printf("iteration: %llu\n", (unsigned long long)ckpt.iteration);
  std::size_t total = 0;
  for (const auto& [name, t] : ckpt.params) total += t.size();
  std::printf("parameters: %zu tensors, %zu values\n", ckpt.params.size(), total);
  for (const auto& [name, t] : ckpt.params)
    std::printf("  %-14s %s\n", name.c_str(), t.shape_str().c_str());
  int unlocked = 0;
  for (auto b : ckpt.grid_cmd_weight) unlocked += b;
  std::printf("curriculum: %d/%zu command cells", unlocked, ckpt.grid_cmd_weight.size());
  unlocked = 0;
  for (auto b : ckpt.grid_level_weight) unlocked += b;
  std::printf(", %d/%zu difficulty levels unlocked\n", unlocked, ckpt.grid_level_weight.size());
  std::printf("rng streams: %zu, env states: %zu\n", ckpt.rng_streams.size(),
              ckpt.env_blobs.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical dribbling policy trainer"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
  std::optional<std::string> algo;
  std::optional<int> iterations;
  std::optional<std::string> out_dir;
  std::string checkpoint_path;
  int episodes = 50;
  bool deterministic = false;
  std::vector<std::string> logs;
  std::string usage_path;

  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", config_path, "config file (key = value lines)");
  train->add_option("--set", sets, "override a config field, key=value")->take_all();
  train->add_option("--seed", seed, "root seed");
  train->add_option("--algo", algo, "dsf_po or standard_ppo")
      ->check(CLI::IsMember({"dsf_po", "standard_ppo"}));
  train->add_option("--iterations", iterations, "training iterations");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--checkpoint", checkpoint_path, "resume from this checkpoint");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint to load")->required();
  eval->add_option("--episodes", episodes, "number of episodes");
  eval->add_flag("--deterministic", deterministic, "argmax skill, mean command");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--out", out_dir, "directory for trajectories and the summary");
  eval->add_option("--config", config_path, "optional config; must match the checkpoint shapes");

  auto* plot = app.add_subcommand("plot", "render curves and heatmaps from metrics logs");
  plot->add_option("logs", logs, "metrics.jsonl files");
  plot->add_option("--usage", usage_path, "eval_summary.json for the skill-usage heatmap");
  plot->add_option("--out", out_dir, "output directory")->required();

  auto* inspect = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
  inspect->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto cfg = assemble_config(config_path, sets, seed, algo, iterations, out_dir);
      dsfpo::train(cfg, checkpoint_path.empty()
                            ? std::nullopt
                            : std::optional<std::string>(checkpoint_path));
    } else if (*eval) {
      if (!config_path.empty()) {
        // Shape fields must agree with the checkpoint's embedded config.
        const auto given = dsfpo::load_config_file(config_path);
        const auto ckpt = dsfpo::load_checkpoint(checkpoint_path);
        const auto stored = dsfpo::parse_config_text(ckpt.config_text);
        const auto check = [&](const char* field, const auto& a, const auto& b) {
          if (a != b)
            throw dsfpo::CheckpointError(dsfpo::CheckpointErrorKind::config_mismatch,
                                         std::string("config field '") + field +
                                             "' does not match the checkpoint");
        };
        check("sfe_widths", given.sfe_widths, stored.sfe_widths);
        check("critic_widths", given.critic_widths, stored.critic_widths);
        check("estimator_widths", given.estimator_widths, stored.estimator_widths);
        check("estimator_window", given.estimator_window, stored.estimator_window);
      }
      const auto summary = dsfpo::evaluate(checkpoint_path, episodes, deterministic,
                                           seed.value_or(0), out_dir.value_or("eval_out"));
      std::printf("%s\n", dsfpo::eval_summary_to_json(summary).c_str());
    } else if (*plot) {
      const auto report = dsfpo::emit_plots(logs, out_dir.value_or("plots"), usage_path);
      for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      for (const auto& f : report.files) std::printf("wrote %s\n", f.c_str());
    } else if (*inspect) {
      return cmd_inspect(checkpoint_path);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
