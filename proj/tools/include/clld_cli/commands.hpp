#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clld/data.hpp"
#include "clld/eval.hpp"
#include "clld/trainer.hpp"

namespace clld::cli {

// One cell of the ablation grid.
struct AblationCell {
  std::string name;
  LossSwitches loss;
  bool masking = true;
  // false skips pretraining (random-init baseline row).
  bool pretrained = true;
};

struct AblateConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  // Empty selects the default grid: {sim, cons, both} x {masking on, off}.
  std::vector<AblationCell> cells;
  // Subset whose F1 orders the table; "overall" for all scenes.
  std::string focus_subset = "occluded";
};

std::vector<AblationCell> default_ablation_grid();

// Every setting a command can use, after config file and flags are merged.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetSpec gen_data;
  TrainConfig pretrain;
  DatasetSpec pretrain_corpus;
  std::size_t checkpoint_every = 500;
  FinetuneConfig finetune;
  DatasetSpec finetune_data;
  EvalConfig eval;
  DatasetSpec eval_data;
  AblateConfig ablate;

  nlohmann::json to_json() const;
};

// Command-line overrides; unset fields keep the config value.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> alpha;
  std::optional<std::size_t> count;
  std::optional<int> precision;
};

// Sections: "seed", "gen-data", "pretrain", "finetune", "eval", "ablate".
// Dataset seeds not given explicitly are derived from the global seed.
// Throws ConfigError on unknown keys or invalid values.
RunConfig resolve_run_config(const nlohmann::json& file, const Overrides& overrides);
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const Overrides& overrides);

// Digest of the byte stream written to <out>/config.json.
std::uint64_t run_digest(const RunConfig& config);

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  Overrides overrides;
  std::filesystem::path out;
  bool force = false;
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> checkpoint;
  bool random_init = false;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> eval_data;
  std::optional<std::filesystem::path> model;
};

// --- pipeline pieces shared by the commands and tests ----------------------

// Normalized pretraining images: loaded from `data` or generated.
ImageCorpus pretrain_corpus(const RunConfig& config, const std::optional<std::filesystem::path>& data);

struct PretrainOutcome {
  std::vector<StepMetrics> metrics;
  ParamSet<float> online;
  std::size_t final_step = 0;
};

// Runs (or resumes) pretraining up to config.pretrain.total_steps. Each
// metric line goes to `log` when given; checkpoints land in `checkpoint_dir`
// every checkpoint_every steps and at the end.
PretrainOutcome run_pretrain(const RunConfig& config, const ImageCorpus& corpus, std::ostream* log,
                             const std::optional<std::filesystem::path>& checkpoint_dir,
                             const std::optional<std::filesystem::path>& resume);

struct FinetuneOutcome {
  LaneModel model;
  std::vector<double> losses;
  EvalReport report;
};

// Fine-tunes from `pretrained` (or a fresh encoder) and evaluates on the
// held-out scenes.
FinetuneOutcome run_finetune_eval(const RunConfig& config, const ParamSet<float>* pretrained,
                                  const std::vector<LaneScene>& train, const std::vector<LaneScene>& test);

struct AblationRun {
  std::string cell;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
  std::vector<StepMetrics> pretrain_metrics;
  std::vector<double> finetune_losses;
  // Pooled-feature std per channel of the pretrained encoder on a probe set.
  std::vector<double> feature_std;
};

struct AblationTable {
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;
  std::string focus_subset;
  std::vector<AblationRun> runs;

  // Median over successful seeds of `metric` ("f1", "recall", "precision")
  // on `subset`; nullopt when no seed succeeded.
  std::optional<double> median(const std::string& cell, const std::string& subset, const std::string& metric) const;
  // One row per cell with medians; failed cells keep their row with the error.
  std::string to_csv() const;
  // One row per (cell, seed).
  std::string runs_csv() const;
};

// Each (cell, seed) resolves `file` with that seed, then pretrains,
// fine-tunes and evaluates. Failures are recorded per run.
AblationTable run_ablation(const nlohmann::json& file, const Overrides& overrides, std::ostream* progress);

// --- commands (throw clld errors; see exit_code_for) ------------------------

void cmd_gen_data(const CommandOptions& options, std::ostream& out);
void cmd_pretrain(const CommandOptions& options, std::ostream& out);
void cmd_finetune_eval(const CommandOptions& options, std::ostream& out);
void cmd_eval(const CommandOptions& options, std::ostream& out);
void cmd_ablate(const CommandOptions& options, std::ostream& out);

// 2 config, 3 data/load, 4 numeric, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace clld::cli
