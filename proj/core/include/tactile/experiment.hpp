#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tactile/checkpoint.hpp"
#include "tactile/config.hpp"
#include "tactile/finetune.hpp"
#include "tactile/gradcheck.hpp"
#include "tactile/model.hpp"

namespace tactile {

/// Execution knobs that never change results.
struct RunControl {
  std::optional<std::filesystem::path> resume;
  /// Stop (as if interrupted) once this many epochs are complete; 0 = never.
  std::size_t stop_after_epoch = 0;
  std::size_t threads = 1;
  /// Progress lines go here when set.
  std::ostream* progress = nullptr;
};

/// Dataset loaded or generated from a config, normalized with training
/// statistics and tokenized.
struct PreparedData {
  DatasetSplit data;
  NormalizationStats stats;
  std::vector<TubeletSequence> train, validation, test;
  std::vector<std::size_t> train_labels, validation_labels, test_labels;
  std::uint64_t fingerprint = 0;
  Shape4 shape;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Config text recorded inside checkpoints (output location omitted).
std::string checkpoint_config_text(const ExperimentConfig& config);

/// Writes <out>/pretrain/loss.csv (step,mtr,temporal,total), last.ckpt after
/// every epoch and final.ckpt at the end. Uses the training split only.
Checkpoint run_pretrain(const ExperimentConfig& config, const RunControl& control = {});

/// Trains the classifier from `init` (a pretraining checkpoint) or from
/// scratch. Writes <out>/finetune/log.csv, last.ckpt and best.ckpt; returns
/// the checkpoint with the highest validation acc1.
Checkpoint run_finetune(const ExperimentConfig& config, const Checkpoint* init, const RunControl& control = {});

enum class SplitKind { kTrain, kValidation, kTest };
const char* to_string(SplitKind split);
SplitKind parse_split(const std::string& text);

/// Rebuilds the model and data from the checkpoint's own config and writes
/// <out_dir>/<split>_report.txt and <out_dir>/<split>_confusion.csv.
EvalReport run_eval(const Checkpoint& checkpoint, SplitKind split, const std::filesystem::path& out_dir,
                    const RunControl& control = {});

struct AblationStrategy {
  int id = 0;
  bool temporal_embedding = false;
  bool spatial_embedding = false;
  bool temporal_task = false;
};

/// The five rows of the ablation: TE, SE, TE+SE, TPT, TE+SE+TPT. MTR
/// pretraining, position and tubelet embeddings are always on.
const std::array<AblationStrategy, 5>& ablation_strategies();

struct AblationRow {
  AblationStrategy strategy;
  EvalReport report;
  double spatial_group_acc1 = 0.0;   // synthetic spatial-pair classes
  double temporal_group_acc1 = 0.0;  // synthetic temporal-pair classes
  std::uint64_t fingerprint = 0;
};

/// Pretrain -> fine-tune -> test eval for one strategy, under
/// <out>/strategy_<id>.
AblationRow run_ablation_strategy(const ExperimentConfig& base, const AblationStrategy& strategy,
                                  const RunControl& control = {});

/// Runs pretrain -> fine-tune -> test eval for every strategy under the
/// base config's seed and data. Writes <out>/ablation.csv.
std::vector<AblationRow> run_ablation_suite(const ExperimentConfig& base, const RunControl& control = {});

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

struct StatGradCheck {
  GradCheckReport pretrain;  // L_MTR + beta * L_temp
  GradCheckReport finetune;  // cross-entropy on [CLS]
};

/// Finite-difference check of both objectives on a tiny full model:
/// 2 x 2 x 8 x 8 input, L = 1, P = 4, D = 8, K = 2, dropout off.
StatGradCheck run_stat_gradcheck(std::uint64_t seed, const GradCheckOptions& options = {});

void write_gradcheck_report(std::ostream& os, const GradCheckReport& report);

}  // namespace tactile
