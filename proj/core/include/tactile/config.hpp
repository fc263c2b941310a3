#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "tactile/data.hpp"
#include "tactile/model.hpp"

namespace tactile {

enum class DataSource { kSynthetic, kManifest };

struct PretrainConfig {
  bool enabled = true;
  double mask_ratio = 0.5;
  double beta = 1.0;
  std::size_t n_comp = 30;
  bool temporal_task = true;
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::size_t batch = 4;
  double weight_decay = 1e-4;
};

struct FinetuneConfig {
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::size_t batch = 4;
  double weight_decay = 1e-4;
  /// Stratified subset of the training split used for fine-tuning; 0 = all.
  std::size_t labeled_samples = 0;
  /// Also evaluate the fine-tuning subset after every epoch.
  bool track_train_accuracy = false;
};

/// One document fully determines a run. Text form is `key = value` lines
/// with `#` comments; see serialize() for the complete key set.
struct ExperimentConfig {
  DataSource source = DataSource::kSynthetic;
  // manifest source
  std::filesystem::path data_root;
  std::filesystem::path manifest = "manifest.txt";
  std::size_t balance_per_class = 0;
  // synthetic source
  SyntheticTaskSpec synthetic;

  TubeletConfig tubelet;
  EmbeddingConfig embedding;
  EncoderConfig encoder;
  PretrainConfig pretrain;
  FinetuneConfig finetune;

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";

  /// Throws kInvalidConfig with the offending key path.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize(const ExperimentConfig& config);

/// Model architecture implied by a config and the number of classes.
ModelConfig model_config(const ExperimentConfig& config, const Shape4& input_shape, std::size_t num_classes);

}  // namespace tactile
