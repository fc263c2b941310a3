#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tactile/autodiff.hpp"
#include "tactile/data.hpp"
#include "tactile/embedding.hpp"
#include "tactile/encoder.hpp"
#include "tactile/finetune.hpp"
#include "tactile/pretrain.hpp"
#include "tactile/tubelet.hpp"

namespace tactile {

struct ModelConfig {
  Shape4 input_shape{1, 20, 16, 16};
  TubeletConfig tubelet;
  EmbeddingConfig embedding;
  EncoderConfig encoder;
  std::size_t num_classes = 2;

  /// Checks divisibility, D agreement between embedding and encoder, even D,
  /// and num_classes >= 2.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Tubelet embeddings, encoder, both pretraining heads and the classifier
/// over one parameter store.
class StatModel {
 public:
  StatModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const TubeletGrid& grid() const { return grid_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& params() { return params_; }
  const EmbeddingSet& embedding() const { return embedding_; }
  const TransformerEncoder& encoder() const { return encoder_; }
  const PretrainHeads& pretrain_heads() const { return pretrain_heads_; }
  const ClassifierHead& classifier() const { return classifier_; }

  /// E^(K) for one tokenized sample; masked rows take the mask embedding.
  Var encode(Tape& tape, const TubeletSequence& sample, const MaskPlan* plan = nullptr,
             Rng* dropout_rng = nullptr) const;

  /// Class probabilities without dropout.
  std::vector<double> predict(const TubeletSequence& sample) const;

  /// Cross-entropy on the [CLS] logits for one sample.
  Var classification_objective(Tape& tape, const TubeletSequence& sample, std::size_t label,
                               Rng* dropout_rng = nullptr) const;

 private:
  ModelConfig config_;
  TubeletGrid grid_;
  ParameterStore params_;
  EmbeddingSet embedding_;
  TransformerEncoder encoder_;
  PretrainHeads pretrain_heads_;
  ClassifierHead classifier_;
};

/// Batch-mean cross-entropy and gradients; reduced in sample order.
struct FinetuneStepResult {
  double loss = 0.0;
  GradientSet gradients;
};

FinetuneStepResult finetune_step(const StatModel& model, std::span<const TubeletSequence> batch,
                                 std::span<const std::size_t> labels, std::span<const SampleDraw> draws,
                                 std::size_t threads = 1);

/// Normalizes and tokenizes every sample.
std::vector<TubeletSequence> prepare(std::span<const LabeledSample> samples, const NormalizationStats& stats,
                                     const TubeletConfig& config);

/// Evaluates probabilities for every sample of `split`.
EvalReport evaluate(const StatModel& model, std::span<const TubeletSequence> inputs,
                    std::span<const std::size_t> labels, const std::vector<std::string>& class_names,
                    std::size_t threads = 1);

/// Adam with L2-coupled weight decay (decay added to the gradient).
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterStore& store, double lr, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step(ParameterStore& store, const GradientSet& grads);

  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t steps = 0;
  GradientSet m;
  GradientSet v;
};

}  // namespace tactile
