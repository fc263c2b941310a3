#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tactile/autodiff.hpp"
#include "tactile/embedding.hpp"
#include "tactile/rng.hpp"
#include "tactile/tubelet.hpp"

namespace tactile {

class StatModel;

/// Spatial-group mask: every tubelet whose spatial index is in
/// masked_groups is masked, across all temporal windows.
struct MaskPlan {
  double ratio = 0.0;
  std::size_t n_space = 0;
  std::size_t n_temp = 0;
  std::vector<std::size_t> masked_groups;    // sorted spatial indices
  std::vector<std::size_t> masked_tubelets;  // sorted sequence indices

  bool empty() const { return masked_tubelets.empty(); }
  bool is_masked(std::size_t sequence_index) const;
  /// One flag per sequence index.
  std::vector<char> flags() const;
};

/// round(ratio * n_space) groups drawn uniformly without replacement.
MaskPlan plan_spatial_mask(const TubeletGrid& grid, double ratio, Rng& rng);

/// Replaces masked rows of the projected tubelet matrix with the learned
/// mask embedding; unmasked rows pass through untouched.
Var apply_mask(Tape& tape, Var tubelet_rows, const MaskPlan& plan, const EmbeddingSet& set);

struct Reconstruction {
  std::size_t sequence_index = 0;
  std::vector<double> values;  // L*P^2
};

/// Mean over masked tubelets of the per-tubelet mean squared error.
/// Reconstructions are matched by sequence index, so their order is free.
double mtr_loss(const TubeletSequence& original, std::span<const Reconstruction> reconstructed,
                const MaskPlan& plan);

struct OrderPair {
  std::size_t first = 0;   // sequence index i
  std::size_t second = 0;  // sequence index j
  double label = 0.0;      // 1 iff temporal_index(i) < temporal_index(j)
};

struct PairBatch {
  std::vector<OrderPair> pairs;
};

/// Number of ordered (i, j) pairs of unmasked tubelets in different windows.
std::size_t feasible_pair_count(const TubeletGrid& grid, const MaskPlan& plan);

/// Draws min(n_comp, feasible) distinct ordered pairs of unmasked tubelets
/// with distinct temporal indices. Throws kInfeasiblePairs when none exist.
PairBatch sample_pairs(const TubeletGrid& grid, const MaskPlan& plan, std::size_t n_comp, Rng& rng);

struct PretrainHeads {
  ParamId recon_weight = 0;  // D x L*P^2
  ParamId recon_bias = 0;    // 1 x L*P^2
  ParamId frame_weight = 0;  // 1 x 2D
  ParamId frame_bias = 0;    // 1 x 1

  static PretrainHeads create(ParameterStore& store, std::size_t dim, std::size_t tubelet_volume, Rng& rng);
};

/// Order logits for every pair: W_frame (E_i ++ E_j)^T + b, one row per pair.
/// `encoded` includes the [CLS] row, so sequence index s lives in row s + 1.
Var order_logits(Tape& tape, const PairBatch& batch, Var encoded, const PretrainHeads& heads);

/// Mean binary cross-entropy of the order predictions.
Var temporal_loss(Tape& tape, const PairBatch& batch, Var encoded, const PretrainHeads& heads);
double temporal_loss(const PairBatch& batch, const Matrix& encoded, const ParameterStore& store,
                     const PretrainHeads& heads);

/// Reconstruction rows for the masked positions, in plan order.
Var reconstruct(Tape& tape, Var encoded, const MaskPlan& plan, const PretrainHeads& heads);

struct PretrainOptions {
  double beta = 1.0;
  double mask_ratio = 0.5;
  std::size_t n_comp = 30;
  bool temporal_task = true;
};

/// Draw stream for one sample: mask and pair RNGs derive from
/// (seed, epoch, sample id) so any execution order reproduces them.
struct SampleDraw {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t sample_id = 0;
  bool dropout = true;
};

struct PretrainSampleLoss {
  double mtr = 0.0;
  double temporal = 0.0;
  double total = 0.0;
};

/// Builds the full pretraining objective for one sample on `tape`.
/// Returns the 1 x 1 total L_MTR + beta * L_temp.
Var pretrain_objective(Tape& tape, const StatModel& model, const TubeletSequence& sample,
                       const PretrainOptions& options, const SampleDraw& draw,
                       PretrainSampleLoss* parts = nullptr);

struct StepResult {
  double loss = 0.0;
  double mtr = 0.0;
  double temporal = 0.0;
  GradientSet gradients;
};

/// Batch-mean pretraining loss and gradients. Samples are evaluated on up
/// to `threads` workers; gradients are reduced in sample order.
StepResult pretrain_step(const StatModel& model, std::span<const TubeletSequence> batch,
                         std::span<const SampleDraw> draws, const PretrainOptions& options,
                         std::size_t threads = 1);

}  // namespace tactile
