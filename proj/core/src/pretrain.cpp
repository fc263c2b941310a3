#include "tactile/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "tactile/error.hpp"
#include "tactile/model.hpp"
#include "tactile/parallel.hpp"

namespace tactile {

bool MaskPlan::is_masked(std::size_t sequence_index) const {
  return std::binary_search(masked_tubelets.begin(), masked_tubelets.end(), sequence_index);
}

std::vector<char> MaskPlan::flags() const {
  std::vector<char> f(n_space * n_temp, 0);
  for (std::size_t s : masked_tubelets) f[s] = 1;
  return f;
}

MaskPlan plan_spatial_mask(const TubeletGrid& grid, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "mask ratio must lie in [0, 1), got " + std::to_string(ratio));
  MaskPlan plan;
  plan.ratio = ratio;
  plan.n_space = grid.n_space;
  plan.n_temp = grid.n_temp;
  const auto groups = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(grid.n_space)));
  std::vector<std::size_t> all(grid.n_space);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  // Partial Fisher-Yates: the first `groups` entries form a uniform subset.
  for (std::size_t i = 0; i < groups; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  plan.masked_groups.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(groups));
  std::sort(plan.masked_groups.begin(), plan.masked_groups.end());
  for (std::size_t kt = 0; kt < grid.n_temp; ++kt)
    for (std::size_t ks : plan.masked_groups) plan.masked_tubelets.push_back(grid.sequence_index(ks, kt));
  std::sort(plan.masked_tubelets.begin(), plan.masked_tubelets.end());
  return plan;
}

Var apply_mask(Tape& tape, Var tubelet_rows, const MaskPlan& plan, const EmbeddingSet& set) {
  if (plan.n_space != set.grid.n_space || plan.n_temp != set.grid.n_temp)
    throw Error(ErrorCode::kShapeMismatch, "mask plan was built for a different grid");
  if (plan.empty()) return tubelet_rows;
  return tape.replace_rows(tubelet_rows, tape.param(set.mask_token), plan.flags());
}

double mtr_loss(const TubeletSequence& original, std::span<const Reconstruction> reconstructed,
                const MaskPlan& plan) {
  if (plan.empty()) throw Error(ErrorCode::kNothingMasked, "nothing masked");
  if (plan.n_space != original.grid.n_space || plan.n_temp != original.grid.n_temp)
    throw Error(ErrorCode::kShapeMismatch, "mask plan was built for a different grid");
  std::vector<const Reconstruction*> by_index(original.grid.n_tube, nullptr);
  for (const auto& r : reconstructed) {
    if (r.sequence_index >= by_index.size())
      throw Error(ErrorCode::kInvalidArgument, "reconstruction index outside the grid");
    by_index[r.sequence_index] = &r;
  }
  double total = 0.0;
  for (std::size_t s : plan.masked_tubelets) {
    const Reconstruction* r = by_index[s];
    if (!r) throw Error(ErrorCode::kMissingIndex, "missing reconstruction for masked tubelet " + std::to_string(s));
    const auto& target = original.tubelets[s].values;
    if (r->values.size() != target.size())
      throw Error(ErrorCode::kShapeMismatch, "reconstruction length differs from tubelet volume");
    double sq = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double d = static_cast<double>(target[i]) - r->values[i];
      sq += d * d;
    }
    total += sq / static_cast<double>(target.size());
  }
  return total / static_cast<double>(plan.masked_tubelets.size());
}

std::size_t feasible_pair_count(const TubeletGrid& grid, const MaskPlan& plan) {
  std::vector<std::size_t> per_window(grid.n_temp, 0);
  std::size_t unmasked = 0;
  for (std::size_t s = 0; s < grid.n_tube; ++s)
    if (!plan.is_masked(s)) {
      ++per_window[grid.temporal_index(s)];
      ++unmasked;
    }
  std::size_t same = 0;
  for (std::size_t u : per_window) same += u * u;
  return unmasked * unmasked - same;
}

PairBatch sample_pairs(const TubeletGrid& grid, const MaskPlan& plan, std::size_t n_comp, Rng& rng) {
  if (plan.n_space != grid.n_space || plan.n_temp != grid.n_temp)
    throw Error(ErrorCode::kShapeMismatch, "mask plan was built for a different grid");
  const std::size_t feasible = feasible_pair_count(grid, plan);
  if (feasible == 0)
    throw Error(ErrorCode::kInfeasiblePairs,
                "no two unmasked tubelets fall in different temporal windows");
  const std::size_t n = std::min(n_comp, feasible);

  std::vector<std::size_t> unmasked;
  for (std::size_t s = 0; s < grid.n_tube; ++s)
    if (!plan.is_masked(s)) unmasked.push_back(s);

  auto make = [&grid](std::size_t i, std::size_t j) {
    return OrderPair{i, j, grid.temporal_index(i) < grid.temporal_index(j) ? 1.0 : 0.0};
  };

  PairBatch batch;
  batch.pairs.reserve(n);
  if (2 * n > feasible) {
    std::vector<OrderPair> all;
    all.reserve(feasible);
    for (std::size_t i : unmasked)
      for (std::size_t j : unmasked)
        if (grid.temporal_index(i) != grid.temporal_index(j)) all.push_back(make(i, j));
    for (std::size_t k = 0; k < n; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, all.size() - 1);
      std::swap(all[k], all[pick(rng)]);
    }
    batch.pairs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    return batch;
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::uniform_int_distribution<std::size_t> pick(0, unmasked.size() - 1);
  while (batch.pairs.size() < n) {
    const std::size_t i = unmasked[pick(rng)];
    const std::size_t j = unmasked[pick(rng)];
    if (grid.temporal_index(i) == grid.temporal_index(j)) continue;
    if (!seen.emplace(i, j).second) continue;
    batch.pairs.push_back(make(i, j));
  }
  return batch;
}

PretrainHeads PretrainHeads::create(ParameterStore& store, std::size_t dim, std::size_t tubelet_volume, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 0.02);
  auto normal = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  const auto d = static_cast<Eigen::Index>(dim);
  const auto v = static_cast<Eigen::Index>(tubelet_volume);
  PretrainHeads h;
  h.recon_weight = store.add("pretrain.recon.weight", normal(d, v));
  h.recon_bias = store.add("pretrain.recon.bias", Matrix::Zero(1, v));
  h.frame_weight = store.add("pretrain.frame.weight", normal(1, 2 * d));
  h.frame_bias = store.add("pretrain.frame.bias", Matrix::Zero(1, 1));
  return h;
}

Var order_logits(Tape& tape, const PairBatch& batch, Var encoded, const PretrainHeads& heads) {
  if (batch.pairs.empty()) throw Error(ErrorCode::kEmptyBatch, "empty batch");
  std::vector<std::size_t> first, second;
  for (const auto& p : batch.pairs) {
    first.push_back(p.first + 1);
    second.push_back(p.second + 1);
  }
  const Var parts[] = {tape.gather_rows(encoded, first), tape.gather_rows(encoded, second)};
  const Var joined = tape.concat_cols(parts);
  return tape.add_row(tape.matmul_nt(joined, tape.param(heads.frame_weight)), tape.param(heads.frame_bias));
}

Var temporal_loss(Tape& tape, const PairBatch& batch, Var encoded, const PretrainHeads& heads) {
  const Var logits = order_logits(tape, batch, encoded, heads);
  std::vector<double> labels;
  for (const auto& p : batch.pairs) labels.push_back(p.label);
  return tape.bce_with_logits(logits, labels);
}

double temporal_loss(const PairBatch& batch, const Matrix& encoded, const ParameterStore& store,
                     const PretrainHeads& heads) {
  Tape tape(store);
  return tape.value(temporal_loss(tape, batch, tape.constant(encoded), heads))(0, 0);
}

Var reconstruct(Tape& tape, Var encoded, const MaskPlan& plan, const PretrainHeads& heads) {
  if (plan.empty()) throw Error(ErrorCode::kNothingMasked, "nothing masked");
  std::vector<std::size_t> rows;
  for (std::size_t s : plan.masked_tubelets) rows.push_back(s + 1);
  const Var picked = tape.gather_rows(encoded, rows);
  return tape.add_row(tape.matmul(picked, tape.param(heads.recon_weight)), tape.param(heads.recon_bias));
}

Var pretrain_objective(Tape& tape, const StatModel& model, const TubeletSequence& sample,
                       const PretrainOptions& options, const SampleDraw& draw, PretrainSampleLoss* parts) {
  if (!(options.beta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be >= 0");
  Rng mask_rng = make_rng(draw.seed, {kStreamMask, draw.epoch, draw.sample_id});
  const MaskPlan plan = plan_spatial_mask(sample.grid, options.mask_ratio, mask_rng);
  Rng dropout_rng = make_rng(draw.seed, {kStreamDropout, 0, draw.epoch, draw.sample_id});
  const Var encoded = model.encode(tape, sample, &plan, draw.dropout ? &dropout_rng : nullptr);

  const Var recon = reconstruct(tape, encoded, plan, model.pretrain_heads());
  std::vector<Tubelet> targets;
  targets.reserve(plan.masked_tubelets.size());
  for (std::size_t s : plan.masked_tubelets) targets.push_back(sample.tubelets[s]);
  const Var mtr = tape.mse(recon, tubelet_matrix(targets));

  std::vector<Var> terms{mtr};
  std::vector<double> weights{1.0};
  double temporal = 0.0;
  if (options.temporal_task && options.beta > 0.0) {
    Rng pair_rng = make_rng(draw.seed, {kStreamPairs, draw.epoch, draw.sample_id});
    const PairBatch pairs = sample_pairs(sample.grid, plan, options.n_comp, pair_rng);
    const Var tl = temporal_loss(tape, pairs, encoded, model.pretrain_heads());
    temporal = tape.value(tl)(0, 0);
    terms.push_back(tl);
    weights.push_back(options.beta);
  }
  const Var total = tape.sum_scalars(terms, weights);
  if (parts) {
    parts->mtr = tape.value(mtr)(0, 0);
    parts->temporal = temporal;
    parts->total = tape.value(total)(0, 0);
  }
  return total;
}

StepResult pretrain_step(const StatModel& model, std::span<const TubeletSequence> batch,
                         std::span<const SampleDraw> draws, const PretrainOptions& options, std::size_t threads) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "empty batch");
  if (draws.size() != batch.size()) throw Error(ErrorCode::kShapeMismatch, "one draw per sample required");
  std::vector<GradientSet> grads(batch.size());
  std::vector<PretrainSampleLoss> losses(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    Tape tape(model.params());
    const Var total = pretrain_objective(tape, model, batch[i], options, draws[i], &losses[i]);
    grads[i] = GradientSet(model.params());
    tape.backward(total, grads[i]);
  });
  StepResult out;
  out.gradients = GradientSet(model.params());
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.gradients.add(grads[i], inv);
    out.mtr += losses[i].mtr * inv;
    out.temporal += losses[i].temporal * inv;
    out.loss += losses[i].total * inv;
  }
  return out;
}

}  // namespace tactile
