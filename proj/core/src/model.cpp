#include "tactile/model.hpp"

#include <cmath>
#include <string>

#include "tactile/error.hpp"
#include "tactile/parallel.hpp"

namespace tactile {

void ModelConfig::validate() const {
  encoder.validate();
  if (embedding.dim != encoder.dim)
    throw Error(ErrorCode::kInvalidConfig, "embedding and encoder dimensions differ");
  if (embedding.dim % 2 != 0) throw Error(ErrorCode::kInvalidConfig, "embedding dimension must be even");
  if (num_classes < 2) throw Error(ErrorCode::kInvalidConfig, "num_classes must be >= 2");
  try {
    (void)TubeletGrid::make(input_shape, tubelet);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
}

StatModel::StatModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  grid_ = TubeletGrid::make(config.input_shape, config.tubelet);
  Rng rng = make_rng(seed, {kStreamInit});
  embedding_ = EmbeddingSet::create(params_, grid_, config.embedding, rng);
  encoder_ = TransformerEncoder(params_, config.encoder, rng);
  pretrain_heads_ = PretrainHeads::create(params_, config.encoder.dim, config.tubelet.volume(), rng);
  classifier_ = ClassifierHead::create(params_, config.encoder.dim, config.num_classes, rng);
}

Var StatModel::encode(Tape& tape, const TubeletSequence& sample, const MaskPlan* plan, Rng* dropout_rng) const {
  if (!(sample.grid == grid_)) throw Error(ErrorCode::kShapeMismatch, "sample grid does not match the model");
  Var rows = project_tubelets(tape, embedding_, sample.tubelets);
  if (plan) rows = apply_mask(tape, rows, *plan, embedding_);
  const Var input = compose_input(tape, embedding_, sample.tubelets, rows);
  ForwardOptions opts;
  opts.dropout_rng = dropout_rng;
  return encoder_.forward(tape, input, opts);
}

std::vector<double> StatModel::predict(const TubeletSequence& sample) const {
  Tape tape(params_);
  const Var encoded = encode(tape, sample);
  return classify(tape.value(encoded), params_, classifier_);
}

Var StatModel::classification_objective(Tape& tape, const TubeletSequence& sample, std::size_t label,
                                        Rng* dropout_rng) const {
  const Var encoded = encode(tape, sample, nullptr, dropout_rng);
  return tape.softmax_cross_entropy(class_logits(tape, encoded, classifier_), label);
}

FinetuneStepResult finetune_step(const StatModel& model, std::span<const TubeletSequence> batch,
                                 std::span<const std::size_t> labels, std::span<const SampleDraw> draws,
                                 std::size_t threads) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "empty batch");
  if (labels.size() != batch.size() || draws.size() != batch.size())
    throw Error(ErrorCode::kShapeMismatch, "one label and one draw per sample required");
  std::vector<GradientSet> grads(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    Tape tape(model.params());
    Rng dropout_rng = make_rng(draws[i].seed, {kStreamDropout, 1, draws[i].epoch, draws[i].sample_id});
    const Var loss = model.classification_objective(tape, batch[i], labels[i],
                                                    draws[i].dropout ? &dropout_rng : nullptr);
    losses[i] = tape.value(loss)(0, 0);
    grads[i] = GradientSet(model.params());
    tape.backward(loss, grads[i]);
  });
  FinetuneStepResult out;
  out.gradients = GradientSet(model.params());
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.gradients.add(grads[i], inv);
    out.loss += losses[i] * inv;
  }
  return out;
}

std::vector<TubeletSequence> prepare(std::span<const LabeledSample> samples, const NormalizationStats& stats,
                                     const TubeletConfig& config) {
  std::vector<TubeletSequence> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(tokenize(normalize(s.tensor, stats), config));
  return out;
}

EvalReport evaluate(const StatModel& model, std::span<const TubeletSequence> inputs,
                    std::span<const std::size_t> labels, const std::vector<std::string>& class_names,
                    std::size_t threads) {
  if (inputs.empty()) throw Error(ErrorCode::kEmptySplit, "empty split");
  std::vector<std::vector<double>> probs(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) { probs[i] = model.predict(inputs[i]); });
  return evaluate(probs, labels, model.config().num_classes, class_names);
}

Adam::Adam(const ParameterStore& store, double lr_, double weight_decay_, double beta1_, double beta2_, double eps_)
    : lr(lr_), weight_decay(weight_decay_), beta1(beta1_), beta2(beta2_), eps(eps_), m(store), v(store) {}

void Adam::step(ParameterStore& store, const GradientSet& grads) {
  if (grads.size() != store.size() || m.size() != store.size())
    throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match the parameter store");
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (ParamId i = 0; i < store.size(); ++i) {
    Matrix& w = store.value(i);
    const Matrix g = grads[i] + weight_decay * w;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    w.array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace tactile
