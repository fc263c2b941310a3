#include "tactile/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "tactile/error.hpp"
#include "tactile/rng.hpp"

namespace fs = std::filesystem;

namespace tactile {

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData p;
  if (config.source == DataSource::kSynthetic) {
    SyntheticTaskSpec spec = config.synthetic;
    spec.tubelet_frames = config.tubelet.frames;
    spec.patch = config.tubelet.patch;
    p.data = generate_synthetic(spec);
  } else {
    LoadOptions opts;
    opts.train_per_class = config.balance_per_class;
    opts.seed = config.seed;
    p.data = load_dataset(config.data_root, config.manifest, opts);
  }
  if (p.data.train.empty()) throw Error(ErrorCode::kEmptySplit, "training split is empty");
  p.shape = p.data.train.front().tensor.shape();
  p.stats = compute_stats(p.data.train);
  p.fingerprint = fingerprint(p.data);
  auto tokenize_split = [&](const std::vector<LabeledSample>& split, std::vector<TubeletSequence>& seqs,
                            std::vector<std::size_t>& labels) {
    for (const auto& s : split) {
      if (!(s.tensor.shape() == p.shape)) throw Error(ErrorCode::kShapeMismatch, "samples differ in shape");
      labels.push_back(s.label);
    }
    seqs = prepare(split, p.stats, config.tubelet);
  };
  tokenize_split(p.data.train, p.train, p.train_labels);
  tokenize_split(p.data.validation, p.validation, p.validation_labels);
  tokenize_split(p.data.test, p.test, p.test_labels);
  return p;
}

std::string checkpoint_config_text(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.output_dir = ".";
  return serialize(c);
}

namespace {

void progress(const RunControl& control, const std::string& line) {
  if (control.progress) *control.progress << line << std::endl;
}

Checkpoint make_checkpoint(const std::string& stage, std::uint64_t epoch, const ExperimentConfig& config,
                           const StatModel& model, const Adam& adam, const NormalizationStats& stats) {
  Checkpoint c;
  c.stage = stage;
  c.epoch = epoch;
  c.seed = config.seed;
  c.config_text = checkpoint_config_text(config);
  c.params = snapshot_parameters(model.params());
  c.adam_steps = adam.steps;
  c.adam_lr = adam.lr;
  for (ParamId i = 0; i < model.params().size(); ++i) {
    c.adam_m.push_back(adam.m[i]);
    c.adam_v.push_back(adam.v[i]);
  }
  c.stats = stats;
  return c;
}

void restore_optimizer(Adam& adam, const Checkpoint& c) {
  if (c.adam_m.size() != adam.m.size()) throw Error(ErrorCode::kCorruptCheckpoint, "checkpoint lacks optimizer state");
  adam.steps = c.adam_steps;
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
    adam.m[i] = c.adam_m[i];
    adam.v[i] = c.adam_v[i];
  }
}

/// Keeps the header plus the first `rows` data lines of a CSV log.
void truncate_log(const fs::path& path, std::size_t rows) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line) && lines.size() < rows + 1) lines.push_back(line);
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::uint64_t stage, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(seed, {kStreamShuffle, stage, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void check_resume(const Checkpoint& ck, const std::string& stage, const ExperimentConfig& config) {
  if (ck.stage != stage) throw Error(ErrorCode::kInvalidConfig, "cannot resume " + stage + " from a " + ck.stage + " checkpoint");
  if (ck.config_text != checkpoint_config_text(config))
    throw Error(ErrorCode::kInvalidConfig, "resume checkpoint was written by a different config");
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
  return a.input_shape == b.input_shape && a.tubelet == b.tubelet && a.embedding.dim == b.embedding.dim &&
         a.embedding.use_spatial == b.embedding.use_spatial && a.embedding.use_temporal == b.embedding.use_temporal &&
         a.encoder.layers == b.encoder.layers && a.encoder.dim == b.encoder.dim && a.encoder.heads == b.encoder.heads &&
         a.encoder.ff_dim == b.encoder.ff_dim && a.num_classes == b.num_classes;
}

/// Stratified subset of training indices for low-label fine-tuning.
std::vector<std::size_t> labeled_subset(const PreparedData& p, std::size_t wanted, std::uint64_t seed) {
  std::vector<std::size_t> all(p.train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (wanted == 0 || wanted >= all.size()) return all;
  const std::size_t m = p.data.num_classes();
  std::vector<std::vector<std::size_t>> by_class(m);
  for (std::size_t i = 0; i < p.train_labels.size(); ++i) by_class[p.train_labels[i]].push_back(i);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < m; ++c) {
    Rng rng = make_rng(seed, {kStreamSubset, c});
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    const std::size_t take = std::min(by_class[c].size(), wanted / m + (c < wanted % m ? 1 : 0));
    out.insert(out.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Checkpoint run_pretrain(const ExperimentConfig& config, const RunControl& control) {
  config.validate();
  if (!config.pretrain.enabled) throw Error(ErrorCode::kInvalidConfig, "pretraining not enabled in config");
  const PreparedData data = prepare_data(config);
  StatModel model(model_config(config, data.shape, data.data.num_classes()), config.seed);
  Adam adam(model.params(), config.pretrain.lr, config.pretrain.weight_decay);

  PretrainOptions opts;
  opts.beta = config.pretrain.beta;
  opts.mask_ratio = config.pretrain.mask_ratio;
  opts.n_comp = config.pretrain.n_comp;
  opts.temporal_task = config.pretrain.temporal_task;

  const fs::path dir = config.output_dir / "pretrain";
  fs::create_directories(dir);
  const fs::path log_path = dir / "loss.csv";
  const std::size_t n = data.train.size();
  const std::size_t batch = config.pretrain.batch;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;

  std::size_t start = 0;
  if (control.resume) {
    const Checkpoint ck = load_checkpoint(*control.resume);
    check_resume(ck, "pretrain", config);
    restore_parameters(model.params(), ck);
    restore_optimizer(adam, ck);
    start = ck.epoch;
    truncate_log(log_path, start * steps_per_epoch);
  } else {
    std::ofstream(log_path, std::ios::trunc) << "step,mtr,temporal,total\n";
  }
  std::ofstream log(log_path, std::ios::app);
  log << std::setprecision(17);

  Checkpoint last = make_checkpoint("pretrain", start, config, model, adam, data.stats);
  for (std::size_t epoch = start; epoch < config.pretrain.epochs; ++epoch) {
    const auto order = shuffled(n, config.seed, 0, epoch);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<TubeletSequence> xs;
      std::vector<SampleDraw> draws;
      for (std::size_t k = s * batch; k < std::min(n, (s + 1) * batch); ++k) {
        xs.push_back(data.train[order[k]]);
        draws.push_back({config.seed, epoch, order[k], true});
      }
      const StepResult r = pretrain_step(model, xs, draws, opts, control.threads);
      adam.step(model.params(), r.gradients);
      log << epoch * steps_per_epoch + s + 1 << ',' << r.mtr << ',' << r.temporal << ',' << r.loss << '\n';
      epoch_loss += r.loss / static_cast<double>(steps_per_epoch);
    }
    log.flush();
    last = make_checkpoint("pretrain", epoch + 1, config, model, adam, data.stats);
    save_checkpoint(dir / "last.ckpt", last);
    std::ostringstream msg;
    msg << "pretrain epoch " << epoch + 1 << "/" << config.pretrain.epochs << " loss " << epoch_loss;
    progress(control, msg.str());
    if (control.stop_after_epoch != 0 && epoch + 1 == control.stop_after_epoch && epoch + 1 < config.pretrain.epochs)
      return last;
  }
  save_checkpoint(dir / "final.ckpt", last);
  return last;
}

Checkpoint run_finetune(const ExperimentConfig& config, const Checkpoint* init, const RunControl& control) {
  config.validate();
  const PreparedData data = prepare_data(config);
  const ModelConfig arch = model_config(config, data.shape, data.data.num_classes());
  StatModel model(arch, config.seed);

  if (init) {
    const ExperimentConfig init_config = parse_config(init->config_text);
    const ModelConfig init_arch = model_config(init_config, data.shape, data.data.num_classes());
    if (!same_architecture(arch, init_arch))
      throw Error(ErrorCode::kArchitectureMismatch, "initial checkpoint architecture does not match the config");
    restore_parameters(model.params(), *init);
  }
  Adam adam(model.params(), config.finetune.lr, config.finetune.weight_decay);

  const fs::path dir = config.output_dir / "finetune";
  fs::create_directories(dir);
  const fs::path log_path = dir / "log.csv";
  const auto subset = labeled_subset(data, config.finetune.labeled_samples, config.seed);
  const std::size_t n = subset.size();
  const std::size_t batch = config.finetune.batch;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;

  std::size_t start = 0;
  std::uint64_t best_epoch = 0;
  double best_metric = -1.0;
  if (control.resume) {
    const Checkpoint ck = load_checkpoint(*control.resume);
    check_resume(ck, "finetune", config);
    restore_parameters(model.params(), ck);
    restore_optimizer(adam, ck);
    start = ck.epoch;
    best_epoch = ck.best_epoch;
    best_metric = ck.best_metric;
    truncate_log(log_path, start);
  } else {
    std::ofstream(log_path, std::ios::trunc) << "epoch,train_loss,train_acc1,val_acc1,val_acc3,val_macro_f1\n";
  }
  std::ofstream log(log_path, std::ios::app);
  log << std::setprecision(17);

  std::vector<TubeletSequence> sub_inputs;
  std::vector<std::size_t> sub_labels;
  for (std::size_t i : subset) {
    sub_inputs.push_back(data.train[i]);
    sub_labels.push_back(data.train_labels[i]);
  }

  Checkpoint last = make_checkpoint("finetune", start, config, model, adam, data.stats);
  last.best_epoch = best_epoch;
  last.best_metric = best_metric;
  for (std::size_t epoch = start; epoch < config.finetune.epochs; ++epoch) {
    const auto order = shuffled(n, config.seed, 1, epoch);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<TubeletSequence> xs;
      std::vector<std::size_t> ys;
      std::vector<SampleDraw> draws;
      for (std::size_t k = s * batch; k < std::min(n, (s + 1) * batch); ++k) {
        xs.push_back(sub_inputs[order[k]]);
        ys.push_back(sub_labels[order[k]]);
        draws.push_back({config.seed, epoch, subset[order[k]], true});
      }
      const FinetuneStepResult r = finetune_step(model, xs, ys, draws, control.threads);
      adam.step(model.params(), r.gradients);
      epoch_loss += r.loss / static_cast<double>(steps_per_epoch);
    }

    std::string train_acc;
    if (config.finetune.track_train_accuracy) {
      const EvalReport tr = evaluate(model, sub_inputs, sub_labels, data.data.class_names, control.threads);
      std::ostringstream os;
      os << std::setprecision(17) << tr.acc1;
      train_acc = os.str();
    }
    double val_acc1 = -1.0;
    log << epoch + 1 << ',' << epoch_loss << ',' << train_acc << ',';
    if (!data.validation.empty()) {
      const EvalReport vr = evaluate(model, data.validation, data.validation_labels, data.data.class_names, control.threads);
      val_acc1 = vr.acc1;
      log << vr.acc1 << ',' << vr.acc3 << ',' << vr.macro_f1 << '\n';
    } else {
      log << ",,\n";
    }
    log.flush();

    last = make_checkpoint("finetune", epoch + 1, config, model, adam, data.stats);
    // Without a validation split the latest epoch is always the best.
    if (data.validation.empty() || val_acc1 > best_metric) {
      best_metric = data.validation.empty() ? 0.0 : val_acc1;
      best_epoch = epoch + 1;
      last.best_epoch = best_epoch;
      last.best_metric = best_metric;
      save_checkpoint(dir / "best.ckpt", last);
    }
    last.best_epoch = best_epoch;
    last.best_metric = best_metric;
    save_checkpoint(dir / "last.ckpt", last);

    std::ostringstream msg;
    msg << "finetune epoch " << epoch + 1 << "/" << config.finetune.epochs << " loss " << epoch_loss;
    if (!train_acc.empty()) msg << " train_acc1 " << train_acc;
    if (val_acc1 >= 0) msg << " val_acc1 " << val_acc1;
    progress(control, msg.str());
    if (control.stop_after_epoch != 0 && epoch + 1 == control.stop_after_epoch && epoch + 1 < config.finetune.epochs)
      return last;
  }
  if (best_epoch == 0) return last;
  return load_checkpoint(dir / "best.ckpt");
}

const char* to_string(SplitKind split) {
  switch (split) {
    case SplitKind::kTrain: return "train";
    case SplitKind::kValidation: return "validation";
    case SplitKind::kTest: return "test";
  }
  return "?";
}

SplitKind parse_split(const std::string& text) {
  if (text == "train") return SplitKind::kTrain;
  if (text == "val" || text == "validation") return SplitKind::kValidation;
  if (text == "test") return SplitKind::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + text + "'");
}

EvalReport run_eval(const Checkpoint& checkpoint, SplitKind split, const fs::path& out_dir, const RunControl& control) {
  ExperimentConfig config;
  try {
    config = parse_config(checkpoint.config_text);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("corrupt checkpoint: ") + e.what());
  }
  const PreparedData data = prepare_data(config);
  StatModel model(model_config(config, data.shape, data.data.num_classes()), config.seed);
  try {
    restore_parameters(model.params(), checkpoint);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("corrupt checkpoint: ") + e.what());
  }
  // Inputs are normalized with the statistics stored alongside the weights.
  const std::vector<LabeledSample>* samples = &data.data.test;
  if (split == SplitKind::kTrain) samples = &data.data.train;
  if (split == SplitKind::kValidation) samples = &data.data.validation;
  if (samples->empty()) throw Error(ErrorCode::kEmptySplit, std::string("empty split: ") + to_string(split));
  const auto inputs = prepare(*samples, checkpoint.stats, config.tubelet);
  std::vector<std::size_t> labels;
  for (const auto& s : *samples) labels.push_back(s.label);
  EvalReport report = evaluate(model, inputs, labels, data.data.class_names, control.threads);

  fs::create_directories(out_dir);
  {
    std::ofstream os(out_dir / (std::string(to_string(split)) + "_report.txt"));
    write_report(os, report);
  }
  {
    std::ofstream os(out_dir / (std::string(to_string(split)) + "_confusion.csv"));
    write_confusion_csv(os, report);
  }
  return report;
}

const std::array<AblationStrategy, 5>& ablation_strategies() {
  static const std::array<AblationStrategy, 5> table = {{
      {1, true, false, false},
      {2, false, true, false},
      {3, true, true, false},
      {4, false, false, true},
      {5, true, true, true},
  }};
  return table;
}

AblationRow run_ablation_strategy(const ExperimentConfig& base, const AblationStrategy& strategy,
                                  const RunControl& control) {
  if (base.source != DataSource::kSynthetic)
    throw Error(ErrorCode::kInvalidConfig, "data.source: the ablation suite needs synthetic data");
  std::vector<std::size_t> spatial, temporal;
  for (std::size_t c = 0; c < base.synthetic.classes; ++c)
    (base.synthetic.group_of(c) == ClassGroup::kSpatial ? spatial : temporal).push_back(c);

  ExperimentConfig cfg = base;
  cfg.embedding.use_temporal = strategy.temporal_embedding;
  cfg.embedding.use_spatial = strategy.spatial_embedding;
  cfg.pretrain.temporal_task = strategy.temporal_task;
  cfg.pretrain.enabled = true;
  cfg.output_dir = base.output_dir / ("strategy_" + std::to_string(strategy.id));
  progress(control, "ablation strategy " + std::to_string(strategy.id));

  const RunControl stage{std::nullopt, 0, control.threads, control.progress};
  const Checkpoint pre = run_pretrain(cfg, stage);
  const Checkpoint best = run_finetune(cfg, &pre, stage);
  AblationRow row;
  row.strategy = strategy;
  row.report = run_eval(best, SplitKind::kTest, cfg.output_dir / "eval", stage);
  row.spatial_group_acc1 = group_accuracy(row.report, spatial);
  row.temporal_group_acc1 = group_accuracy(row.report, temporal);
  row.fingerprint = prepare_data(cfg).fingerprint;
  return row;
}

std::vector<AblationRow> run_ablation_suite(const ExperimentConfig& base, const RunControl& control) {
  std::vector<AblationRow> rows;
  for (const auto& strategy : ablation_strategies()) rows.push_back(run_ablation_strategy(base, strategy, control));
  fs::create_directories(base.output_dir);
  std::ofstream os(base.output_dir / "ablation.csv");
  write_ablation_csv(os, rows);
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "strategy,te,se,tpt,acc1,acc3,macro_f1,spatial_group_acc1,temporal_group_acc1,fingerprint\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.strategy.id << ',' << r.strategy.temporal_embedding << ',' << r.strategy.spatial_embedding << ','
       << r.strategy.temporal_task << ',' << r.report.acc1 << ',' << r.report.acc3 << ',' << r.report.macro_f1 << ','
       << r.spatial_group_acc1 << ',' << r.temporal_group_acc1 << ',' << std::hex << r.fingerprint << std::dec << '\n';
  }
}

StatGradCheck run_stat_gradcheck(std::uint64_t seed, const GradCheckOptions& options) {
  ModelConfig cfg;
  cfg.input_shape = {2, 2, 8, 8};
  cfg.tubelet = {1, 4};
  cfg.embedding.dim = 8;
  cfg.encoder = {2, 8, 2, 16, 0.0, seed};
  cfg.num_classes = 3;
  StatModel model(cfg, seed);
  // Move away from the small init so gradients are well above the floor.
  Rng jitter = make_rng(seed, {kStreamInit, 99});
  std::normal_distribution<double> spread(0.0, 0.3);
  for (ParamId id = 0; id < model.params().size(); ++id)
    for (auto& v : model.params().value(id).reshaped()) v += spread(jitter);

  std::vector<float> values(cfg.input_shape.size());
  Rng rng = make_rng(seed, {kStreamSynth, 99});
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : values) v = normal(rng);
  const TubeletSequence sample = tokenize(TactileTensor(cfg.input_shape, std::move(values)), cfg.tubelet);

  PretrainOptions popts;
  popts.n_comp = 6;
  const SampleDraw draw{seed, 0, 0, false};

  StatGradCheck out;
  out.pretrain = gradient_check(model.params(), [&](const ParameterStore&, GradientSet* g) {
    Tape tape(model.params());
    const Var loss = pretrain_objective(tape, model, sample, popts, draw);
    if (g) tape.backward(loss, *g);
    return tape.value(loss)(0, 0);
  }, options);
  out.finetune = gradient_check(model.params(), [&](const ParameterStore&, GradientSet* g) {
    Tape tape(model.params());
    const Var loss = model.classification_objective(tape, sample, 1);
    if (g) tape.backward(loss, *g);
    return tape.value(loss)(0, 0);
  }, options);
  return out;
}

void write_gradcheck_report(std::ostream& os, const GradCheckReport& report) {
  os << std::setprecision(3);
  for (const auto& p : report.params)
    os << (p.passed ? "ok   " : "FAIL ") << p.name << " entries=" << p.entries << " max_rel=" << p.max_rel_error
       << " max_abs=" << p.max_abs_error << '\n';
  os << (report.passed ? "passed" : "failed") << " at tolerance " << report.tolerance << '\n';
}

}  // namespace tactile
