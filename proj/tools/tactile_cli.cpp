// Command-line front end: pretrain, finetune, eval, ablate, gradcheck, synth.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tactile/checkpoint.hpp"
#include "tactile/config.hpp"
#include "tactile/data.hpp"
#include "tactile/error.hpp"
#include "tactile/experiment.hpp"

namespace fs = std::filesystem;
using namespace tactile;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string resume;
  std::size_t threads = 1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (overrides run.output_dir)");
  cmd->add_option("--seed", c.seed, "seed override (run.seed and synthetic.seed)");
  cmd->add_option("--resume", c.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  cmd->add_option("--threads", c.threads, "worker threads per step")->check(CLI::PositiveNumber);
  cmd->add_flag("--quiet", c.quiet, "suppress progress lines");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.synthetic.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

RunControl control(const Common& c) {
  RunControl rc;
  if (!c.resume.empty()) rc.resume = fs::path(c.resume);
  rc.threads = c.threads;
  rc.progress = c.quiet ? nullptr : &std::cerr;
  return rc;
}

void print_report(const EvalReport& r) {
  std::cout << "acc1 " << r.acc1 << "\nacc3 " << r.acc3 << "\nmacro_f1 " << r.macro_f1 << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal tactile transformer: pretraining, fine-tuning and evaluation"};
  app.require_subcommand(1);

  Common pre, fine, ev, abl, grad, syn;
  auto* c_pre = app.add_subcommand("pretrain", "self-supervised pretraining on the training split");
  add_common(c_pre, pre);

  auto* c_fine = app.add_subcommand("finetune", "classification fine-tuning");
  add_common(c_fine, fine);
  std::string init;
  c_fine->add_option("--init", init, "pretraining checkpoint to start from")->check(CLI::ExistingFile);

  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  add_common(c_eval, ev, false);
  std::string checkpoint, split = "test";
  c_eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--split", split, "train, val or test");

  auto* c_abl = app.add_subcommand("ablate", "run the five embedding/pretraining ablation strategies");
  add_common(c_abl, abl);

  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of both objectives on a tiny model");
  add_common(c_grad, grad, false);
  double tolerance = 1e-3;
  c_grad->add_option("--tolerance", tolerance, "relative tolerance");

  auto* c_syn = app.add_subcommand("synth", "write the configured synthetic dataset to disk");
  add_common(c_syn, syn);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_pre) {
      const auto cfg = load(pre);
      const Checkpoint ck = run_pretrain(cfg, control(pre));
      std::cout << "pretrained " << ck.epoch << " epochs -> " << (cfg.output_dir / "pretrain").string() << '\n';
    } else if (*c_fine) {
      const auto cfg = load(fine);
      std::optional<Checkpoint> start;
      if (!init.empty()) start = load_checkpoint(init);
      const Checkpoint best = run_finetune(cfg, start ? &*start : nullptr, control(fine));
      std::cout << "best epoch " << best.best_epoch << " val_acc1 " << best.best_metric << '\n';
    } else if (*c_eval) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const fs::path out = ev.out.empty() ? fs::path(checkpoint).parent_path() : fs::path(ev.out);
      print_report(run_eval(ck, parse_split(split), out, control(ev)));
    } else if (*c_abl) {
      const auto cfg = load(abl);
      const auto rows = run_ablation_suite(cfg, control(abl));
      write_ablation_csv(std::cout, rows);
    } else if (*c_grad) {
      GradCheckOptions opts;
      opts.tolerance = tolerance;
      const auto result = run_stat_gradcheck(grad.seed.value_or(0), opts);
      std::cout << "[pretraining loss]\n";
      write_gradcheck_report(std::cout, result.pretrain);
      std::cout << "[fine-tuning loss]\n";
      write_gradcheck_report(std::cout, result.finetune);
      if (!grad.out.empty()) {
        fs::create_directories(grad.out);
        std::ofstream os(fs::path(grad.out) / "gradcheck.txt");
        write_gradcheck_report(os, result.pretrain);
        write_gradcheck_report(os, result.finetune);
      }
      return result.pretrain.passed && result.finetune.passed ? 0 : 1;
    } else if (*c_syn) {
      auto cfg = load(syn);
      if (cfg.source != DataSource::kSynthetic) throw Error(ErrorCode::kInvalidConfig, "data.source: synth needs synthetic");
      const auto data = generate_synthetic(cfg.synthetic);
      const fs::path manifest = write_dataset(data, cfg.output_dir);
      std::cout << "wrote " << manifest.string() << " fingerprint " << std::hex << fingerprint(data) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
