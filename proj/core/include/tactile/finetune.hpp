#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tactile/autodiff.hpp"
#include "tactile/rng.hpp"

namespace tactile {

/// Linear D -> M map on the final [CLS] embedding followed by softmax.
struct ClassifierHead {
  ParamId weight = 0;  // D x M
  ParamId bias = 0;    // 1 x M
  std::size_t classes = 0;

  static ClassifierHead create(ParameterStore& store, std::size_t dim, std::size_t classes, Rng& rng);
};

/// Logits (1 x M) from row 0 of the encoded sequence.
Var class_logits(Tape& tape, Var encoded, const ClassifierHead& head);

/// Softmax class probabilities from row 0 of `encoded`.
std::vector<double> classify(const Matrix& encoded, const ParameterStore& store, const ClassifierHead& head);

/// -log(max(probs[label], 1e-7)).
double finetune_loss(std::span<const double> probs, std::size_t label);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  double acc1 = 0.0;
  double acc3 = 0.0;
  double macro_f1 = 0.0;
  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<ClassMetrics> per_class;
  std::vector<std::string> class_names;
};

/// Indices of the k most probable classes; ties go to the lower index.
std::vector<std::size_t> top_k(std::span<const double> probs, std::size_t k);

/// Metrics from per-sample probability vectors. Classes absent from both
/// labels and predictions score F1 = 0 in the macro average.
EvalReport evaluate(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels,
                    std::size_t num_classes, std::vector<std::string> class_names = {});

/// Fraction of samples with a label in `classes` that were predicted correctly.
double group_accuracy(const EvalReport& report, std::span<const std::size_t> classes);

void write_report(std::ostream& os, const EvalReport& report);
void write_confusion_csv(std::ostream& os, const EvalReport& report);

}  // namespace tactile
