#include "tactile/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "tactile/error.hpp"

namespace tactile {

ClassifierHead ClassifierHead::create(ParameterStore& store, std::size_t dim, std::size_t classes, Rng& rng) {
  if (classes < 2) throw Error(ErrorCode::kInvalidArgument, "classifier needs M >= 2");
  std::normal_distribution<double> dist(0.0, 0.02);
  Matrix w(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(classes));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  ClassifierHead h;
  h.classes = classes;
  h.weight = store.add("classifier.weight", std::move(w));
  h.bias = store.add("classifier.bias", Matrix::Zero(1, static_cast<Eigen::Index>(classes)));
  return h;
}

Var class_logits(Tape& tape, Var encoded, const ClassifierHead& head) {
  const std::size_t zero = 0;
  const Var cls = tape.gather_rows(encoded, std::span<const std::size_t>(&zero, 1));
  return tape.add_row(tape.matmul(cls, tape.param(head.weight)), tape.param(head.bias));
}

std::vector<double> classify(const Matrix& encoded, const ParameterStore& store, const ClassifierHead& head) {
  const Matrix& w = store.value(head.weight);
  if (encoded.rows() < 1 || encoded.cols() != w.rows())
    throw Error(ErrorCode::kShapeMismatch, "encoded width " + std::to_string(encoded.cols()) +
                                               " does not match classifier input " + std::to_string(w.rows()));
  Eigen::RowVectorXd z = encoded.row(0) * w + store.value(head.bias).row(0);
  z = (z.array() - z.maxCoeff()).exp().matrix();
  z /= z.sum();
  return {z.data(), z.data() + z.size()};
}

double finetune_loss(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size())
    throw Error(ErrorCode::kInvalidLabel, "label " + std::to_string(label) + " outside " +
                                              std::to_string(probs.size()) + " classes");
  return -std::log(std::max(probs[label], kProbClamp));
}

std::vector<std::size_t> top_k(std::span<const double> probs, std::size_t k) {
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); });
  idx.resize(k);
  return idx;
}

EvalReport evaluate(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels,
                    std::size_t num_classes, std::vector<std::string> class_names) {
  if (probs.empty()) throw Error(ErrorCode::kEmptySplit, "empty split");
  if (probs.size() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "one label per prediction required");
  EvalReport r;
  r.total = probs.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t hit1 = 0, hit3 = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != num_classes) throw Error(ErrorCode::kShapeMismatch, "probability vector has wrong length");
    if (labels[i] >= num_classes) throw Error(ErrorCode::kInvalidLabel, "label outside class range");
    const auto top = top_k(probs[i], 3);
    if (top.front() == labels[i]) ++hit1;
    if (std::find(top.begin(), top.end(), labels[i]) != top.end()) ++hit3;
    ++r.confusion[labels[i]][top.front()];
  }
  const double n = static_cast<double>(probs.size());
  r.acc1 = static_cast<double>(hit1) / n;
  r.acc3 = static_cast<double>(hit3) / n;

  r.per_class.resize(num_classes);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t tp = r.confusion[c][c], support = 0, predicted = 0;
    for (std::size_t j = 0; j < num_classes; ++j) {
      support += r.confusion[c][j];
      predicted += r.confusion[j][c];
    }
    auto& m = r.per_class[c];
    m.support = support;
    m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    f1_sum += m.f1;
  }
  r.macro_f1 = f1_sum / static_cast<double>(num_classes);
  if (class_names.empty())
    for (std::size_t c = 0; c < num_classes; ++c) class_names.push_back("class_" + std::to_string(c));
  r.class_names = std::move(class_names);
  return r;
}

double group_accuracy(const EvalReport& report, std::span<const std::size_t> classes) {
  std::size_t correct = 0, total = 0;
  for (std::size_t c : classes) {
    for (std::size_t j = 0; j < report.confusion.size(); ++j) total += report.confusion[c][j];
    correct += report.confusion[c][c];
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

void write_report(std::ostream& os, const EvalReport& r) {
  os << std::setprecision(17);
  os << "samples = " << r.total << '\n';
  os << "acc1 = " << r.acc1 << '\n';
  os << "acc3 = " << r.acc3 << '\n';
  os << "macro_f1 = " << r.macro_f1 << '\n';
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    os << "class." << r.class_names.at(c) << " = precision " << m.precision << " recall " << m.recall
       << " f1 " << m.f1 << " support " << m.support << '\n';
  }
}

void write_confusion_csv(std::ostream& os, const EvalReport& r) {
  os << "true\\pred";
  for (const auto& name : r.class_names) os << ',' << name;
  os << '\n';
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    os << r.class_names.at(i);
    for (std::size_t v : r.confusion[i]) os << ',' << v;
    os << '\n';
  }
}

}  // namespace tactile
