#include "tactile/embedding.hpp"

#include <cmath>
#include <string>

#include "tactile/error.hpp"

namespace tactile {

std::vector<double> sinusoidal(std::size_t k, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0)
    throw Error(ErrorCode::kInvalidArgument, "sinusoidal table needs an even dimension, got " + std::to_string(dim));
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "sinusoidal index is 1-based");
  std::vector<double> row(dim);
  const double pos = static_cast<double>(k);
  for (std::size_t i = 0; i < dim; i += 2) {
    const double angle = pos / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
    row[i] = std::sin(angle);
    row[i + 1] = std::cos(angle);
  }
  return row;
}

SinusoidalTable::SinusoidalTable(std::size_t rows, std::size_t dim)
    : table_(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim)) {
  for (std::size_t r = 0; r < rows; ++r) {
    const auto v = sinusoidal(r + 1, dim);
    for (std::size_t c = 0; c < dim; ++c) table_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
  }
}

namespace {

Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

constexpr double kInitStd = 0.02;

}  // namespace

EmbeddingSet EmbeddingSet::create(ParameterStore& store, const TubeletGrid& grid,
                                  const EmbeddingConfig& config, Rng& rng) {
  EmbeddingSet set;
  set.config = config;
  set.grid = grid;
  set.position = SinusoidalTable(grid.n_tube, config.dim);
  set.spatial = SinusoidalTable(grid.n_space, config.dim);
  set.temporal = SinusoidalTable(grid.n_temp, config.dim);
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto v = static_cast<Eigen::Index>(grid.config.volume());
  set.proj_weight = store.add("embed.proj.weight", normal_init(v, d, kInitStd, rng));
  set.proj_bias = store.add("embed.proj.bias", Matrix::Zero(1, d));
  set.cls_tubelet = store.add("embed.cls.tubelet", normal_init(1, d, kInitStd, rng));
  set.cls_position = store.add("embed.cls.position", normal_init(1, d, kInitStd, rng));
  set.cls_spatial = store.add("embed.cls.spatial", normal_init(1, d, kInitStd, rng));
  set.cls_temporal = store.add("embed.cls.temporal", normal_init(1, d, kInitStd, rng));
  set.mask_token = store.add("embed.mask_token", normal_init(1, d, kInitStd, rng));
  return set;
}

Matrix tubelet_matrix(std::span<const Tubelet> tubelets) {
  if (tubelets.empty()) throw Error(ErrorCode::kInvalidArgument, "no tubelets");
  const std::size_t v = tubelets.front().values.size();
  Matrix x(static_cast<Eigen::Index>(tubelets.size()), static_cast<Eigen::Index>(v));
  for (std::size_t i = 0; i < tubelets.size(); ++i) {
    if (tubelets[i].values.size() != v) throw Error(ErrorCode::kShapeMismatch, "tubelets differ in length");
    for (std::size_t j = 0; j < v; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tubelets[i].values[j];
  }
  return x;
}

Var project_tubelets(Tape& tape, const EmbeddingSet& set, std::span<const Tubelet> tubelets) {
  Matrix x = tubelet_matrix(tubelets);
  if (static_cast<std::size_t>(x.cols()) != set.grid.config.volume())
    throw Error(ErrorCode::kShapeMismatch, "tubelet length " + std::to_string(x.cols()) +
                                               " does not match projection input " +
                                               std::to_string(set.grid.config.volume()));
  Var in = tape.constant(std::move(x));
  return tape.add_row(tape.matmul(in, tape.param(set.proj_weight)), tape.param(set.proj_bias));
}

Matrix fixed_embeddings(const EmbeddingSet& set, std::span<const Tubelet> tubelets) {
  const auto d = static_cast<Eigen::Index>(set.config.dim);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(tubelets.size()), d);
  for (std::size_t i = 0; i < tubelets.size(); ++i) {
    const Tubelet& tb = tubelets[i];
    if (tb.sequence_index >= set.position.rows() || tb.spatial_index >= set.spatial.rows() ||
        tb.temporal_index >= set.temporal.rows())
      throw Error(ErrorCode::kShapeMismatch, "tubelet index outside the embedding tables");
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r) += set.position.row(tb.sequence_index);
    if (set.config.use_spatial) out.row(r) += set.spatial.row(tb.spatial_index);
    if (set.config.use_temporal) out.row(r) += set.temporal.row(tb.temporal_index);
  }
  return out;
}

Var compose_input(Tape& tape, const EmbeddingSet& set, std::span<const Tubelet> tubelets, Var tubelet_rows) {
  if (tubelets.size() != set.grid.n_tube)
    throw Error(ErrorCode::kShapeMismatch, "got " + std::to_string(tubelets.size()) +
                                               " tubelets for tables sized to " + std::to_string(set.grid.n_tube));
  Var body = tape.add(tubelet_rows, tape.constant(fixed_embeddings(set, tubelets)));
  Var cls = tape.add(tape.param(set.cls_tubelet), tape.param(set.cls_position));
  if (set.config.use_spatial) cls = tape.add(cls, tape.param(set.cls_spatial));
  if (set.config.use_temporal) cls = tape.add(cls, tape.param(set.cls_temporal));
  const Var parts[] = {cls, body};
  return tape.concat_rows(parts);
}

Var compose_input(Tape& tape, const EmbeddingSet& set, std::span<const Tubelet> tubelets) {
  return compose_input(tape, set, tubelets, project_tubelets(tape, set, tubelets));
}

std::vector<double> project_tubelet(const ParameterStore& store, const EmbeddingSet& set,
                                    std::span<const float> values) {
  const Matrix& w = store.value(set.proj_weight);
  if (values.size() != static_cast<std::size_t>(w.rows()))
    throw Error(ErrorCode::kShapeMismatch, "tubelet length " + std::to_string(values.size()) +
                                               " does not match projection input " + std::to_string(w.rows()));
  Eigen::RowVectorXd x(w.rows());
  for (std::size_t i = 0; i < values.size(); ++i) x(static_cast<Eigen::Index>(i)) = values[i];
  const Eigen::RowVectorXd y = x * w + store.value(set.proj_bias).row(0);
  return {y.data(), y.data() + y.size()};
}

Matrix compose_input(const ParameterStore& store, const EmbeddingSet& set, std::span<const Tubelet> tubelets) {
  Tape tape(store);
  return tape.value(compose_input(tape, set, tubelets));
}

}  // namespace tactile
