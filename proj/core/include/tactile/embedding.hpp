#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tactile/autodiff.hpp"
#include "tactile/rng.hpp"
#include "tactile/tubelet.hpp"

namespace tactile {

/// Row k-1 of the classical table: [sin(k/10000^(2d/D)), cos(k/10000^(2d/D))]
/// interleaved. `k` is 1-based. Throws for odd or zero `dim`.
std::vector<double> sinusoidal(std::size_t k, std::size_t dim);

/// Fixed table over 0-based indices; row i holds sinusoidal(i + 1, dim).
class SinusoidalTable {
 public:
  SinusoidalTable() = default;
  SinusoidalTable(std::size_t rows, std::size_t dim);

  std::size_t rows() const { return static_cast<std::size_t>(table_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(table_.cols()); }
  auto row(std::size_t index) const { return table_.row(static_cast<Eigen::Index>(index)); }
  const Matrix& matrix() const { return table_; }

 private:
  Matrix table_;
};

struct EmbeddingConfig {
  std::size_t dim = 64;
  bool use_spatial = true;
  bool use_temporal = true;
};

/// Learned tubelet projection and [CLS] slots plus the three fixed tables.
/// Registers its parameters in the store it is created with:
///   embed.proj.weight (L*P^2 x D), embed.proj.bias (1 x D),
///   embed.cls.{tubelet,position,spatial,temporal} (1 x D),
///   embed.mask_token (1 x D).
struct EmbeddingSet {
  EmbeddingConfig config;
  TubeletGrid grid;
  SinusoidalTable position;
  SinusoidalTable spatial;
  SinusoidalTable temporal;

  ParamId proj_weight = 0;
  ParamId proj_bias = 0;
  ParamId cls_tubelet = 0;
  ParamId cls_position = 0;
  ParamId cls_spatial = 0;
  ParamId cls_temporal = 0;
  ParamId mask_token = 0;

  static EmbeddingSet create(ParameterStore& store, const TubeletGrid& grid,
                             const EmbeddingConfig& config, Rng& rng);
};

/// Stacks tubelet values into an n x (L*P^2) matrix in the given order.
Matrix tubelet_matrix(std::span<const Tubelet> tubelets);

/// E^tubelet rows: values * W + b.
Var project_tubelets(Tape& tape, const EmbeddingSet& set, std::span<const Tubelet> tubelets);

/// Position + (optional) spatial + (optional) temporal table rows keyed by
/// each tubelet's own indices.
Matrix fixed_embeddings(const EmbeddingSet& set, std::span<const Tubelet> tubelets);

/// Prepends the [CLS] row (sum of its enabled learned slots) and adds the
/// fixed tables to `tubelet_rows`. Result is (n + 1) x D.
Var compose_input(Tape& tape, const EmbeddingSet& set, std::span<const Tubelet> tubelets,
                  Var tubelet_rows);

/// Convenience: projection followed by composition.
Var compose_input(Tape& tape, const EmbeddingSet& set, std::span<const Tubelet> tubelets);

// Plain evaluations against the current parameter values.
std::vector<double> project_tubelet(const ParameterStore& store, const EmbeddingSet& set,
                                    std::span<const float> values);
Matrix compose_input(const ParameterStore& store, const EmbeddingSet& set,
                     std::span<const Tubelet> tubelets);

}  // namespace tactile
