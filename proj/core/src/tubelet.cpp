#include "tactile/tubelet.hpp"

#include <string>

#include "tactile/error.hpp"

namespace tactile {

TubeletGrid TubeletGrid::make(const Shape4& shape, const TubeletConfig& config) {
  if (config.frames == 0 || config.patch == 0)
    throw Error(ErrorCode::kInvalidArgument, "tubelet L and P must be >= 1");
  if (shape.c == 0 || shape.t == 0 || shape.h == 0 || shape.w == 0)
    throw Error(ErrorCode::kInvalidArgument, "tensor dimensions must be >= 1");
  if (shape.t % config.frames != 0)
    throw Error(ErrorCode::kNotDivisible, "T not divisible by L (T=" + std::to_string(shape.t) +
                                              ", L=" + std::to_string(config.frames) + ")");
  if (shape.h % config.patch != 0)
    throw Error(ErrorCode::kNotDivisible, "H not divisible by P (H=" + std::to_string(shape.h) +
                                              ", P=" + std::to_string(config.patch) + ")");
  if (shape.w % config.patch != 0)
    throw Error(ErrorCode::kNotDivisible, "W not divisible by P (W=" + std::to_string(shape.w) +
                                              ", P=" + std::to_string(config.patch) + ")");
  TubeletGrid g;
  g.source = shape;
  g.config = config;
  g.n_space = shape.c * (shape.h / config.patch) * (shape.w / config.patch);
  g.n_temp = shape.t / config.frames;
  g.n_tube = g.n_space * g.n_temp;
  return g;
}

TubeletSequence tokenize(const TactileTensor& tensor, const TubeletConfig& config) {
  TubeletSequence seq;
  seq.grid = TubeletGrid::make(tensor.shape(), config);
  const auto& g = seq.grid;
  const std::size_t L = config.frames, P = config.patch;
  const std::size_t per_row = g.patches_per_row();
  const std::size_t per_device = (g.source.h / P) * per_row;

  seq.tubelets.resize(g.n_tube);
  for (std::size_t kt = 0; kt < g.n_temp; ++kt) {
    for (std::size_t ks = 0; ks < g.n_space; ++ks) {
      const std::size_t dev = ks / per_device;
      const std::size_t py = (ks % per_device) / per_row;
      const std::size_t px = ks % per_row;
      Tubelet& tb = seq.tubelets[g.sequence_index(ks, kt)];
      tb.spatial_index = ks;
      tb.temporal_index = kt;
      tb.sequence_index = g.sequence_index(ks, kt);
      tb.values.reserve(config.volume());
      for (std::size_t f = 0; f < L; ++f)
        for (std::size_t y = 0; y < P; ++y)
          for (std::size_t x = 0; x < P; ++x)
            tb.values.push_back(tensor.at(dev, kt * L + f, py * P + y, px * P + x));
    }
  }
  return seq;
}

TactileTensor detokenize(const TubeletGrid& grid, const std::vector<Tubelet>& tubelets,
                         double sample_rate_hz) {
  const std::size_t L = grid.config.frames, P = grid.config.patch;
  std::vector<char> seen(grid.n_tube, 0);
  TactileTensor out(grid.source, 0.0f, sample_rate_hz);
  const std::size_t per_row = grid.patches_per_row();
  const std::size_t per_device = (grid.source.h / P) * per_row;

  for (const auto& tb : tubelets) {
    if (tb.sequence_index >= grid.n_tube)
      throw Error(ErrorCode::kInvalidArgument, "sequence index " + std::to_string(tb.sequence_index) +
                                                   " outside grid of " + std::to_string(grid.n_tube));
    if (seen[tb.sequence_index])
      throw Error(ErrorCode::kDuplicateIndex, "duplicate index " + std::to_string(tb.sequence_index));
    if (tb.values.size() != grid.config.volume())
      throw Error(ErrorCode::kShapeMismatch, "tubelet holds " + std::to_string(tb.values.size()) +
                                                 " values, expected " + std::to_string(grid.config.volume()));
    seen[tb.sequence_index] = 1;
    const std::size_t ks = grid.spatial_index(tb.sequence_index);
    const std::size_t kt = grid.temporal_index(tb.sequence_index);
    const std::size_t dev = ks / per_device;
    const std::size_t py = (ks % per_device) / per_row;
    const std::size_t px = ks % per_row;
    std::size_t i = 0;
    for (std::size_t f = 0; f < L; ++f)
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x) out.at(dev, kt * L + f, py * P + y, px * P + x) = tb.values[i++];
  }
  for (std::size_t i = 0; i < grid.n_tube; ++i)
    if (!seen[i]) throw Error(ErrorCode::kMissingIndex, "missing index " + std::to_string(i));
  return out;
}

}  // namespace tactile
