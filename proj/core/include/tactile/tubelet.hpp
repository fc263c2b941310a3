#pragma once

#include <cstddef>
#include <vector>

#include "tactile/data.hpp"

namespace tactile {

struct TubeletConfig {
  std::size_t frames = 5;  // L
  std::size_t patch = 4;   // P

  std::size_t volume() const { return frames * patch * patch; }
  friend bool operator==(const TubeletConfig&, const TubeletConfig&) = default;
};

/// Geometry of the tubelet partition of one tensor shape. Devices extend the
/// spatial index space: n_space = C*H*W / P^2.
struct TubeletGrid {
  Shape4 source;
  TubeletConfig config;
  std::size_t n_space = 0;
  std::size_t n_temp = 0;
  std::size_t n_tube = 0;

  /// Throws kNotDivisible naming the offending axis.
  static TubeletGrid make(const Shape4& shape, const TubeletConfig& config);

  std::size_t patches_per_row() const { return source.w / config.patch; }
  std::size_t sequence_index(std::size_t spatial, std::size_t temporal) const {
    return temporal * n_space + spatial;
  }
  std::size_t spatial_index(std::size_t sequence) const { return sequence % n_space; }
  std::size_t temporal_index(std::size_t sequence) const { return sequence / n_space; }

  friend bool operator==(const TubeletGrid&, const TubeletGrid&) = default;
};

struct Tubelet {
  std::vector<float> values;  // L*P*P, ordered frame, row, col
  std::size_t spatial_index = 0;
  std::size_t temporal_index = 0;
  std::size_t sequence_index = 0;
};

struct TubeletSequence {
  TubeletGrid grid;
  std::vector<Tubelet> tubelets;
};

/// Tubelets come back in sequence order: temporal-major, then row-major over
/// patches (device-major when C > 1).
TubeletSequence tokenize(const TactileTensor& tensor, const TubeletConfig& config);

/// Reassembles by sequence_index, so the order of `tubelets` is irrelevant.
TactileTensor detokenize(const TubeletGrid& grid, const std::vector<Tubelet>& tubelets,
                         double sample_rate_hz = 15.0);

}  // namespace tactile
