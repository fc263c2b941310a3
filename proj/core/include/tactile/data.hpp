#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tactile {

/// Devices x frames x sensor rows x sensor cols.
struct Shape4 {
  std::size_t c = 1;
  std::size_t t = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t size() const { return c * t * h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// Dense C x T x H x W block of sensor readings, stored in C,T,H,W order.
class TactileTensor {
 public:
  TactileTensor() = default;
  explicit TactileTensor(Shape4 shape, float fill = 0.0f, double sample_rate_hz = 15.0);
  TactileTensor(Shape4 shape, std::vector<float> values, double sample_rate_hz = 15.0);

  const Shape4& shape() const { return shape_; }
  double sample_rate_hz() const { return sample_rate_hz_; }

  float& at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
    return values_[offset(c, t, h, w)];
  }
  float at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const {
    return values_[offset(c, t, h, w)];
  }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  friend bool operator==(const TactileTensor&, const TactileTensor&) = default;

 private:
  std::size_t offset(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const {
    return ((c * shape_.t + t) * shape_.h + h) * shape_.w + w;
  }

  Shape4 shape_;
  std::vector<float> values_;
  double sample_rate_hz_ = 15.0;
};

struct LabeledSample {
  TactileTensor tensor;
  std::size_t label = 0;
  std::uint64_t id = 0;  // unique per source sample; oversampled copies share it
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
};

/// FNV-1a over class names, labels and raw sample bytes of every split.
std::uint64_t fingerprint(const DatasetSplit& data);

// ---------------------------------------------------------------------------
// Manifest-backed datasets

struct LoadOptions {
  /// Target per-class count for the training split; 0 keeps the split as is.
  std::size_t train_per_class = 0;
  std::uint64_t seed = 0;
};

/// Reads a manifest of the form
///
///   # shape: C T H W
///   # sample_rate_hz: 15          (optional)
///   # classes: walk,jump,...
///   relative/path.f32,label,split
///
/// where split is one of train, val, validation, test and each sample file
/// holds C*T*H*W little-endian float32 values.
DatasetSplit load_dataset(const std::filesystem::path& root,
                          const std::filesystem::path& manifest,
                          const LoadOptions& options = {});

/// Inverse of load_dataset (without balancing). Writes one file per sample
/// under root and a manifest named manifest.txt. Oversampled duplicates are
/// written once.
std::filesystem::path write_dataset(const DatasetSplit& data,
                                    const std::filesystem::path& root);

void write_sample_file(const std::filesystem::path& path, const TactileTensor& tensor);
TactileTensor read_sample_file(const std::filesystem::path& path, Shape4 shape,
                               double sample_rate_hz = 15.0);

/// Oversamples (with replacement) or undersamples (without) each class of
/// `samples` to exactly `per_class` entries.
std::vector<LabeledSample> balance(const std::vector<LabeledSample>& samples,
                                   std::size_t num_classes, std::size_t per_class,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data

enum class SyntheticMode { kSpatialPair, kTemporalPair, kMixed };

const char* to_string(SyntheticMode mode);
SyntheticMode parse_synthetic_mode(const std::string& text);

enum class ClassGroup { kSpatial, kTemporal };

struct SyntheticTaskSpec {
  SyntheticMode mode = SyntheticMode::kMixed;
  std::size_t classes = 4;
  Shape4 shape{1, 20, 16, 16};
  double noise_std = 0.05;
  std::size_t train_per_class = 50;
  std::size_t validation_per_class = 10;
  std::size_t test_per_class = 25;
  std::uint64_t seed = 0;
  // Tokenizer geometry the data is aligned to.
  std::size_t tubelet_frames = 5;
  std::size_t patch = 4;
  double sample_rate_hz = 15.0;

  /// Spatial-pair classes come first in mixed mode.
  std::size_t spatial_classes() const;
  ClassGroup group_of(std::size_t label) const;
};

/// Every sample is a patch-aligned Gaussian blob scaled by an amplitude
/// profile that repeats every tubelet_frames frames, plus N(0, noise_std)
/// noise. Spatial-pair classes park the same blob at different patch-aligned
/// locations; temporal-pair classes visit a shared set of locations in
/// class-specific orders, switching only at tubelet boundaries.
DatasetSplit generate_synthetic(const SyntheticTaskSpec& spec);

// ---------------------------------------------------------------------------
// Normalization

/// Per sensor cell (device, row, col) mean and population std over every
/// frame of every training sample.
struct NormalizationStats {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at kStdFloor
};

inline constexpr double kStdFloor = 1e-6;

NormalizationStats compute_stats(std::span<const LabeledSample> train);
TactileTensor normalize(const TactileTensor& tensor, const NormalizationStats& stats);
TactileTensor denormalize(const TactileTensor& tensor, const NormalizationStats& stats);

}  // namespace tactile
