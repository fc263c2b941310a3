#include "tactile/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "tactile/error.hpp"
#include "tactile/rng.hpp"

namespace fs = std::filesystem;

namespace tactile {

std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << s.c << "x" << s.t << "x" << s.h << "x" << s.w;
  return os.str();
}

TactileTensor::TactileTensor(Shape4 shape, float fill, double sample_rate_hz)
    : shape_(shape), values_(shape.size(), fill), sample_rate_hz_(sample_rate_hz) {
  if (shape.c == 0 || shape.t == 0 || shape.h == 0 || shape.w == 0)
    throw Error(ErrorCode::kInvalidArgument, "tensor dimensions must be >= 1, got " + to_string(shape));
  if (!(sample_rate_hz > 0)) throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
}

TactileTensor::TactileTensor(Shape4 shape, std::vector<float> values, double sample_rate_hz)
    : shape_(shape), values_(std::move(values)), sample_rate_hz_(sample_rate_hz) {
  if (shape.c == 0 || shape.t == 0 || shape.h == 0 || shape.w == 0)
    throw Error(ErrorCode::kInvalidArgument, "tensor dimensions must be >= 1, got " + to_string(shape));
  if (values_.size() != shape.size())
    throw Error(ErrorCode::kShapeMismatch, "value count does not match shape " + to_string(shape));
  for (float v : values_)
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "tensor holds a non-finite value");
  if (!(sample_rate_hz > 0)) throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
}

std::uint64_t fingerprint(const DatasetSplit& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& name : data.class_names) mix(name.data(), name.size() + 1);
  for (const auto* split : {&data.train, &data.validation, &data.test}) {
    const std::uint64_t n = split->size();
    mix(&n, sizeof n);
    for (const auto& s : *split) {
      const std::uint64_t label = s.label;
      mix(&label, sizeof label);
      mix(s.tensor.values().data(), s.tensor.values().size() * sizeof(float));
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Sample files

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_sample_file(const fs::path& path, const TactileTensor& tensor) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (float v : tensor.values()) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

TactileTensor read_sample_file(const fs::path& path, Shape4 shape, double sample_rate_hz) {
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  const auto bytes = fs::file_size(path);
  if (bytes != shape.size() * sizeof(float))
    throw Error(ErrorCode::kShapeMismatch,
                "shape mismatch: " + path.string() + " holds " + std::to_string(bytes) +
                    " bytes, expected " + std::to_string(shape.size() * sizeof(float)) +
                    " for shape " + to_string(shape));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<float> values(shape.size());
  for (auto& v : values) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    v = std::bit_cast<float>(bits);
  }
  if (!in) throw Error(ErrorCode::kIo, "short read from " + path.string());
  return TactileTensor(shape, std::move(values), sample_rate_hz);
}

// ---------------------------------------------------------------------------
// Manifest

DatasetSplit load_dataset(const fs::path& root, const fs::path& manifest,
                          const LoadOptions& options) {
  const fs::path manifest_path = manifest.is_absolute() ? manifest : root / manifest;
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing file: " + manifest_path.string());

  std::optional<Shape4> shape;
  double rate = 15.0;
  DatasetSplit out;
  std::map<std::string, std::size_t> class_index;
  struct Record {
    std::string path, label, split;
    std::size_t line;
  };
  std::vector<Record> records;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(line.substr(1, colon - 1));
      const std::string value = trim(line.substr(colon + 1));
      if (key == "shape") {
        std::istringstream is(value);
        Shape4 s;
        if (!(is >> s.c >> s.t >> s.h >> s.w) || s.size() == 0)
          throw Error(ErrorCode::kMalformedManifest, "bad shape directive on line " + std::to_string(lineno));
        shape = s;
      } else if (key == "sample_rate_hz") {
        rate = std::stod(value);
      } else if (key == "classes") {
        for (const auto& name : split_on(value, ',')) {
          if (name.empty() || class_index.count(name))
            throw Error(ErrorCode::kMalformedManifest, "bad class list on line " + std::to_string(lineno));
          class_index[name] = out.class_names.size();
          out.class_names.push_back(name);
        }
      }
      continue;
    }
    const auto fields = split_on(line, ',');
    if (fields.size() != 3)
      throw Error(ErrorCode::kMalformedManifest,
                  "line " + std::to_string(lineno) + ": expected path,label,split");
    records.push_back({fields[0], fields[1], fields[2], lineno});
  }

  if (records.empty()) throw Error(ErrorCode::kEmptyManifest, "empty manifest");
  if (!shape) throw Error(ErrorCode::kMalformedManifest, "manifest lacks a '# shape:' directive");
  if (out.class_names.empty())
    throw Error(ErrorCode::kMalformedManifest, "manifest lacks a '# classes:' directive");

  std::uint64_t next_id = 0;
  for (const auto& r : records) {
    const auto it = class_index.find(r.label);
    if (it == class_index.end())
      throw Error(ErrorCode::kUnknownLabel,
                  "unknown label '" + r.label + "' on line " + std::to_string(r.line));
    LabeledSample sample{read_sample_file(root / r.path, *shape, rate), it->second, next_id++};
    if (r.split == "train") {
      out.train.push_back(std::move(sample));
    } else if (r.split == "val" || r.split == "validation") {
      out.validation.push_back(std::move(sample));
    } else if (r.split == "test") {
      out.test.push_back(std::move(sample));
    } else {
      throw Error(ErrorCode::kMalformedManifest,
                  "unknown split '" + r.split + "' on line " + std::to_string(r.line));
    }
  }

  if (options.train_per_class > 0)
    out.train = balance(out.train, out.num_classes(), options.train_per_class, options.seed);
  return out;
}

fs::path write_dataset(const DatasetSplit& data, const fs::path& root) {
  fs::create_directories(root);
  const fs::path manifest = root / "manifest.txt";
  std::ofstream out(manifest);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + manifest.string());

  const LabeledSample* first = nullptr;
  for (const auto* split : {&data.train, &data.validation, &data.test})
    if (!split->empty() && !first) first = &split->front();
  if (!first) throw Error(ErrorCode::kEmptyManifest, "empty manifest");

  const Shape4 s = first->tensor.shape();
  out << "# tactile manifest v1\n";
  out << "# shape: " << s.c << ' ' << s.t << ' ' << s.h << ' ' << s.w << '\n';
  out << "# sample_rate_hz: " << std::setprecision(17) << first->tensor.sample_rate_hz() << '\n';
  out << "# classes: ";
  for (std::size_t i = 0; i < data.class_names.size(); ++i)
    out << (i ? "," : "") << data.class_names[i];
  out << '\n';

  const std::pair<const std::vector<LabeledSample>*, const char*> splits[] = {
      {&data.train, "train"}, {&data.validation, "val"}, {&data.test, "test"}};
  for (const auto& [split, name] : splits) {
    std::vector<std::uint64_t> seen;
    for (const auto& sample : *split) {
      if (std::find(seen.begin(), seen.end(), sample.id) != seen.end()) continue;
      seen.push_back(sample.id);
      std::ostringstream rel;
      rel << name << '/' << std::setw(6) << std::setfill('0') << sample.id << ".f32";
      write_sample_file(root / rel.str(), sample.tensor);
      out << rel.str() << ',' << data.class_names.at(sample.label) << ',' << name << '\n';
    }
  }
  return manifest;
}

std::vector<LabeledSample> balance(const std::vector<LabeledSample>& samples,
                                   std::size_t num_classes, std::size_t per_class,
                                   std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label >= num_classes)
      throw Error(ErrorCode::kUnknownLabel, "label out of range while balancing");
    by_class[samples[i].label].push_back(i);
  }
  std::vector<LabeledSample> out;
  out.reserve(per_class * num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;  // nothing to draw from; the label set is unchanged
    Rng rng = make_rng(seed, {kStreamBalance, c});
    std::vector<std::size_t> chosen;
    if (idx.size() >= per_class) {
      std::shuffle(idx.begin(), idx.end(), rng);
      chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
      std::sort(chosen.begin(), chosen.end());
    } else {
      chosen = idx;
      std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
      while (chosen.size() < per_class) chosen.push_back(idx[pick(rng)]);
    }
    for (std::size_t i : chosen) out.push_back(samples[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

const char* to_string(SyntheticMode mode) {
  switch (mode) {
    case SyntheticMode::kSpatialPair: return "spatial-pair";
    case SyntheticMode::kTemporalPair: return "temporal-pair";
    case SyntheticMode::kMixed: return "mixed";
  }
  return "?";
}

SyntheticMode parse_synthetic_mode(const std::string& text) {
  if (text == "spatial-pair") return SyntheticMode::kSpatialPair;
  if (text == "temporal-pair") return SyntheticMode::kTemporalPair;
  if (text == "mixed") return SyntheticMode::kMixed;
  throw Error(ErrorCode::kInvalidArgument, "unknown synthetic mode '" + text + "'");
}

std::size_t SyntheticTaskSpec::spatial_classes() const {
  switch (mode) {
    case SyntheticMode::kSpatialPair: return classes;
    case SyntheticMode::kTemporalPair: return 0;
    case SyntheticMode::kMixed: return classes / 2;
  }
  return 0;
}

ClassGroup SyntheticTaskSpec::group_of(std::size_t label) const {
  return label < spatial_classes() ? ClassGroup::kSpatial : ClassGroup::kTemporal;
}

namespace {

struct BlobLayout {
  std::size_t window = 0;  // side of the square blob window, multiple of patch
  std::vector<std::pair<std::size_t, std::size_t>> slots;  // (device*H + row, col) origins
  std::vector<double> blob;                                // window x window
};

BlobLayout make_layout(const SyntheticTaskSpec& spec, std::size_t needed) {
  const auto& s = spec.shape;
  const std::size_t p = spec.patch;
  BlobLayout layout;
  layout.window = (s.h >= 2 * p && s.w >= 2 * p) ? 2 * p : p;
  const std::size_t nx = s.w / layout.window;
  const std::size_t ny = s.h / layout.window;
  // Row-major, so the first two slots split the top of the frame left/right.
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x)
        layout.slots.emplace_back(c * s.h + y * layout.window, x * layout.window);
  if (layout.slots.size() < needed)
    throw Error(ErrorCode::kInvalidArgument,
                "frame " + std::to_string(s.h) + "x" + std::to_string(s.w) + " holds only " +
                    std::to_string(layout.slots.size()) + " blob locations, " +
                    std::to_string(needed) + " needed");
  const double sigma = static_cast<double>(layout.window) / 4.0;
  const double centre = (static_cast<double>(layout.window) - 1.0) / 2.0;
  layout.blob.resize(layout.window * layout.window);
  for (std::size_t y = 0; y < layout.window; ++y)
    for (std::size_t x = 0; x < layout.window; ++x) {
      const double dy = static_cast<double>(y) - centre, dx = static_cast<double>(x) - centre;
      layout.blob[y * layout.window + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    }
  return layout;
}

// Repeats every tubelet_frames frames, so every tubelet sees the same profile.
double amplitude(std::size_t t, std::size_t period) {
  if (period <= 1) return 1.0;
  const double phase = static_cast<double>(t % period) / static_cast<double>(period);
  return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * phase);
}

constexpr double kTemporalGain = 1.5;

}  // namespace

DatasetSplit generate_synthetic(const SyntheticTaskSpec& spec) {
  const auto& s = spec.shape;
  if (spec.classes < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic task needs M >= 2 classes");
  if (s.c == 0 || s.t == 0 || s.h == 0 || s.w == 0)
    throw Error(ErrorCode::kInvalidArgument, "synthetic dimensions must be positive");
  if (spec.patch == 0 || spec.tubelet_frames == 0)
    throw Error(ErrorCode::kInvalidArgument, "tubelet geometry must be positive");
  if (s.t % spec.tubelet_frames != 0 || s.h % spec.patch != 0 || s.w % spec.patch != 0)
    throw Error(ErrorCode::kNotDivisible, "synthetic shape " + to_string(s) +
                                              " is not divisible by the tubelet geometry");
  if (!(spec.noise_std >= 0)) throw Error(ErrorCode::kInvalidArgument, "noise_std must be >= 0");

  const std::size_t n_spatial = spec.spatial_classes();
  const std::size_t n_temporal = spec.classes - n_spatial;
  if (spec.mode == SyntheticMode::kMixed && (n_spatial < 2 || n_temporal < 2))
    throw Error(ErrorCode::kInvalidArgument, "mixed mode needs M >= 4");
  const std::size_t windows = s.t / spec.tubelet_frames;
  if (n_temporal > 0 && windows % n_temporal != 0)
    throw Error(ErrorCode::kInvalidArgument,
                "temporal-pair classes need T/L (" + std::to_string(windows) +
                    ") divisible by their count (" + std::to_string(n_temporal) + ")");

  // In mixed mode the temporal pair gets its own slots, so every sensor cell
  // carries signal for some class and none normalizes to pure noise.
  const std::size_t temporal_base = spec.mode == SyntheticMode::kMixed ? n_spatial : 0;
  const BlobLayout layout = make_layout(spec, std::max(n_spatial, temporal_base + n_temporal));

  // Clean signal per class.
  std::vector<TactileTensor> clean;
  for (std::size_t label = 0; label < spec.classes; ++label) {
    TactileTensor x(s, 0.0f, spec.sample_rate_hz);
    for (std::size_t t = 0; t < s.t; ++t) {
      std::size_t slot = 0;
      double gain = 1.0;
      if (label < n_spatial) {
        slot = label;
      } else {
        const std::size_t j = label - n_spatial;
        const std::size_t segment = (t / spec.tubelet_frames) * n_temporal / windows;
        slot = temporal_base + (segment + j) % n_temporal;
        gain = kTemporalGain;
      }
      const double a = gain * amplitude(t, spec.tubelet_frames);
      const auto [row0, col0] = layout.slots[slot];
      const std::size_t dev = row0 / s.h, r0 = row0 % s.h;
      for (std::size_t y = 0; y < layout.window; ++y)
        for (std::size_t xx = 0; xx < layout.window; ++xx)
          x.at(dev, t, r0 + y, col0 + xx) =
              static_cast<float>(a * layout.blob[y * layout.window + xx]);
    }
    clean.push_back(std::move(x));
  }

  DatasetSplit out;
  for (std::size_t label = 0; label < spec.classes; ++label) {
    const bool spatial = label < n_spatial;
    const std::size_t j = spatial ? label : label - n_spatial;
    out.class_names.push_back((spatial ? "spatial_" : "temporal_") + std::to_string(j));
  }

  std::uint64_t id = 0;
  const std::pair<std::vector<LabeledSample>*, std::size_t> splits[] = {
      {&out.train, spec.train_per_class},
      {&out.validation, spec.validation_per_class},
      {&out.test, spec.test_per_class}};
  for (std::size_t si = 0; si < 3; ++si) {
    auto& [dest, per_class] = splits[si];
    for (std::size_t label = 0; label < spec.classes; ++label) {
      for (std::size_t i = 0; i < per_class; ++i) {
        TactileTensor x = clean[label];
        if (spec.noise_std > 0) {
          Rng rng = make_rng(spec.seed, {kStreamSynth, si, label, i});
          std::normal_distribution<double> noise(0.0, spec.noise_std);
          for (float& v : x.values()) v = static_cast<float>(v + noise(rng));
        }
        dest->push_back({std::move(x), label, id++});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

NormalizationStats compute_stats(std::span<const LabeledSample> train) {
  if (train.empty()) throw Error(ErrorCode::kEmptySplit, "cannot compute statistics of an empty split");
  const Shape4 s = train.front().tensor.shape();
  NormalizationStats stats;
  stats.c = s.c;
  stats.h = s.h;
  stats.w = s.w;
  const std::size_t cells = s.c * s.h * s.w;
  std::vector<double> sum(cells, 0.0), sq(cells, 0.0);
  for (const auto& sample : train) {
    const auto& x = sample.tensor;
    if (!(x.shape() == s)) throw Error(ErrorCode::kShapeMismatch, "training tensors differ in shape");
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t h = 0; h < s.h; ++h)
          for (std::size_t w = 0; w < s.w; ++w) {
            const double v = x.at(c, t, h, w);
            const std::size_t cell = (c * s.h + h) * s.w + w;
            sum[cell] += v;
            sq[cell] += v * v;
          }
  }
  const double n = static_cast<double>(train.size() * s.t);
  stats.mean.resize(cells);
  stats.stddev.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const double m = sum[i] / n;
    const double var = std::max(0.0, sq[i] / n - m * m);
    stats.mean[i] = m;
    stats.stddev[i] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

namespace {

template <typename F>
TactileTensor map_cells(const TactileTensor& x, const NormalizationStats& stats, F f) {
  const Shape4 s = x.shape();
  if (s.c != stats.c || s.h != stats.h || s.w != stats.w)
    throw Error(ErrorCode::kShapeMismatch, "normalization stats do not match tensor shape " + to_string(s));
  TactileTensor out(s, 0.0f, x.sample_rate_hz());
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) {
          const std::size_t cell = (c * s.h + h) * s.w + w;
          out.at(c, t, h, w) = static_cast<float>(f(x.at(c, t, h, w), stats.mean[cell], stats.stddev[cell]));
        }
  return out;
}

}  // namespace

TactileTensor normalize(const TactileTensor& tensor, const NormalizationStats& stats) {
  return map_cells(tensor, stats, [](double v, double m, double sd) { return (v - m) / sd; });
}

TactileTensor denormalize(const TactileTensor& tensor, const NormalizationStats& stats) {
  return map_cells(tensor, stats, [](double v, double m, double sd) { return v * sd + m; });
}

}  // namespace tactile
