#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tactile/autodiff.hpp"
#include "tactile/data.hpp"
#include "tactile/model.hpp"

namespace tactile {

/// On-disk layout (all integers and doubles little-endian):
///
///   "TACTCKPT" u32 version
///   str stage, u64 epoch, u64 seed, u64 best_epoch, f64 best_metric
///   str config_text
///   u64 n, then n x {str name, u64 rows, u64 cols, f64[rows*cols]}   parameters
///   u64 adam_steps, f64 lr, then per parameter m blob and v blob (same shapes)
///   u64 c, h, w, f64[c*h*w] mean, f64[c*h*w] std                      normalization
///   u64 fnv1a64 of every preceding byte
///
/// where str is u64 length followed by UTF-8 bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string stage;  // "pretrain" or "finetune"
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  std::uint64_t best_epoch = 0;
  double best_metric = -1.0;
  std::string config_text;
  std::vector<std::pair<std::string, Matrix>> params;
  std::uint64_t adam_steps = 0;
  double adam_lr = 0.0;
  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;
  NormalizationStats stats;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws kMissingFile or kCorruptCheckpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters by name; throws kArchitectureMismatch on any missing
/// name or shape difference.
void restore_parameters(ParameterStore& store, const Checkpoint& ckpt);
std::vector<std::pair<std::string, Matrix>> snapshot_parameters(const ParameterStore& store);

}  // namespace tactile
