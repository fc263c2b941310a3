#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tactile/autodiff.hpp"
#include "tactile/rng.hpp"

namespace tactile {

struct EncoderConfig {
  std::size_t layers = 3;   // K
  std::size_t dim = 64;     // D
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  /// Throws kInvalidConfig on D mod heads != 0, K == 0 or dropout outside [0, 1).
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderLayerParams {
  ParamId ln1_gamma, ln1_beta;
  ParamId wq, bq, wk, bk, wv, bv, wo, bo;
  ParamId ln2_gamma, ln2_beta;
  ParamId w1, b1, w2, b2;
};

struct ForwardOptions {
  /// Dropout stream; dropout is skipped when null.
  Rng* dropout_rng = nullptr;
  /// When set, receives every head's attention matrix, layer-major.
  std::vector<Matrix>* attention = nullptr;
  /// When set, receives each layer's output (before the final norm).
  std::vector<Matrix>* layer_outputs = nullptr;
};

/// Pre-norm transformer encoder: x + MHA(LN(x)), then x + FFN(LN(x)) with a
/// GELU feed-forward, followed by a final layer norm.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  /// Registers encoder.layer{i}.* and encoder.final_ln.* in `store`.
  TransformerEncoder(ParameterStore& store, const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }
  const std::vector<EncoderLayerParams>& layers() const { return layers_; }

  Var forward(Tape& tape, Var input, const ForwardOptions& options = {}) const;

 private:
  Var attention(Tape& tape, Var x, const EncoderLayerParams& p, const ForwardOptions& options) const;

  EncoderConfig config_;
  std::vector<EncoderLayerParams> layers_;
  ParamId final_gamma_ = 0, final_beta_ = 0;
};

struct EncodedSequence {
  Matrix output;                     // (n + 1) x D
  std::vector<Matrix> layer_outputs;  // per layer, when retained
  std::vector<Matrix> attention;      // per layer and head, when retained
};

/// Deterministic forward pass (no dropout). Rejects non-finite input.
EncodedSequence encode(const Matrix& input, const TransformerEncoder& encoder,
                       const ParameterStore& params, bool retain = false);

}  // namespace tactile
