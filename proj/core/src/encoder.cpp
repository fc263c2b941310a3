#include "tactile/encoder.hpp"

#include <cmath>
#include <string>

#include "tactile/error.hpp"

namespace tactile {

void EncoderConfig::validate() const {
  if (layers == 0) throw Error(ErrorCode::kInvalidConfig, "encoder.layers must be >= 1");
  if (dim == 0 || heads == 0 || dim % heads != 0)
    throw Error(ErrorCode::kInvalidConfig, "encoder.dim must be a positive multiple of encoder.heads");
  if (ff_dim == 0) throw Error(ErrorCode::kInvalidConfig, "encoder.ff_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::kInvalidConfig, "encoder.dropout must lie in [0, 1)");
}

namespace {

Matrix normal(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 0.02);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

TransformerEncoder::TransformerEncoder(ParameterStore& store, const EncoderConfig& config, Rng& rng)
    : config_(config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto f = static_cast<Eigen::Index>(config.ff_dim);
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    EncoderLayerParams l{};
    l.ln1_gamma = store.add(p + "ln1.gamma", Matrix::Ones(1, d));
    l.ln1_beta = store.add(p + "ln1.beta", Matrix::Zero(1, d));
    l.wq = store.add(p + "attn.wq", normal(d, d, rng));
    l.bq = store.add(p + "attn.bq", Matrix::Zero(1, d));
    l.wk = store.add(p + "attn.wk", normal(d, d, rng));
    l.bk = store.add(p + "attn.bk", Matrix::Zero(1, d));
    l.wv = store.add(p + "attn.wv", normal(d, d, rng));
    l.bv = store.add(p + "attn.bv", Matrix::Zero(1, d));
    l.wo = store.add(p + "attn.wo", normal(d, d, rng));
    l.bo = store.add(p + "attn.bo", Matrix::Zero(1, d));
    l.ln2_gamma = store.add(p + "ln2.gamma", Matrix::Ones(1, d));
    l.ln2_beta = store.add(p + "ln2.beta", Matrix::Zero(1, d));
    l.w1 = store.add(p + "ffn.w1", normal(d, f, rng));
    l.b1 = store.add(p + "ffn.b1", Matrix::Zero(1, f));
    l.w2 = store.add(p + "ffn.w2", normal(f, d, rng));
    l.b2 = store.add(p + "ffn.b2", Matrix::Zero(1, d));
    layers_.push_back(l);
  }
  final_gamma_ = store.add("encoder.final_ln.gamma", Matrix::Ones(1, d));
  final_beta_ = store.add("encoder.final_ln.beta", Matrix::Zero(1, d));
}

Var TransformerEncoder::attention(Tape& tape, Var x, const EncoderLayerParams& p,
                                  const ForwardOptions& options) const {
  auto linear = [&tape](Var in, ParamId w, ParamId b) {
    return tape.add_row(tape.matmul(in, tape.param(w)), tape.param(b));
  };
  const Var q = linear(x, p.wq, p.bq);
  const Var k = linear(x, p.wk, p.bk);
  const Var v = linear(x, p.wv, p.bv);
  const std::size_t dh = config_.dim / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Var qh = tape.slice_cols(q, h * dh, dh);
    const Var kh = tape.slice_cols(k, h * dh, dh);
    const Var vh = tape.slice_cols(v, h * dh, dh);
    const Var probs = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
    if (options.attention) options.attention->push_back(tape.value(probs));
    heads.push_back(tape.matmul(probs, vh));
  }
  return linear(tape.concat_cols(heads), p.wo, p.bo);
}

Var TransformerEncoder::forward(Tape& tape, Var input, const ForwardOptions& options) const {
  const Matrix& in = tape.value(input);
  if (static_cast<std::size_t>(in.cols()) != config_.dim)
    throw Error(ErrorCode::kShapeMismatch, "encoder input has " + std::to_string(in.cols()) +
                                               " columns, expected " + std::to_string(config_.dim));
  if (!in.allFinite()) throw Error(ErrorCode::kNonFinite, "encoder input holds a non-finite value");
  const double p_drop = options.dropout_rng ? config_.dropout : 0.0;

  Var x = input;
  for (const auto& l : layers_) {
    Var a = attention(tape, tape.layer_norm(x, tape.param(l.ln1_gamma), tape.param(l.ln1_beta)), l, options);
    if (p_drop > 0) a = tape.dropout(a, p_drop, *options.dropout_rng);
    x = tape.add(x, a);

    const Var h = tape.layer_norm(x, tape.param(l.ln2_gamma), tape.param(l.ln2_beta));
    const Var hidden = tape.gelu(tape.add_row(tape.matmul(h, tape.param(l.w1)), tape.param(l.b1)));
    Var f = tape.add_row(tape.matmul(hidden, tape.param(l.w2)), tape.param(l.b2));
    if (p_drop > 0) f = tape.dropout(f, p_drop, *options.dropout_rng);
    x = tape.add(x, f);
    if (options.layer_outputs) options.layer_outputs->push_back(tape.value(x));
  }
  return tape.layer_norm(x, tape.param(final_gamma_), tape.param(final_beta_));
}

EncodedSequence encode(const Matrix& input, const TransformerEncoder& encoder,
                       const ParameterStore& params, bool retain) {
  Tape tape(params);
  EncodedSequence out;
  ForwardOptions opts;
  if (retain) {
    opts.attention = &out.attention;
    opts.layer_outputs = &out.layer_outputs;
  }
  out.output = tape.value(encoder.forward(tape, tape.constant(input), opts));
  return out;
}

}  // namespace tactile
