#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "simt/common.hpp"
#include "simt/masking.hpp"
#include "simt/matrix.hpp"

namespace simt {

// Pre-LN encoder-decoder transformer, hand-rolled so the backward pass is
// exact and every reduction runs in a fixed order. The encoder is causal
// (unidirectional): prefix states never depend on later source tokens, which
// is what allows one full-sentence pass to stand in for per-step
// re-encoding under a simultaneous policy.
struct ModelConfig {
  int src_vocab = 0;
  int tgt_vocab = 0;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 128;
  int enc_layers = 2;
  int dec_layers = 2;
  int max_len = 64;          // bound on model-level sequence length
  double dropout = 0.1;      // sublayer-output dropout rate
  double label_smoothing = 0.1;
  uint64_t init_seed = 1;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;  // throws std::invalid_argument
};

template <typename S>
struct LinearParams {
  Matrix<S> w;  // in x out
  Matrix<S> b;  // 1 x out
};

template <typename S>
struct LayerNormParams {
  Matrix<S> gamma;  // 1 x d
  Matrix<S> beta;   // 1 x d
};

template <typename S>
struct AttentionParams {
  LinearParams<S> wq, wk, wv, wo;
};

template <typename S>
struct FfnParams {
  LinearParams<S> w1, w2;
};

template <typename S>
struct EncoderLayerParams {
  LayerNormParams<S> ln1;
  AttentionParams<S> attn;
  LayerNormParams<S> ln2;
  FfnParams<S> ffn;
};

template <typename S>
struct DecoderLayerParams {
  LayerNormParams<S> ln1;
  AttentionParams<S> self_attn;
  LayerNormParams<S> ln2;
  AttentionParams<S> cross_attn;
  LayerNormParams<S> ln3;
  FfnParams<S> ffn;
};

template <typename S>
struct ModelParams {
  ModelConfig config;
  Matrix<S> src_embed;  // src_vocab x d_model
  Matrix<S> tgt_embed;  // tgt_vocab x d_model
  std::vector<EncoderLayerParams<S>> enc;
  std::vector<DecoderLayerParams<S>> dec;
  LayerNormParams<S> enc_final_ln;
  LayerNormParams<S> dec_final_ln;
  LinearParams<S> out_proj;  // d_model x tgt_vocab

  // Visits every parameter tensor in a fixed order with a dotted name,
  // e.g. "enc.0.attn.wq.w". Checkpoints, the optimizer, gradient buffers
  // and the finite-difference harness all share this order.
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_parameter(Fn&& fn) const {
    visit(*this, fn);
  }

  long parameter_count() const {
    long n = 0;
    for_each_parameter([&](const std::string&, const Matrix<S>& m) { n += static_cast<long>(m.size()); });
    return n;
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn("src_embed", self.src_embed);
    fn("tgt_embed", self.tgt_embed);
    auto ln = [&](const std::string& prefix, auto& p) {
      fn(prefix + ".gamma", p.gamma);
      fn(prefix + ".beta", p.beta);
    };
    auto linear = [&](const std::string& prefix, auto& p) {
      fn(prefix + ".w", p.w);
      fn(prefix + ".b", p.b);
    };
    auto attn = [&](const std::string& prefix, auto& p) {
      linear(prefix + ".wq", p.wq);
      linear(prefix + ".wk", p.wk);
      linear(prefix + ".wv", p.wv);
      linear(prefix + ".wo", p.wo);
    };
    for (size_t l = 0; l < self.enc.size(); ++l) {
      const std::string base = "enc." + std::to_string(l);
      ln(base + ".ln1", self.enc[l].ln1);
      attn(base + ".attn", self.enc[l].attn);
      ln(base + ".ln2", self.enc[l].ln2);
      linear(base + ".ffn.w1", self.enc[l].ffn.w1);
      linear(base + ".ffn.w2", self.enc[l].ffn.w2);
    }
    for (size_t l = 0; l < self.dec.size(); ++l) {
      const std::string base = "dec." + std::to_string(l);
      ln(base + ".ln1", self.dec[l].ln1);
      attn(base + ".self_attn", self.dec[l].self_attn);
      ln(base + ".ln2", self.dec[l].ln2);
      attn(base + ".cross_attn", self.dec[l].cross_attn);
      ln(base + ".ln3", self.dec[l].ln3);
      linear(base + ".ffn.w1", self.dec[l].ffn.w1);
      linear(base + ".ffn.w2", self.dec[l].ffn.w2);
    }
    ln("enc_final_ln", self.enc_final_ln);
    ln("dec_final_ln", self.dec_final_ln);
    linear("out_proj", self.out_proj);
  }
};

// All tensors allocated to the config's shapes, zero-filled.
template <typename S>
ModelParams<S> make_params_shell(const ModelConfig& config);

// Fresh parameters: LN gammas 1, biases and betas 0, embeddings
// N(0, d_model^-1/2), projection weights Xavier-uniform. All draws come from
// one engine seeded with config.init_seed, consumed in traversal order.
template <typename S>
ModelParams<S> init_params(const ModelConfig& config);

// Same shapes, all zero; gradient and optimizer-moment buffers.
template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& params);

// Training-time dropout source. forward() draws one mask per dropout site
// per call; reseed the engine to replay the identical masks.
struct DropoutState {
  double rate = 0.0;
  std::mt19937_64 rng{0};
};

template <typename S>
struct LayerNormCache {
  Matrix<S> normed;    // (x - mean) * rstd
  Matrix<S> out;       // gamma * normed + beta
  std::vector<S> rstd;
};

template <typename S>
struct AttentionCache {
  Matrix<S> q_in;               // rows feeding the query projection
  Matrix<S> kv_in;              // rows feeding key/value (memory for cross)
  Matrix<S> q, k, v;            // T x d_model / S_kv x d_model
  std::vector<Matrix<S>> probs; // per head, T x S_kv; zero where masked
  Matrix<S> ctx;                // concatenated head outputs, pre-Wo
  Matrix<S> out;                // ctx * Wo + bo
  Matrix<S> dropout_mult;       // empty when dropout inactive
};

template <typename S>
struct FfnCache {
  Matrix<S> in;            // rows feeding w1
  Matrix<S> pre_act;       // in * w1 + b1
  Matrix<S> act;           // gelu(pre_act)
  Matrix<S> out;           // act * w2 + b2
  Matrix<S> dropout_mult;
};

template <typename S>
struct EncoderLayerCache {
  LayerNormCache<S> ln1;
  AttentionCache<S> attn;
  Matrix<S> h_attn;  // residual stream after the attention sublayer
  LayerNormCache<S> ln2;
  FfnCache<S> ffn;
  Matrix<S> h_out;
};

template <typename S>
struct DecoderLayerCache {
  LayerNormCache<S> ln1;
  AttentionCache<S> self_attn;
  Matrix<S> h_self;
  LayerNormCache<S> ln2;
  AttentionCache<S> cross_attn;
  Matrix<S> h_cross;
  LayerNormCache<S> ln3;
  FfnCache<S> ffn;
  Matrix<S> h_out;
};

template <typename S>
struct ForwardCache {
  std::vector<TokenId> src_ids;     // model-level source (raw + <eos>)
  std::vector<TokenId> tgt_in_ids;  // decoder input ([<bos>, y*])
  MaskSet mask;

  Matrix<S> src_x0;  // sqrt(d) * embed + positional
  std::vector<EncoderLayerCache<S>> enc_layers;
  LayerNormCache<S> enc_final;
  Matrix<S> memory;

  Matrix<S> tgt_x0;
  std::vector<DecoderLayerCache<S>> dec_layers;
  LayerNormCache<S> dec_final;
  Matrix<S> logits;     // T x tgt_vocab
  Matrix<S> log_probs;  // row-wise log-softmax of logits

  // Cross-attention of the last decoder layer averaged over heads
  // (T x src_len); feeds the curriculum's Attention strategy.
  Matrix<double> cross_attention_avg;
};

// Runs the full prefix-to-prefix pass for one sentence, producing per-step
// vocabulary log-probabilities in cache.log_probs. The model is agnostic to
// the <bos>/<eos> framing conventions; the data and decoding layers own
// those. mask shapes must equal the id lengths (the per-sentence path
// carries no padding). dropout == nullptr or rate 0 disables dropout.
// Throws std::runtime_error on non-finite activations, naming the first bad
// entry.
template <typename S>
void forward(const ModelParams<S>& params, const std::vector<TokenId>& src_ids,
             const std::vector<TokenId>& tgt_in_ids, const MaskSet& mask, ForwardCache<S>& cache,
             DropoutState* dropout = nullptr);

struct LossReport {
  double total = 0.0;      // summed over counted rows
  double per_token = 0.0;  // total / token_count
  long token_count = 0;
};

// Label-smoothed cross entropy of the cached log-probabilities against
// gold_ids (length = rows of logits). row_valid, when given, marks the rows
// that count (0 = padding); an all-padding target is an error. Accumulated
// in double regardless of S.
template <typename S>
LossReport loss(const ForwardCache<S>& cache, const std::vector<TokenId>& gold_ids,
                double label_smoothing, const std::vector<uint8_t>* row_valid = nullptr);

// Accumulates d(scale * sum-over-counted-rows CE)/d(theta) into grads, which
// must be zeros_like-shaped. Pass scale = 1 / token_count to differentiate
// the per-token (mean) loss.
template <typename S>
void backward(const ModelParams<S>& params, const ForwardCache<S>& cache,
              const std::vector<TokenId>& gold_ids, double label_smoothing, S scale,
              ModelParams<S>& grads, const std::vector<uint8_t>* row_valid = nullptr);

// Throws std::runtime_error naming the tensor and flat index of the first
// non-finite entry, if any.
template <typename S>
void check_finite(const Matrix<S>& m, const std::string& name);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace simt
