#include "simt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace simt {

void ModelConfig::validate() const {
  if (src_vocab <= kNumReservedIds || tgt_vocab <= kNumReservedIds) {
    throw std::invalid_argument("model: vocabulary sizes must exceed the reserved ids");
  }
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw std::invalid_argument("model: d_model must be a positive multiple of n_heads");
  }
  if (d_ff < 1 || enc_layers < 1 || dec_layers < 1 || max_len < 2) {
    throw std::invalid_argument("model: layer sizes must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model: dropout must be in [0, 1)");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("model: label_smoothing must be in [0, 1)");
  }
}

namespace {

constexpr double kLnEps = 1e-5;

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_grad(S x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1 / sqrt(2 pi)
  return S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2))) +
         x * std::exp(S(-0.5) * x * x) * S(kInvSqrt2Pi);
}

// Row-wise log-softmax statistics: returns max and log(sum exp(l - max)).
template <typename S>
std::pair<S, S> log_softmax_stats(const S* logits, int v) {
  S max = logits[0];
  for (int c = 1; c < v; ++c) max = std::max(max, logits[c]);
  S z = S(0);
  for (int c = 0; c < v; ++c) z += std::exp(logits[c] - max);
  return {max, std::log(z)};
}

template <typename S>
Matrix<S> sinusoidal_pe(int max_len, int d_model) {
  Matrix<S> pe(max_len, d_model);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int c = 0; c < d_model; c += 2) {
      const double angle = pos * std::exp(-std::log(10000.0) * c / d_model);
      pe(pos, c) = S(std::sin(angle));
      if (c + 1 < d_model) pe(pos, c + 1) = S(std::cos(angle));
    }
  }
  return pe;
}

// y = x * w + b, b broadcast over rows.
template <typename S>
Matrix<S> linear(const Matrix<S>& x, const LinearParams<S>& p) {
  Matrix<S> y = matmul(x, p.w);
  for (int i = 0; i < y.rows(); ++i) {
    S* row = y.row(i);
    const S* b = p.b.row(0);
    for (int j = 0; j < y.cols(); ++j) row[j] += b[j];
  }
  return y;
}

// dx, dw, db from dy; dw/db accumulate.
template <typename S>
Matrix<S> linear_backward(const Matrix<S>& x, const LinearParams<S>& p, const Matrix<S>& dy,
                          LinearParams<S>& grad) {
  add_inplace(grad.w, matmul_transa(x, dy));
  for (int i = 0; i < dy.rows(); ++i) {
    const S* row = dy.row(i);
    S* db = grad.b.row(0);
    for (int j = 0; j < dy.cols(); ++j) db[j] += row[j];
  }
  return matmul_transb(dy, p.w);
}

template <typename S>
void layer_norm(const Matrix<S>& x, const LayerNormParams<S>& p, LayerNormCache<S>& cache) {
  const int rows = x.rows(), d = x.cols();
  cache.normed = Matrix<S>(rows, d);
  cache.out = Matrix<S>(rows, d);
  cache.rstd.assign(rows, S(0));
  for (int i = 0; i < rows; ++i) {
    const S* xr = x.row(i);
    S mean = S(0);
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= S(d);
    S var = S(0);
    for (int c = 0; c < d; ++c) {
      const S dev = xr[c] - mean;
      var += dev * dev;
    }
    var /= S(d);
    const S rstd = S(1) / std::sqrt(var + S(kLnEps));
    cache.rstd[i] = rstd;
    S* nr = cache.normed.row(i);
    S* yr = cache.out.row(i);
    const S* g = p.gamma.row(0);
    const S* b = p.beta.row(0);
    for (int c = 0; c < d; ++c) {
      nr[c] = (xr[c] - mean) * rstd;
      yr[c] = g[c] * nr[c] + b[c];
    }
  }
}

// Returns dx given dy; accumulates dgamma/dbeta.
template <typename S>
Matrix<S> layer_norm_backward(const LayerNormCache<S>& cache, const LayerNormParams<S>& p,
                              const Matrix<S>& dy, LayerNormParams<S>& grad) {
  const int rows = dy.rows(), d = dy.cols();
  Matrix<S> dx(rows, d);
  for (int i = 0; i < rows; ++i) {
    const S* dyr = dy.row(i);
    const S* nr = cache.normed.row(i);
    const S* g = p.gamma.row(0);
    S* dg = grad.gamma.row(0);
    S* db = grad.beta.row(0);
    S sum_h = S(0), sum_hn = S(0);
    for (int c = 0; c < d; ++c) {
      const S h = dyr[c] * g[c];
      sum_h += h;
      sum_hn += h * nr[c];
      dg[c] += dyr[c] * nr[c];
      db[c] += dyr[c];
    }
    const S m1 = sum_h / S(d);
    const S m2 = sum_hn / S(d);
    S* dxr = dx.row(i);
    for (int c = 0; c < d; ++c) {
      dxr[c] = cache.rstd[i] * (dyr[c] * g[c] - m1 - nr[c] * m2);
    }
  }
  return dx;
}

// Draws an inverted-dropout multiplier and applies it in place.
template <typename S>
void apply_dropout(Matrix<S>& x, DropoutState* dropout, Matrix<S>& mult_cache) {
  if (dropout == nullptr || dropout->rate <= 0.0) {
    mult_cache = Matrix<S>();
    return;
  }
  std::bernoulli_distribution keep(1.0 - dropout->rate);
  const S scale = S(1.0 / (1.0 - dropout->rate));
  mult_cache = Matrix<S>(x.rows(), x.cols());
  S* m = mult_cache.data();
  S* v = x.data();
  for (size_t i = 0; i < x.size(); ++i) {
    m[i] = keep(dropout->rng) ? scale : S(0);
    v[i] *= m[i];
  }
}

template <typename S>
void apply_dropout_grad(Matrix<S>& dy, const Matrix<S>& mult_cache) {
  if (mult_cache.empty()) return;
  S* d = dy.data();
  const S* m = mult_cache.data();
  for (size_t i = 0; i < dy.size(); ++i) d[i] *= m[i];
}

// mask_at(i, j): may row i of the query attend to key row j?
template <typename S, typename MaskFn>
void attention(const Matrix<S>& q_in, const Matrix<S>& kv_in, const AttentionParams<S>& p,
               int n_heads, MaskFn mask_at, AttentionCache<S>& cache, DropoutState* dropout) {
  const int t = q_in.rows();
  const int s = kv_in.rows();
  const int d = q_in.cols();
  const int dk = d / n_heads;
  const S inv_sqrt_dk = S(1) / std::sqrt(S(dk));

  cache.q_in = q_in;
  cache.kv_in = kv_in;
  cache.q = linear(q_in, p.wq);
  cache.k = linear(kv_in, p.wk);
  cache.v = linear(kv_in, p.wv);
  cache.probs.assign(n_heads, Matrix<S>(t, s));
  cache.ctx = Matrix<S>(t, d);

  std::vector<S> scores(s);
  for (int h = 0; h < n_heads; ++h) {
    const int c0 = h * dk;
    Matrix<S>& probs = cache.probs[h];
    for (int i = 0; i < t; ++i) {
      // scores over the visible keys only; masked keys never enter any sum
      S max_score = S(0);
      bool any = false;
      for (int j = 0; j < s; ++j) {
        if (!mask_at(i, j)) continue;
        S acc = S(0);
        const S* qr = cache.q.row(i) + c0;
        const S* kr = cache.k.row(j) + c0;
        for (int c = 0; c < dk; ++c) acc += qr[c] * kr[c];
        acc *= inv_sqrt_dk;
        scores[j] = acc;
        if (!any || acc > max_score) max_score = acc;
        any = true;
      }
      if (!any) continue;  // fully masked row: zero probabilities, zero context
      S z = S(0);
      for (int j = 0; j < s; ++j) {
        if (!mask_at(i, j)) continue;
        const S e = std::exp(scores[j] - max_score);
        probs(i, j) = e;
        z += e;
      }
      const S inv_z = S(1) / z;
      S* ctx = cache.ctx.row(i) + c0;
      for (int j = 0; j < s; ++j) {
        if (!mask_at(i, j)) continue;
        const S pij = probs(i, j) * inv_z;
        probs(i, j) = pij;
        const S* vr = cache.v.row(j) + c0;
        for (int c = 0; c < dk; ++c) ctx[c] += pij * vr[c];
      }
    }
  }
  cache.out = linear(cache.ctx, p.wo);
  apply_dropout(cache.out, dropout, cache.dropout_mult);
}

// Returns d q_in; accumulates parameter grads and, via dkv_in, the gradient
// w.r.t. the key/value input rows.
template <typename S, typename MaskFn>
Matrix<S> attention_backward(const AttentionCache<S>& cache, const AttentionParams<S>& p,
                             int n_heads, MaskFn mask_at, Matrix<S> dout, AttentionParams<S>& grad,
                             Matrix<S>& dkv_in) {
  const int t = cache.q_in.rows();
  const int s = cache.kv_in.rows();
  const int d = cache.q_in.cols();
  const int dk = d / n_heads;
  const S inv_sqrt_dk = S(1) / std::sqrt(S(dk));

  apply_dropout_grad(dout, cache.dropout_mult);
  const Matrix<S> dctx = linear_backward(cache.ctx, p.wo, dout, grad.wo);

  Matrix<S> dq(t, d), dkm(s, d), dv(s, d);
  std::vector<S> dp(s), ds(s);
  for (int h = 0; h < n_heads; ++h) {
    const int c0 = h * dk;
    const Matrix<S>& probs = cache.probs[h];
    for (int i = 0; i < t; ++i) {
      const S* dctx_r = dctx.row(i) + c0;
      // dV and dp
      S dot = S(0);
      for (int j = 0; j < s; ++j) {
        if (!mask_at(i, j)) continue;
        const S pij = probs(i, j);
        S* dvr = dv.row(j) + c0;
        const S* vr = cache.v.row(j) + c0;
        S acc = S(0);
        for (int c = 0; c < dk; ++c) {
          dvr[c] += pij * dctx_r[c];
          acc += dctx_r[c] * vr[c];
        }
        dp[j] = acc;
        dot += pij * acc;
      }
      // softmax backward and score gradients
      S* dqr = dq.row(i) + c0;
      for (int j = 0; j < s; ++j) {
        if (!mask_at(i, j)) continue;
        const S dsij = probs(i, j) * (dp[j] - dot) * inv_sqrt_dk;
        ds[j] = dsij;
        const S* kr = cache.k.row(j) + c0;
        S* dkr = dkm.row(j) + c0;
        const S* qr = cache.q.row(i) + c0;
        for (int c = 0; c < dk; ++c) {
          dqr[c] += dsij * kr[c];
          dkr[c] += dsij * qr[c];
        }
      }
    }
  }

  Matrix<S> dq_in = linear_backward(cache.q_in, p.wq, dq, grad.wq);
  add_inplace(dkv_in, linear_backward(cache.kv_in, p.wk, dkm, grad.wk));
  add_inplace(dkv_in, linear_backward(cache.kv_in, p.wv, dv, grad.wv));
  return dq_in;
}

template <typename S>
void ffn_forward(const Matrix<S>& in, const FfnParams<S>& p, FfnCache<S>& cache,
                 DropoutState* dropout) {
  cache.in = in;
  cache.pre_act = linear(in, p.w1);
  cache.act = Matrix<S>(cache.pre_act.rows(), cache.pre_act.cols());
  const S* u = cache.pre_act.data();
  S* a = cache.act.data();
  for (size_t i = 0; i < cache.act.size(); ++i) a[i] = gelu(u[i]);
  cache.out = linear(cache.act, p.w2);
  apply_dropout(cache.out, dropout, cache.dropout_mult);
}

template <typename S>
Matrix<S> ffn_backward(const FfnCache<S>& cache, const FfnParams<S>& p, Matrix<S> dout,
                       FfnParams<S>& grad) {
  apply_dropout_grad(dout, cache.dropout_mult);
  Matrix<S> dact = linear_backward(cache.act, p.w2, dout, grad.w2);
  const S* u = cache.pre_act.data();
  S* da = dact.data();
  for (size_t i = 0; i < dact.size(); ++i) da[i] *= gelu_grad(u[i]);
  return linear_backward(cache.in, p.w1, dact, grad.w1);
}

template <typename S>
Matrix<S> embed_rows(const Matrix<S>& table, const std::vector<TokenId>& ids, int d_model,
                     int max_len) {
  if (static_cast<int>(ids.size()) > max_len) {
    throw std::invalid_argument("model: sequence of length " + std::to_string(ids.size()) +
                                " exceeds max_len " + std::to_string(max_len));
  }
  static thread_local Matrix<S> pe;
  if (pe.rows() < max_len || pe.cols() != d_model) pe = sinusoidal_pe<S>(max_len, d_model);
  const S scale = std::sqrt(S(d_model));
  Matrix<S> x(static_cast<int>(ids.size()), d_model);
  for (int r = 0; r < x.rows(); ++r) {
    if (ids[r] < 0 || ids[r] >= table.rows()) {
      throw std::invalid_argument("model: token id out of vocabulary range");
    }
    const S* e = table.row(ids[r]);
    S* xr = x.row(r);
    const S* per = pe.row(r);
    for (int c = 0; c < d_model; ++c) xr[c] = scale * e[c] + per[c];
  }
  return x;
}

}  // namespace

template <typename S>
ModelParams<S> make_params_shell(const ModelConfig& config) {
  config.validate();
  ModelParams<S> params;
  params.config = config;
  const int d = config.d_model;
  params.src_embed = Matrix<S>(config.src_vocab, d);
  params.tgt_embed = Matrix<S>(config.tgt_vocab, d);
  auto make_linear = [&](LinearParams<S>& p, int in, int out) {
    p.w = Matrix<S>(in, out);
    p.b = Matrix<S>(1, out);
  };
  auto make_ln = [&](LayerNormParams<S>& p) {
    p.gamma = Matrix<S>(1, d);
    p.beta = Matrix<S>(1, d);
  };
  auto make_attn = [&](AttentionParams<S>& p) {
    make_linear(p.wq, d, d);
    make_linear(p.wk, d, d);
    make_linear(p.wv, d, d);
    make_linear(p.wo, d, d);
  };
  params.enc.resize(config.enc_layers);
  for (auto& layer : params.enc) {
    make_ln(layer.ln1);
    make_attn(layer.attn);
    make_ln(layer.ln2);
    make_linear(layer.ffn.w1, d, config.d_ff);
    make_linear(layer.ffn.w2, config.d_ff, d);
  }
  params.dec.resize(config.dec_layers);
  for (auto& layer : params.dec) {
    make_ln(layer.ln1);
    make_attn(layer.self_attn);
    make_ln(layer.ln2);
    make_attn(layer.cross_attn);
    make_ln(layer.ln3);
    make_linear(layer.ffn.w1, d, config.d_ff);
    make_linear(layer.ffn.w2, config.d_ff, d);
  }
  make_ln(params.enc_final_ln);
  make_ln(params.dec_final_ln);
  make_linear(params.out_proj, d, config.tgt_vocab);
  return params;
}

template <typename S>
ModelParams<S> init_params(const ModelConfig& config) {
  ModelParams<S> params = make_params_shell<S>(config);
  std::mt19937_64 rng(config.init_seed);
  std::normal_distribution<double> embed_dist(0.0,
                                              1.0 / std::sqrt(static_cast<double>(config.d_model)));
  params.for_each_parameter([&](const std::string& name, Matrix<S>& m) {
    const bool is_gamma = name.size() >= 5 && name.compare(name.size() - 5, 5, "gamma") == 0;
    const bool is_bias_or_beta = !is_gamma && m.rows() == 1;
    if (is_gamma) {
      m.fill(S(1));
    } else if (is_bias_or_beta) {
      m.fill(S(0));
    } else if (name == "src_embed" || name == "tgt_embed") {
      for (size_t i = 0; i < m.size(); ++i) m.data()[i] = S(embed_dist(rng));
      for (int c = 0; c < m.cols(); ++c) m(kPadId, c) = S(0);
    } else {
      const double limit = std::sqrt(6.0 / (m.rows() + m.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (size_t i = 0; i < m.size(); ++i) m.data()[i] = S(dist(rng));
    }
  });
  return params;
}

template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& params) {
  ModelParams<S> z = params;
  z.for_each_parameter([](const std::string&, Matrix<S>& m) { m.fill(S(0)); });
  return z;
}

template <typename S>
void forward(const ModelParams<S>& params, const std::vector<TokenId>& src_ids,
             const std::vector<TokenId>& tgt_in_ids, const MaskSet& mask, ForwardCache<S>& cache,
             DropoutState* dropout) {
  const ModelConfig& cfg = params.config;
  const int j_len = static_cast<int>(src_ids.size());
  const int t_len = static_cast<int>(tgt_in_ids.size());
  if (src_ids.empty() || tgt_in_ids.empty()) {
    throw std::invalid_argument("forward: empty sequence");
  }
  if (mask.src_pad != j_len || mask.tgt_pad != t_len) {
    throw std::invalid_argument("forward: mask shape does not match the sequences");
  }

  cache.src_ids = src_ids;
  cache.tgt_in_ids = tgt_in_ids;
  cache.mask = mask;

  // encoder
  cache.src_x0 = embed_rows(params.src_embed, src_ids, cfg.d_model, cfg.max_len);
  cache.enc_layers.assign(cfg.enc_layers, EncoderLayerCache<S>{});
  Matrix<S> h = cache.src_x0;
  for (int l = 0; l < cfg.enc_layers; ++l) {
    EncoderLayerCache<S>& lc = cache.enc_layers[l];
    const EncoderLayerParams<S>& lp = params.enc[l];
    layer_norm(h, lp.ln1, lc.ln1);
    attention(lc.ln1.out, lc.ln1.out, lp.attn, cfg.n_heads,
              [&](int i, int j) { return mask.enc_at(i, j); }, lc.attn, dropout);
    lc.h_attn = h;
    add_inplace(lc.h_attn, lc.attn.out);
    layer_norm(lc.h_attn, lp.ln2, lc.ln2);
    ffn_forward(lc.ln2.out, lp.ffn, lc.ffn, dropout);
    lc.h_out = lc.h_attn;
    add_inplace(lc.h_out, lc.ffn.out);
    h = lc.h_out;
  }
  layer_norm(h, params.enc_final_ln, cache.enc_final);
  cache.memory = cache.enc_final.out;

  // decoder
  cache.tgt_x0 = embed_rows(params.tgt_embed, tgt_in_ids, cfg.d_model, cfg.max_len);
  cache.dec_layers.assign(cfg.dec_layers, DecoderLayerCache<S>{});
  h = cache.tgt_x0;
  for (int l = 0; l < cfg.dec_layers; ++l) {
    DecoderLayerCache<S>& lc = cache.dec_layers[l];
    const DecoderLayerParams<S>& lp = params.dec[l];
    layer_norm(h, lp.ln1, lc.ln1);
    attention(lc.ln1.out, lc.ln1.out, lp.self_attn, cfg.n_heads,
              [&](int i, int j) { return mask.dec_at(i, j); }, lc.self_attn, dropout);
    lc.h_self = h;
    add_inplace(lc.h_self, lc.self_attn.out);
    layer_norm(lc.h_self, lp.ln2, lc.ln2);
    attention(lc.ln2.out, cache.memory, lp.cross_attn, cfg.n_heads,
              [&](int i, int j) { return mask.cross_at(i, j); }, lc.cross_attn, dropout);
    lc.h_cross = lc.h_self;
    add_inplace(lc.h_cross, lc.cross_attn.out);
    layer_norm(lc.h_cross, lp.ln3, lc.ln3);
    ffn_forward(lc.ln3.out, lp.ffn, lc.ffn, dropout);
    lc.h_out = lc.h_cross;
    add_inplace(lc.h_out, lc.ffn.out);
    h = lc.h_out;
  }
  layer_norm(h, params.dec_final_ln, cache.dec_final);
  cache.logits = linear(cache.dec_final.out, params.out_proj);
  check_finite(cache.logits, "logits");
  cache.log_probs = Matrix<S>(t_len, cfg.tgt_vocab);
  for (int i = 0; i < t_len; ++i) {
    const S* lr = cache.logits.row(i);
    const auto [max, log_z] = log_softmax_stats(lr, cfg.tgt_vocab);
    S* out = cache.log_probs.row(i);
    for (int c = 0; c < cfg.tgt_vocab; ++c) out[c] = lr[c] - max - log_z;
  }

  const auto& top = cache.dec_layers.back().cross_attn.probs;
  cache.cross_attention_avg = Matrix<double>(t_len, j_len);
  for (int i = 0; i < t_len; ++i) {
    for (int j = 0; j < j_len; ++j) {
      double acc = 0.0;
      for (int hh = 0; hh < cfg.n_heads; ++hh) acc += static_cast<double>(top[hh](i, j));
      cache.cross_attention_avg(i, j) = acc / cfg.n_heads;
    }
  }
}

template <typename S>
LossReport loss(const ForwardCache<S>& cache, const std::vector<TokenId>& gold_ids,
                double label_smoothing, const std::vector<uint8_t>* row_valid) {
  const int t = cache.log_probs.rows();
  const int v = cache.log_probs.cols();
  if (static_cast<int>(gold_ids.size()) != t) {
    throw std::invalid_argument("loss: gold length does not match the logits");
  }
  if (row_valid != nullptr && static_cast<int>(row_valid->size()) != t) {
    throw std::invalid_argument("loss: pad mask length does not match the logits");
  }
  LossReport report;
  for (int i = 0; i < t; ++i) {
    if (row_valid != nullptr && (*row_valid)[i] == 0) continue;
    const TokenId y = gold_ids[i];
    if (y < 0 || y >= v) throw std::invalid_argument("loss: gold id out of range");
    const S* lp = cache.log_probs.row(i);
    // -sum_v q_v log p_v with q = (1 - eps) onehot + eps / V
    double sum_logp = 0.0;
    for (int c = 0; c < v; ++c) sum_logp += static_cast<double>(lp[c]);
    report.total += -((1.0 - label_smoothing) * static_cast<double>(lp[y]) +
                      label_smoothing / v * sum_logp);
    ++report.token_count;
  }
  if (report.token_count == 0) {
    throw std::invalid_argument("loss: every target step is padding");
  }
  report.per_token = report.total / report.token_count;
  return report;
}

template <typename S>
void backward(const ModelParams<S>& params, const ForwardCache<S>& cache,
              const std::vector<TokenId>& gold_ids, double label_smoothing, S scale,
              ModelParams<S>& grads, const std::vector<uint8_t>* row_valid) {
  const ModelConfig& cfg = params.config;
  const int t = cache.logits.rows();
  const int v = cache.logits.cols();
  const MaskSet& mask = cache.mask;

  // d loss / d logits = scale * (softmax(logits) - q); padded rows get zero
  Matrix<S> dlogits(t, v);
  for (int i = 0; i < t; ++i) {
    if (row_valid != nullptr && (*row_valid)[i] == 0) continue;
    const S* lp = cache.log_probs.row(i);
    S* dr = dlogits.row(i);
    for (int c = 0; c < v; ++c) {
      dr[c] = scale * (std::exp(lp[c]) - S(label_smoothing / v));
    }
    dr[gold_ids[i]] -= scale * S(1.0 - label_smoothing);
  }

  Matrix<S> dh = linear_backward(cache.dec_final.out, params.out_proj, dlogits, grads.out_proj);
  dh = layer_norm_backward(cache.dec_final, params.dec_final_ln, dh, grads.dec_final_ln);

  Matrix<S> dmemory(cache.memory.rows(), cache.memory.cols());
  for (int l = cfg.dec_layers - 1; l >= 0; --l) {
    const DecoderLayerCache<S>& lc = cache.dec_layers[l];
    const DecoderLayerParams<S>& lp = params.dec[l];
    DecoderLayerParams<S>& lg = grads.dec[l];
    // ffn sublayer: h_out = h_cross + ffn(ln3(h_cross))
    Matrix<S> da = ffn_backward(lc.ffn, lp.ffn, dh, lg.ffn);
    add_inplace(dh, layer_norm_backward(lc.ln3, lp.ln3, da, lg.ln3));
    // cross-attention: h_cross = h_self + attn(ln2(h_self), memory)
    Matrix<S> dq_in = attention_backward(
        lc.cross_attn, lp.cross_attn, cfg.n_heads,
        [&](int i, int j) { return mask.cross_at(i, j); }, dh, lg.cross_attn, dmemory);
    add_inplace(dh, layer_norm_backward(lc.ln2, lp.ln2, dq_in, lg.ln2));
    // self-attention: h_self = h_in + attn(ln1(h_in))
    Matrix<S> dself_in(t, cfg.d_model);
    dq_in = attention_backward(lc.self_attn, lp.self_attn, cfg.n_heads,
                               [&](int i, int j) { return mask.dec_at(i, j); }, dh, lg.self_attn,
                               dself_in);
    add_inplace(dq_in, dself_in);
    add_inplace(dh, layer_norm_backward(lc.ln1, lp.ln1, dq_in, lg.ln1));
  }
  // decoder embeddings
  {
    const S scale_e = std::sqrt(S(cfg.d_model));
    for (int r = 0; r < dh.rows(); ++r) {
      const S* dr = dh.row(r);
      S* er = grads.tgt_embed.row(cache.tgt_in_ids[r]);
      for (int c = 0; c < cfg.d_model; ++c) er[c] += scale_e * dr[c];
    }
  }

  // encoder, fed by the accumulated memory gradient
  Matrix<S> dhe = layer_norm_backward(cache.enc_final, params.enc_final_ln, dmemory,
                                      grads.enc_final_ln);
  for (int l = cfg.enc_layers - 1; l >= 0; --l) {
    const EncoderLayerCache<S>& lc = cache.enc_layers[l];
    const EncoderLayerParams<S>& lp = params.enc[l];
    EncoderLayerParams<S>& lg = grads.enc[l];
    Matrix<S> da = ffn_backward(lc.ffn, lp.ffn, dhe, lg.ffn);
    add_inplace(dhe, layer_norm_backward(lc.ln2, lp.ln2, da, lg.ln2));
    Matrix<S> dself_in(dhe.rows(), cfg.d_model);
    Matrix<S> dq_in = attention_backward(lc.attn, lp.attn, cfg.n_heads,
                                         [&](int i, int j) { return mask.enc_at(i, j); }, dhe,
                                         lg.attn, dself_in);
    add_inplace(dq_in, dself_in);
    add_inplace(dhe, layer_norm_backward(lc.ln1, lp.ln1, dq_in, lg.ln1));
  }
  {
    const S scale_e = std::sqrt(S(cfg.d_model));
    for (int r = 0; r < dhe.rows(); ++r) {
      const S* dr = dhe.row(r);
      S* er = grads.src_embed.row(cache.src_ids[r]);
      for (int c = 0; c < cfg.d_model; ++c) er[c] += scale_e * dr[c];
    }
  }
}

template <typename S>
void check_finite(const Matrix<S>& m, const std::string& name) {
  const S* p = m.data();
  for (size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(p[i])) {
      throw std::runtime_error("non-finite value in " + name + " at flat index " +
                               std::to_string(i));
    }
  }
}

template struct ModelParams<float>;
template struct ModelParams<double>;

template ModelParams<float> make_params_shell<float>(const ModelConfig&);
template ModelParams<double> make_params_shell<double>(const ModelConfig&);
template ModelParams<float> init_params<float>(const ModelConfig&);
template ModelParams<double> init_params<double>(const ModelConfig&);
template ModelParams<float> zeros_like<float>(const ModelParams<float>&);
template ModelParams<double> zeros_like<double>(const ModelParams<double>&);
template void forward<float>(const ModelParams<float>&, const std::vector<TokenId>&,
                             const std::vector<TokenId>&, const MaskSet&, ForwardCache<float>&,
                             DropoutState*);
template void forward<double>(const ModelParams<double>&, const std::vector<TokenId>&,
                              const std::vector<TokenId>&, const MaskSet&, ForwardCache<double>&,
                              DropoutState*);
template LossReport loss<float>(const ForwardCache<float>&, const std::vector<TokenId>&, double,
                                const std::vector<uint8_t>*);
template LossReport loss<double>(const ForwardCache<double>&, const std::vector<TokenId>&, double,
                                 const std::vector<uint8_t>*);
template void backward<float>(const ModelParams<float>&, const ForwardCache<float>&,
                              const std::vector<TokenId>&, double, float, ModelParams<float>&,
                              const std::vector<uint8_t>*);
template void backward<double>(const ModelParams<double>&, const ForwardCache<double>&,
                               const std::vector<TokenId>&, double, double, ModelParams<double>&,
                               const std::vector<uint8_t>*);
template void check_finite<float>(const Matrix<float>&, const std::string&);
template void check_finite<double>(const Matrix<double>&, const std::string&);

}  // namespace simt
