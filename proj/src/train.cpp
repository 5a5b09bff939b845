#include "simt/train.hpp"

#include <cmath>
#include <stdexcept>

#include "simt/masking.hpp"

namespace simt {

PolicyFn make_wait_k_policy_fn(int k) {
  return [k](int target_len, int source_len) { return wait_k_policy(k, target_len, source_len); };
}

PolicyFn make_hmt_policy_fn(int initial_read, int events_per_step) {
  return [=](int target_len, int source_len) {
    return hmt_default_policy(hmt_lattice(initial_read, events_per_step, target_len, source_len));
  };
}

ModelSequences frame_pair(const ParallelPair& pair) {
  ModelSequences seq;
  seq.src = pair.src;
  seq.src.push_back(kEosId);
  seq.tgt_in.reserve(pair.tgt.size() + 1);
  seq.tgt_in.push_back(kBosId);
  seq.tgt_in.insert(seq.tgt_in.end(), pair.tgt.begin(), pair.tgt.end());
  seq.gold = pair.tgt;
  seq.gold.push_back(kEosId);
  return seq;
}

template <typename S>
Trainer<S>::Trainer(ModelParams<S> params, OptimizerConfig opt, CurriculumSchedule schedule,
                    PolicyFn policy_fn, uint64_t dropout_seed)
    : params_(std::move(params)),
      grads_(zeros_like(params_)),
      moment1_(zeros_like(params_)),
      moment2_(zeros_like(params_)),
      opt_(std::move(opt)),
      schedule_(std::move(schedule)),
      policy_fn_(std::move(policy_fn)) {
  schedule_.reseed();
  dropout_.rate = params_.config.dropout;
  dropout_.rng.seed(dropout_seed);
}

template <typename S>
TrainLogRow Trainer<S>::train_step(const Corpus& corpus, const Batch& batch) {
  if (batch.pair_indices.empty()) throw std::invalid_argument("train_step: empty batch");
  const long step = update_count_;
  const double alpha = alpha_at(schedule_, step);

  grads_.for_each_parameter([](const std::string&, Matrix<S>& m) { m.fill(S(0)); });
  double loss_total = 0.0;
  long token_total = 0;

  for (int pair_index : batch.pair_indices) {
    const ModelSequences seq = frame_pair(corpus.pairs[pair_index]);
    const int j = static_cast<int>(seq.src.size());
    const int t = static_cast<int>(seq.tgt_in.size());
    const PolicyVector base = policy_fn_(t, j);

    // The Attention strategy scores future positions with the current
    // model's own cross-attention, read off a preliminary full-visibility
    // pass (no dropout, no gradient).
    Matrix<double> weights;
    const Matrix<double>* weights_ptr = nullptr;
    if (schedule_.strategy == GlanceStrategy::Attention && alpha > 0.0) {
      AdjustedPolicy full;
      full.source_len = j;
      full.base.source_len = j;
      full.base.g.assign(t, j);
      full.g_hat.assign(t, j);
      full.extra_positions.assign(t, {});
      const MaskSet full_mask = build_masks(full, j, t, j, t);
      ForwardCache<S> probe;
      forward(params_, seq.src, seq.tgt_in, full_mask, probe);
      weights = probe.cross_attention_avg;
      weights_ptr = &weights;
    }

    const AdjustedPolicy adjusted = adjust_policy(base, schedule_, step, weights_ptr);
    const MaskSet mask = build_masks(adjusted, j, t, j, t);

    ForwardCache<S> cache;
    try {
      forward(params_, seq.src, seq.tgt_in, mask, cache,
              dropout_.rate > 0.0 ? &dropout_ : nullptr);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train_step " + std::to_string(step) + ": " + e.what());
    }
    const LossReport report = loss(cache, seq.gold, params_.config.label_smoothing);
    loss_total += report.total;
    token_total += report.token_count;
    backward(params_, cache, seq.gold, params_.config.label_smoothing, S(1), grads_);
  }

  const double mean_loss = loss_total / token_total;
  if (!std::isfinite(mean_loss)) {
    throw std::runtime_error("train_step " + std::to_string(step) +
                             ": optimizer divergence, loss is not finite");
  }

  // finish d(mean loss): the loop accumulated the summed-CE gradient
  const S inv_tokens = S(1.0 / token_total);
  grads_.for_each_parameter([&](const std::string&, Matrix<S>& m) { scale_inplace(m, inv_tokens); });

  if (opt_.grad_clip > 0.0) {
    double sq_norm = 0.0;
    grads_.for_each_parameter([&](const std::string&, const Matrix<S>& m) {
      for (size_t i = 0; i < m.size(); ++i) {
        sq_norm += static_cast<double>(m.data()[i]) * static_cast<double>(m.data()[i]);
      }
    });
    const double norm = std::sqrt(sq_norm);
    if (norm > opt_.grad_clip) {
      const S factor = S(opt_.grad_clip / norm);
      grads_.for_each_parameter([&](const std::string&, Matrix<S>& m) { scale_inplace(m, factor); });
    }
  }

  const long t_adam = step + 1;
  double lr = opt_.lr;
  if (opt_.warmup_steps > 0 && t_adam < opt_.warmup_steps) {
    lr = opt_.lr * static_cast<double>(t_adam) / opt_.warmup_steps;
  }
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_adam));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_adam));

  std::vector<Matrix<S>*> g_list, m_list, v_list, p_list;
  grads_.for_each_parameter([&](const std::string&, Matrix<S>& m) { g_list.push_back(&m); });
  moment1_.for_each_parameter([&](const std::string&, Matrix<S>& m) { m_list.push_back(&m); });
  moment2_.for_each_parameter([&](const std::string&, Matrix<S>& m) { v_list.push_back(&m); });
  params_.for_each_parameter([&](const std::string&, Matrix<S>& m) { p_list.push_back(&m); });
  for (size_t tensor = 0; tensor < g_list.size(); ++tensor) {
    S* g = g_list[tensor]->data();
    S* m = m_list[tensor]->data();
    S* v = v_list[tensor]->data();
    S* p = p_list[tensor]->data();
    const size_t n = g_list[tensor]->size();
    for (size_t i = 0; i < n; ++i) {
      m[i] = S(opt_.beta1) * m[i] + S(1.0 - opt_.beta1) * g[i];
      v[i] = S(opt_.beta2) * v[i] + S(1.0 - opt_.beta2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / bc1;
      const double v_hat = static_cast<double>(v[i]) / bc2;
      p[i] -= S(lr * m_hat / (std::sqrt(v_hat) + opt_.eps));
    }
  }

  update_count_ = step + 1;
  return TrainLogRow{step, mean_loss, alpha};
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace simt
