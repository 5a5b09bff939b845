#include "simt/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace simt {

GlanceStrategy parse_glance_strategy(const std::string& name) {
  if (name == "adjacency") return GlanceStrategy::Adjacency;
  if (name == "attention") return GlanceStrategy::Attention;
  if (name == "randomization") return GlanceStrategy::Randomization;
  throw std::invalid_argument("unknown glance strategy '" + name +
                              "' (expected adjacency, attention or randomization)");
}

std::string to_string(GlanceStrategy s) {
  switch (s) {
    case GlanceStrategy::Adjacency: return "adjacency";
    case GlanceStrategy::Attention: return "attention";
    case GlanceStrategy::Randomization: return "randomization";
  }
  return "?";
}

double alpha_at(const CurriculumSchedule& s, long n_update) {
  if (s.constant_alpha) return s.alpha_min;
  const double progress = 1.0 - static_cast<double>(n_update) / static_cast<double>(s.decay_updates);
  return s.alpha_min + (1.0 - s.alpha_min) * std::max(progress, 0.0);
}

int future_count(int source_len, int g_i, double alpha) {
  if (g_i < 1 || g_i > source_len) {
    throw std::invalid_argument("future_count: g_i=" + std::to_string(g_i) +
                                " out of range [1, " + std::to_string(source_len) + "]");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("future_count: alpha out of [0, 1]");
  }
  const int remaining = source_len - g_i;
  const int f = static_cast<int>(std::floor(static_cast<double>(remaining) * alpha));
  return std::clamp(f, 0, remaining);
}

AdjustedPolicy adjust_policy(const PolicyVector& p, CurriculumSchedule& s, long n_update,
                             const Matrix<double>* attention_weights) {
  const PolicyCheck check = validate_policy(p);
  if (!check.ok) throw std::invalid_argument("adjust_policy: invalid policy: " + check.message);
  if (s.strategy == GlanceStrategy::Attention) {
    if (attention_weights == nullptr) {
      throw std::invalid_argument("adjust_policy: attention strategy requires a weight matrix");
    }
    if (attention_weights->rows() < p.target_len() || attention_weights->cols() < p.source_len) {
      throw std::invalid_argument("adjust_policy: weight matrix smaller than policy dimensions");
    }
  }

  const double alpha = alpha_at(s, n_update);
  AdjustedPolicy adj;
  adj.base = p;
  adj.source_len = p.source_len;
  adj.g_hat.resize(p.target_len());
  adj.extra_positions.resize(p.target_len());

  for (int i = 1; i <= p.target_len(); ++i) {
    const int gi = p.at(i);
    const int fi = future_count(p.source_len, gi, alpha);
    adj.g_hat[i - 1] = gi + fi;
    auto& extra = adj.extra_positions[i - 1];
    if (fi == 0) continue;

    switch (s.strategy) {
      case GlanceStrategy::Adjacency:
        for (int j = gi + 1; j <= gi + fi; ++j) extra.push_back(j);
        break;
      case GlanceStrategy::Randomization: {
        std::vector<int> future(p.source_len - gi);
        std::iota(future.begin(), future.end(), gi + 1);
        // partial Fisher-Yates: first fi entries are a uniform sample
        for (int t = 0; t < fi; ++t) {
          const size_t span = future.size() - t;
          const size_t pick = t + static_cast<size_t>(s.rng() % span);
          std::swap(future[t], future[pick]);
        }
        extra.assign(future.begin(), future.begin() + fi);
        std::sort(extra.begin(), extra.end());
        break;
      }
      case GlanceStrategy::Attention: {
        std::vector<int> future(p.source_len - gi);
        std::iota(future.begin(), future.end(), gi + 1);
        std::stable_sort(future.begin(), future.end(), [&](int a, int b) {
          return (*attention_weights)(i - 1, a - 1) > (*attention_weights)(i - 1, b - 1);
        });
        extra.assign(future.begin(), future.begin() + fi);
        std::sort(extra.begin(), extra.end());
        break;
      }
    }
  }
  return adj;
}

}  // namespace simt
