#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "simt/matrix.hpp"
#include "simt/policy.hpp"

namespace simt {

// How the extra (glanced) source positions beyond the policy prefix are
// chosen during training.
enum class GlanceStrategy { Adjacency, Attention, Randomization };

GlanceStrategy parse_glance_strategy(const std::string& name);
std::string to_string(GlanceStrategy s);

// Glance schedule state. alpha decays linearly from 1 to alpha_min over
// decay_updates optimizer steps; the constant_alpha flag holds alpha at
// alpha_min throughout (the no-curriculum ablation).
//
// alpha_at and future_count are pure. adjust_policy under Randomization
// draws from the owned generator, so a schedule instance must not be shared
// across threads while training.
struct CurriculumSchedule {
  double alpha_min = 0.05;
  long decay_updates = 1;
  GlanceStrategy strategy = GlanceStrategy::Adjacency;
  uint64_t rng_seed = 0;
  bool constant_alpha = false;

  std::mt19937_64 rng{0};

  void reseed() { rng.seed(rng_seed); }
};

// alpha = alpha_min + (1 - alpha_min) * max(1 - n_update / d, 0)
double alpha_at(const CurriculumSchedule& s, long n_update);

// f = floor((source_len - g_i) * alpha). Floor keeps the exposed future at or
// below the real-valued schedule; flip here if round-half-up is ever wanted.
int future_count(int source_len, int g_i, double alpha);

// Training-time policy after glancing: per step, the readable set is the
// policy prefix of length base.g[i] plus extra_positions[i].
struct AdjustedPolicy {
  std::vector<int> g_hat;                         // g_hat[i] = g[i] + f[i]
  PolicyVector base;
  std::vector<std::vector<int>> extra_positions;  // sorted 1-based source positions
  int source_len = 0;

  int target_len() const { return static_cast<int>(g_hat.size()); }
};

// Chooses the f_i extra positions per step:
//   Adjacency      the f_i positions immediately after the prefix
//   Randomization  f_i positions sampled without replacement from the future
//   Attention      the f_i future positions with the highest supplied weight;
//                  attention_weights (target_len x source_len) is required
AdjustedPolicy adjust_policy(const PolicyVector& p, CurriculumSchedule& s, long n_update,
                             const Matrix<double>* attention_weights = nullptr);

}  // namespace simt
