#pragma once

#include <string>
#include <vector>

namespace simt {

// Translation policy: g[i-1] is the number of source tokens readable when
// emitting target step i. Valid vectors are 1-based counts in [1, source_len]
// and nondecreasing across steps.
struct PolicyVector {
  std::vector<int> g;
  int source_len = 0;

  int target_len() const { return static_cast<int>(g.size()); }
  int at(int step) const { return g[step - 1]; }  // 1-based step
};

struct PolicyCheck {
  bool ok = true;
  int violation_index = 0;  // 1-based step of the first violation, 0 if ok
  std::string message;      // empty if ok
};

// g_i = min(k + i - 1, source_len). Throws std::invalid_argument on
// non-positive k, target_len or source_len.
PolicyVector wait_k_policy(int k, int target_len, int source_len);

// Event lattice for adaptive (HMT-style) policies: element (i, n) is the
// number of source tokens in the n-th event of target step i.
struct HmtLattice {
  int initial_read = 0;    // tokens read before the first target step
  int events_per_step = 0;
  int target_len = 0;
  int source_len = 0;
  std::vector<int> events;  // row-major target_len x events_per_step

  int at(int step, int event) const {  // 1-based
    return events[static_cast<size_t>(step - 1) * events_per_step + (event - 1)];
  }
};

// events(i, n) = min(initial_read + (i-1) + (n-1), source_len).
HmtLattice hmt_lattice(int initial_read, int events_per_step, int target_len, int source_len);

// First-event column of the lattice. This is the default policy when no
// event selector is injected; selection stays pluggable at decode time.
PolicyVector hmt_default_policy(const HmtLattice& lattice);

PolicyCheck validate_policy(const PolicyVector& p);

// One-line trace-file form: "J=<source_len> g1 g2 ... gI".
std::string format_policy(const PolicyVector& p);
PolicyVector parse_policy(const std::string& line);

}  // namespace simt
