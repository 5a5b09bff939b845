#include "simt/policy.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace simt {

PolicyVector wait_k_policy(int k, int target_len, int source_len) {
  if (k < 1) throw std::invalid_argument("wait_k_policy: k must be >= 1");
  if (target_len < 1) throw std::invalid_argument("wait_k_policy: target_len must be >= 1");
  if (source_len < 1) throw std::invalid_argument("wait_k_policy: source_len must be >= 1");
  PolicyVector p;
  p.source_len = source_len;
  p.g.resize(target_len);
  for (int i = 1; i <= target_len; ++i) p.g[i - 1] = std::min(k + i - 1, source_len);
  return p;
}

HmtLattice hmt_lattice(int initial_read, int events_per_step, int target_len, int source_len) {
  if (initial_read < 1) throw std::invalid_argument("hmt_lattice: initial_read must be >= 1");
  if (events_per_step < 1) throw std::invalid_argument("hmt_lattice: events_per_step must be >= 1");
  if (target_len < 1) throw std::invalid_argument("hmt_lattice: target_len must be >= 1");
  if (source_len < 1) throw std::invalid_argument("hmt_lattice: source_len must be >= 1");
  HmtLattice l;
  l.initial_read = initial_read;
  l.events_per_step = events_per_step;
  l.target_len = target_len;
  l.source_len = source_len;
  l.events.resize(static_cast<size_t>(target_len) * events_per_step);
  for (int i = 1; i <= target_len; ++i) {
    for (int n = 1; n <= events_per_step; ++n) {
      l.events[static_cast<size_t>(i - 1) * events_per_step + (n - 1)] =
          std::min(initial_read + (i - 1) + (n - 1), source_len);
    }
  }
  return l;
}

PolicyVector hmt_default_policy(const HmtLattice& lattice) {
  PolicyVector p;
  p.source_len = lattice.source_len;
  p.g.resize(lattice.target_len);
  for (int i = 1; i <= lattice.target_len; ++i) p.g[i - 1] = lattice.at(i, 1);
  return p;
}

PolicyCheck validate_policy(const PolicyVector& p) {
  PolicyCheck c;
  for (int i = 1; i <= p.target_len(); ++i) {
    const int gi = p.at(i);
    if (gi < 1) {
      c.ok = false;
      c.violation_index = i;
      c.message = "g[" + std::to_string(i) + "]=" + std::to_string(gi) + " is below 1";
      return c;
    }
    if (gi > p.source_len) {
      c.ok = false;
      c.violation_index = i;
      c.message = "g[" + std::to_string(i) + "]=" + std::to_string(gi) + " exceeds source length " +
                  std::to_string(p.source_len);
      return c;
    }
    if (i > 1 && gi < p.at(i - 1)) {
      c.ok = false;
      c.violation_index = i;
      c.message = "g[" + std::to_string(i) + "]=" + std::to_string(gi) + " is not nondecreasing";
      return c;
    }
  }
  return c;
}

std::string format_policy(const PolicyVector& p) {
  std::ostringstream os;
  os << "J=" << p.source_len;
  for (int v : p.g) os << ' ' << v;
  return os.str();
}

PolicyVector parse_policy(const std::string& line) {
  std::istringstream is(line);
  std::string head;
  if (!(is >> head) || head.rfind("J=", 0) != 0) {
    throw std::invalid_argument("parse_policy: expected leading J=<int> in '" + line + "'");
  }
  PolicyVector p;
  try {
    p.source_len = std::stoi(head.substr(2));
  } catch (const std::exception&) {
    throw std::invalid_argument("parse_policy: bad source length in '" + head + "'");
  }
  int v = 0;
  while (is >> v) p.g.push_back(v);
  if (!is.eof()) throw std::invalid_argument("parse_policy: trailing garbage in '" + line + "'");
  return p;
}

}  // namespace simt
