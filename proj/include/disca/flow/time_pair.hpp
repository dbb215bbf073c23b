#pragma once

namespace disca::flow {

/// Interval [r, t] of one mean-velocity step, 0 <= r <= t <= 1.
struct TimePair {
  double t = 1.0;
  double r = 1.0;

  double interval() const { return t - r; }
  bool valid() const { return 0.0 <= r && r <= t && t <= 1.0; }

  friend bool operator==(const TimePair&, const TimePair&) = default;
};

// Throws ContractViolation unless `p.valid()`.
void require_valid(const TimePair& p);

}  // namespace disca::flow
