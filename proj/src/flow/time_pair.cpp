#include "disca/flow/time_pair.hpp"

#include <string>

#include "disca/errors.hpp"

namespace disca::flow {

void require_valid(const TimePair& p) {
  require(p.valid(), "invalid time pair (t=" + std::to_string(p.t) + ", r=" + std::to_string(p.r) +
                         "); need 0 <= r <= t <= 1");
}

}  // namespace disca::flow
