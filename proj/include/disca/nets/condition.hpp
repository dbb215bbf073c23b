#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace disca::nets {

inline constexpr int kNullClass = -1;

/// Conditioning for one sample: an optional class label and an optional
/// guidance scale g.
struct Condition {
  std::optional<int> class_id;
  std::optional<double> cfg_scale;
};

/// Per-row conditioning for a batch. `class_ids` uses kNullClass for the
/// unconditional branch; an empty `cfg_scales` means no guidance input.
struct ConditionBatch {
  std::vector<int> class_ids;
  std::vector<double> cfg_scales;

  static ConditionBatch uniform(const Condition& c, std::size_t rows);
  static ConditionBatch unconditional(std::size_t rows) { return uniform({}, rows); }

  std::size_t rows() const { return class_ids.size(); }
  bool has_cfg() const { return !cfg_scales.empty(); }

  ConditionBatch slice(std::size_t begin, std::size_t end) const;
  ConditionBatch without_cfg() const { return {class_ids, {}}; }
  ConditionBatch with_cfg(double g) const;
  ConditionBatch as_null() const;
};

}  // namespace disca::nets
