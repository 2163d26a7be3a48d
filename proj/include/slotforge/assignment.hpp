#pragma once

#include <vector>

#include "slotforge/tensor.hpp"

namespace slotforge {

enum class Objective { kMaximize, kMinimize };

struct Assignment {
  /// Row a is matched to column mapping[a].
  std::vector<std::size_t> mapping;
  /// Σ_a values[a, mapping[a]], summed in row order.
  double total_score = 0.0;
};

/// Sum of values[a, mapping[a]] in row order.
double assignment_score(const Tensor& values, const std::vector<std::size_t>& mapping);

/// Optimal square assignment (Kuhn-Munkres with potentials, O(K³)). Among
/// optimal mappings the lexicographically smallest is returned.
Assignment hungarian(const Tensor& values, Objective objective);

/// Visits columns in index order and gives each the best still-unassigned
/// row (lowest row index on ties).
Assignment greedy_match(const Tensor& values, Objective objective);

}  // namespace slotforge
