#pragma once

#include <vector>

#include "mergeopt/tensorstore.hpp"

namespace mergeopt {

/// Unconstrained search-space point, as sampled by the optimizer.
struct WeightVector {
  std::vector<double> raw;
};

/// Simplex point: all entries >= 0, sum == 1 within 1e-12.
struct NormalizedWeights {
  std::vector<double> alpha;

  size_t size() const { return alpha.size(); }
};

/// One-hot weights for checkpoint `index` (0-based) in a pool of size n.
NormalizedWeights one_hot_weights(size_t n, size_t index);

/// Clamps negatives to zero, then divides by the clamped sum.
/// Throws DegenerateWeights when the clamped sum is zero.
NormalizedWeights normalize(const WeightVector& raw);

/// theta_mrg = sum_i alpha_i * theta_i, streamed tensor-by-tensor.
/// Each element accumulates in double precision over entries in ascending
/// pool order, skipping alpha_i == 0 entirely, and rounds to float32 once.
TensorMap merge(const CheckpointPool& pool, const NormalizedWeights& w);

}  // namespace mergeopt
