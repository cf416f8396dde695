#include "mergeopt/merger.hpp"

#include <cmath>

#include "mergeopt/errors.hpp"

namespace mergeopt {

NormalizedWeights one_hot_weights(size_t n, size_t index) {
  NormalizedWeights w;
  w.alpha.assign(n, 0.0);
  w.alpha.at(index) = 1.0;
  return w;
}

NormalizedWeights normalize(const WeightVector& raw) {
  if (raw.raw.empty())
    throw Error(ErrorCode::InvalidConfig, "empty weight vector");
  for (double v : raw.raw)
    if (!std::isfinite(v))
      throw Error(ErrorCode::InvalidConfig, "non-finite weight entry");

  NormalizedWeights out;
  out.alpha.reserve(raw.raw.size());
  double sum = 0.0;
  for (double v : raw.raw) {
    const double clamped = v < 0.0 ? 0.0 : v;
    out.alpha.push_back(clamped);
    sum += clamped;
  }
  if (sum == 0.0)
    throw Error(ErrorCode::DegenerateWeights, "all weights clamped to zero");
  for (double& a : out.alpha) a /= sum;
  return out;
}

TensorMap merge(const CheckpointPool& pool, const NormalizedWeights& w) {
  if (w.size() != pool.size())
    throw Error(ErrorCode::InvalidConfig,
                "weight count does not match pool size");

  TensorMap out("merged");
  const auto schema = pool.schema();
  std::vector<double> acc;
  for (const auto& [name, shape] : schema) {
    acc.clear();
    bool first = true;
    // Ascending index order fixes the floating-point summation order.
    for (size_t i = 0; i < pool.size(); ++i) {
      if (w.alpha[i] == 0.0) continue;  // zero-weight entries are never read
      Tensor t = pool.read_tensor(i, name);
      if (t.shape != shape)
        throw Error(ErrorCode::ShapeMismatch,
                    "tensor " + name + " shape mismatch at entry " +
                        std::to_string(i + 1));
      if (first) {
        acc.assign(t.data.size(), 0.0);
        first = false;
      }
      const double a = w.alpha[i];
      for (size_t j = 0; j < t.data.size(); ++j)
        acc[j] += a * static_cast<double>(t.data[j]);
    }
    Tensor merged;
    merged.shape = shape;
    merged.data.resize(acc.size());
    for (size_t j = 0; j < acc.size(); ++j)
      merged.data[j] = static_cast<float>(acc[j]);
    out.add(name, std::move(merged));
  }
  return out;
}

}  // namespace mergeopt
