#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mergeopt/fitness.hpp"
#include "mergeopt/merger.hpp"
#include "mergeopt/tensorstore.hpp"

namespace mergeopt {

struct ToyTask {
  enum class Kind { Radial, Ridge };

  std::string name;
  Kind kind = Kind::Radial;

  // radial: score = 100 / (1 + ||w - center||^2)
  std::vector<double> center;

  // ridge: score = 100 / (1 + mean squared error on the eval split)
  Eigen::MatrixXd eval_x;
  Eigen::VectorXd eval_y;
  Eigen::VectorXd true_coef;
};

struct ToyTaskSuite {
  std::vector<ToyTask> tasks;

  const ToyTask& task(const std::string& name) const;
  std::vector<std::string> task_names() const;

  /// Scores the single-tensor checkpoint (tensor "w") on one task.
  double score(const TensorMap& ckpt, const std::string& task_name) const;
  TaskScores score_all(const TensorMap& ckpt,
                       const std::vector<std::string>& task_names) const;
};

struct GeneratorConfig {
  int dim = 2;
  int pool_size = 2;  // N
  int task_count = 2;  // T
  double noise = 0.1;
  uint64_t seed = 0;
  double ridge_lambda = 1e-6;

  void validate() const;
};

/// Task centers on coordinate axes; checkpoints near centers (round-robin)
/// and at pairwise center midpoints, each plus Gaussian noise. Generation
/// retries internal draws (up to 100) until every task pair has Spearman
/// <= -0.3 over the pool scores.
std::pair<CheckpointPool, ToyTaskSuite> gen_radial_suite(
    const GeneratorConfig& cfg);

/// Per-task linear-regression datasets with orthogonal true coefficients;
/// each checkpoint is the closed-form ridge solution on a per-checkpoint
/// mixture of the task datasets. Same tradeoff certification as radial.
std::pair<CheckpointPool, ToyTaskSuite> gen_ridge_suite(
    const GeneratorConfig& cfg);

/// Closed-form ridge fit over a proportion-weighted blend of task datasets.
Eigen::VectorXd ridge_solve(const std::vector<Eigen::MatrixXd>& xs,
                            const std::vector<Eigen::VectorXd>& ys,
                            const std::vector<double>& proportions,
                            double ridge_lambda);

/// Exhaustive simplex-grid brute force. Pools of size > 3 are rejected.
/// Ties go to the lexicographically smallest weight vector.
std::pair<NormalizedWeights, FitnessValue> grid_oracle(
    const CheckpointPool& pool, const ToyTaskSuite& suite,
    const std::vector<std::string>& tasks, double resolution);

void save_suite(const ToyTaskSuite& suite, const std::filesystem::path& path);
ToyTaskSuite load_suite(const std::filesystem::path& path);

}  // namespace mergeopt
