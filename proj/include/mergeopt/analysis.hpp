#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mergeopt {

/// Rows = checkpoints (ordered, labeled), columns = tasks.
struct ScoreMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> task_names;
  std::vector<std::vector<double>> values;  // [row][task]

  std::vector<double> column(const std::string& task) const;
  size_t task_index(const std::string& task) const;
};

ScoreMatrix read_score_csv(const std::string& path);
void write_score_csv(const ScoreMatrix& m, const std::string& path);

/// Spearman rank correlation with average ranks on ties.
/// Throws LengthMismatch / ConstantSeries.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Symmetric task-by-task matrix of pairwise spearman values, diagonal 1.
std::vector<std::vector<double>> correlation_matrix(const ScoreMatrix& m);

/// Indices of points not dominated by any other point. A point is dominated
/// when another is >= in every coordinate and > in at least one.
std::vector<size_t> pareto_front(const std::vector<std::vector<double>>& points);

struct SparsityReport {
  size_t count_below = 0;
  std::vector<size_t> indices_below;  // 0-based
};

SparsityReport sparsity(const std::vector<double>& weights,
                        double epsilon = 1e-3);

/// Component-wise arithmetic mean of equally sized vectors.
std::vector<double> centroid(const std::vector<std::vector<double>>& vectors);

struct ProgressPoint {
  int64_t trial_index;
  double fitness;
  double running_best;
};

/// One record per fitness value in temporal order; running best is the
/// prefix maximum.
std::vector<ProgressPoint> progress(const std::vector<double>& fitness_series);

struct CostReport {
  double train_flops = 0.0;
  std::map<std::string, double> inference_flops_per_task;
  double search_flops = 0.0;
  double ratio_search_to_train = 0.0;
};

struct TrainStage {
  double batch_size = 0.0;
  double steps = 0.0;
};

/// Train FLOPs = sum over stages of 6 * P * B * S; per-task inference
/// FLOPs = 2 * P * samples; search FLOPs = budget * total inference over
/// the listed tasks.
CostReport flops_cost(double param_count, const TrainStage& sft,
                      const TrainStage& po,
                      const std::map<std::string, double>& samples_per_task,
                      int64_t budget);

}  // namespace mergeopt
